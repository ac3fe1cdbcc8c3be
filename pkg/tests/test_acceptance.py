"""End-to-end acceptance gates, one test per numbered criterion.

Each test prints a single PASS/FAIL line with the measured numbers next to
the tolerance it is judged against. Gates 6, 7, and 9 carry the `nightly`
marker (hours on one core); gates 5 and 10 carry `slow` (minutes). The
module-scoped fixtures hold the expensive artifacts (quench sweeps, gap
curves) that several gates share.
"""

import time
import warnings

import numpy as np
import pytest

from kztn import checkpoint, config, ed, lptn, mps, observables, quench
from kztn.model import ModelParams, local_operators, trotter_layers

L16 = 16
J_CRITICAL = 0.30

# zero-temperature sweep (gates 6 and 7)
KZ_TAU_GRID = tuple(np.geomspace(2.0, 15.0, 6))
KZ_DT = 0.025
KZ_MAX_BOND = 64

# finite-temperature sweeps (gate 9); dt shared by the T=0 reference so the
# Trotter bias cancels in the kappa ratio
TH_TAU_GRID = tuple(np.geomspace(2.0, 15.0, 4))
TH_DT = 0.05
TH_MAX_BOND = 32
TH_TEMPERATURES = (0.1, 0.2, 0.3, 0.4)

# equilibrium curves for the effective exponents (gate 7)
EQ_J_GRID = tuple(np.linspace(0.0, J_CRITICAL, 21))
EQ_WARM_SCHEDULE = ((0.05, 200), (0.01, 200), (0.001, 300))


def _report(label, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}", flush=True)
    assert ok, f"{label}: {detail}"


# ---------------------------------------------------------------------------
# shared expensive artifacts

@pytest.fixture(scope="module")
def gap_curve_small():
    """Dense-oracle gap curve spanning [0, J_c] (L=7, d=3 fits the guard)."""
    params = ModelParams(L=7, J=0.0, d=3)
    policy = mps.TruncationPolicy(max_bond=32, svd_cutoff=1e-12)
    return quench.compute_gap_curve(params, policy,
                                    np.linspace(0.0, J_CRITICAL, 13))


@pytest.fixture(scope="module")
def kz_sweep_t0():
    """Gate-6 sweep: final lengths over the tau_q log grid at T=0."""
    params = ModelParams(L=L16, J=J_CRITICAL, d=5)
    policy = mps.TruncationPolicy(max_bond=KZ_MAX_BOND, svd_cutoff=1e-10,
                                  dt=KZ_DT)
    points = []
    for tau_q in KZ_TAU_GRID:
        proto = quench.QuenchProtocol(tau_q=tau_q, j_critical=J_CRITICAL)
        t0 = time.perf_counter()
        res = quench.run_quench(params, proto, policy)
        points.append((tau_q, res.xi_fin))
        print(f"  [kz T=0] tau_q={tau_q:.3f}: xi_fin={res.xi_fin:.4f} "
              f"({time.perf_counter() - t0:.0f}s)", flush=True)
    kappa, err = quench.fit_kz_exponent(points, window=(2.0, 15.0))
    return {"points": points, "kappa": kappa, "err": err}


@pytest.fixture(scope="module")
def equilibrium_curves_l16():
    """Gate-7 inputs: xi_L(J) and gap(J) at L=16, d=5, unit filling."""
    params = ModelParams(L=L16, J=0.0, d=5)
    policy = mps.TruncationPolicy(max_bond=64, svd_cutoff=1e-10)
    xi_values, gap_values = [], []
    ground_prev = None
    excited_prev = None
    for j in EQ_J_GRID:
        p = params.replace(J=float(j))
        schedule = None if ground_prev is None else EQ_WARM_SCHEDULE
        t0 = time.perf_counter()
        ground = mps.ground_state(p, policy, schedule=schedule,
                                  initial=ground_prev)
        stats = observables.site_statistics(ground.state)
        assert abs(stats.filling - 1.0) < 0.02, (
            f"unit-filling sector drifted to {stats.filling:.4f} at J={j}")
        xi_values.append(observables.analyze_correlations(ground.state).xi_L)
        gap_res = mps.intra_sector_gap(p, policy, schedule=schedule,
                                       method="projection", ground=ground,
                                       excited_initial=excited_prev)
        ground_prev = gap_res.ground_state
        excited_prev = gap_res.excited_state
        gap_values.append(gap_res.value)
        print(f"  [equilibrium] J={j:.4f}: xi_L={xi_values[-1]:.4f} "
              f"gap={gap_values[-1]:.5f} "
              f"({time.perf_counter() - t0:.0f}s)", flush=True)
    j_arr = np.asarray(EQ_J_GRID)
    return {"xi_curve": (j_arr, np.asarray(xi_values)),
            "gap_curve": (j_arr, np.asarray(gap_values))}


def _kappa_from_sweep(temperature):
    params = ModelParams(L=L16, J=J_CRITICAL, d=5)
    policy = mps.TruncationPolicy(max_bond=TH_MAX_BOND if temperature > 0
                                  else KZ_MAX_BOND,
                                  svd_cutoff=1e-10, dt=TH_DT, dbeta=0.005)
    points = []
    for tau_q in TH_TAU_GRID:
        proto = quench.QuenchProtocol(tau_q=tau_q, j_critical=J_CRITICAL,
                                      initial_temperature=temperature)
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = quench.run_quench(params, proto, policy)
        points.append((tau_q, res.xi_fin))
        print(f"  [kz T={temperature}] tau_q={tau_q:.3f}: "
              f"xi_fin={res.xi_fin:.4f} "
              f"({time.perf_counter() - t0:.0f}s)", flush=True)
    kappa, err = quench.fit_kz_exponent(points, window=(2.0, 15.0))
    return kappa, err


@pytest.fixture(scope="module")
def arrhenius_scan():
    """Gate-9 sweep: kappa at T=0 and at each finite temperature, all on the
    same reduced tau_q grid and time step."""
    kappa_zero, err_zero = _kappa_from_sweep(0.0)
    by_t = {}
    for temperature in TH_TEMPERATURES:
        by_t[temperature] = _kappa_from_sweep(temperature)
    return {"kappa_zero": kappa_zero, "err_zero": err_zero, "by_t": by_t}


# ---------------------------------------------------------------------------
# gates

def test_01_thermal_equilibrium_oracle():
    policy = mps.TruncationPolicy(max_bond=64, svd_cutoff=1e-16, dbeta=0.005)
    betas = {0.5: 2.0, 0.25: 4.0, 0.1: 10.0}
    worst = 0.0
    t_start = time.perf_counter()
    for L, d in ((5, 3), (4, 4)):
        for J in (0.0, 0.05, 0.1, 0.2):
            params = ModelParams(L=L, J=J, d=d)
            state = lptn.infinite_temperature_state(L, d)
            reached = 0.0
            for T in sorted(betas, reverse=True):      # beta ascending
                state = lptn.cool(state, params, betas[T], policy)
                reached = betas[T]
                stats = observables.site_statistics(state)
                corr = observables.correlation_matrix(state)
                ref_stats, ref_corr = ed.ed_gibbs_observables(params, T)
                worst = max(
                    worst,
                    float(np.max(np.abs(stats.occupations
                                        - ref_stats.occupations))),
                    float(np.max(np.abs(stats.variances
                                        - ref_stats.variances))),
                    float(np.max(np.abs(corr - ref_corr))))
            assert reached == 10.0
    minutes = (time.perf_counter() - t_start) / 60
    _report("gate-01 thermal oracle", worst < 1e-5 and minutes < 10,
            f"max |deviation| {worst:.2e} (tol 1e-5) over 24 (J,T) points, "
            f"{minutes:.1f} min (limit 10)")


def test_02_ramp_dynamics_oracle():
    policy = mps.TruncationPolicy(max_bond=64, svd_cutoff=1e-12, dt=0.01,
                                  dbeta=0.005)
    params = ModelParams(L=4, J=J_CRITICAL, d=3)
    unit_index = int(np.dot([1, 1, 1, 1], [3 ** 3, 3 ** 2, 3, 1]))
    worst = 0.0
    t_start = time.perf_counter()
    for tau_q in (0.5, 1.0, 2.0):
        proto = quench.QuenchProtocol(tau_q=tau_q, j_critical=J_CRITICAL)
        res = quench.run_quench(params, proto, policy)
        vec = np.zeros(3 ** 4, dtype=np.complex128)
        vec[unit_index] = 1.0
        ref = ed.ed_propagate(vec, params, proto)
        worst = max(worst, float(np.max(np.abs(res.correlations
                                               - ref.correlations))))

        proto_t = quench.QuenchProtocol(tau_q=tau_q, j_critical=J_CRITICAL,
                                        initial_temperature=0.5)
        res_t = quench.run_quench(params, proto_t, policy)
        rho = ed.ed_gibbs_density(params.replace(J=0.0), 0.5)
        ref_t = ed.ed_propagate(rho, params, proto_t)
        worst = max(worst, float(np.max(np.abs(res_t.correlations
                                               - ref_t.correlations))))
    minutes = (time.perf_counter() - t_start) / 60
    _report("gate-02 dynamics oracle", worst < 1e-4 and minutes < 10,
            f"max |correlation deviation| {worst:.2e} (tol 1e-4) over "
            f"tau_q x {{0, 0.5}} temperatures, {minutes:.1f} min (limit 10)")


def test_03_trotter_error_order():
    params = ModelParams(L=4, J=J_CRITICAL, d=3)
    proto = quench.QuenchProtocol(tau_q=1.0, j_critical=J_CRITICAL)
    vec = np.zeros(3 ** 4, dtype=np.complex128)
    vec[int(np.dot([1, 1, 1, 1], [3 ** 3, 3 ** 2, 3, 1]))] = 1.0
    ref = ed.ed_propagate(vec, params, proto)
    dts = (0.04, 0.02, 0.01)
    errors = []
    for dt in dts:
        policy = mps.TruncationPolicy(max_bond=64, svd_cutoff=1e-14, dt=dt)
        res = quench.run_quench(params, proto, policy)
        errors.append(float(np.max(np.abs(res.correlations
                                          - ref.correlations))))
    slope, _ = quench._loglog_slope(dts, errors)
    _report("gate-03 trotter order", 1.8 <= slope <= 2.2,
            f"error slope {slope:.3f} over dt={dts} (want 2.0 +/- 0.2)")


def test_04_sudden_pulse_law():
    deviations = []
    for tau_q in (0.1, 0.05, 0.02):                    # descending tau_q
        policy = mps.TruncationPolicy(max_bond=32, svd_cutoff=1e-14,
                                      dt=tau_q / 50)
        params = ModelParams(L=L16, J=J_CRITICAL, d=5)
        proto = quench.SuddenProtocol(tau_q=tau_q, j_critical=J_CRITICAL)
        res = quench.run_quench(params, proto, policy)
        target = 2.0 * np.sqrt(J_CRITICAL) * tau_q
        deviations.append(abs(res.xi_fin - target) / target)
    shrinking = all(d2 <= d1 + 1e-6
                    for d1, d2 in zip(deviations, deviations[1:]))
    worst = max(deviations)
    _report("gate-04 sudden pulse law", worst < 0.10 and shrinking,
            f"relative deviations {[f'{d:.4f}' for d in deviations]} at "
            f"tau_q=(0.1, 0.05, 0.02) vs 2 sqrt(J_c) tau_q "
            f"(tol 0.10, shrinking)")


@pytest.mark.slow
def test_05_saturation_bound():
    const = np.full((L16, L16), 0.7)
    exact_gap = abs(observables.finite_size_xi(const)
                    - observables.xi_upper_bound(L16))
    assert exact_gap < 1e-9, f"constant-matrix check off by {exact_gap:.2e}"

    # J/U = 5 needs local dimension headroom: d=5 caps the filling near 2.7
    # and visibly bends the profile, d=7 converges (same xi_L/L at bond
    # dimension 32, 48, and 64)
    params = ModelParams(L=L16, J=5.0, d=7)
    policy = mps.TruncationPolicy(max_bond=48, svd_cutoff=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = mps.ground_state(params, policy,
                               schedule=((0.1, 300), (0.01, 200),
                                         (0.001, 200)),
                               occupations="uniform")
    ratio = observables.analyze_correlations(res.state).xi_L / L16
    target = observables.xi_upper_bound(L16) / L16
    deviation = abs(ratio - target) / target
    _report("gate-05 saturation bound",
            deviation < 0.05 and exact_gap < 1e-9,
            f"xi_L/L = {ratio:.4f} vs 1/sqrt(6) = {target:.4f} "
            f"({100 * deviation:.2f}% off, tol 5%); constant-matrix check "
            f"{exact_gap:.1e} (tol 1e-9)")


@pytest.mark.nightly
def test_06_kz_exponent_zero_temperature(kz_sweep_t0):
    kappa, err = kz_sweep_t0["kappa"], kz_sweep_t0["err"]
    _report("gate-06 kz exponent", 0.73 <= kappa <= 1.03,
            f"kappa = {kappa:.4f} +/- {err:.4f} from "
            f"{len(kz_sweep_t0['points'])} quenches (band [0.73, 1.03])")


@pytest.mark.nightly
def test_07_effective_exponents(equilibrium_curves_l16, gap_curve_small,
                                kz_sweep_t0):
    curves = equilibrium_curves_l16
    # freeze-out couplings of the slowest and fastest ramps bound the window
    j_bounds = []
    for tau_q in (2.0, 15.0):
        rec = quench.freeze_out(
            curves["gap_curve"],
            quench.QuenchProtocol(tau_q=tau_q, j_critical=J_CRITICAL))
        assert rec.freeze_out_coupling is not None, (
            f"no freeze-out for tau_q={tau_q}")
        j_bounds.append(rec.freeze_out_coupling)
    window = (min(j_bounds), max(j_bounds))
    fit = quench.effective_exponents(curves["xi_curve"],
                                     curves["gap_curve"],
                                     window, J_CRITICAL)
    nu_ok = 2.0 <= fit.nu_eff <= 2.6
    znu_ok = 1.35 <= fit.znu_eff <= 1.75
    kappa_gap = abs(fit.kappa_predicted - kz_sweep_t0["kappa"])
    combined = fit.kappa_err + kz_sweep_t0["err"]
    _report("gate-07 effective exponents",
            nu_ok and znu_ok and kappa_gap <= combined,
            f"nu_eff = {fit.nu_eff:.3f} (band [2.0, 2.6]), "
            f"znu_eff = {fit.znu_eff:.3f} (band [1.35, 1.75]), "
            f"kappa_predicted = {fit.kappa_predicted:.4f} vs swept "
            f"{kz_sweep_t0['kappa']:.4f} (gap {kappa_gap:.4f} <= "
            f"combined error {combined:.4f}); window J in "
            f"[{window[0]:.4f}, {window[1]:.4f}]")


def test_08_freeze_out_regime_boundary(gap_curve_small):
    j_values, gaps = gap_curve_small
    assert abs(gaps[0] - 1.0) < 1e-9, (
        f"gap at J=0 is {gaps[0]:.12f}, want exactly U=1")
    outcomes = {}
    for tau_q in (0.5, 1.0, 1.9, 2.5, 4.0, 10.0):
        rec = quench.freeze_out(
            gap_curve_small,
            quench.QuenchProtocol(tau_q=tau_q, j_critical=J_CRITICAL))
        outcomes[tau_q] = rec.freeze_out_time
    sudden_ok = all(outcomes[t] is None for t in (0.5, 1.0, 1.9))
    crossing_ok = all(outcomes[t] is not None for t in (2.5, 4.0, 10.0))
    detail = ", ".join(
        f"tau_q={t}: " + ("none" if v is None else f"t_hat={v:.3f}")
        for t, v in sorted(outcomes.items()))
    _report("gate-08 freeze-out boundary", sudden_ok and crossing_ok, detail)


@pytest.mark.nightly
def test_09_arrhenius_trend(arrhenius_scan):
    kappa_zero = arrhenius_scan["kappa_zero"]
    temps = list(TH_TEMPERATURES)
    measured = [arrhenius_scan["by_t"][t][0] for t in temps]
    predicted_ratio = quench.arrhenius_prediction(1.0, 0.5, temps)
    ratios = [k / kappa_zero for k in measured]
    band = [abs(r - p) for r, p in zip(ratios, predicted_ratio)]
    monotone = all(k2 <= k1 + 1e-9
                   for k1, k2 in zip(measured, measured[1:]))
    within = max(band) <= 0.12
    detail = (f"kappa_0 = {kappa_zero:.4f}; " + "; ".join(
        f"T={t}: kappa={k:.4f} ratio={r:.3f} vs {p:.3f}"
        for t, k, r, p in zip(temps, measured, ratios, predicted_ratio))
        + f"; max band {max(band):.3f} (tol 0.12), monotone={monotone}")
    _report("gate-09 arrhenius trend", monotone and within, detail)


@pytest.mark.slow
def test_10_melting_plateau():
    # Known red: the 10% band cannot include T=0.2 at mu=1/2. The exact
    # single-site variance is already 0.141 by T=0.2 (vs 0 at T=0), and
    # dense references reproduce the tensor-network numbers below to three
    # digits in both the grand-canonical and the fixed-N ensembles, so the
    # failure is the ensemble melting at its melting temperature, not an
    # engine artifact. The T=0.4 half of the gate holds with huge margin.
    L = 24
    params = ModelParams(L=L, J=0.08, d=5)
    policy = mps.TruncationPolicy(max_bond=24, svd_cutoff=1e-10, dbeta=0.01)
    ground = mps.ground_state(params, policy)
    base = observables.site_statistics(ground.state).center_variance

    betas = {0.4: 2.5, 0.2: 5.0, 0.1: 10.0}
    state = lptn.infinite_temperature_state(L, params.d)
    rel = {}
    for T in sorted(betas, reverse=True):              # beta ascending
        state = lptn.cool(state, params, betas[T], policy)
        var = observables.site_statistics(state).center_variance
        rel[T] = abs(var - base) / base
    cold_ok = rel[0.1] < 0.10 and rel[0.2] < 0.10
    melted_ok = rel[0.4] > 0.25
    _report("gate-10 melting plateau", cold_ok and melted_ok,
            f"relative variance change vs ground state at L={L}: "
            + ", ".join(f"T={t}: {rel[t]:.3f}" for t in sorted(rel))
            + " (want < 0.10 for T <= 0.2, > 0.25 at T = 0.4)")


def test_11_invariant_suite_summary(tmp_path):
    rng = np.random.default_rng(20260816)
    checks = []

    a = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    psd = a @ a.conj().T
    checks.append(("xi bound", observables.finite_size_xi(psd)
                   <= observables.xi_upper_bound(12) + 1e-9))

    r = np.arange(9, dtype=float)
    values = np.empty(9)
    values[0] = 1.0
    values[1:] = 0.8 * r[1:] ** -0.5 * np.exp(-r[1:] / 6.0)
    eta, xi, _ = observables.fit_correlation_decay(values)
    checks.append(("fit round trip",
                   abs(eta - 0.5) < 1e-8 and abs(xi - 6.0) < 1e-6))

    params = ModelParams(L=4, J=0.2, d=3)
    tight = mps.TruncationPolicy(max_bond=6, svd_cutoff=1e-8, dbeta=0.01)
    state = lptn.cool(lptn.infinite_temperature_state(4, 3), params, 2.0,
                      tight)
    rho = lptn.dense_density_matrix(lptn.normalize(state))
    checks.append(("purified positivity",
                   float(np.linalg.eigvalsh(rho).min()) >= -1e-12))

    pure = mps.product_state([1, 2, 0, 1], 3)
    layers = trotter_layers(params, -1j * 0.02)
    exact = mps.TruncationPolicy(max_bond=16, svd_cutoff=0.0, dt=0.02)
    for _ in range(3):
        pure = mps.tebd_step(pure, layers, exact, renormalize=False)
    ops = local_operators(3)
    total = float(np.sum(mps.site_expectations(pure, ops.number)).real)
    checks.append(("number conservation", abs(total - 4.0) < 1e-10))
    checks.append(("norm preservation", abs(mps.norm(pure) - 1.0) < 1e-12))

    proto = quench.SuddenProtocol(tau_q=0.2, j_critical=0.2)
    evolved = lptn.real_evolve(state, params, proto, tight,
                               renormalize=False)
    drift = abs(lptn.trace(evolved) - lptn.trace(state))
    budget = 10 * sum(evolved.truncation_log[len(state.truncation_log):])
    checks.append(("trace bookkeeping", drift <= budget + 1e-9))

    text = ("mode = quench-sweep\ngrids.tau_q = 2, 5, 10\ngrids.T = 0\n"
            "policy.max_bond = 48\n")
    cfg = config.parse_config(text)
    again = config.parse_config(config.serialize_config(cfg))
    checks.append(("config round trip", again == cfg))

    blob = checkpoint.state_to_bytes(pure)
    back = checkpoint.state_from_bytes(blob)
    checks.append(("checkpoint determinism",
                   checkpoint.state_to_bytes(back) == blob))

    failed = [name for name, ok in checks if not ok]
    _report("gate-11 invariant suite", not failed,
            f"{len(checks)} invariant families checked"
            + (f"; FAILED: {failed}" if failed else ", all passing"))
