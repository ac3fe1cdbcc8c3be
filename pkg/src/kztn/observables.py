"""Derived quantities: site statistics, hopping correlations, decay fits,
finite-size correlation length, compressibility, and the two phase
quantifiers built from them.

Analysis functions are pure; engine dispatch keys on the state type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lptn, mps
from .errors import (DegenerateProfileError, FitDomainError, NumericalError,
                     ParameterError)
from .model import local_operators


def center_site(L: int) -> int:
    """0-based index of the readout site (ceil(L/2) in 1-based counting)."""
    return (L + 1) // 2 - 1


def default_r_max(L: int) -> int:
    """Largest correlation distance kept clear of the right boundary."""
    return L // 2 - 1


def _dispatch(state):
    if isinstance(state, mps.MpsState):
        return mps
    if isinstance(state, lptn.LptnState):
        return lptn
    raise ParameterError(f"unsupported state type {type(state).__name__}")


# ---------------------------------------------------------------------------
# site statistics

@dataclass
class SiteStatistics:
    occupations: np.ndarray
    variances: np.ndarray
    filling: float
    total_number: float

    @property
    def center_occupation(self) -> float:
        return float(self.occupations[center_site(len(self.occupations))])

    @property
    def center_variance(self) -> float:
        return float(self.variances[center_site(len(self.variances))])


def site_statistics(state) -> SiteStatistics:
    """Per-site <n_j> and sigma^2_j = <n_j^2> - <n_j>^2, plus filling."""
    engine = _dispatch(state)
    n = local_operators(state.d).number
    first = engine.site_expectations(state, n).real
    second = engine.site_expectations(state, n @ n).real
    variances = second - first ** 2
    total = float(first.sum())
    return SiteStatistics(first, variances, total / state.L, total)


# ---------------------------------------------------------------------------
# correlations

@dataclass
class CorrelationProfile:
    reference_site: int
    values: np.ndarray
    eta: float | None = None
    xi: float | None = None
    xi_L: float | None = None
    fit_residual: float | None = None


def correlation_matrix(state) -> np.ndarray:
    """Full matrix <b^dag_j b_k> (diagonal <n_j>)."""
    engine = _dispatch(state)
    ops = local_operators(state.d)
    return engine.pair_expectations(state, ops.creator, ops.annihilator)


def hopping_correlations(state, reference: int | None = None,
                         r_max: int | None = None) -> CorrelationProfile:
    """C(r) = <b^dag_ref b_(ref+r)> for r = 0..r_max, single sweep each way.

    The reverse row <b^dag_(ref+r) b_ref> is evaluated too and compared
    against the conjugate as a contraction cross-check.
    """
    engine = _dispatch(state)
    ops = local_operators(state.d)
    if reference is None:
        reference = center_site(state.L)
    if r_max is None:
        r_max = min(default_r_max(state.L), state.L - 1 - reference)
    values = engine.pair_row(state, reference, ops.creator, ops.annihilator,
                             r_max)
    reverse = engine.pair_row(state, reference, ops.annihilator, ops.creator,
                              r_max)
    mismatch = np.max(np.abs(values[1:] - np.conj(reverse[1:]))) if r_max else 0.0
    if mismatch > 1e-10:
        raise NumericalError(
            f"hopping correlations violate Hermiticity by {mismatch:.3e}")
    return CorrelationProfile(reference, values)


def fit_correlation_decay(values, r_range=None):
    """Fit C(r) = C0 * r^(-eta) * exp(-r/xi) by least squares on log C.

    ``values`` holds C(r) for r = 0..r_max; the fit uses r in ``r_range``
    (default all r >= 1). The inverse length is clamped at zero: when the
    unconstrained optimum has 1/xi < 0 the fit is redone without the decay
    column and xi = inf is returned. Returns (eta, xi, residual).
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        values = values.real
    r_all = np.arange(len(values))
    if r_range is None:
        r_range = (1, len(values) - 1)
    lo, hi = int(r_range[0]), int(r_range[1])
    if lo < 1 or hi >= len(values) or hi < lo:
        raise ParameterError(f"fit range [{lo}, {hi}] invalid for "
                             f"{len(values)} correlation values")
    r = r_all[lo:hi + 1].astype(float)
    c = values[lo:hi + 1]
    bad = r[c <= 0]
    if bad.size:
        raise FitDomainError(
            "non-positive correlation values in fit range",
            offending=tuple(int(x) for x in bad))
    if r.size < 3:
        raise ParameterError("need at least 3 points to fit (c0, eta, 1/xi)")
    y = np.log(c)
    design = np.column_stack([np.ones_like(r), -np.log(r), -r])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    if coef[2] < 0:
        design = design[:, :2]
        coef2, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        coef = np.array([coef2[0], coef2[1], 0.0])
    resid = float(np.sum((design @ coef[:design.shape[1]] - y) ** 2))
    eta = float(coef[1])
    xi = np.inf if coef[2] == 0 else 1.0 / float(coef[2])
    return eta, xi, resid


def finite_size_xi(correlation_matrix) -> float:
    """xi_L = sqrt(sum (j-k)^2 C_jk / sum C_jk) over all ordered pairs."""
    c = np.asarray(correlation_matrix)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ParameterError(f"correlation matrix must be square, got {c.shape}")
    herm = np.max(np.abs(c - c.conj().T))
    if herm > 1e-8:
        raise ParameterError(f"correlation matrix not Hermitian ({herm:.3e})")
    min_eig = float(np.linalg.eigvalsh((c + c.conj().T) / 2).min())
    if min_eig < -1e-8:
        raise ParameterError(
            f"correlation matrix not positive semidefinite ({min_eig:.3e})")
    L = c.shape[0]
    j = np.arange(L)
    dist2 = (j[:, None] - j[None, :]) ** 2
    denom = float(np.sum(c).real)
    if denom <= 0:
        raise DegenerateProfileError(
            f"correlation sum {denom:.3e} is not positive")
    num = float(np.sum(dist2 * c).real)
    return float(np.sqrt(max(num, 0.0) / denom))


def xi_upper_bound(L: int) -> float:
    """Saturation value of xi_L, reached by a constant correlation matrix."""
    return float(np.sqrt((L ** 2 - 1) / 6.0))


def analyze_correlations(state, reference: int | None = None,
                         r_range=None) -> CorrelationProfile:
    """Profile plus decay fit plus finite-size length, one O(L^2) pass."""
    if reference is None:
        reference = center_site(state.L)
    matrix = correlation_matrix(state)
    r_max = min(default_r_max(state.L), state.L - 1 - reference)
    values = matrix[reference, reference:reference + r_max + 1]
    profile = CorrelationProfile(reference, values)
    profile.xi_L = finite_size_xi(matrix)
    try:
        profile.eta, profile.xi, profile.fit_residual = fit_correlation_decay(
            values, r_range)
    except FitDomainError:
        pass
    return profile


# ---------------------------------------------------------------------------
# phase quantifiers

COMPRESSIBILITY_WINDOW = (0.425, 0.575)


def compressibility(filling_samples, window=COMPRESSIBILITY_WINDOW) -> float:
    """Least-squares slope of filling versus chemical potential in a window."""
    samples = [(float(mu), float(rho)) for mu, rho in filling_samples]
    lo, hi = window
    inside = [(mu, rho) for mu, rho in samples if lo <= mu <= hi]
    if len(inside) < 3:
        raise ParameterError(
            f"need >= 3 samples in window [{lo}, {hi}], got {len(inside)}")
    mu = np.array([m for m, _ in inside])
    rho = np.array([r for _, r in inside])
    design = np.column_stack([np.ones_like(mu), mu])
    coef, _, _, _ = np.linalg.lstsq(design, rho, rcond=None)
    return float(coef[1])


def superfluid_quantifier(xi_L: float, xi_L_plus: float,
                          delta_L: int) -> float:
    """Incremental growth of xi_L with system size."""
    if delta_L < 1:
        raise ParameterError(f"delta_L must be >= 1, got {delta_L}")
    return (float(xi_L_plus) - float(xi_L)) / float(delta_L)


def mott_quantifier(variance_grid) -> np.ndarray:
    """Deviation of the center-site variance from its grid maximum."""
    grid = np.asarray(variance_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("variance grid is empty")
    return grid.max() - grid


# ---------------------------------------------------------------------------
# CSV emission

CSV_HEADER = ("J", "T", "site", "n_mean", "n_var", "r", "C_r", "eta", "xi",
              "xi_L", "upsilon", "theta", "drho_dmu")


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, complex):
        value = value.real
    return f"{float(value):.12g}"


def write_csv(path, rows, header=CSV_HEADER):
    lines = [",".join(header)]
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(col) for col in header]
        lines.append(",".join(format_cell(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def analysis_rows(J, T, stats: SiteStatistics,
                  profile: CorrelationProfile | None = None,
                  upsilon=None, theta=None, drho_dmu=None):
    """Rows for the standard analysis CSV: one per site, one per distance."""
    rows = []
    for site, (mean, var) in enumerate(zip(stats.occupations,
                                           stats.variances)):
        rows.append({"J": J, "T": T, "site": site, "n_mean": mean.real,
                     "n_var": var.real})
    if profile is not None:
        for r, val in enumerate(profile.values):
            rows.append({"J": J, "T": T, "r": r, "C_r": val.real,
                         "eta": profile.eta, "xi": profile.xi,
                         "xi_L": profile.xi_L})
    summary = {"J": J, "T": T, "upsilon": upsilon, "theta": theta,
               "drho_dmu": drho_dmu}
    if any(v is not None for v in (upsilon, theta, drho_dmu)):
        rows.append(summary)
    return rows
