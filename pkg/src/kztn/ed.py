"""Dense exact-diagonalization references for small chains.

Everything here is ground truth for the tensor-network engines: sector
spectra, grand-canonical Gibbs observables, and time-dependent propagation
with the same ramp protocol. Dimensions are capped so any call finishes in
well under a minute.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh

from .errors import (DomainWarning, NumericalError, ParameterError,
                     ResourceError)
from .model import ModelParams, local_operators
from .observables import SiteStatistics

DENSE_GUARD = 4096
SUDDEN_VALIDITY = 0.5


def _check_guard(params: ModelParams):
    dim = params.d ** params.L
    if dim > DENSE_GUARD:
        raise ResourceError(
            f"dense basis would have {dim} states (guard {DENSE_GUARD})")
    return dim


def occupation_table(L: int, d: int) -> np.ndarray:
    """Basis-state occupations, site 0 most significant (kron ordering)."""
    idx = np.arange(d ** L)
    occs = np.empty((d ** L, L), dtype=np.int64)
    for j in range(L):
        occs[:, j] = (idx // d ** (L - 1 - j)) % d
    return occs


def site_annihilator(L: int, d: int, site: int) -> sp.csr_matrix:
    b = sp.csr_matrix(local_operators(d).annihilator.real)
    left = sp.identity(d ** site, format="csr")
    right = sp.identity(d ** (L - 1 - site), format="csr")
    return sp.kron(sp.kron(left, b), right, format="csr")


def dense_hamiltonian(params: ModelParams,
                      j_override: float | None = None) -> sp.csr_matrix:
    """Sparse Hamiltonian of the full chain in the occupation basis."""
    _check_guard(params)
    L, d, U, mu = params.L, params.d, params.U, params.mu
    J = params.J if j_override is None else float(j_override)
    occs = occupation_table(L, d)
    diag = (U / 2.0 * occs * (occs - 1) - mu * occs).sum(axis=1)
    h = sp.diags(diag.astype(np.float64), format="csr")
    bonds = [(j, j + 1) for j in range(L - 1)]
    if params.boundary == "periodic":
        bonds.append((L - 1, 0))
    if J != 0.0:
        for j, k in bonds:
            hop = site_annihilator(L, d, j).T @ site_annihilator(L, d, k)
            h = h - J * (hop + hop.T)
    return sp.csr_matrix(h)


@dataclass
class DenseSpectrum:
    energies: np.ndarray
    states: np.ndarray
    sector_labels: np.ndarray | None = None
    basis_indices: np.ndarray | None = None


def ed_spectrum(params: ModelParams, sector: int | None = None) -> DenseSpectrum:
    """Eigen-decomposition of the chain, optionally restricted to total N.

    The full spectrum is assembled sector by sector so every eigenvector
    carries an exact particle-number label even across degeneracies.
    """
    dim = _check_guard(params)
    occs = occupation_table(params.L, params.d)
    totals = occs.sum(axis=1)
    h = dense_hamiltonian(params)

    def solve_block(n):
        idx = np.flatnonzero(totals == n)
        if idx.size == 0:
            return None
        block = h[idx][:, idx].toarray()
        vals, vecs = eigh(block)
        return idx, vals, vecs

    if sector is not None:
        out = solve_block(int(sector))
        if out is None:
            raise ParameterError(
                f"sector N={sector} is empty for L={params.L}, d={params.d}")
        idx, vals, vecs = out
        labels = np.full(vals.size, int(sector), dtype=np.int64)
        return DenseSpectrum(vals, vecs, labels, idx)

    energies = np.empty(dim)
    states = np.zeros((dim, dim))
    labels = np.empty(dim, dtype=np.int64)
    col = 0
    for n in range(0, params.L * (params.d - 1) + 1):
        out = solve_block(n)
        if out is None:
            continue
        idx, vals, vecs = out
        k = vals.size
        energies[col:col + k] = vals
        states[idx, col:col + k] = vecs
        labels[col:col + k] = n
        col += k
    order = np.argsort(energies, kind="stable")
    return DenseSpectrum(energies[order], states[:, order], labels[order])


def _gibbs_weights(energies: np.ndarray, T: float) -> np.ndarray:
    if T < 0:
        raise ParameterError(f"temperature must be >= 0, got {T}")
    if T == 0:
        ground = np.abs(energies - energies[0]) < 1e-10
        w = ground.astype(float)
    else:
        w = np.exp(-(energies - energies[0]) / T)
    return w / w.sum()


def ed_gibbs_density(params: ModelParams, T: float) -> np.ndarray:
    """Dense grand-canonical rho = exp(-H/T)/Z (projector mixture at T=0)."""
    spectrum = ed_spectrum(params)
    w = _gibbs_weights(spectrum.energies, T)
    keep = w > 1e-16
    x = spectrum.states[:, keep] * np.sqrt(w[keep])
    return x @ x.T


def dense_observables(state, L: int, d: int):
    """SiteStatistics and <b^dag_j b_k> matrix from a dense vector or rho."""
    dim = d ** L
    occs = occupation_table(L, d)
    state = np.asarray(state)
    annis = [site_annihilator(L, d, j) for j in range(L)]
    if state.ndim == 1:
        if state.shape != (dim,):
            raise ParameterError(f"state length {state.shape} != {dim}")
        p = np.abs(state) ** 2
        cols = [b @ state for b in annis]
        corr = np.empty((L, L), dtype=np.complex128)
        for j in range(L):
            for k in range(j, L):
                corr[j, k] = np.vdot(cols[j], cols[k])
                corr[k, j] = np.conj(corr[j, k])
    elif state.ndim == 2:
        if state.shape != (dim, dim):
            raise ParameterError(f"density matrix shape {state.shape}")
        p = np.diag(state).real
        corr = np.empty((L, L), dtype=np.complex128)
        for k in range(L):
            bk_rho = annis[k] @ state                 # Tr[b+_j b_k rho]
            for j in range(k + 1):
                corr[j, k] = annis[j].multiply(bk_rho).sum()
                corr[k, j] = np.conj(corr[j, k])
    else:
        raise ParameterError("initial must be a vector or a square matrix")
    n_mean = p @ occs
    n_two = p @ occs.astype(float) ** 2
    variances = n_two - n_mean ** 2
    total = float(n_mean.sum())
    stats = SiteStatistics(n_mean.astype(np.complex128),
                           variances, total / L, total)
    return stats, corr


def ed_gibbs_observables(params: ModelParams, T: float):
    """Boltzmann-weighted site statistics and correlation matrix."""
    _check_guard(params)
    spectrum = ed_spectrum(params)
    w = _gibbs_weights(spectrum.energies, T)
    keep = w > 1e-16
    x = spectrum.states[:, keep] * np.sqrt(w[keep])
    occs = occupation_table(params.L, params.d)
    p = (x ** 2).sum(axis=1)
    n_mean = p @ occs
    n_two = p @ occs.astype(float) ** 2
    variances = n_two - n_mean ** 2
    total = float(n_mean.sum())
    stats = SiteStatistics(n_mean.astype(np.complex128),
                           variances, total / params.L, total)
    L = params.L
    ys = [site_annihilator(L, params.d, j) @ x for j in range(L)]
    corr = np.empty((L, L), dtype=np.complex128)
    for j in range(L):
        for k in range(j, L):
            corr[j, k] = np.sum(ys[j] * ys[k])
            corr[k, j] = np.conj(corr[j, k])
    return stats, corr


class PropagationResult(NamedTuple):
    final: np.ndarray
    stats: SiteStatistics
    correlations: np.ndarray
    steps_used: int


def _propagate_once(initial, params, protocol, t_lo, t_hi, rtol, max_step):
    from scipy.integrate import solve_ivp

    h_diag = dense_hamiltonian(params, j_override=0.0)
    h_kin = dense_hamiltonian(params, j_override=1.0) - h_diag
    state = np.asarray(initial, dtype=np.complex128)
    shape = state.shape

    if state.ndim == 1:
        def rhs(t, y):
            j = protocol.value(t)
            return -1j * (h_diag @ y + j * (h_kin @ y))
    else:
        def rhs(t, y):
            rho = y.reshape(shape)
            j = protocol.value(t)
            h_rho = h_diag @ rho + j * (h_kin @ rho)
            rho_h = (h_diag @ rho.T + j * (h_kin @ rho.T)).T
            return (-1j * (h_rho - rho_h)).ravel()

    sol = solve_ivp(rhs, (t_lo, t_hi), state.ravel(), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-2, max_step=max_step)
    if not sol.success:
        raise NumericalError(f"dense propagation failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def ed_propagate(initial, params: ModelParams, protocol,
                 steps: int | None = None, t_start: float | None = None,
                 t_end: float | None = None) -> PropagationResult:
    """Propagate a dense state or density matrix through the ramp.

    Integrates the Schroedinger / von-Neumann equation with an eighth-order
    adaptive scheme, then tightens the tolerance (and halves the step cap)
    until every site statistic and correlation entry moves by less than
    1e-9 between passes. ``steps`` caps the initial step size at
    (window / steps).
    """
    _check_guard(params)
    dim = params.d ** params.L
    shape = np.shape(initial)
    if shape not in ((dim,), (dim, dim)):
        raise ParameterError(
            f"initial shape {shape} incompatible with L={params.L}, "
            f"d={params.d}")
    t_lo = -protocol.tau_q / 2.0 if t_start is None else float(t_start)
    t_hi = protocol.tau_q / 2.0 if t_end is None else float(t_end)
    if t_hi < t_lo:
        raise ParameterError(f"window [{t_lo}, {t_hi}] is reversed")
    if t_hi == t_lo:
        stats, corr = dense_observables(initial, params.L, params.d)
        return PropagationResult(np.asarray(initial, dtype=np.complex128),
                                 stats, corr, 0)
    max_step = (t_hi - t_lo) / steps if steps else np.inf
    rtol = 1e-8
    state = _propagate_once(initial, params, protocol, t_lo, t_hi, rtol,
                            max_step)
    stats, corr = dense_observables(state, params.L, params.d)
    fingerprint = np.concatenate([stats.occupations.real, stats.variances,
                                  corr.real.ravel(), corr.imag.ravel()])
    passes = 1
    for _ in range(3):
        rtol *= 1e-2
        max_step = max_step / 2 if np.isfinite(max_step) else max_step
        passes += 1
        state2 = _propagate_once(initial, params, protocol, t_lo, t_hi,
                                 max(rtol, 1e-13), max_step)
        stats2, corr2 = dense_observables(state2, params.L, params.d)
        fp2 = np.concatenate([stats2.occupations.real, stats2.variances,
                              corr2.real.ravel(), corr2.imag.ravel()])
        drift = float(np.max(np.abs(fp2 - fingerprint)))
        state, stats, corr, fingerprint = state2, stats2, corr2, fp2
        if drift < 1e-9:
            return PropagationResult(state, stats, corr, passes)
    raise NumericalError(
        f"propagation observables still moving ({drift:.2e}) at rtol {rtol}")


class SuddenQuench(NamedTuple):
    c0: float
    c1: float
    higher_order_bound: float
    xi_fin: float


def sudden_quench_correlations(tau_q: float, j_c: float,
                               L: int) -> SuddenQuench:
    """Leading-order post-quench correlations for very fast ramps.

    Valid for tau_q <= 0.5 under a periodic-ring idealization: C(0) = 1,
    C(1) = 2 tau_q^2 j_c, longer distances bounded at cubic order, and
    xi_fin = 2 sqrt(j_c) tau_q.
    """
    if tau_q < 0:
        raise ParameterError(f"tau_q must be >= 0, got {tau_q}")
    if tau_q > SUDDEN_VALIDITY:
        warnings.warn(DomainWarning(
            f"tau_q={tau_q} beyond series validity {SUDDEN_VALIDITY}"))
    c1 = 2.0 * tau_q ** 2 * j_c
    bound = 2.0 * j_c * tau_q ** 3
    xi_fin = 2.0 * np.sqrt(j_c) * tau_q
    return SuddenQuench(1.0, c1, bound, xi_fin)
