"""Locally purified tensor trains for mixed states.

A state rho is held as rho = X X^dag with X a tensor train of rank-4 sites
(left bond, physical i, purification kappa, right bond). Positivity is
structural; cooling and unitary evolution act on X alone, touching only the
physical leg, so kappa never grows. Tr rho is the squared Frobenius norm
of X.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceWarning, DimensionError, ParameterError,
                     ResourceError)
from .model import ModelParams, trotter_layers
from .mps import MpsState, TruncationPolicy
from .tensor import _lq_pos, _qr_pos, truncated_svd

DENSE_GUARD = 4096


@dataclass
class LptnState:
    tensors: list
    beta: float = 0.0
    trace_norm: float = 1.0
    gauge_center: int | None = None
    truncation_log: list = field(default_factory=list)

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> tuple:
        return tuple(t.shape[-1] for t in self.tensors[:-1])

    @property
    def kappa_dims(self) -> tuple:
        return tuple(t.shape[2] for t in self.tensors)

    def copy(self) -> "LptnState":
        return LptnState([t.copy() for t in self.tensors], self.beta,
                         self.trace_norm, self.gauge_center,
                         list(self.truncation_log))


def infinite_temperature_state(L: int, d: int) -> LptnState:
    """Maximally mixed state: local identities over (i, kappa), scaled to trace 1."""
    if L < 2:
        raise ParameterError(f"need at least 2 sites, got L={L}")
    if d < 2:
        raise ParameterError(f"need local dimension >= 2, got d={d}")
    t = (np.eye(d, dtype=np.complex128) / np.sqrt(d)).reshape(1, d, d, 1)
    return LptnState([t.copy() for _ in range(L)], beta=0.0, gauge_center=None)


def from_mps(state: MpsState) -> LptnState:
    """Embed a pure state as an LPTN with kappa extents 1."""
    tensors = [t.reshape(t.shape[0], t.shape[1], 1, t.shape[2]).copy()
               for t in state.tensors]
    return LptnState(tensors, beta=np.inf, gauge_center=state.gauge_center)


# ---------------------------------------------------------------------------
# gauge and trace

def _shift_right(tensors, j):
    t = tensors[j]
    l, d, kap, r = t.shape
    q, rmat = _qr_pos(t.reshape(l * d * kap, r))
    tensors[j] = q.reshape(l, d, kap, q.shape[1])
    tensors[j + 1] = np.tensordot(rmat, tensors[j + 1], axes=(1, 0))


def _shift_left(tensors, j):
    t = tensors[j]
    l, d, kap, r = t.shape
    low, q = _lq_pos(t.reshape(l, d * kap * r))
    tensors[j] = q.reshape(q.shape[0], d, kap, r)
    tensors[j - 1] = np.tensordot(tensors[j - 1], low, axes=(3, 0))


def _move_center(tensors, center, target):
    if center is None:
        for j in range(len(tensors) - 1, target, -1):
            _shift_left(tensors, j)
        return target
    while center < target:
        _shift_right(tensors, center)
        center += 1
    while center > target:
        _shift_left(tensors, center)
        center -= 1
    return center


def trace(state: LptnState) -> float:
    """Tr rho = squared Frobenius norm of X, via bond transfers."""
    env = np.ones((1, 1), dtype=np.complex128)
    for t in state.tensors:
        tmp = np.tensordot(env, t, axes=(1, 0))          # (abar, i, kap, b)
        env = np.tensordot(t.conj(), tmp, axes=((0, 1, 2), (0, 1, 2)))
    return float(env[0, 0].real)


def normalize(state: LptnState) -> LptnState:
    out = state.copy()
    tr = trace(out)
    if tr <= 0:
        raise ParameterError("state has non-positive trace")
    pivot = out.gauge_center if out.gauge_center is not None else 0
    out.tensors[pivot] = out.tensors[pivot] / np.sqrt(tr)
    out.trace_norm = tr
    return out


# ---------------------------------------------------------------------------
# gate sweeps

def _apply_gate(tensors, bond, gate, policy):
    t1, t2 = tensors[bond], tensors[bond + 1]
    l, d, k1, _ = t1.shape
    _, _, k2, r = t2.shape
    theta = np.tensordot(t1, t2, axes=(3, 0))            # (l, i1, k1, i2, k2, r)
    g4 = gate.reshape(d, d, d, d)                        # (o1, o2, i1, i2)
    theta = np.tensordot(theta, g4, axes=((1, 3), (2, 3)))
    theta = theta.transpose(0, 4, 1, 5, 2, 3)            # (l, o1, k1, o2, k2, r)
    res = truncated_svd(theta.reshape(l * d * k1, d * k2 * r),
                        policy.max_bond, policy.svd_cutoff)
    kept = res.kept_rank
    tensors[bond] = res.left_isometry.reshape(l, d, k1, kept)
    tensors[bond + 1] = (res.singular_values[:, None]
                         * res.right_isometry).reshape(kept, d, k2, r)
    return res.discarded_weight


def _sweep(state: LptnState, layers, policy, renormalize):
    """Apply the three Trotter layers to X once; returns the evolved state."""
    tensors = list(state.tensors)
    d = state.d
    center = state.gauge_center
    discarded = 0.0
    for layer in layers:
        for bond, gate in zip(layer.bonds, layer.gates):
            if gate.shape != (d * d, d * d):
                raise DimensionError(
                    f"gate extents {gate.shape} do not match d={d}")
            center = _move_center(tensors, center, bond)
            discarded += _apply_gate(tensors, bond, gate, policy)
            center = bond + 1
    out = LptnState(tensors, beta=state.beta, trace_norm=state.trace_norm,
                    gauge_center=center,
                    truncation_log=state.truncation_log + [discarded])
    if renormalize:
        tr = float(np.linalg.norm(tensors[center]) ** 2)
        if tr <= 0:
            raise ParameterError("state collapsed to zero trace")
        tensors[center] = tensors[center] / np.sqrt(tr)
        out.trace_norm = tr
    return out


def cool(state: LptnState, params: ModelParams, target_beta: float,
         policy: TruncationPolicy) -> LptnState:
    """Imaginary-time evolution of X to inverse temperature ``target_beta``.

    rho picks up exp(-dbeta*H/2) from both X and X^dag per step, so the layer
    prefactor is -dbeta/2. The trace is renormalized every step; a shorter
    final step lands on target_beta exactly.
    """
    if not target_beta > state.beta:
        raise ParameterError(
            f"target beta {target_beta} not above current {state.beta}")
    if params.boundary != "open":
        raise ParameterError("LPTN engine supports open boundaries only")
    remaining = target_beta - state.beta
    n_full = int(remaining / policy.dbeta + 1e-12)
    steps = [policy.dbeta] * n_full
    residue = remaining - n_full * policy.dbeta
    if residue > 1e-12:
        steps.append(residue)
    out = state
    log_start = len(state.truncation_log)
    cache = {}
    for dbeta in steps:
        key = round(dbeta, 15)
        if key not in cache:
            cache[key] = trotter_layers(params, -dbeta / 2.0)
        out = _sweep(out, cache[key], policy, renormalize=True)
        out.beta += dbeta
    step_weights = out.truncation_log[log_start:]
    if sum(step_weights) > 1e-4:
        warnings.warn(ConvergenceWarning(
            f"cooling discarded {sum(step_weights):.3e} total weight",
            trace=step_weights))
    return out


def real_evolve(state: LptnState, params: ModelParams, protocol,
                policy: TruncationPolicy, t_start: float | None = None,
                t_end: float | None = None,
                renormalize: bool = True) -> LptnState:
    """Unitary evolution of rho over the protocol's ramp window.

    Each Trotter step uses the coupling at the step midpoint, J(t + dt/2),
    keeping the global error second order for the time-dependent ramp.
    ``t_start``/``t_end`` restrict the window (checkpoint splits).
    """
    lo = -protocol.tau_q / 2.0 if t_start is None else float(t_start)
    hi = protocol.tau_q / 2.0 if t_end is None else float(t_end)
    if hi < lo - 1e-12:
        raise ParameterError(f"evolution window [{lo}, {hi}] is reversed")
    out = state
    t = lo
    while hi - t > 1e-12:
        dt = min(policy.dt, hi - t)
        j_mid = protocol.value(t + dt / 2.0)
        layers = trotter_layers(params.replace(J=j_mid), -1j * dt)
        out = _sweep(out, layers, policy, renormalize=renormalize)
        t += dt
    return out


# ---------------------------------------------------------------------------
# expectations

def _transfer(env, t, op=None):
    tmp = np.tensordot(env, t, axes=(1, 0))              # (abar, i, kap, b)
    if op is not None:
        tmp = np.tensordot(op, tmp, axes=(1, 1)).transpose(1, 0, 2, 3)
    return np.tensordot(t.conj(), tmp, axes=((0, 1, 2), (0, 1, 2)))


def _transfer_right(t, env, op=None):
    tmp = np.tensordot(t, env, axes=(3, 1))              # (a, i, kap, bbar)
    if op is not None:
        tmp = np.tensordot(op, tmp, axes=(1, 1)).transpose(1, 0, 2, 3)
    # result is (abar, a): keep the (conj, ket) ordering of the left envs
    return np.tensordot(t.conj(), tmp, axes=((1, 2, 3), (1, 2, 3)))


def _left_envs(tensors):
    envs = [np.ones((1, 1), dtype=np.complex128)]
    for t in tensors:
        envs.append(_transfer(envs[-1], t))
    return envs


def _right_envs(tensors):
    envs = [np.ones((1, 1), dtype=np.complex128)] * (len(tensors) + 1)
    for j in range(len(tensors) - 1, -1, -1):
        envs[j] = _transfer_right(tensors[j], envs[j + 1])
    return envs


def _close(env_left, t, op, env_right):
    mid = _transfer(env_left, t, op)
    return complex(np.tensordot(mid, env_right, axes=((0, 1), (0, 1))))


def expectation_mixed(state: LptnState, ops) -> complex:
    """Tr[rho * product of single-site operators], one left-right sweep."""
    sites = [s for s, _ in ops]
    if sites != sorted(set(sites)):
        raise ParameterError("operator sites must be strictly increasing")
    if sites and (sites[0] < 0 or sites[-1] >= state.L):
        raise ParameterError(f"operator site out of range 0..{state.L - 1}")
    d = state.d
    table = dict(ops)
    env = np.ones((1, 1), dtype=np.complex128)
    for j, t in enumerate(state.tensors):
        op = table.get(j)
        if op is not None and op.shape != (d, d):
            raise DimensionError(f"operator at site {j} has extents {op.shape}")
        env = _transfer(env, t, op)
    return complex(env[0, 0])


def site_expectations(state: LptnState, op) -> np.ndarray:
    lefts = _left_envs(state.tensors)
    rights = _right_envs(state.tensors)
    out = np.empty(state.L, dtype=np.complex128)
    for j, t in enumerate(state.tensors):
        out[j] = _close(lefts[j], t, op, rights[j + 1])
    return out


def pair_expectations(state: LptnState, op_a, op_b,
                      hermitian_pairs: bool = True) -> np.ndarray:
    """Matrix of Tr[rho A_j B_k] for j < k, with Tr[rho (A B)_j] on the diagonal."""
    L = state.L
    lefts = _left_envs(state.tensors)
    rights = _right_envs(state.tensors)
    out = np.zeros((L, L), dtype=np.complex128)
    diag = site_expectations(state, op_a @ op_b)
    for j in range(L):
        out[j, j] = diag[j]
        env = _transfer(lefts[j], state.tensors[j], op_a)
        for k in range(j + 1, L):
            out[j, k] = _close(env, state.tensors[k], op_b, rights[k + 1])
            if hermitian_pairs:
                out[k, j] = np.conj(out[j, k])
            env = _transfer(env, state.tensors[k])
    return out


def pair_row(state: LptnState, reference: int, op_a, op_b,
             r_max: int) -> np.ndarray:
    """Tr[rho A_ref B_(ref+r)] for r = 0..r_max, one sweep."""
    if not 0 <= reference < state.L:
        raise ParameterError(f"reference site {reference} out of range")
    if reference + r_max >= state.L:
        raise ParameterError(
            f"reference {reference} + r_max {r_max} exceeds chain end")
    rights = _right_envs(state.tensors)
    env = np.ones((1, 1), dtype=np.complex128)
    for j in range(reference):
        env = _transfer(env, state.tensors[j])
    vals = np.empty(r_max + 1, dtype=np.complex128)
    vals[0] = _close(env, state.tensors[reference], op_a @ op_b,
                     rights[reference + 1])
    env = _transfer(env, state.tensors[reference], op_a)
    for r in range(1, r_max + 1):
        k = reference + r
        vals[r] = _close(env, state.tensors[k], op_b, rights[k + 1])
        env = _transfer(env, state.tensors[k])
    return vals


def dense_density_matrix(state: LptnState) -> np.ndarray:
    """Dense rho = X X^dag for small systems (testing aid)."""
    dim = state.d ** state.L
    if dim > DENSE_GUARD:
        raise ResourceError(
            f"dense density matrix would be {dim}x{dim} (guard {DENSE_GUARD})")
    acc = np.ones((1, 1, 1), dtype=np.complex128)        # (phys, kap, bond)
    for t in state.tensors:
        acc = np.tensordot(acc, t, axes=(2, 0))          # (P, K, i, kap, r)
        p, k = acc.shape[0], acc.shape[1]
        _, _, d, kap, r = acc.shape
        acc = acc.transpose(0, 2, 1, 3, 4).reshape(p * d, k * kap, r)
    x = acc[:, :, 0]
    return x @ x.conj().T
