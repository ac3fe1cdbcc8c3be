"""Bose-Hubbard chain operators, bond Hamiltonians, and Trotter gate layers.

The chain Hamiltonian is

    H = -J sum_j (b_j^dag b_{j+1} + h.c.)
        + (U/2) sum_j n_j (n_j - 1) - mu sum_j n_j

on L sites with local occupations truncated to 0..d-1 (units U = hbar = 1).
Sites and bonds are 0-based in code; bond j couples sites (j, j+1), with the
periodic wrap bond L-1 coupling (L-1, 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ParameterError, UnsupportedRegimeError


@dataclass(frozen=True)
class ModelParams:
    """Chain parameters. U defaults to 1 per the unit convention."""

    L: int
    J: float
    U: float = 1.0
    mu: float = 0.5
    d: int = 5
    boundary: str = "open"

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 2:
            raise ParameterError(f"L must be an integer >= 2, got {self.L}")
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise ParameterError(f"d must be an integer >= 2, got {self.d}")
        if not np.isfinite([self.J, self.U, self.mu]).all():
            raise ParameterError("J, U, mu must be finite")
        if self.J < 0:
            raise ParameterError(f"J must be >= 0, got {self.J}")
        if self.U <= 0:
            raise ParameterError(f"U must be > 0, got {self.U}")
        if self.boundary not in ("open", "periodic"):
            raise ParameterError(f"unknown boundary {self.boundary!r}")

    @property
    def n_bonds(self) -> int:
        return self.L - 1 if self.boundary == "open" else self.L

    def replace(self, **kwargs) -> "ModelParams":
        from dataclasses import replace as _replace
        return _replace(self, **kwargs)


class LocalOperators(NamedTuple):
    annihilator: np.ndarray
    creator: np.ndarray
    number: np.ndarray


def local_operators(d: int) -> LocalOperators:
    """Truncated ladder operators: b has entries sqrt(n) at (n-1, n)."""
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ParameterError(f"d must be an integer >= 2, got {d}")
    b = np.zeros((d, d), dtype=np.complex128)
    for n in range(1, d):
        b[n - 1, n] = np.sqrt(n)
    number = np.diag(np.arange(d, dtype=np.float64)).astype(np.complex128)
    return LocalOperators(b, b.conj().T, number)


def onsite_hamiltonian(params: ModelParams) -> np.ndarray:
    """Single-site term (U/2) n(n-1) - mu n as a d x d diagonal matrix."""
    n = np.arange(params.d, dtype=np.float64)
    diag = 0.5 * params.U * n * (n - 1.0) - params.mu * n
    return np.diag(diag).astype(np.complex128)


def _bond_weights(params: ModelParams, bond: int) -> tuple[float, float]:
    # Interior sites sit on two bonds and contribute half their on-site term
    # to each; the open-chain end sites sit on one bond and contribute fully.
    if params.boundary == "periodic":
        return 0.5, 0.5
    w_left = 1.0 if bond == 0 else 0.5
    w_right = 1.0 if bond == params.L - 2 else 0.5
    return w_left, w_right


def bond_hamiltonian(params: ModelParams, bond: int) -> np.ndarray:
    """Two-site Hamiltonian for ``bond`` (coupling sites bond, bond+1).

    Contains the hopping term plus the adjacent on-site terms with the
    boundary-aware weights, so that the sum over all bonds reproduces the
    full chain Hamiltonian exactly.
    """
    if not 0 <= bond < params.n_bonds:
        raise ParameterError(
            f"bond {bond} out of range for L={params.L} ({params.boundary})"
        )
    d = params.d
    b, bdag, _ = local_operators(d)
    eye = np.eye(d, dtype=np.complex128)
    h_site = onsite_hamiltonian(params)
    w_left, w_right = _bond_weights(params, bond)
    hop = np.kron(bdag, b)
    h = -params.J * (hop + hop.conj().T)
    h += w_left * np.kron(h_site, eye) + w_right * np.kron(eye, h_site)
    return h


@dataclass
class GateLayer:
    """One Trotter layer: two-site gates on a set of disjoint bonds."""

    bonds: tuple[int, ...]
    gates: list[np.ndarray]
    parity: str
    prefactor: complex

    def __post_init__(self):
        if self.parity not in ("odd", "even"):
            raise ParameterError(f"unknown layer parity {self.parity!r}")


def _gate(h: np.ndarray, c: complex) -> np.ndarray:
    # exp(c H) through the Hermitian eigendecomposition, exact for any |c H|.
    try:
        evals, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for bond matrix of extents {h.shape}"
        ) from exc
    gate = (vecs * np.exp(c * evals)) @ vecs.conj().T
    if not np.all(np.isfinite(gate)):
        raise NumericalError("non-finite gate after exponentiation")
    return gate


def trotter_layers(params: ModelParams, c: complex):
    """Second-order splitting layers (odd c/2, even c, odd c/2).

    The odd layer holds the bonds starting at odd sites in 1-based counting,
    i.e. code bonds 0, 2, 4, ...; the even layer the rest. Applying the three
    returned layers in order realizes exp(c H) with O(c^3) local error.
    """
    if not np.isfinite(complex(c).real) or not np.isfinite(complex(c).imag):
        raise ParameterError(f"prefactor c must be finite, got {c}")
    odd_bonds = tuple(range(0, params.n_bonds, 2))
    even_bonds = tuple(range(1, params.n_bonds, 2))
    cache: dict[tuple[float, float, complex], np.ndarray] = {}

    def layer(bonds: tuple[int, ...], parity: str, pref: complex) -> GateLayer:
        gates = []
        for bond in bonds:
            key = (*_bond_weights(params, bond), pref)
            if key not in cache:
                cache[key] = _gate(bond_hamiltonian(params, bond), pref)
            gates.append(cache[key])
        return GateLayer(bonds, gates, parity, pref)

    half = c / 2.0
    return (layer(odd_bonds, "odd", half),
            layer(even_bonds, "even", c),
            layer(odd_bonds, "odd", half))


def intersector_gap(params: ModelParams) -> float:
    """Energy gap between the lowest states of adjacent number sectors at J=0.

    Only defined on the J = 0 axis where the closed form equals mu (at the
    mu = U/2 operating point the add- and remove-one-particle costs agree).
    """
    if params.J != 0:
        raise UnsupportedRegimeError(
            f"intersector gap closed form requires J = 0, got J = {params.J}"
        )
    return float(params.mu)
