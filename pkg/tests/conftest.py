"""Shared helpers: dense reference constructions independent of the engines.

The kron-based Hamiltonian builder here deliberately duplicates none of the
package's construction paths (ed.py assembles diagonals from occupation
strides, model.py works bond by bond), so agreement between all three is a
genuine cross-check rather than a tautology.
"""

import numpy as np
import pytest

from kztn.model import ModelParams, local_operators


def mps_to_vector(state):
    """Contract an MPS to the dense vector, site 0 most significant."""
    acc = state.tensors[0][0]                         # (p0, r)
    for t in state.tensors[1:]:
        acc = np.tensordot(acc, t, axes=(acc.ndim - 1, 0))
    return np.ascontiguousarray(acc[..., 0]).reshape(-1)


def kron_chain(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def embed_two_site(gate, L, d, bond):
    """Lift a (d^2 x d^2) gate on sites (bond, bond+1) to the full chain."""
    left = np.eye(d ** bond)
    right = np.eye(d ** (L - 2 - bond))
    return kron_chain([left, gate.reshape(d * d, d * d), right])


def dense_hamiltonian_kron(params: ModelParams) -> np.ndarray:
    """Full-chain Hamiltonian assembled operator by operator via kron."""
    L, d = params.L, params.d
    b, bdag, n = local_operators(d)
    eye = np.eye(d, dtype=np.complex128)
    h_site = 0.5 * params.U * (n @ n - n) - params.mu * n
    dim = d ** L
    h = np.zeros((dim, dim), dtype=np.complex128)
    for j in range(L):
        h += kron_chain([np.eye(d ** j), h_site, np.eye(d ** (L - 1 - j))])
    bonds = list(range(L - 1))
    if params.boundary == "periodic":
        bonds.append(L - 1)
    for bond in bonds:
        j, k = bond, (bond + 1) % L
        for a, c in ((bdag, b), (b, bdag)):
            mats = [eye] * L
            mats[j] = a
            mats[k] = c
            h += -params.J * kron_chain(mats)
    return h


def random_mps(rng, L, d, chi):
    """A normalized random MPS with bond dimension <= chi."""
    from kztn import mps

    tensors = []
    left = 1
    for j in range(L):
        right = min(chi, d ** (j + 1), d ** (L - 1 - j))
        shape = (left, d, right)
        tensors.append(rng.standard_normal(shape)
                       + 1j * rng.standard_normal(shape))
        left = right
    state = mps.MpsState([np.ascontiguousarray(t) for t in tensors])
    return mps.normalize(state)


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
