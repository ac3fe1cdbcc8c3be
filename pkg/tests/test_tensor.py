"""Kernel-level checks: contraction, truncated SVD, gauging, serialization."""

import numpy as np
import pytest

from kztn import tensor
from kztn.errors import DimensionError, FormatError, NumericalError


def test_contract_matches_einsum(rng):
    a = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    b = rng.standard_normal((5, 4, 2)) + 1j * rng.standard_normal((5, 4, 2))
    got = tensor.contract(a, b, [(2, 0), (1, 1)])
    want = np.einsum("ijk,kjl->il", a, b)
    np.testing.assert_allclose(got, want, atol=1e-13)


def test_contract_extent_mismatch_raises(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((5, 2))
    with pytest.raises(DimensionError):
        tensor.contract(a, b, [(1, 0)])


def test_svd_exact_reconstruction(rng):
    m = rng.standard_normal((12, 7)) + 1j * rng.standard_normal((12, 7))
    res = tensor.truncated_svd(m, max_rank=7)
    rebuilt = (res.left_isometry * res.singular_values) @ res.right_isometry
    np.testing.assert_allclose(rebuilt, m, atol=1e-12)
    assert res.discarded_weight == 0.0
    assert np.all(np.diff(res.singular_values) <= 1e-14)


def test_svd_isometries(rng):
    m = rng.standard_normal((9, 14)) + 1j * rng.standard_normal((9, 14))
    res = tensor.truncated_svd(m, max_rank=4)
    u, vh = res.left_isometry, res.right_isometry
    np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(vh @ vh.conj().T, np.eye(4), atol=1e-12)


def test_svd_cutoff_semantics():
    # Singular values 1, 1e-3, 1e-9: with cutoff 1e-12 the squared tail of
    # the third value (~1e-18 relative) falls below threshold, the second
    # (~1e-6 relative) does not.
    s = np.array([1.0, 1e-3, 1e-9])
    m = np.diag(s)
    res = tensor.truncated_svd(m, max_rank=3, cutoff=1e-12)
    assert res.kept_rank == 2
    assert res.discarded_weight == pytest.approx(1e-18 / np.sum(s ** 2))


def test_svd_max_rank_cap_and_weight(rng):
    m = rng.standard_normal((20, 20))
    full = np.linalg.svd(m, compute_uv=False)
    res = tensor.truncated_svd(m, max_rank=5)
    assert res.kept_rank == 5
    want = np.sum(full[5:] ** 2) / np.sum(full ** 2)
    assert res.discarded_weight == pytest.approx(want, rel=1e-10)


def test_svd_zero_matrix_keeps_one():
    res = tensor.truncated_svd(np.zeros((4, 6)), max_rank=3)
    assert res.kept_rank == 1
    assert res.singular_values[0] == 0.0
    assert res.discarded_weight == 0.0


def test_svd_rejects_bad_inputs(rng):
    with pytest.raises(DimensionError):
        tensor.truncated_svd(np.zeros((2, 2, 2)), max_rank=1)
    with pytest.raises(DimensionError):
        tensor.truncated_svd(np.eye(3), max_rank=0)
    with pytest.raises(NumericalError):
        tensor.truncated_svd(np.eye(3), max_rank=2, cutoff=1.5)
    bad = np.eye(3)
    bad[0, 0] = np.nan
    with pytest.raises(NumericalError):
        tensor.truncated_svd(bad, max_rank=2)


def _rapid_decay_matrix(rng, n, rank_scale=8.0):
    u, _ = np.linalg.qr(rng.standard_normal((n, n))
                        + 1j * rng.standard_normal((n, n)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n))
                        + 1j * rng.standard_normal((n, n)))
    s = np.exp(-np.arange(n) / rank_scale * np.log(10.0))
    return (u * s) @ v.conj().T, s


def test_svd_randomized_matches_exact(rng):
    m, _ = _rapid_decay_matrix(rng, 400)
    exact = tensor.truncated_svd(m, max_rank=32, method="exact")
    fast = tensor.truncated_svd(m, max_rank=32, method="randomized")
    np.testing.assert_allclose(fast.singular_values, exact.singular_values,
                               rtol=1e-8)
    rebuilt_fast = (fast.left_isometry * fast.singular_values
                    ) @ fast.right_isometry
    rebuilt_exact = (exact.left_isometry * exact.singular_values
                     ) @ exact.right_isometry
    np.testing.assert_allclose(rebuilt_fast, rebuilt_exact, atol=1e-9)


def test_svd_randomized_deterministic(rng):
    m, _ = _rapid_decay_matrix(rng, 350)
    a = tensor.truncated_svd(m, max_rank=24, method="randomized")
    b = tensor.truncated_svd(m, max_rank=24, method="randomized")
    assert np.array_equal(a.singular_values, b.singular_values)
    assert np.array_equal(a.left_isometry, b.left_isometry)
    assert np.array_equal(a.right_isometry, b.right_isometry)


def test_svd_auto_switches_consistently(rng):
    # Whatever backend "auto" picks at this size must agree with "exact"
    # to tolerances far below any physics use of the result.
    m, _ = _rapid_decay_matrix(rng, 400)
    auto = tensor.truncated_svd(m, max_rank=32, cutoff=1e-24, method="auto")
    exact = tensor.truncated_svd(m, max_rank=32, cutoff=1e-24, method="exact")
    np.testing.assert_allclose(auto.singular_values, exact.singular_values,
                               rtol=1e-8)


def _random_train(rng, extents):
    train = []
    for left, phys, right in extents:
        train.append(rng.standard_normal((left, phys, right))
                     + 1j * rng.standard_normal((left, phys, right)))
    return train


def _train_to_dense(train):
    acc = train[0][0]
    for t in train[1:]:
        acc = np.tensordot(acc, t, axes=(acc.ndim - 1, 0))
    return acc[..., 0]


def test_gauge_preserves_global_tensor(rng):
    train = _random_train(rng, [(1, 2, 3), (3, 2, 4), (4, 2, 1)])
    dense = _train_to_dense(train)
    for center in range(3):
        gauged = tensor.gauge(train, center)
        np.testing.assert_allclose(_train_to_dense(gauged), dense, atol=1e-12)


def test_gauge_isometries(rng):
    train = _random_train(rng, [(1, 3, 3), (3, 3, 3), (3, 3, 1)])
    gauged = tensor.gauge(train, 1)
    left = gauged[0].reshape(-1, gauged[0].shape[-1])
    np.testing.assert_allclose(left.conj().T @ left,
                               np.eye(left.shape[1]), atol=1e-12)
    right = gauged[2].reshape(gauged[2].shape[0], -1)
    np.testing.assert_allclose(right @ right.conj().T,
                               np.eye(right.shape[0]), atol=1e-12)


def test_gauge_phase_fix_is_idempotent(rng):
    train = _random_train(rng, [(1, 2, 2), (2, 2, 2), (2, 2, 1)])
    once = tensor.gauge(train, 2)
    twice = tensor.gauge(once, 2)
    for a, b in zip(once, twice):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_gauge_rejects_bad_center(rng):
    train = _random_train(rng, [(1, 2, 2), (2, 2, 1)])
    with pytest.raises(DimensionError):
        tensor.gauge(train, 5)
    with pytest.raises(DimensionError):
        tensor.gauge([], 0)


def test_train_norm_matches_dense(rng):
    train = _random_train(rng, [(1, 2, 4), (4, 2, 3), (3, 2, 1)])
    dense = _train_to_dense(train)
    assert tensor.train_norm(train) == pytest.approx(np.linalg.norm(dense))
    gauged = tensor.gauge(train, 1)
    assert tensor.train_norm(gauged, center=1) == pytest.approx(
        np.linalg.norm(dense))


def test_tensor_bytes_roundtrip(rng):
    for shape in ((3,), (2, 3, 4), (1, 1, 2, 2)):
        t = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        buf = tensor.tensor_to_bytes(t)
        back, consumed = tensor.tensor_from_bytes(buf)
        assert consumed == len(buf)
        assert back.shape == tuple(shape)
        np.testing.assert_array_equal(back, t)


def test_tensor_bytes_rejects_corruption(rng):
    t = rng.standard_normal((2, 2))
    buf = tensor.tensor_to_bytes(t)
    with pytest.raises(FormatError):
        tensor.tensor_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        tensor.tensor_from_bytes(buf[:10])
    bad_version = buf[:4] + bytes([99]) + buf[5:]
    with pytest.raises(FormatError):
        tensor.tensor_from_bytes(bad_version)
