import numpy as np
import pytest
from hypothesis import given, strategies as st

from mnn.errors import ConfigError, NumericalError
from mnn.hierarchy import DyadicPartition
from mnn.hmatrix import (
    compress,
    compress_level,
    decompose_levels,
    dense_from_kernel,
    hmatrix_apply,
    hmatrix_apply_2d,
    kernel_matrix,
    param_count_h,
)


def test_dense_from_kernel_examples():
    A = dense_from_kernel(lambda x, y: np.ones(np.broadcast(x, y).shape), 4)
    assert np.array_equal(A, np.full((4, 4), 0.25))
    C = kernel_matrix("expcos", 16)
    for i in range(16):
        assert np.allclose(C[i], np.roll(C[0], i), atol=1e-15)
    R = dense_from_kernel(lambda x, y: np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y), 12)
    s = np.linalg.svd(R, compute_uv=False)
    assert s[1] < 1e-14 * s[0]


def test_dense_from_kernel_reports_bad_entry():
    with pytest.raises(NumericalError, match=r"\(0, 0\)"):
        with np.errstate(divide="ignore"):
            dense_from_kernel(lambda x, y: 1.0 / (x - y), 8)


def test_unknown_kernel():
    with pytest.raises(ConfigError):
        kernel_matrix("nope", 8)


@pytest.mark.parametrize("dim,N,L,m", [(1, 64, 4, 4), (2, 16, 2, 4)])
def test_decomposition_is_exact(dim, N, L, m, rng):
    p = DyadicPartition(N, L, m, dim)
    A = rng.standard_normal((p.size, p.size))
    dec = decompose_levels(A, p)
    assert np.array_equal(dec.total(), A)


def test_decomposition_block_counts():
    p = DyadicPartition(16, 2, 4)
    dec = decompose_levels(np.ones((16, 16)), p)

    def blocks(M):
        return int(M.reshape(4, 4, 4, 4).any(axis=(1, 3)).sum())

    assert blocks(dec.levels[2]) == 4
    assert blocks(dec.adjacent) == 12


def test_decomposition_rejects_wrong_size():
    with pytest.raises(ConfigError):
        decompose_levels(np.ones((5, 5)), DyadicPartition(16, 2, 4))


def test_rank_one_kernel_is_exact():
    p = DyadicPartition(64, 4, 4)
    A = kernel_matrix("ones", 64)
    f = compress(A, p, 1)
    assert np.abs(f.to_dense() - A).max() < 1e-15
    assert f.error_bound < 1e-13
    p2 = DyadicPartition(16, 2, 4, dim=2)
    A2 = kernel_matrix("ones", 16, 2)
    f2 = compress(A2, p2, 1)
    v = np.random.default_rng(0).standard_normal(256)
    assert np.abs(hmatrix_apply_2d(f2, v) - A2 @ v).max() < 1e-12


def _svd_tail_oracle(A_level, p, lev, r):
    pts = p.box_points(lev)
    total = 0.0
    for b in range(p.n_boxes(lev)):
        cols = np.concatenate([pts[j] for j in sorted(p.interaction_list(lev, b))])
        s = np.linalg.svd(A_level[np.ix_(pts[b], cols)], compute_uv=False)
        total += np.sum(s[r:] ** 2)
    return total


@pytest.mark.parametrize("r", [1, 2, 4])
def test_level_compression_against_svd_oracle(r):
    p = DyadicPartition(64, 4, 4)
    A = kernel_matrix("expcos", 64)
    dec = decompose_levels(A, p)
    for lev in range(2, 5):
        lf = compress_level(dec.levels[lev], p, lev, r)
        assert lf.U.shape == (2**lev, 64 // 2**lev, r)
        assert lf.V.shape == lf.U.shape
        assert np.isclose(lf.row_tail.sum(), _svd_tail_oracle(dec.levels[lev], p, lev, r), rtol=1e-9, atol=1e-30)
        f = compress(A, p, r)
        single = f.levels[lev]
        err = 0.0
        pts = p.box_points(lev)
        sh = p.band_shifts(lev, single.nb)
        approx = np.zeros_like(A)
        for b in range(2**lev):
            for t, j in enumerate(sh[b]):
                approx[np.ix_(pts[b], pts[j])] += single.U[b] @ single.M[b, t] @ single.V[j].T
        err = np.linalg.norm(approx - dec.levels[lev])
        assert err <= single.error_bound + 1e-13


def test_bases_are_orthonormal_with_sign_convention():
    p = DyadicPartition(64, 4, 4)
    f = compress(kernel_matrix("gaussian", 64), p, 3)
    for lf in f.levels.values():
        for Q in (lf.U, lf.V):
            for b in range(Q.shape[0]):
                assert np.allclose(Q[b].T @ Q[b], np.eye(3), atol=1e-12)
                mag = np.abs(Q[b])
                # first entry within rounding of the column maximum
                idx = np.argmax(mag >= (1 - 1e-8) * mag.max(axis=0), axis=0)
                assert np.all(Q[b][idx, np.arange(3)] >= 0)


def test_compression_error_monotone_in_rank():
    p = DyadicPartition(64, 4, 4)
    A = kernel_matrix("gaussian", 64)
    errs = [np.linalg.norm(compress(A, p, r).to_dense() - A) for r in (1, 2, 4, 8)]
    assert all(a >= b for a, b in zip(errs, errs[1:]))


def test_band_entries_outside_interaction_list_are_zero():
    p = DyadicPartition(64, 4, 4)
    f = compress(kernel_matrix("expcos", 64), p, 2)
    for lev, lf in f.levels.items():
        sh = p.band_shifts(lev, lf.nb)
        for b in range(2**lev):
            il = p.interaction_list(lev, b)
            for t, j in enumerate(sh[b]):
                off = t - lf.nb
                hit = j in il and p.band_offset(lev, b, j, lf.nb) == (off,)
                if not hit:
                    assert not lf.M[b, t].any()


def test_circulant_factors_are_shared_per_parity():
    # even and odd boxes see mirrored interaction lists below level 2, so
    # the bases, and with them the coupling blocks, repeat with period two
    p = DyadicPartition(64, 4, 4)
    f = compress(kernel_matrix("expcos", 64), p, 2)
    for lev, lf in f.levels.items():
        for parity in (0, 1):
            for arr in (lf.U, lf.V, lf.M):
                assert np.allclose(arr[parity::2], arr[parity], atol=1e-12)
    lf = f.levels[2]
    assert np.allclose(lf.M, lf.M[0], atol=1e-12)


@pytest.mark.parametrize("kernel", ["ones", "expcos", "gaussian"])
def test_apply_matches_reassembled_dense(kernel, rng):
    p = DyadicPartition(64, 4, 4)
    A = kernel_matrix(kernel, 64)
    f = compress(A, p, 3)
    V = rng.standard_normal((20, 64))
    H = f.to_dense()
    assert np.abs(hmatrix_apply(f, V) - V @ H.T).max() <= 1e-12 * np.abs(V @ H.T).max()
    err = np.linalg.norm(hmatrix_apply(f, V) - V @ A.T, axis=1) / np.linalg.norm(V, axis=1)
    assert err.max() <= f.error_bound + 1e-12


def test_apply_zero_and_size_check():
    p = DyadicPartition(32, 3, 4)
    f = compress(kernel_matrix("expcos", 32), p, 2)
    assert not hmatrix_apply(f, np.zeros(32)).any()
    with pytest.raises(ConfigError):
        hmatrix_apply(f, np.zeros(31))
    with pytest.raises(ConfigError):
        hmatrix_apply_2d(f, np.zeros(32))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_apply_is_linear(a, b, seed):
    p = DyadicPartition(32, 3, 4)
    f = _linear_factors()
    rng = np.random.default_rng(seed)
    v1, v2 = rng.standard_normal((2, 32))
    lhs = hmatrix_apply(f, a * v1 + b * v2)
    rhs = a * hmatrix_apply(f, v1) + b * hmatrix_apply(f, v2)
    assert np.allclose(lhs, rhs, atol=1e-13)


_CACHE = {}


def _linear_factors():
    if "f" not in _CACHE:
        _CACHE["f"] = compress(kernel_matrix("gaussian", 32), DyadicPartition(32, 3, 4), 2)
    return _CACHE["f"]


def test_two_dimensional_separable_kernel(rng):
    p = DyadicPartition(32, 3, 4, dim=2)
    A = kernel_matrix("expcos", 32, 2)
    f = compress(A, p, 4)
    V = rng.standard_normal((5, 1024))
    assert not hmatrix_apply_2d(f, np.zeros(1024)).any()
    err = np.linalg.norm(hmatrix_apply_2d(f, V) - V @ A.T, axis=1) / np.linalg.norm(V, axis=1)
    assert err.max() <= f.error_bound + 1e-12


def test_param_count_h():
    p = DyadicPartition(320, 6, 5)
    f = compress(np.zeros((320, 320)), p, 1)
    stored = sum(a.size for a in f.weight_arrays())
    assert param_count_h(p, 1) == stored
    n = param_count_h(p, 1)
    assert n <= 2 * 320 * np.log2(320) * 1 + 3 * 320 * 5 * 7
    m, r = 4, 2
    assert param_count_h(DyadicPartition(4 * m, 2, m), r) == 4 * m * r * 2 + 4 * r * r * 5 + 4 * m * m * 3
