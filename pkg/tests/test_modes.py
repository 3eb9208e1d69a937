import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from droughtcause.errors import DataError
from droughtcause.modes import (
    compute_modes, compute_pcs, covariance, eigendecompose, eof_decompose, mp_bounds,
    select_nonrandom, varimax_criterion, varimax_rotate,
)
from droughtcause.synthetic import make_rng, random_orthonormal_patterns


def test_covariance_examples():
    assert_array_equal(covariance([[1.0], [-1.0]]), [[1.0]])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    S = covariance(A)
    assert S[0, 1] == 0.0 and S[1, 0] == 0.0
    c = make_rng(0).standard_normal(10)
    S = covariance(np.column_stack([c, c, c]))
    assert_allclose(S, S[0, 0])


def test_covariance_symmetric_psd():
    A = make_rng(1).standard_normal((50, 8))
    S = covariance(A)
    assert_array_equal(S, S.T)
    assert np.linalg.eigvalsh(S).min() > -1e-12


def test_eigendecompose_examples():
    w, U = eigendecompose(np.diag([2.0, 1.0]))
    assert_allclose(w, [2.0, 1.0])
    assert_allclose(np.abs(U), np.eye(2))
    w, U = eigendecompose(np.eye(3))
    assert_allclose(w, 1.0)
    assert_allclose(U.T @ U, np.eye(3), atol=1e-12)
    with pytest.raises(DataError):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eigendecompose_residuals_and_order():
    A = make_rng(2).standard_normal((60, 15))
    S = covariance(A)
    w, U = eigendecompose(S)
    assert np.all(np.diff(w) <= 0)
    for k in range(w.size):
        assert np.linalg.norm(S @ U[:, k] - w[k] * U[:, k]) < 1e-8
        assert np.max(U[:, k]) >= np.max(-U[:, k])


def test_gram_route_matches_direct():
    A = make_rng(3).standard_normal((20, 50))
    w_gram, U_gram = eof_decompose(A)
    w_dir, U_dir = eigendecompose(covariance(A))
    assert_allclose(w_gram, np.clip(w_dir, 0, None), atol=1e-10)
    k = U_gram.shape[1]
    assert k == 20
    # sign-fixed unit vectors of a simple spectrum agree up to rounding
    assert_allclose(U_gram[:, :k - 1], U_dir[:, :k - 1], atol=1e-8)


def test_mp_bounds_examples():
    assert mp_bounds(100, 400) == (0.25, 2.25)
    assert mp_bounds(50, 50) == (0.0, 4.0)
    r = 10988 / 840
    lo, hi = mp_bounds(10988, 840)
    assert_allclose([lo, hi], [(1 - np.sqrt(r)) ** 2, (1 + np.sqrt(r)) ** 2], rtol=1e-15)
    assert_allclose(r, 13.081, atol=5e-4)


def test_select_nonrandom_examples():
    b = (0.25, 2.25)
    assert select_nonrandom([2.0, 1.0, 0.5], b, normalize=False) == 0
    assert select_nonrandom([3.0, 2.26, 1.0], b, normalize=False) == 2
    assert select_nonrandom([], b) == 0
    # normalization divides by the mean eigenvalue first
    assert select_nonrandom([6.0, 3.0, 3.0], b, normalize=False) == 3
    assert select_nonrandom([6.0, 3.0, 3.0], b, normalize=True) == 0


def test_select_nonrandom_planted_rank():
    n, t = 200, 600
    P = random_orthonormal_patterns(n, 5, seed=1)
    amp = make_rng(2).standard_normal((t, 5)) * [7.0, 6.0, 5.5, 5.0, 4.5]
    A = amp @ P + make_rng(3).standard_normal((t, n))
    w, _ = eof_decompose(A - A.mean(axis=0))
    assert select_nonrandom(w, mp_bounds(n, t)) == 5


def test_varimax_simple_structure_is_fixed_point():
    U = np.zeros((6, 3))
    U[[0, 1], 0] = [0.8, 0.6]
    U[[2, 3], 1] = [0.6, 0.8]
    U[[4, 5], 2] = [1.0, 0.0]
    B, R = varimax_rotate(U)
    P = np.abs(np.round(R))
    assert_array_equal(P @ P.T, np.eye(3))
    assert_allclose(np.abs(R), P, atol=1e-10)
    assert_allclose(varimax_criterion(B), varimax_criterion(U), rtol=1e-12)


def _grid_oracle(U, n=200001):
    theta = np.linspace(0.0, np.pi / 2, n, endpoint=False)
    c, s = np.cos(theta), np.sin(theta)
    b1 = np.outer(U[:, 0], c) + np.outer(U[:, 1], s)
    b2 = -np.outer(U[:, 0], s) + np.outer(U[:, 1], c)
    p = U.shape[0]
    f = (p * np.sum(b1 ** 4, 0) - np.sum(b1 ** 2, 0) ** 2
         + p * np.sum(b2 ** 4, 0) - np.sum(b2 ** 2, 0) ** 2)
    return f.max()


@pytest.mark.parametrize("seed", range(5))
def test_varimax_two_columns_matches_grid_search(seed):
    U = make_rng(seed).standard_normal((30, 2))
    B, _ = varimax_rotate(U)
    assert abs(varimax_criterion(B) - _grid_oracle(U)) < 1e-4 * max(1.0, abs(_grid_oracle(U)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_varimax_ascent_and_orthogonality(seed, m):
    U = make_rng(seed).standard_normal((25, m))
    B, R, hist = varimax_rotate(U, return_history=True)
    assert np.all(np.diff(hist) >= -1e-9 * abs(hist[-1]))
    assert varimax_criterion(B) >= varimax_criterion(U) - 1e-9
    assert np.max(np.abs(R.T @ R - np.eye(m))) < 1e-8
    assert_allclose(B, U @ R, atol=1e-12)
    # communalities (row norms) are invariant
    assert_allclose(np.sum(B ** 2, 1), np.sum(U ** 2, 1), rtol=1e-9, atol=1e-12)


def test_varimax_sign_flip_invariance():
    U = make_rng(7).standard_normal((20, 3))
    B1, _ = varimax_rotate(U)
    B2, _ = varimax_rotate(U * [1, -1, 1])
    assert_allclose(varimax_criterion(B1), varimax_criterion(B2), rtol=1e-8)


def test_varimax_rejects_bad_input():
    with pytest.raises(DataError):
        varimax_rotate(np.ones((5, 1)))
    with pytest.raises(DataError):
        varimax_rotate(np.column_stack([np.arange(5.0), 2 * np.arange(5.0)]))


def test_compute_pcs_identity_and_mismatch():
    A = make_rng(0).standard_normal((10, 4))
    assert_array_equal(compute_pcs(A, np.eye(4)), A)
    with pytest.raises(DataError):
        compute_pcs(A, np.eye(3))


def _anomalies(seed, t=300, n=40):
    rng = make_rng(seed)
    P = random_orthonormal_patterns(n, 3, rng)
    A = (rng.standard_normal((t, 3)) * [5.0, 4.0, 3.0]) @ P + rng.standard_normal((t, n))
    return A - A.mean(axis=0)


def test_raw_pc_variance_equals_eigenvalue():
    A = _anomalies(1)
    ms = compute_modes(A, rotate=False)
    var = ms.pcs.var(axis=0)
    assert_allclose(var, ms.eigenvalues[: ms.pcs.shape[1]], rtol=1e-6)


def test_rotation_preserves_total_variance_and_reconstruction():
    A = _anomalies(2)
    raw = compute_modes(A, rotate=False)
    rot = compute_modes(A, rotate=True)
    assert rot.k_selected == raw.k_selected == 3
    assert_allclose(rot.pcs.var(axis=0).sum(), raw.pcs.var(axis=0).sum(), rtol=1e-6)
    k = rot.pcs.shape[1]
    assert_allclose(rot.eofs_rotated.T @ rot.eofs_rotated, np.eye(k), atol=1e-10)
    assert_allclose(rot.pcs @ rot.eofs_rotated.T, raw.pcs @ raw.eofs_raw.T, atol=1e-8)
    v = rot.pcs.var(axis=0)
    assert np.all(np.diff(v) <= 0)


def test_full_rank_reconstruction():
    A = make_rng(4).standard_normal((30, 6))
    A -= A.mean(axis=0)
    ms = compute_modes(A, rotate=False, n_modes=6)
    assert_allclose(ms.pcs @ ms.eofs_raw.T, A, atol=1e-10)
