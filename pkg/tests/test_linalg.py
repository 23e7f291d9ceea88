import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from mvdrkit import linalg as la
from conftest import crandn, random_psd


def schoolbook(a, b):
    out = np.zeros((a.shape[0], b.shape[1]), complex)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def aligned(v, ref):
    """Rotate v onto ref's phase."""
    c = np.vdot(v, ref)
    return v * c / abs(c)


def test_hermitian_basics(rng):
    np.testing.assert_array_equal(la.hermitian(np.eye(3)), np.eye(3))
    assert la.hermitian(np.array([[1j]]))[0, 0] == -1j
    a = crandn(rng, 4, 5)
    np.testing.assert_array_equal(la.hermitian(la.hermitian(a)), a)
    assert la.hermitian(a).shape == (5, 4)


def test_products(rng):
    a, b = crandn(rng, 4, 4), crandn(rng, 4, 4)
    np.testing.assert_array_equal(la.matmul(a, np.eye(4)), a)
    assert np.max(np.abs(la.matmul(a, b) - schoolbook(a, b))) < 1e-12
    x = crandn(rng, 4)
    np.testing.assert_allclose(la.matvec(a, x), schoolbook(a, x[:, None])[:, 0], atol=1e-12)
    o = la.outer(np.array([1, 1j]), np.array([1, 1j]))
    np.testing.assert_array_equal(o, [[1, -1j], [1j, 1]])
    np.testing.assert_array_equal(o, la.hermitian(o))


def test_product_shape_errors(rng):
    with pytest.raises(la.LinalgError):
        la.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(la.LinalgError):
        la.matvec(np.ones((2, 3)), np.ones(2))


def test_inv_identity_and_diagonal():
    np.testing.assert_allclose(la.inv_loaded(np.eye(4), eps_rel=0.0), np.eye(4), atol=1e-9)
    np.testing.assert_allclose(la.inv_loaded(np.diag([2.0, 4.0]), eps_rel=0.0),
                               np.diag([0.5, 0.25]), atol=1e-9)


def test_inv_residual_random_6x6(rng):
    a = random_psd(rng, 6)
    inv = la.inv_loaded(a)
    lam = la.loading(a)
    assert np.max(np.abs(inv @ (a + lam * np.eye(6)) - np.eye(6))) < 1e-6
    # against the unloaded matrix the residual is exactly -lambda * inv
    np.testing.assert_allclose(inv @ a - np.eye(6), -lam * inv, atol=1e-12)


def test_inv_matches_dense_oracle(rng):
    a = random_psd(rng, 5, (10,))
    lam = la.loading(a)
    oracle = np.linalg.inv(a + lam[:, None, None] * np.eye(5))
    np.testing.assert_allclose(la.inv_loaded(a), oracle, atol=1e-10)


def test_inv_is_hermitian_psd(rng):
    a = random_psd(rng, 8, (50,), ridge=1e-3)
    inv = la.inv_loaded(a)
    assert np.max(np.abs(inv - la.hermitian(inv))) < 1e-8
    probes = crandn(rng, 200, 8)
    rq = np.real(np.einsum("pi,bij,pj->bp", np.conj(probes), inv, probes))
    assert rq.min() >= -1e-8


def test_loading_floor_on_zero_matrix():
    assert la.loading(np.zeros((3, 3)))[()] == la.EPS_ABS
    np.testing.assert_allclose(la.inv_loaded(np.zeros((3, 3))), np.eye(3) / la.EPS_ABS)


def test_gauss_jordan_fallback_for_indefinite_input():
    a = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1: Cholesky fails
    b = np.array([1.0, 1j])
    x = la.solve_loaded(a, b, eps_rel=0.0)
    lam = la.loading(a, 0.0)
    np.testing.assert_allclose((a + lam * np.eye(2)) @ x, b, atol=1e-9)


def test_inv_errors():
    with pytest.raises(la.LinalgError):
        la.inv_loaded(np.ones((2, 3)))
    with pytest.raises(la.LinalgError):
        la.inv_loaded(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(la.LinalgError):
        la.solve_loaded(np.eye(2), np.ones(3))


def test_solve_examples(rng):
    np.testing.assert_allclose(la.solve_loaded(np.eye(2), [1, 1j], eps_rel=0.0), [1, 1j], atol=1e-9)
    np.testing.assert_allclose(la.solve_loaded(np.diag([2.0, 2.0]), [2, 0], eps_rel=0.0), [1, 0], atol=1e-9)
    for _ in range(20):
        a, b = random_psd(rng, 4), crandn(rng, 4)
        assert np.max(np.abs(la.solve_loaded(a, b) - la.inv_loaded(a) @ b)) < 1e-8


def test_eigvec_examples():
    np.testing.assert_allclose(la.principal_eigvec(np.diag([3.0, 1.0])), [1, 0], atol=1e-12)
    u = np.array([1 + 1j, 2, -0.5j])
    v = la.principal_eigvec(la.outer(u, u))
    np.testing.assert_allclose(aligned(v, u / np.linalg.norm(u)), u / np.linalg.norm(u), atol=1e-10)


def test_eigvec_matches_dense_eigensolver(rng):
    a = random_psd(rng, 6, (200,))
    v = la.principal_eigvec(a)
    _, vecs = np.linalg.eigh(a)
    top = vecs[..., -1]
    err = max(np.max(np.abs(aligned(v[i], top[i]) - top[i])) for i in range(200))
    assert err < 1e-6


def test_eigvec_postconditions(rng):
    a = random_psd(rng, 5, (30,))
    v = la.principal_eigvec(a)
    np.testing.assert_allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-12)
    av = np.einsum("bij,bj->bi", a, v)
    lam = np.real(np.sum(np.conj(v) * av, -1))
    res = np.linalg.norm(av - lam[:, None] * v, axis=-1)
    assert np.all(res <= 1e-8 * np.linalg.norm(a, axis=(-2, -1)))
    lead = v[np.arange(30), np.argmax(np.abs(v), -1)]
    assert np.all(np.abs(lead.imag) < 1e-12) and np.all(lead.real > 0)


def test_eigvec_non_convergence_reports_index():
    # equal top eigenvalues, start vector outside the top space is still fine; use a rotation-like
    # matrix with two equal-modulus dominant eigenvalues of opposite sign, which power iteration cannot settle
    a = np.zeros((2, 3, 3), complex)
    a[0] = np.eye(3)
    a[1] = np.diag([1.0, -1.0, 0.1])
    a[1] = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.1]])
    with pytest.raises(la.EigenConvergenceError) as exc:
        la.principal_eigvec(a, max_iter=20, squarings=0, polish=0)
    assert exc.value.indices.tolist() == [[1]]


def test_identity_does_not_crash():
    v = la.principal_eigvec(np.eye(4))
    assert np.linalg.norm(v) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31))
def test_eigvec_scale_invariant(c, seed):
    a = random_psd(np.random.default_rng(seed), 5)
    assert np.max(np.abs(la.principal_eigvec(c * a) - la.principal_eigvec(a))) < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2 ** 31))
def test_inv_residual_property(n, seed):
    a = random_psd(np.random.default_rng(seed), n, ridge=0.05)
    al = a + la.loading(a) * np.eye(n)
    assert np.max(np.abs(al @ la.inv_loaded(a) - np.eye(n))) < 1e-6


def test_torch_paths_match_numpy(rng):
    a, b = random_psd(rng, 6, (8,)), crandn(rng, 8, 6)
    stats = {}
    x = la.solve_loaded_torch(torch.from_numpy(a), torch.from_numpy(b), stats=stats).numpy()
    np.testing.assert_allclose(x, la.solve_loaded(a, b), atol=1e-10)
    assert stats == {"loading_floor": 0}
    v = la.principal_eigvec_torch(torch.from_numpy(a), n_iter=60).numpy()
    np.testing.assert_allclose(v, la.principal_eigvec(a), atol=1e-6)


def test_torch_solve_counts_fallback_and_floor():
    a = torch.zeros(2, 2, 2, dtype=torch.complex128)
    a[1] = torch.tensor([[1.0, 2.0], [2.0, 1.0]])
    stats = {}
    la.solve_loaded_torch(a, torch.ones(2, 2, dtype=torch.complex128), eps_rel=0.0, stats=stats)
    assert stats["loading_floor"] == 2
    assert stats["cholesky_fallback"] == 1
