import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sharpgmm.hollow_linalg import (DimensionError, HollowGram, NoConvergenceError, SizeGuardError, SymMatrix,
                                    gram, hollow, hollow_gram, jacobi_eig, matvec_hollow, op_norm_oracle,
                                    top_eigpair)
from sharpgmm.synth import rng_new


def naive_gram(Y):
    p, n = Y.shape
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            G[i, j] = sum(Y[k, i] * Y[k, j] for k in range(p))
    return G


def test_gram_matches_loops():
    Y = np.random.default_rng(0).normal(size=(7, 5))
    assert np.allclose(gram(Y).entries, naive_gram(Y), rtol=1e-13, atol=1e-13)


def test_gram_is_block_size_independent(monkeypatch):
    Y = np.random.default_rng(1).normal(size=(50, 6))
    whole = gram(Y).entries
    monkeypatch.setattr("sharpgmm.hollow_linalg.GRAM_BLOCK_ROWS", 7)
    assert np.allclose(gram(Y).entries, whole, rtol=1e-13)


def test_gram_hand_value():
    Y = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(gram(Y).entries, [[10.0, -1.0], [-1.0, 5.0]])
    assert np.array_equal(hollow_gram(Y).entries, [[0.0, -1.0], [-1.0, 0.0]])


def test_gram_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        gram(np.zeros(3))
    with pytest.raises(DimensionError):
        gram(np.zeros((3, 1)))


def test_hollow_is_idempotent_and_zero_diagonal():
    A = np.random.default_rng(2).normal(size=(6, 6))
    H = hollow(A)
    assert isinstance(H, HollowGram)
    assert np.all(np.diag(H.entries) == 0)
    assert hollow(H) is H
    assert np.array_equal(hollow(H.entries).entries, H.entries)


def test_sym_matrix_is_read_only():
    S = SymMatrix([[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(S.entries, [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        S.entries[0, 0] = 3.0
    with pytest.raises(DimensionError):
        SymMatrix(np.zeros((2, 3)))


def test_matvec_matches_loops():
    rng = np.random.default_rng(3)
    H = hollow_gram(rng.normal(size=(4, 6)))
    x = rng.normal(size=6)
    want = [sum(H.entries[i, j] * x[j] for j in range(6) if j != i) for i in range(6)]
    assert np.allclose(matvec_hollow(H, x), want, rtol=1e-13)
    with pytest.raises(DimensionError):
        matvec_hollow(H, np.ones(5))


# --- Jacobi oracle on matrices with known spectra

def test_jacobi_diagonal_and_2x2():
    vals, vecs = jacobi_eig(np.diag([3.0, 1.0, -7.0]))
    assert np.array_equal(vals, [3.0, 1.0, -7.0])
    vals, _ = jacobi_eig([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(vals, [3.0, 1.0], atol=1e-15)


def test_jacobi_reconstructs_matrix():
    A = np.random.default_rng(4).normal(size=(9, 9))
    A = A + A.T
    vals, V = jacobi_eig(A)
    assert np.allclose(V @ np.diag(vals) @ V.T, A, atol=1e-12)
    assert np.allclose(V.T @ V, np.eye(9), atol=1e-12)
    assert np.all(np.diff(vals) <= 0)


def test_jacobi_known_spectrum_of_spike():
    eta = np.array([1, -1, 1, 1, -1, -1, 1], float)
    vals, _ = jacobi_eig(hollow(np.outer(eta, eta)))
    assert np.allclose(vals, [6.0] + [-1.0] * 6, atol=1e-12)


def test_oracles_are_size_guarded():
    with pytest.raises(SizeGuardError):
        jacobi_eig(np.eye(257))
    with pytest.raises(SizeGuardError):
        op_norm_oracle(np.zeros((300, 300)))


def test_op_norm_oracle_rectangular():
    M = np.array([[3.0, 0.0], [0.0, -4.0], [0.0, 0.0]])
    assert op_norm_oracle(M) == pytest.approx(4.0, rel=1e-14)


# --- power iteration vs Jacobi

@settings(max_examples=60)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_top_eigpair_agrees_with_jacobi(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    A = A + A.T
    vals, vecs = jacobi_eig(A)
    pair = top_eigpair(A, tol=1e-12, rng=rng_new(seed))
    assert abs(pair.vector @ vecs[:, 0]) >= 1 - 1e-8
    assert pair.value == pytest.approx(vals[0], rel=1e-8, abs=1e-12)
    assert np.linalg.norm(pair.vector) == pytest.approx(1.0, rel=1e-12)
    assert pair.vector[np.argmax(np.abs(pair.vector))] > 0


def test_top_eigpair_picks_algebraic_top():
    pair = top_eigpair(np.diag([3.0, 1.0, -7.0]), rng=rng_new(0))
    assert pair.value == pytest.approx(3.0)
    assert np.allclose(pair.vector, [1, 0, 0], atol=1e-9)


def test_top_eigpair_spike():
    eta = np.where(np.arange(6) % 2 == 0, 1.0, -1.0)
    pair = top_eigpair(hollow(np.outer(eta, eta)), rng=rng_new(1))
    assert pair.value == pytest.approx(5.0, rel=1e-10)
    assert abs(pair.vector @ eta) / np.sqrt(6) == pytest.approx(1.0, rel=1e-10)


def test_top_eigpair_degenerate_sets_gap_warning():
    pair = top_eigpair(np.diag([2.0, 2.0, 1.0]), rng=rng_new(2))
    assert pair.value == pytest.approx(2.0)
    assert pair.gap_warning
    zero = top_eigpair(np.zeros((4, 4)), rng=rng_new(3))
    assert zero.value == 0.0 and zero.gap_warning


def test_top_eigpair_reports_non_convergence():
    A = np.random.default_rng(5).normal(size=(30, 30))
    with pytest.raises(NoConvergenceError) as err:
        top_eigpair(A + A.T, tol=1e-14, max_iter=2, rng=rng_new(4))
    assert err.value.residual > 0


def test_top_eigpair_needs_generator():
    with pytest.raises(ValueError):
        top_eigpair(np.eye(3))


# --- lemma property suites

@settings(max_examples=200)
@given(arrays(np.float64, st.tuples(st.integers(1, 16), st.integers(1, 16)),
              elements=st.floats(-100, 100)))
def test_hollowing_at_most_doubles_operator_norm(M):
    n = min(M.shape)
    A = M[:n, :n]
    A = A + A.T
    assert op_norm_oracle(hollow(A)) <= 2 * op_norm_oracle(A) + 1e-9


@settings(max_examples=100)
@given(st.integers(2, 12), st.integers(1, 30), st.floats(0.1, 3), st.integers(0, 2**32 - 1))
def test_hollowed_noise_gram_bound(n, p, sigma, seed):
    W = sigma * np.random.default_rng(seed).normal(size=(p, n))
    WtW = W.T @ W
    centered = WtW - p * sigma**2 * np.eye(n)
    assert op_norm_oracle(hollow(WtW)) <= 2 * op_norm_oracle(centered) + 1e-9


@pytest.mark.parametrize("n", range(2, 65))
def test_spike_norm_is_n_minus_one(n):
    eta = np.where(np.random.default_rng(n).random(n) < 0.5, -1.0, 1.0)
    assert abs(op_norm_oracle(hollow(np.outer(eta, eta))) - (n - 1)) <= 1e-9
