"""Dense symmetric linear algebra around the hollowed Gram matrix.

Production path: :func:`gram`, :func:`hollow`, :func:`matvec_hollow` and the
shifted power-iteration solver :func:`top_eigpair`. Test oracles:
:func:`jacobi_eig` and :func:`op_norm_oracle` (size-guarded, slow, exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: rows of Y per accumulation block in :func:`gram`
GRAM_BLOCK_ROWS = 1024
ORACLE_MAX_ORDER = 256


class DimensionError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SizeGuardError(ValueError):
    pass


class SymMatrix:
    """Read-only symmetric matrix; the input is symmetrized as ``(M + M^T) / 2``."""

    def __init__(self, entries):
        m = np.array(entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        self.entries = m

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"{type(self).__name__}(order={self.order})"


class HollowGram(SymMatrix):
    """Symmetric matrix with an identically zero diagonal."""

    def __init__(self, entries):
        super().__init__(entries)
        m = self.entries.copy()
        np.fill_diagonal(m, 0.0)
        m.setflags(write=False)
        self.entries = m


def _as_array(S) -> np.ndarray:
    return S.entries if isinstance(S, SymMatrix) else np.asarray(S, dtype=np.float64)


def gram(Y) -> SymMatrix:
    """``Y^T Y`` accumulated over fixed blocks of ``GRAM_BLOCK_ROWS`` rows.

    Blocks are summed in increasing row order so the result does not depend on
    how the surrounding work is scheduled.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise DimensionError(f"Y must be a p x n matrix, got ndim={Y.ndim}")
    p, n = Y.shape
    if p < 1 or n < 2:
        raise DimensionError(f"gram needs p >= 1 and n >= 2, got {Y.shape}")
    Yt = Y.T
    G = np.zeros((n, n))
    for start in range(0, p, GRAM_BLOCK_ROWS):
        block = Yt[:, start:start + GRAM_BLOCK_ROWS]
        G += block @ block.T
    return SymMatrix(G)


def hollow(M) -> HollowGram:
    """``M - diag(M)``."""
    if isinstance(M, HollowGram):
        return M
    return HollowGram(_as_array(M))


def hollow_gram(Y) -> HollowGram:
    return hollow(gram(Y))


def matvec_hollow(HG, x) -> np.ndarray:
    A = _as_array(HG)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[0],):
        raise DimensionError(f"vector of shape {x.shape} does not match order {A.shape[0]}")
    return A @ x


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    gap: float
    gap_warning: bool


def _fix_sign(v: np.ndarray) -> np.ndarray:
    return -v if v[np.argmax(np.abs(v))] < 0 else v


def top_eigpair(S, tol: float = 1e-10, max_iter: int | None = None, rng=None,
                plain_steps: int = 8, check_gap: bool = True) -> EigenPair:
    """Eigenpair of the largest algebraic eigenvalue of a symmetric matrix.

    Power iteration runs on ``B = S + s I`` with the Gershgorin shift
    ``s = max_i sum_j |S_ij|``, which makes ``B`` positive semidefinite, so
    the dominant eigenvector of ``B`` belongs to the top algebraic eigenvalue
    of ``S``. A two-column block is iterated with Rayleigh-Ritz extraction,
    so a close second eigenvalue slows convergence only mildly and its Ritz
    value gives the reported gap. After ``plain_steps`` single steps, the
    iteration operator is squared each round (``B^2``, ``B^4``, ...), which
    takes ``2^k`` power steps per round. ``iterations`` counts applications
    of ``B``; the budget is ``max_iter`` (default ``100 n``).

    Convergence: ``||S v - lambda v|| <= tol * (|lambda| + s)``. The returned
    vector is unit-norm with its largest-magnitude entry positive.

    The second Ritz value never exceeds the second eigenvalue, so an
    unconverged block overstates the gap. With ``check_gap`` the block keeps
    iterating after the top pair has converged (the returned vector is the
    one found first) until the second Ritz pair meets the same residual test
    or the budget runs out; ``gap_warning`` is then ``gap < tol * scale``.
    Without it, the gap is the Ritz gap at the moment of convergence.
    """
    A = _as_array(S)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n < 2:
        raise DimensionError("top_eigpair needs order >= 2")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 100 * n
    if rng is None:
        raise ValueError("top_eigpair needs a seeded generator for its start block")

    shift = float(np.max(np.sum(np.abs(A), axis=1)))
    X = rng.normal((2, n)).T
    if shift == 0.0:
        v = _fix_sign(X[:, 0] / np.linalg.norm(X[:, 0]))
        return EigenPair(0.0, v, 0.0, 0, 0.0, True)

    B = A + shift * np.eye(n)
    op = B
    power = 1
    steps = 0
    X = _orthonormal_pair(X)
    found = None
    while True:
        X = _orthonormal_pair(op @ X, X[:, 1])
        steps += power
        AX = A @ X
        lam, y, gap = _ritz_top(X.T @ AX)
        scale = abs(lam) + shift
        if found is None:
            v = X @ y
            residual = float(np.linalg.norm(AX @ y - lam * v))
            if residual <= tol * scale:
                found = (lam, _fix_sign(v), residual, steps)
                if not check_gap:
                    return EigenPair(*found, gap, gap < tol * scale)
            elif steps >= max_iter:
                raise NoConvergenceError(
                    f"power iteration did not converge in {max_iter} steps "
                    f"(residual {residual:.3e}, target {tol * scale:.3e})", residual)
        if found is not None:
            y2 = np.array([-y[1], y[0]])
            second = lam - gap
            residual2 = float(np.linalg.norm(AX @ y2 - second * (X @ y2)))
            if residual2 <= tol * scale or steps >= max_iter:
                gap = found[0] - second
                return EigenPair(*found, gap, gap < tol * (abs(found[0]) + shift))
        if steps >= plain_steps and steps + 2 * power <= max_iter:
            op = op @ op
            op /= np.max(np.abs(op))
            power *= 2
        elif steps + power > max_iter:
            op, power = B, 1


def _orthonormal_pair(Z: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    """Gram-Schmidt on two columns; a collapsed second column is replaced by ``fallback``."""
    q1 = Z[:, 0] / np.linalg.norm(Z[:, 0])
    for z2 in (Z[:, 1], fallback):
        if z2 is None:
            continue
        z2 = z2 - (q1 @ z2) * q1
        z2 = z2 - (q1 @ z2) * q1
        norm = np.linalg.norm(z2)
        if norm > 1e-150:
            return np.column_stack([q1, z2 / norm])
    e = np.zeros_like(q1)
    e[np.argmin(np.abs(q1))] = 1.0
    return _orthonormal_pair(np.column_stack([q1, e]))


def _ritz_top(T: np.ndarray):
    """Top eigenpair of a symmetric 2x2 matrix and the gap to the other eigenvalue."""
    a, d = T[0, 0], T[1, 1]
    b = 0.5 * (T[0, 1] + T[1, 0])
    half = 0.5 * (a - d)
    root = float(np.hypot(half, b))
    lam = 0.5 * (a + d) + root
    if root == 0.0:
        return float(lam), np.array([1.0, 0.0]), 0.0
    # eigenvector of the larger root, built from the better-conditioned row
    if half >= 0:
        y = np.array([half + root, b])
    else:
        y = np.array([b, root - half])
    return float(lam), y / np.linalg.norm(y), 2.0 * root


def _round_robin(m: int):
    """Rounds of disjoint index pairs covering every pair of ``range(m)`` once (m even)."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        rounds.append([(players[i], players[m - 1 - i]) for i in range(m // 2)])
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eig(S, off_tol: float = 1e-13, max_sweeps: int = 100):
    """Full eigendecomposition by cyclic Jacobi rotations (test oracle).

    Each sweep visits every off-diagonal pair once in round-robin order; the
    rotations of one round act on disjoint index pairs and are applied
    together. Stops when the off-diagonal Frobenius mass is at most
    ``off_tol * ||S||_F``. Returns ``(values, vectors)`` with values sorted in
    descending order and eigenvectors as columns.
    """
    A = np.array(_as_array(S), dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > ORACLE_MAX_ORDER:
        raise SizeGuardError(f"jacobi_eig is a test oracle limited to n <= {ORACLE_MAX_ORDER}")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    target = off_tol * np.linalg.norm(A)
    m = n + (n % 2)
    rounds = []
    for pairs in _round_robin(m) if n > 1 else []:
        kept = [(p, q) for p, q in pairs if p < n and q < n]
        if kept:
            P, Q = np.array(kept).T
            rounds.append((np.minimum(P, Q), np.maximum(P, Q)))

    def off_diagonal(M):
        D = M.copy()
        np.fill_diagonal(D, 0.0)
        return np.linalg.norm(D)

    for _ in range(max_sweeps):
        if off_diagonal(A) <= target:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            app = A[P, P]
            aqq = A[Q, Q]
            active = apq != 0.0
            with np.errstate(over="ignore"):
                # |tau| = inf for negligible apq gives t = 0, the identity rotation
                tau = np.where(active, (aqq - app) / np.where(active, 2.0 * apq, 1.0), 0.0)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rp, rq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = cp * c - cq * s
            A[:, Q] = cp * s + cq * c
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = vp * c - vq * s
            V[:, Q] = vp * s + vq * c
    else:
        if off_diagonal(A) > target:
            raise NoConvergenceError("Jacobi sweeps did not converge", off_diagonal(A))
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]


def op_norm_oracle(M) -> float:
    """Largest singular value via :func:`jacobi_eig` on the smaller Gram product."""
    M = np.atleast_2d(np.asarray(_as_array(M), dtype=np.float64))
    rows, cols = M.shape
    if min(rows, cols) > ORACLE_MAX_ORDER:
        raise SizeGuardError(f"op_norm_oracle needs min dimension <= {ORACLE_MAX_ORDER}")
    G = M.T @ M if cols <= rows else M @ M.T
    values, _ = jacobi_eig(G)
    return float(np.sqrt(max(values[0], 0.0)))
