"""Complex Hermitian linear-algebra kernels.

The eigensolver is a cyclic complex Jacobi method using a round-robin
(parallel) ordering: every round applies n/2 disjoint plane rotations at
once, which keeps the inner loop vectorized in numpy.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, NumericalError, RankDeficientError

HERMITIAN_TOL = 1e-12
RANK_TOL = 1e-10


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # columns aligned with eigenvalues

    def top(self, q: int) -> np.ndarray:
        return self.eigenvectors[:, :q]


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    return a


@lru_cache(maxsize=64)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Tournament schedule pairing every index with every other exactly once.

    Odd sizes get a dummy index ``n`` which is dropped from each round.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and >= 0."""
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    return v * np.conj(phase)[None, :]


def jacobi_eigh(a, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigenvalues/eigenvectors of a Hermitian matrix by cyclic Jacobi sweeps.

    Returns ``(w, v)`` unsorted, with ``a @ v = v @ diag(w)``.
    """
    a = _as_square(a)
    n = a.shape[0]
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    if n == 1:
        return a.real.diagonal().copy(), v
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    schedule = _round_robin(n)
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[off_mask]) ** 2))
        if off <= tol * scale:
            break
        for p, q in schedule:
            apq = a[p, q]
            r = np.abs(apq)
            active = r > 1e-300
            if not active.any():
                continue
            app = a[p, p].real
            aqq = a[q, q].real
            phase = np.where(active, apq / np.where(active, r, 1.0), 1.0)
            theta = 0.5 * np.arctan2(-2.0 * r, app - aqq)
            c = np.cos(theta)
            s = np.sin(theta)
            # G = diag(1, conj(phase)) @ [[c, s], [-s, c]]
            g00 = c
            g01 = s
            g10 = -s * np.conj(phase)
            g11 = c * np.conj(phase)
            ap = a[:, p]
            aq = a[:, q]
            a[:, p] = ap * g00 + aq * g10
            a[:, q] = ap * g01 + aq * g11
            ap = a[p, :]
            aq = a[q, :]
            a[p, :] = np.conj(g00)[:, None] * ap + np.conj(g10)[:, None] * aq
            a[q, :] = np.conj(g01)[:, None] * ap + np.conj(g11)[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = vp * g00 + vq * g10
            v[:, q] = vp * g01 + vq * g11
    else:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return a.diagonal().real.copy(), v


def hermitian_eig(a, method: str = "jacobi") -> HermitianEig:
    """Full spectral decomposition of a Hermitian matrix, eigenvalues descending.

    The input is symmetrized as ``(A + A^H) / 2`` before solving. Each
    eigenvector is phase-fixed so that its largest-magnitude entry is real
    and non-negative. ``method="lapack"`` delegates to ``numpy.linalg.eigh``
    and exists for bulk experiment runs; both share the same output contract.
    """
    a = _as_square(a)
    a = 0.5 * (a + a.conj().T)
    if method == "jacobi":
        w, v = jacobi_eigh(a)
    elif method == "lapack":
        w, v = np.linalg.eigh(a)
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    order = np.argsort(-w, kind="stable")
    return HermitianEig(w[order], _fix_phase(v[:, order]))


def orthonormalize(u) -> np.ndarray:
    """Orthonormal basis for the column span of ``u`` (Gram-Schmidt order).

    Raises RankDeficientError when the column-normalized input has a
    singular value at or below 1e-10.
    """
    u = np.asarray(u, dtype=complex)
    if u.ndim == 1:
        u = u[:, None]
    if not np.all(np.isfinite(u)):
        raise NumericalError("basis has non-finite entries")
    norms = np.linalg.norm(u, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("basis has a zero column")
    sv = np.linalg.svd(u / norms, compute_uv=False)
    if sv.size == 0 or sv[-1] <= RANK_TOL or u.shape[1] > u.shape[0]:
        raise RankDeficientError(
            f"columns are linearly dependent (smallest singular value {sv.min() if sv.size else 0:.3e})"
        )
    qm, r = np.linalg.qr(u)
    d = np.diagonal(r)
    ph = d / np.abs(d)
    return qm * ph[None, :]


def projector_from_basis(u) -> np.ndarray:
    """Orthogonal projector ``U (U^H U)^{-1} U^H`` onto span(U)."""
    u = np.asarray(u, dtype=complex)
    if u.ndim == 1:
        u = u[:, None]
    orthonormalize(u)  # rank check
    gram = u.conj().T @ u
    p = u @ np.linalg.solve(gram, u.conj().T)
    return 0.5 * (p + p.conj().T)


def power_iteration_topq(a, q: int, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Orthonormal basis of the dominant q-dimensional eigenspace of a PSD matrix.

    Block (orthogonal) iteration with QR re-orthonormalization. Independent
    of the Jacobi solver; used as a cross-check oracle.
    """
    a = _as_square(a)
    n = a.shape[0]
    if not 1 <= q <= n:
        raise ValueError(f"q must be in [1, {n}], got {q}")
    a = 0.5 * (a + a.conj().T)
    rng = np.random.default_rng(0x5EED)
    x = rng.standard_normal((n, q)) + 1j * rng.standard_normal((n, q))
    x, _ = np.linalg.qr(x)
    p_old = x @ x.conj().T
    for _ in range(max_iter):
        y = a @ x
        if not np.any(y):
            raise NumericalError("matrix annihilates the iterate (zero matrix?)")
        x, _ = np.linalg.qr(y)
        p_new = x @ x.conj().T
        if np.linalg.norm(p_new - p_old) <= tol:
            return x
        p_old = p_new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def is_projector(p, q: int | None = None, tol: float = 1e-9) -> bool:
    """Hermitian, idempotent and (optionally) trace-q within ``tol``."""
    p = np.asarray(p)
    if np.linalg.norm(p - p.conj().T) > tol:
        return False
    if np.linalg.norm(p @ p - p) > tol:
        return False
    if q is not None and abs(np.trace(p).real - q) > tol:
        return False
    return True


def spectral_norm(a) -> float:
    """Largest absolute eigenvalue of a Hermitian matrix."""
    w = hermitian_eig(a).eigenvalues
    return float(max(abs(w[0]), abs(w[-1])))


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (x + x.conj().T)


def random_psd(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    r = n if rank is None else rank
    x = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    return x @ x.conj().T
