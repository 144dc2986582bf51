"""Projector-based CSI subspace decisions and their quality measures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import UeChannel
from .errors import DegenerateCaptureError
from .numerics import hermitian_eig, orthonormalize

DEFAULT_Q = 4


@dataclass(frozen=True)
class SubspaceDecision:
    basis: np.ndarray  # (n_t, q), orthonormal columns
    scheme_tag: str = ""

    @property
    def rank_q(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    @classmethod
    def from_columns(cls, u, scheme_tag: str = "") -> "SubspaceDecision":
        return cls(orthonormalize(u), scheme_tag)

    def capture(self, h) -> float:
        """Capture efficiency of this decision for channel ``h``."""
        hv = _h(h)
        n2 = np.vdot(hv, hv).real
        if n2 <= 0:
            raise ValueError("zero channel")
        c = self.basis.conj().T @ hv
        return float(np.vdot(c, c).real / n2)


def _h(h) -> np.ndarray:
    return h.h if isinstance(h, UeChannel) else np.asarray(h, dtype=complex)


def capture_efficiency(p, h) -> float:
    """``||P h||^2 / ||h||^2``; accepts a projector matrix or a SubspaceDecision."""
    if isinstance(p, SubspaceDecision):
        return p.capture(h)
    hv = _h(h)
    n2 = np.vdot(hv, hv).real
    if n2 <= 0:
        raise ValueError("zero channel")
    ph = np.asarray(p) @ hv
    return float(np.vdot(ph, ph).real / n2)


def batch_capture(basis, channels) -> np.ndarray:
    """Capture efficiency of one orthonormal basis for each row of ``channels``."""
    h = np.atleast_2d(channels)
    c = h.conj() @ basis
    return np.sum(np.abs(c) ** 2, axis=1) / np.sum(np.abs(h) ** 2, axis=1)


def mrt_within_subspace(p, h) -> np.ndarray:
    """Unit-norm MRT beamformer ``P h / ||P h||``."""
    if isinstance(p, SubspaceDecision):
        p = p.projector
    ph = np.asarray(p) @ _h(h)
    nrm = np.linalg.norm(ph)
    if nrm <= 1e-12:
        raise DegenerateCaptureError("channel is orthogonal to the selected subspace")
    return ph / nrm


def rank_q_extract(a, q: int = DEFAULT_Q, scheme_tag: str = "", method: str = "jacobi") -> SubspaceDecision:
    """Projector onto the dominant q-dimensional eigenspace of a Hermitian matrix."""
    a = np.asarray(a, dtype=complex)
    if q > a.shape[0] or q < 1:
        raise ValueError(f"rank {q} not in [1, {a.shape[0]}]")
    eig = hermitian_eig(a, method=method)
    return SubspaceDecision(eig.top(q), scheme_tag)


def kyfan_loss_and_bound(a_mix, r_true, q: int = DEFAULT_Q, method: str = "jacobi") -> tuple[float, float]:
    """Reference capture-power loss of extracting from ``a_mix`` and its bound.

    loss = tr[(Pi_Q(R) - Pi_Q(A)) R] and bound = 2 Q ||A - R||_2.
    """
    a_mix = np.asarray(a_mix, dtype=complex)
    r_true = np.asarray(r_true, dtype=complex)
    if a_mix.shape != r_true.shape:
        raise ValueError("shape mismatch")
    p_ref = rank_q_extract(r_true, q, method=method).projector
    p_hat = rank_q_extract(a_mix, q, method=method).projector
    loss = float(np.trace((p_ref - p_hat) @ r_true).real)
    w = hermitian_eig(a_mix - r_true, method=method).eigenvalues
    bound = 2 * q * float(max(abs(w[0]), abs(w[-1])))
    return loss, bound


def effective_rate(eta, rho_db: float, overhead_uses: float, coherence_uses: float):
    """Overhead-discounted spectral efficiency ``(1 - To/T) log2(1 + rho eta)``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0) or np.any(eta > 1 + 1e-9):
        raise ValueError("capture efficiency must lie in [0, 1]")
    if not 0 <= overhead_uses <= coherence_uses:
        raise ValueError(f"overhead {overhead_uses} exceeds coherence interval {coherence_uses}")
    rho = 10.0 ** (rho_db / 10.0)
    out = (1.0 - overhead_uses / coherence_uses) * np.log2(1.0 + rho * eta)
    return float(out) if out.ndim == 0 else out
