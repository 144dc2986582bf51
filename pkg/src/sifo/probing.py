"""SSB probing codebooks, RSRP fingerprints and sensing diagnostics."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .channel import UeChannel, steering_matrix
from .numerics import hermitian_eig

TX_POWER_DBM = 40.0
POWER_FLOOR_DB = -250.0
_POWER_FLOOR = 10.0 ** (POWER_FLOOR_DB / 10.0)

KINDS = ("dft_full", "dft_sub", "random", "learned", "dictionary")
CONSTRAINTS = ("unconstrained", "phase_only")


@dataclass(frozen=True)
class Codebook:
    beams: np.ndarray  # (n_t, k), unit-norm columns
    kind: str = "dft_full"
    constraint: str = "phase_only"

    def __post_init__(self):
        b = np.asarray(self.beams, dtype=complex)
        if b.ndim != 2:
            raise ValueError("beams must be an n_t x k matrix")
        object.__setattr__(self, "beams", b)
        if self.kind not in KINDS:
            raise ValueError(f"unknown codebook kind {self.kind!r}")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if np.max(np.abs(np.linalg.norm(b, axis=0) - 1.0)) > 1e-10:
            raise ValueError("codebook columns must have unit norm")
        if self.constraint == "phase_only" and np.max(np.abs(np.abs(b) - 1 / np.sqrt(b.shape[0]))) > 1e-10:
            raise ValueError("phase-only codebook entries must have modulus 1/sqrt(n_t)")

    @property
    def n_t(self) -> int:
        return self.beams.shape[0]

    @property
    def k(self) -> int:
        return self.beams.shape[1]

    @property
    def codebook_id(self) -> str:
        digest = hashlib.sha1(np.ascontiguousarray(self.beams).tobytes()).hexdigest()[:12]
        return f"{self.kind}-{self.n_t}x{self.k}-{digest}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "constraint": self.constraint,
            "n_t": self.n_t,
            "k": self.k,
            "entries": [[float(z.real), float(z.imag)] for z in self.beams.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        e = np.asarray(d["entries"], dtype=float)
        beams = (e[:, 0] + 1j * e[:, 1]).reshape(d["n_t"], d["k"])
        return cls(beams, d["kind"], d.get("constraint", "unconstrained"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def dft_codebook(n: int) -> Codebook:
    """Unitary n-point DFT codebook; column k steers to u = k / n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Codebook(steering_matrix(np.arange(n) / n, n), "dft_full", "phase_only")


def dft_dictionary(n_t: int, oversample: int = 4) -> Codebook:
    """Oversampled DFT grid of ``oversample * n_t`` steering vectors."""
    if int(oversample) != oversample or oversample < 1:
        raise ValueError("oversample must be a positive integer")
    d = int(oversample) * n_t
    kind = "dft_full" if oversample == 1 else "dictionary"
    return Codebook(steering_matrix(np.arange(d) / d, n_t), kind, "phase_only")


def dft_subset(n_t: int, k: int) -> Codebook:
    """``k`` evenly spaced columns of the n_t-point DFT codebook."""
    if not 1 <= k <= n_t:
        raise ValueError("need 1 <= k <= n_t")
    idx = np.floor(np.arange(k) * n_t / k).astype(int)
    return Codebook(steering_matrix(idx / n_t, n_t), "dft_sub", "phase_only")


def random_codebook(n_t: int, k: int, rng: np.random.Generator, phase_only: bool = True) -> Codebook:
    if phase_only:
        b = np.exp(2j * np.pi * rng.uniform(size=(n_t, k))) / np.sqrt(n_t)
        return Codebook(b, "random", "phase_only")
    b = rng.standard_normal((n_t, k)) + 1j * rng.standard_normal((n_t, k))
    return Codebook(b / np.linalg.norm(b, axis=0), "random", "unconstrained")


@dataclass(frozen=True)
class RsrpFingerprint:
    values_db: np.ndarray
    codebook_id: str
    noise_sigma_db: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values_db, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("RSRP values must be finite")
        object.__setattr__(self, "values_db", v)

    @property
    def k(self) -> int:
        return self.values_db.size


def _h(h) -> np.ndarray:
    return h.h if isinstance(h, UeChannel) else np.asarray(h, dtype=complex)


def rsrp_db(channels, codebook: Codebook, noise_sigma_db: float = 0.0, rng=None,
            tx_power_dbm: float = TX_POWER_DBM) -> np.ndarray:
    """Batched dB-domain RSRP for rows of ``channels`` (n_ues x n_t).

    Returns an (n_ues, k) array. Noise, when requested, is drawn from ``rng``.
    """
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    power = np.abs(h.conj() @ codebook.beams) ** 2
    p_lin = np.maximum(10.0 ** (tx_power_dbm / 10.0) * power, _POWER_FLOOR)
    r = 10.0 * np.log10(p_lin)
    if noise_sigma_db > 0:
        r = r + noise_sigma_db * rng.standard_normal(r.shape)
    return r


def measure_rsrp(h, codebook: Codebook, noise_sigma_db: float = 0.0, seed=None,
                 tx_power_dbm: float = TX_POWER_DBM) -> RsrpFingerprint:
    """RSRP fingerprint ``10 log10(P_s |b_k^H h|^2) + n_k`` with Gaussian dB noise."""
    if noise_sigma_db < 0:
        raise ValueError("noise_sigma_db must be >= 0")
    hv = _h(h)
    if hv.shape != (codebook.n_t,):
        raise ValueError(f"channel has shape {hv.shape}, codebook expects ({codebook.n_t},)")
    if not np.any(hv):
        raise ValueError("zero channel")
    rng = np.random.default_rng(seed)
    r = rsrp_db(hv, codebook, noise_sigma_db, rng, tx_power_dbm)[0]
    return RsrpFingerprint(r, codebook.codebook_id, noise_sigma_db)


def normalize_keys(values_db, domain: str = "db") -> np.ndarray:
    """Row-wise L2 normalization of dB fingerprints in the chosen domain."""
    r = np.atleast_2d(np.asarray(values_db, dtype=float))
    if domain == "linear":
        r = 10.0 ** (r / 10.0)
    elif domain != "db":
        raise ValueError(f"unknown key domain {domain!r}")
    n = np.linalg.norm(r, axis=1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("cannot normalize an all-zero fingerprint")
    return r / n


@dataclass(frozen=True)
class CalibrationKey:
    key: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.key, dtype=float)
        if abs(np.linalg.norm(k) - 1.0) > 1e-12:
            raise ValueError("calibration key must have unit norm")
        object.__setattr__(self, "key", k)


def make_key(r, domain: str = "db") -> CalibrationKey:
    """Normalized RSRP profile. ``db`` normalizes the dB vector as reported;
    ``linear`` converts to linear power first."""
    values = r.values_db if isinstance(r, RsrpFingerprint) else r
    return CalibrationKey(normalize_keys(values, domain)[0])


def worst_case_sensing_energy(codebook, method: str = "jacobi") -> float:
    """``min_{||h||=1} ||S^H h||^2 = lambda_min(S S^H)``."""
    s = codebook.beams if isinstance(codebook, Codebook) else np.asarray(codebook)
    return float(hermitian_eig(s @ s.conj().T, method=method).eigenvalues[-1])


def gram_offdiag_energy(codebook) -> float:
    """Average squared off-diagonal Gram entry ``sum_{i!=j} |b_i^H b_j|^2 / (K(K-1))``."""
    b = codebook.beams if isinstance(codebook, Codebook) else np.asarray(codebook)
    k = b.shape[1]
    if k < 2:
        raise ValueError("need at least two beams")
    g = np.abs(b.conj().T @ b) ** 2
    return float((g.sum() - np.trace(g)) / (k * (k - 1)))


def max_coherence(codebook) -> float:
    b = codebook.beams if isinstance(codebook, Codebook) else np.asarray(codebook)
    g = np.abs(b.conj().T @ b)
    np.fill_diagonal(g, 0.0)
    return float(g.max()) if g.size > 1 else 0.0


def directional_power_statistic(codebook, r) -> np.ndarray:
    """``diag(S^H R S)``: average received power along each sensing beam."""
    s = codebook.beams if isinstance(codebook, Codebook) else np.asarray(codebook)
    r = np.asarray(r)
    if r.shape != (s.shape[0], s.shape[0]):
        raise ValueError("covariance and codebook dimensions differ")
    return np.einsum("ik,ij,jk->k", s.conj(), r, s).real
