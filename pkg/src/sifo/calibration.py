"""Projector-labeled calibration memory and the gradient-free acquisition rule.

Each calibration UE contributes a pair (normalized RSRP key, rank-1 direction
projector ``h h^H / ||h||^2``). A served UE retrieves its nearest keys by
cosine similarity, averages their projectors at several neighborhood sizes,
blends the result with the parametric prediction using the nearest-neighbor
similarity as weight, and keeps the dominant rank-Q eigenspace.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import UeChannel
from .errors import CodebookMismatchError, ConfigError
from .numerics import _fix_phase
from .probing import Codebook, CalibrationKey, RsrpFingerprint, normalize_keys, rsrp_db
from .subspace import SubspaceDecision, rank_q_extract

log = logging.getLogger(__name__)

NEIGHBORHOOD_SIZES = (5, 10, 20)


class NeighborhoodClampWarning(UserWarning):
    """Requested more neighbors than the memory holds."""


@dataclass(frozen=True)
class FusionConfig:
    neighborhood_sizes: tuple = NEIGHBORHOOD_SIZES
    alpha_rule: str = "adaptive_kappa"  # or "fixed"
    fixed_alpha: float = 0.5
    trace_normalize_branches: bool = False
    key_domain: str = "db"
    eig_method: str = "jacobi"

    def __post_init__(self):
        sizes = tuple(int(m) for m in self.neighborhood_sizes)
        if not sizes or any(m < 1 for m in sizes) or list(sizes) != sorted(sizes):
            raise ConfigError("neighborhood sizes must be positive and ascending")
        object.__setattr__(self, "neighborhood_sizes", sizes)
        if self.alpha_rule not in ("adaptive_kappa", "fixed"):
            raise ConfigError(f"unknown alpha rule {self.alpha_rule!r}")
        if not 0.0 <= self.fixed_alpha <= 1.0:
            raise ConfigError("fixed alpha must lie in [0, 1]")
        if self.key_domain not in ("db", "linear"):
            raise ConfigError(f"unknown key domain {self.key_domain!r}")


def _rows(a: np.ndarray) -> np.ndarray:
    if a.ndim == 2:
        return a
    return a.reshape(len(a), -1) if a.size else a.reshape(len(a), 0)


@dataclass
class CalibrationMemory:
    """Immutable-by-convention store of (key, direction) pairs for one site.

    Labels are kept as unit direction vectors ``g`` (phase-fixed); the
    projector label of entry i is ``g_i g_i^H``.
    """

    site_id: int
    codebook_id: str
    keys: np.ndarray  # (M, K), unit rows
    directions: np.ndarray  # (M, n_t), unit rows
    ue_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    key_domain: str = "db"

    def __post_init__(self):
        self.keys = _rows(np.asarray(self.keys, dtype=float))
        self.directions = _rows(np.asarray(self.directions, dtype=complex))
        if len(self.keys) != len(self.directions):
            raise ValueError("keys and labels must pair up")
        if len(self.ue_ids) != len(self.keys):
            self.ue_ids = np.arange(len(self.keys))
        if len(self.keys) and np.max(np.abs(np.linalg.norm(self.keys, axis=1) - 1)) > 1e-12:
            raise ValueError("memory keys must be unit norm")
        if len(self.directions) and np.max(np.abs(np.linalg.norm(self.directions, axis=1) - 1)) > 1e-10:
            raise ValueError("memory labels must be unit directions")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def n_t(self) -> int:
        return self.directions.shape[1]

    def label(self, i: int) -> np.ndarray:
        g = self.directions[i]
        return np.outer(g, g.conj())

    def subset(self, n: int) -> "CalibrationMemory":
        """First ``n`` entries (memories built from nested budgets)."""
        return CalibrationMemory(self.site_id, self.codebook_id, self.keys[:n],
                                 self.directions[:n], self.ue_ids[:n], self.key_domain)

    def to_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "codebook_id": self.codebook_id,
            "key_domain": self.key_domain,
            "entries": [
                {
                    "ue_id": int(uid),
                    "key": k.tolist(),
                    "label_eigvec": [[float(z.real), float(z.imag)] for z in g],
                    "label_note": "rank-1 stored as unit eigenvector",
                }
                for uid, k, g in zip(self.ue_ids, self.keys, self.directions)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationMemory":
        entries = d["entries"]
        keys = np.array([e["key"] for e in entries], dtype=float)
        dirs = np.array([[complex(re, im) for re, im in e["label_eigvec"]] for e in entries])
        ids = np.array([e.get("ue_id", i) for i, e in enumerate(entries)], dtype=int)
        return cls(d["site_id"], d["codebook_id"], keys, dirs, ids, d.get("key_domain", "db"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "CalibrationMemory":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def direction_labels(channels) -> np.ndarray:
    """Unit, phase-fixed channel directions; row i spans the label of UE i."""
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    n = np.linalg.norm(h, axis=1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("zero channel in calibration set")
    return _fix_phase((h / n).T).T


def fingerprint_seed(seed: int, site_id: int, ue_id: int):
    return [seed, site_id, ue_id, 3]


def pool_fingerprints(channels, ue_ids, codebook: Codebook, noise_sigma_db: float,
                      seed: int, site_id: int) -> np.ndarray:
    """dB fingerprints for many UEs; noise is seeded per (seed, site, ue)."""
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    r = rsrp_db(h, codebook)
    if noise_sigma_db > 0:
        noise = np.array([
            np.random.default_rng(fingerprint_seed(seed, site_id, int(u))).standard_normal(codebook.k)
            for u in ue_ids
        ])
        r = r + noise_sigma_db * noise
    return r


def build_memory(site_id: int, calib_ues, serving_codebook: Codebook, noise_sigma_db: float = 0.0,
                 seed: int = 0, key_domain: str = "db", ue_ids=None) -> CalibrationMemory:
    """Measure each calibration UE with the serving codebook and pair its key
    with the full-CSI direction projector."""
    if isinstance(calib_ues, np.ndarray):
        h = np.atleast_2d(calib_ues)
        ids = np.arange(len(h)) if ue_ids is None else np.asarray(ue_ids)
    else:
        calib_ues = list(calib_ues)
        h = np.array([c.h if isinstance(c, UeChannel) else c for c in calib_ues])
        ids = np.array([c.ue_id if isinstance(c, UeChannel) else i for i, c in enumerate(calib_ues)])
        if ue_ids is not None:
            ids = np.asarray(ue_ids)
    if len(h) == 0:
        raise ValueError("calibration set is empty")
    if h.shape[1] != serving_codebook.n_t:
        raise CodebookMismatchError("calibration channels do not match the serving codebook size")
    r = pool_fingerprints(h, ids, serving_codebook, noise_sigma_db, seed, site_id)
    return memory_from_fingerprints(site_id, serving_codebook.codebook_id, r, h, ids, key_domain)


def memory_from_fingerprints(site_id, codebook_id, values_db, channels, ue_ids, key_domain="db") -> CalibrationMemory:
    keys = normalize_keys(values_db, key_domain)
    return CalibrationMemory(site_id, codebook_id, keys, direction_labels(channels),
                             np.asarray(ue_ids, dtype=int), key_domain)


def _key(q) -> np.ndarray:
    return q.key if isinstance(q, CalibrationKey) else np.asarray(q, dtype=float)


def similarities(query_key, memory: CalibrationMemory) -> np.ndarray:
    return memory.keys @ _key(query_key)


def retrieve_neighbors(query_key, memory: CalibrationMemory, m: int) -> np.ndarray:
    """Indices of the m most cosine-similar entries, best first (lower index wins ties)."""
    if len(memory) == 0:
        raise ValueError("memory is empty")
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > len(memory):
        warnings.warn(f"m={m} exceeds memory size {len(memory)}; clamping", NeighborhoodClampWarning, stacklevel=2)
        m = len(memory)
    c = similarities(query_key, memory)
    order = np.lexsort((np.arange(c.size), -c))
    return order[:m]


def neighbor_projector_average(memory: CalibrationMemory, neighbor_indices) -> np.ndarray:
    idx = np.asarray(neighbor_indices, dtype=int)
    if idx.size == 0:
        raise ValueError("no neighbors to average")
    g = memory.directions[idx]
    return g.T @ g.conj() / idx.size


def multiscale_average(query_key, memory: CalibrationMemory, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """Mean of the neighbor projector averages over every neighborhood size."""
    if len(memory) == 0:
        raise ValueError("memory is empty")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NeighborhoodClampWarning)
        est = [neighbor_projector_average(memory, retrieve_neighbors(query_key, memory, m))
               for m in cfg.neighborhood_sizes]
    if caught:
        log.debug("neighborhood clamped to memory size %d", len(memory))
    return sum(est) / len(est)


def confidence(query_key, memory: CalibrationMemory | None, cfg: FusionConfig = FusionConfig()) -> tuple[float, float]:
    """``(kappa, alpha)``: clipped best cosine similarity and the fusion weight."""
    if memory is None or len(memory) == 0:
        return 0.0, 0.0
    kappa = float(np.clip(similarities(query_key, memory).max(), 0.0, 1.0))
    alpha = kappa if cfg.alpha_rule == "adaptive_kappa" else cfg.fixed_alpha
    return kappa, float(alpha)


def fuse(p_parametric, p_memory, alpha: float, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    """``(1 - alpha) P_par + alpha P_mem``; generally not a projector."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    p_par = np.asarray(p_parametric)
    p_mem = np.asarray(p_memory)
    if p_par.shape != p_mem.shape:
        raise ValueError("branch shapes differ")
    if alpha == 0.0:
        return p_par.copy()
    if alpha == 1.0:
        return p_mem.copy()
    if cfg.trace_normalize_branches:
        p_par = p_par / np.trace(p_par).real
        p_mem = p_mem / np.trace(p_mem).real
    return (1.0 - alpha) * p_par + alpha * p_mem


def optimal_alpha(sigma2_par: float, sigma2_mem: float) -> float:
    """MSE-optimal memory weight for uncorrelated branch errors."""
    if sigma2_par < 0 or sigma2_mem < 0:
        raise ValueError("variances must be non-negative")
    if sigma2_par + sigma2_mem == 0:
        raise ValueError("both variances are zero")
    return sigma2_par / (sigma2_par + sigma2_mem)


@dataclass
class AcquisitionTrace:
    kappa: float
    alpha: float
    p_mix: np.ndarray


def sifo_acquire(r: RsrpFingerprint, model, memory: CalibrationMemory | None,
                 cfg: FusionConfig = FusionConfig(), q: int = 4, trace: list | None = None) -> SubspaceDecision:
    """Full online rule: key, parametric projector, memory estimate, fusion, rank-Q.

    The model is only read. Pass a list as ``trace`` to collect kappa/alpha.
    """
    from .parametric import predict_subspace

    if r.codebook_id != model.codebook_id:
        raise CodebookMismatchError("fingerprint and model use different probing codebooks")
    if memory is not None and len(memory) and memory.codebook_id != r.codebook_id:
        raise CodebookMismatchError("fingerprint and memory use different probing codebooks")
    par = predict_subspace(r, model, q=q)
    if memory is None or len(memory) == 0:
        if trace is not None:
            trace.append(AcquisitionTrace(0.0, 0.0, par.projector))
        return SubspaceDecision(par.basis, "sifo")
    key = normalize_keys(r.values_db, cfg.key_domain)[0]
    p_mem = multiscale_average(key, memory, cfg)
    _, alpha = confidence(key, memory, cfg)
    p_mix = fuse(par.projector, p_mem, alpha, cfg)
    if trace is not None:
        trace.append(AcquisitionTrace(*confidence(key, memory, cfg), p_mix))
    return rank_q_extract(p_mix, q, "sifo", method=cfg.eig_method)
