"""Conventional Type-II references operating on the ideal UE channel."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RankDeficientError
from .numerics import orthonormalize
from .probing import Codebook, dft_codebook, dft_dictionary
from .subspace import SubspaceDecision, _h


@dataclass(frozen=True)
class BaselineConfig:
    variant: str = "dft_omp"
    oversample: int = 4
    q: int = 4

    def __post_init__(self):
        if self.variant not in ("dft_select", "dft_omp"):
            raise ConfigError(f"unknown baseline variant {self.variant!r}")
        if self.oversample < 1:
            raise ConfigError("oversample must be >= 1")


def dft_select(h, q: int = 4, codebook: Codebook | None = None) -> SubspaceDecision:
    """The q orthogonal DFT beams with the largest ``|b_k^H h|^2``."""
    hv = _h(h)
    if not np.any(hv):
        raise ValueError("zero channel")
    d = dft_codebook(hv.size) if codebook is None else codebook
    power = np.abs(d.beams.conj().T @ hv) ** 2
    idx = np.lexsort((np.arange(power.size), -power))[:q]
    return SubspaceDecision(d.beams[:, np.sort(idx)], "dft_select")


@dataclass
class OmpResult:
    indices: list
    residual_norms: list = field(default_factory=list)
    decision: SubspaceDecision | None = None


def omp(h, dictionary, q: int) -> OmpResult:
    """Orthogonal matching pursuit with q selections.

    A candidate that is numerically dependent on the selected set is skipped
    in favour of the next-best column.
    """
    hv = _h(h)
    d = dictionary.beams if isinstance(dictionary, Codebook) else np.asarray(dictionary)
    if q > d.shape[1]:
        raise ValueError("q exceeds dictionary size")
    if not np.any(hv):
        raise ValueError("zero channel")
    d = d / np.linalg.norm(d, axis=0)
    selected: list[int] = []
    basis = np.zeros((hv.size, 0), dtype=complex)
    residual = hv.copy()
    norms = [float(np.linalg.norm(residual))]
    while len(selected) < q:
        corr = np.abs(d.conj().T @ residual)
        corr[selected] = -np.inf
        for cand in np.lexsort((np.arange(corr.size), -corr)):
            if corr[cand] == -np.inf:
                raise RankDeficientError("no independent dictionary column left")
            try:
                basis_new = orthonormalize(np.column_stack([d[:, selected], d[:, cand]]))
            except RankDeficientError:
                corr[cand] = -np.inf
                continue
            break
        selected.append(int(cand))
        basis = basis_new
        residual = hv - basis @ (basis.conj().T @ hv)
        norms.append(float(np.linalg.norm(residual)))
    return OmpResult(selected, norms, SubspaceDecision(basis, "dft_omp"))


def omp_subspace(h, dictionary=None, q: int = 4) -> SubspaceDecision:
    """OMP subspace search over an oversampled DFT dictionary (default 4x)."""
    hv = _h(h)
    if dictionary is None:
        dictionary = dft_dictionary(hv.size, 4)
    return omp(hv, dictionary, q).decision


def run_baseline(h, cfg: BaselineConfig) -> SubspaceDecision:
    hv = _h(h)
    if cfg.variant == "dft_select":
        return dft_select(hv, cfg.q)
    return omp_subspace(hv, dft_dictionary(hv.size, cfg.oversample), cfg.q)
