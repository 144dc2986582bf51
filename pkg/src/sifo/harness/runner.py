"""LOCO pretraining, target-site calibration sweeps, ablations and rate accounting.

All intermediate artifacts (UE pools, OMP labels, fingerprints, codebooks,
models, memories) are cached on a ``Workspace`` so one process can serve
several protocols without recomputation. Every random draw is seeded from
``(seed, site, ue)`` or ``(seed, target)``, so outputs depend only on the config.
"""
from __future__ import annotations

import logging
import time
from dataclasses import replace

import numpy as np

from ..baselines import dft_select, omp_subspace
from ..calibration import CalibrationMemory, memory_from_fingerprints, multiscale_average, pool_fingerprints, sifo_acquire
from ..channel import SitePropagationModel, UePool, sample_site, sample_ue_pool
from ..errors import ConfigError
from ..parametric import (BeamScorerModel, TrainingSet, fine_tune, init_model, learn_probing_codebook,
                          multi_hot_labels, predict_bases, shift_augment, train_parametric)
from ..probing import (Codebook, RsrpFingerprint, dft_codebook, dft_dictionary, dft_subset, normalize_keys,
                       random_codebook, rsrp_db)
from ..subspace import batch_capture, effective_rate, rank_q_extract
from .config import ExperimentConfig
from .records import MetricsRecord

log = logging.getLogger(__name__)

KEY_COORDINATES = ("random_k", "dft_k", "learned_k", "dft_nt")
ADAPTATION_MODES = ("pt_sst2", "memory_only", "ft_sst2", "sifo", "sifo_ft")
RATE_SCHEMES = ("conv_t2_dft", "conv_t2_omp", "pt_sst2", "sifo")


class Workspace:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._cache: dict = {}

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # --- data ---------------------------------------------------------------

    def sites(self) -> list[SitePropagationModel]:
        cfg = self.cfg
        return self._memo("sites", lambda: [sample_site(cfg.site_seed_base + i, cfg.site_params, site_id=i)
                                            for i in range(cfg.n_sites)])

    def pool(self, seed: int, site: int) -> UePool:
        return self._memo(("pool", seed, site),
                          lambda: sample_ue_pool(self.sites()[site], self.cfg.ues_per_site, seed))

    def calib_idx(self) -> np.ndarray:
        return np.arange(self.cfg.calibration_pool)

    def eval_idx(self) -> np.ndarray:
        return np.arange(self.cfg.calibration_pool, self.cfg.ues_per_site)

    def check_disjoint(self, seed: int, site: int) -> None:
        ids = self.pool(seed, site).ue_ids
        if set(ids[self.calib_idx()]) & set(ids[self.eval_idx()]):
            raise AssertionError("calibration and evaluation UEs overlap")

    def dictionary(self) -> Codebook:
        return self._memo("dictionary", lambda: dft_dictionary(self.cfg.n_t, self.cfg.oversample))

    def labels(self, seed: int, site: int) -> np.ndarray:
        """OMP multi-hot targets of the calibration UEs."""
        def make():
            h = self.pool(seed, site).channels[self.calib_idx()]
            return multi_hot_labels(h, self.dictionary(), self.cfg.q_rank)
        return self._memo(("labels", seed, site), make)

    def fingerprints(self, seed: int, site: int, cb: Codebook) -> np.ndarray:
        def make():
            p = self.pool(seed, site)
            return pool_fingerprints(p.channels, p.ue_ids, cb, self.cfg.rsrp_noise_db, seed, site)
        return self._memo(("rsrp", seed, site, cb.codebook_id), make)

    def sources(self, target: int) -> list[int]:
        return [s for s in range(self.cfg.n_sites) if s != target]

    # --- pretraining ----------------------------------------------------------

    def codebook(self, seed: int, target: int, kind: str = "learned_k") -> Codebook:
        cfg = self.cfg

        def make():
            if kind == "learned_k":
                h = np.vstack([self.pool(seed, s).channels[self.calib_idx()] for s in self.sources(target)])
                return learn_probing_codebook(h, replace(cfg.codebook, seed=seed))
            if kind == "dft_k":
                return dft_subset(cfg.n_t, cfg.k_beams)
            if kind == "random_k":
                return random_codebook(cfg.n_t, cfg.k_beams, np.random.default_rng([seed, target, 0xC0DE]))
            if kind == "dft_nt":
                return dft_codebook(cfg.n_t)
            raise ConfigError(f"unknown key coordinates {kind!r}")
        return self._memo(("codebook", seed, target, kind), make)

    def source_data(self, seed: int, target: int, cb: Codebook) -> TrainingSet:
        """Calibration UEs of every source site plus angularly shifted copies."""
        idx = self.calib_idx()
        parts = []
        for s in self.sources(target):
            parts.append(TrainingSet(self.fingerprints(seed, s, cb)[idx], self.labels(seed, s)))
            h = self.pool(seed, s).channels[idx]
            for c in range(self.cfg.pretrain_shift_copies):
                rng = np.random.default_rng([seed, target, s, c, 0x5F1])
                hs, ys = shift_augment(h, self.labels(seed, s), rng)
                parts.append(TrainingSet(rsrp_db(hs, cb, self.cfg.rsrp_noise_db, rng), ys))
        return TrainingSet.concat(parts)

    def target_data(self, seed: int, target: int, cb: Codebook, budget: int) -> TrainingSet:
        return TrainingSet(self.fingerprints(seed, target, cb)[:budget], self.labels(seed, target)[:budget])

    def pretrained(self, seed: int, target: int, kind: str = "learned_k") -> BeamScorerModel:
        def make():
            cb = self.codebook(seed, target, kind)
            log.info("pretraining seed=%d target=%d keys=%s", seed, target, kind)
            return train_parametric(self.source_data(seed, target, cb), replace(self.cfg.train, seed=seed),
                                    self.cfg.n_t, self.cfg.oversample, cb.codebook_id)
        return self._memo(("pretrained", seed, target, kind), make)

    def finetuned(self, seed: int, target: int, budget: int) -> BeamScorerModel:
        if budget == 0:
            return self.pretrained(seed, target)
        cb = self.codebook(seed, target)
        return self._memo(("finetuned", seed, target, budget),
                          lambda: fine_tune(self.pretrained(seed, target), self.target_data(seed, target, cb, budget),
                                            replace(self.cfg.finetune, seed=seed)))

    def target_only(self, seed: int, target: int, budget: int) -> BeamScorerModel:
        cb = self.codebook(seed, target)
        cfg = replace(self.cfg.sst2, seed=seed)
        if budget == 0:
            return init_model(cb.k, self.cfg.n_t, self.cfg.oversample, cfg.hidden, seed, cb.codebook_id)
        return self._memo(("sst2", seed, target, budget),
                          lambda: train_parametric(self.target_data(seed, target, cb, budget), cfg,
                                                   self.cfg.n_t, self.cfg.oversample, cb.codebook_id))

    def memory(self, seed: int, target: int, budget: int, kind: str = "learned_k") -> CalibrationMemory:
        cb = self.codebook(seed, target, kind)
        p = self.pool(seed, target)
        idx = self.calib_idx()[:budget]
        return self._memo(("memory", seed, target, budget, kind),
                          lambda: memory_from_fingerprints(target, cb.codebook_id, self.fingerprints(seed, target, cb)[idx],
                                                           p.channels[idx], p.ue_ids[idx], self.cfg.key_domain))

    # --- evaluation -----------------------------------------------------------

    def eval_channels(self, seed: int, site: int) -> np.ndarray:
        return self.pool(seed, site).channels[self.eval_idx()]

    def _model_eta(self, seed, target, model, cb) -> np.ndarray:
        r = self.fingerprints(seed, target, cb)[self.eval_idx()]
        bases = predict_bases(r, model, self.cfg.q_rank)
        return np.array([batch_capture(b, h)[0] for b, h in zip(bases, self.eval_channels(seed, target))])

    def _fused_eta(self, seed, target, model, memory, cb) -> np.ndarray:
        r = self.fingerprints(seed, target, cb)[self.eval_idx()]
        return np.array([
            sifo_acquire(RsrpFingerprint(v, cb.codebook_id, self.cfg.rsrp_noise_db), model, memory,
                         self.cfg.fusion, self.cfg.q_rank).capture(h)
            for v, h in zip(r, self.eval_channels(seed, target))
        ])

    def eta(self, scheme: str, seed: int, target: int, budget: int) -> np.ndarray:
        """Per-UE capture efficiency of one scheme on the held-out UEs of ``target``."""
        fixed = scheme in ("conv_t2_dft", "conv_t2_omp", "pt_sst2")
        key = ("eta", scheme, seed, target, None if fixed else budget)
        return self._memo(key, lambda: self._eta(scheme, seed, target, budget))

    def _eta(self, scheme, seed, target, budget):
        cfg = self.cfg
        h_eval = self.eval_channels(seed, target)
        if scheme == "conv_t2_dft":
            return np.array([dft_select(h, cfg.q_rank).capture(h) for h in h_eval])
        if scheme == "conv_t2_omp":
            return np.array([omp_subspace(h, self.dictionary(), cfg.q_rank).capture(h) for h in h_eval])
        kind = "learned_k"
        if scheme.startswith("sifo[") and scheme.endswith("]"):
            kind = scheme[5:-1]
            scheme = "sifo"
        cb = self.codebook(seed, target, kind)
        if scheme == "pt_sst2":
            return self._model_eta(seed, target, self.pretrained(seed, target), cb)
        if scheme == "ft_sst2":
            return self._model_eta(seed, target, self.finetuned(seed, target, budget), cb)
        if scheme == "sst2":
            return self._model_eta(seed, target, self.target_only(seed, target, budget), cb)
        if scheme == "memory_only":
            if budget == 0:
                return self._model_eta(seed, target, self.pretrained(seed, target), cb)
            mem = self.memory(seed, target, budget)
            keys = normalize_keys(self.fingerprints(seed, target, cb)[self.eval_idx()], cfg.key_domain)
            return np.array([
                rank_q_extract(multiscale_average(k, mem, cfg.fusion), cfg.q_rank, "memory_only",
                               method=cfg.eig_method).capture(h)
                for k, h in zip(keys, h_eval)
            ])
        if scheme == "sifo":
            mem = self.memory(seed, target, budget, kind) if budget else None
            return self._fused_eta(seed, target, self.pretrained(seed, target, kind), mem, cb)
        if scheme == "sifo_ft":
            mem = self.memory(seed, target, budget) if budget else None
            return self._fused_eta(seed, target, self.finetuned(seed, target, budget), mem, cb)
        raise ConfigError(f"unknown scheme {scheme!r}")

    def record(self, scheme: str, seed: int, target: int, budget: int) -> MetricsRecord:
        t0 = time.perf_counter()
        eta = self.eta(scheme, seed, target, budget)
        base = scheme.split("[")[0]
        ov = self.cfg.overhead.get(base, self.cfg.overhead["sifo"])
        rate = effective_rate(np.minimum(eta, 1.0), self.cfg.rho_db, ov.total, self.cfg.coherence_uses)
        wall = (time.perf_counter() - t0) * 1e3 if self.cfg.record_timing else 0.0
        return MetricsRecord.from_samples(scheme, target, budget, seed, np.minimum(eta, 1.0), rate, wall)


def _sweep(ws: Workspace, schemes, budgets) -> list[MetricsRecord]:
    cfg = ws.cfg
    if cfg.n_sites < 2:
        raise ConfigError("leave-one-site-out needs at least two sites")
    cfg.check_budgets(budgets)
    out = []
    for seed in cfg.seeds:
        for target in range(cfg.n_sites):
            ws.check_disjoint(seed, target)
            for budget in budgets:
                for scheme in schemes:
                    out.append(ws.record(scheme, seed, target, budget))
                    log.info("%s site=%d budget=%d seed=%d eta=%.4f", scheme, target, budget, seed,
                             out[-1].mean_eta)
    return sorted(out, key=MetricsRecord.sort_key)


def run_loco(cfg: ExperimentConfig, workspace: Workspace | None = None) -> list[MetricsRecord]:
    """Every configured scheme on every held-out site at every budget."""
    return _sweep(workspace or Workspace(cfg), cfg.schemes, cfg.budgets)


def run_ablation(cfg: ExperimentConfig, which: str, workspace: Workspace | None = None) -> list[MetricsRecord]:
    ws = workspace or Workspace(cfg)
    if which == "adaptation_mode":
        return _sweep(ws, ADAPTATION_MODES, (0, *cfg.budgets))
    if which == "key_coordinates":
        return _sweep(ws, [f"sifo[{k}]" for k in KEY_COORDINATES], cfg.budgets)
    raise ConfigError(f"unknown ablation {which!r}; choose adaptation_mode or key_coordinates")


def run_effective_rate(cfg: ExperimentConfig, workspace: Workspace | None = None) -> list[MetricsRecord]:
    return _sweep(workspace or Workspace(cfg), RATE_SCHEMES, cfg.rate_budgets)


def mean_by(records, scheme: str, metric: str = "mean_eta") -> dict:
    """Site- and seed-averaged metric per budget for one scheme."""
    acc: dict = {}
    for r in records:
        if r.scheme == scheme:
            acc.setdefault(r.budget, []).append(getattr(r, metric))
    return {b: float(np.mean(v)) for b, v in sorted(acc.items())}


def crossing_budget(records, scheme: str = "sifo", reference: str = "conv_t2_omp"):
    """Smallest budget at which ``scheme``'s mean rate exceeds ``reference``'s, else None."""
    ours = mean_by(records, scheme, "mean_rate")
    ref = mean_by(records, reference, "mean_rate")
    for b in sorted(ours):
        if b in ref and ours[b] > ref[b]:
            return b
    return None
