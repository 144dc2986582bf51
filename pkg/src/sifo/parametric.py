"""Parametric RSRP-to-subspace predictor and learned probing codebook.

The predictor is a small ReLU multilayer perceptron that scores the columns
of a fixed oversampled DFT dictionary from an RSRP fingerprint; the Q best
columns span the predicted subspace. It is trained with multi-label
cross-entropy against greedy OMP supports of the true channels, using
hand-written backpropagation and Adam.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import omp
from .errors import ConfigError, NumericalError
from .numerics import orthonormalize
from .probing import (
    Codebook,
    RsrpFingerprint,
    dft_codebook,
    dft_dictionary,
    gram_offdiag_energy,
    max_coherence,
    normalize_keys,
    rsrp_db,
    worst_case_sensing_energy,
)
from .subspace import SubspaceDecision

log = logging.getLogger(__name__)

FEATURE_FLOOR_DB = -60.0
FEATURE_SCALE_DB = 20.0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    steps: int = 2000
    seed: int = 0
    l2sp_coefficient: float = 1e-3
    hidden: tuple = (128, 128)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.steps < 0:
            raise ConfigError("learning rate and batch size must be positive, steps >= 0")
        if self.l2sp_coefficient < 0:
            raise ConfigError("l2sp coefficient must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def features(values_db) -> np.ndarray:
    """Gain-invariant network input: dB profile relative to its peak, floored."""
    r = np.atleast_2d(np.asarray(values_db, dtype=float))
    rel = np.maximum(r - r.max(axis=1, keepdims=True), FEATURE_FLOOR_DB)
    return rel / FEATURE_SCALE_DB + 1.0


@dataclass
class BeamScorerModel:
    layer_dims: list
    weights: list  # weights[i] has shape (layer_dims[i], layer_dims[i+1])
    biases: list
    n_t: int
    oversample: int
    codebook_id: str = ""
    train_config: dict = field(default_factory=dict)
    seed: int = 0
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = list(self.layer_dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} has inconsistent dimensions")
        if not all(np.all(np.isfinite(p)) for p in self.params()):
            raise NumericalError("model has non-finite parameters")
        if dims[-1] != self.n_t * self.oversample:
            raise ValueError("output width must equal the dictionary size")

    @property
    def dictionary_id(self) -> str:
        return f"dft-{self.n_t}x{self.n_t * self.oversample}"

    def dictionary(self) -> Codebook:
        return dft_dictionary(self.n_t, self.oversample)

    def params(self) -> list:
        return [*self.weights, *self.biases]

    def copy(self) -> "BeamScorerModel":
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases], history=dict(self.history))

    def scores(self, values_db) -> np.ndarray:
        return forward(self, features(values_db))[0]

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "n_t": self.n_t,
            "oversample": self.oversample,
            "dictionary_id": self.dictionary_id,
            "codebook_id": self.codebook_id,
            "train_config": self.train_config,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeamScorerModel":
        dims = [int(x) for x in d["layer_dims"]]
        weights = [np.asarray(w, dtype=float).reshape(dims[i], dims[i + 1]) for i, w in enumerate(d["weights"])]
        biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        return cls(dims, weights, biases, int(d["n_t"]), int(d["oversample"]),
                   d.get("codebook_id", ""), d.get("train_config", {}), int(d.get("seed", 0)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "BeamScorerModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_model(k: int, n_t: int, oversample: int = 4, hidden=(128, 128), seed: int = 0,
               codebook_id: str = "") -> BeamScorerModel:
    """Uniform weights in +-1/sqrt(fan_in), zero biases."""
    dims = [k, *hidden, n_t * oversample]
    rng = np.random.default_rng([seed, 0xB0B])
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return BeamScorerModel(dims, weights, biases, n_t, oversample, codebook_id, seed=seed)


def forward(model: BeamScorerModel, x: np.ndarray):
    """Logits for a batch of feature rows, plus the activations needed by backprop."""
    acts = [x]
    a = x
    n = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < n - 1 else z
        acts.append(a)
    return a, acts


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean over samples of the summed per-column sigmoid cross-entropy."""
    l = np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return float(l.sum() / logits.shape[0])


def loss_and_grads(model: BeamScorerModel, x: np.ndarray, y: np.ndarray):
    logits, acts = forward(model, x)
    loss = bce_with_logits(logits, y)
    n = x.shape[0]
    delta = (1.0 / (1.0 + np.exp(-logits)) - y) / n
    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def label_top_q(h, dictionary: Codebook, q: int) -> np.ndarray:
    """Dictionary indices picked by OMP for channel h (training targets)."""
    return np.array(sorted(omp(h, dictionary, q).indices), dtype=int)


def multi_hot_labels(channels, dictionary: Codebook, q: int) -> np.ndarray:
    h = np.atleast_2d(channels)
    y = np.zeros((len(h), dictionary.k))
    for i, hv in enumerate(h):
        y[i, label_top_q(hv, dictionary, q)] = 1.0
    return y


def shift_augment(channels, targets, rng: np.random.Generator):
    """Rotate each channel by a random whole number of dictionary grid steps.

    Multiplying h by ``exp(j 2 pi n k / D)`` moves every path from u to
    u + k/D, so the OMP target of the shifted channel is the original target
    rolled by k. ``D`` is the dictionary size, read off ``targets``.
    """
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    y = np.atleast_2d(targets)
    if len(h) != len(y):
        raise ValueError("channels and targets must pair up")
    d = y.shape[1]
    k = rng.integers(0, d, len(h))
    n = np.arange(h.shape[1])
    shifted = h * np.exp(2j * np.pi * np.outer(k, n) / d)
    cols = (np.arange(d)[None, :] - k[:, None]) % d
    return shifted, y[np.arange(len(y))[:, None], cols]


@dataclass
class TrainingSet:
    """Fingerprints (dB) and multi-hot dictionary targets for one or more sites."""

    values_db: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.values_db)

    @classmethod
    def concat(cls, parts) -> "TrainingSet":
        parts = list(parts)
        return cls(np.vstack([p.values_db for p in parts]), np.vstack([p.targets for p in parts]))


def _run_adam(model: BeamScorerModel, data: TrainingSet, cfg: TrainConfig, anchor=None, tag="train"):
    if len(data) == 0:
        raise ValueError("training set is empty")
    x_all = features(data.values_db)
    y_all = data.targets
    probe = slice(0, min(cfg.batch_size, len(data)))
    rng = np.random.default_rng([cfg.seed, 0xADA])
    params = model.params()
    opt = _Adam(params, cfg.learning_rate)
    nw = len(model.weights)
    probe_loss = [bce_with_logits(forward(model, x_all[probe])[0], y_all[probe])]
    for step in range(cfg.steps):
        idx = rng.choice(len(data), size=min(cfg.batch_size, len(data)), replace=False)
        loss, gw, gb = loss_and_grads(model, x_all[idx], y_all[idx])
        grads = gw + gb
        if anchor is not None and cfg.l2sp_coefficient > 0:
            for j, (p, p0) in enumerate(zip(params, anchor)):
                diff = p - p0
                loss += cfg.l2sp_coefficient * float(np.sum(diff * diff))
                grads[j] = grads[j] + 2.0 * cfg.l2sp_coefficient * diff
        if not np.isfinite(loss):
            raise NumericalError(f"{tag}: non-finite loss at step {step} (lr={cfg.learning_rate})")
        opt.step(params, grads)
        if (step + 1) % max(1, cfg.steps // 10) == 0:
            probe_loss.append(bce_with_logits(forward(model, x_all[probe])[0], y_all[probe]))
    model.weights = params[:nw]
    model.biases = params[nw:]
    model.history = {"probe_loss": probe_loss}
    log.info("%s: probe loss %.4f -> %.4f", tag, probe_loss[0], probe_loss[-1])
    return model


def train_parametric(data: TrainingSet, cfg: TrainConfig = TrainConfig(), n_t: int | None = None,
                     oversample: int = 4, codebook_id: str = "") -> BeamScorerModel:
    """Train a fresh beam scorer with Adam on multi-label cross-entropy."""
    if len(data) == 0:
        raise ValueError("training set is empty")
    d = data.targets.shape[1]
    n_t = d // oversample if n_t is None else n_t
    model = init_model(data.values_db.shape[1], n_t, oversample, cfg.hidden, cfg.seed, codebook_id)
    model.train_config = asdict(cfg)
    return _run_adam(model, data, cfg, tag="pretrain")


def fine_tune(model: BeamScorerModel, data: TrainingSet, cfg: TrainConfig = TrainConfig()) -> BeamScorerModel:
    """Continue training on target-site samples with an L2-SP pull toward the
    pretrained weights. The probing codebook is untouched."""
    if len(data) == 0:
        raise ValueError("fine-tuning set is empty")
    tuned = model.copy()
    anchor = [p.copy() for p in model.params()]
    tuned.train_config = asdict(cfg)
    return _run_adam(tuned, data, cfg, anchor=anchor, tag="finetune")


def predict_subspace(r, model: BeamScorerModel, dictionary: Codebook | None = None, q: int = 4) -> SubspaceDecision:
    """Span of the q highest-scoring dictionary columns (lower index wins ties)."""
    values = r.values_db if isinstance(r, RsrpFingerprint) else np.asarray(r, dtype=float)
    if values.shape[-1] != model.layer_dims[0]:
        raise ValueError(f"fingerprint has {values.shape[-1]} beams, model expects {model.layer_dims[0]}")
    d = model.dictionary() if dictionary is None else dictionary
    if d.k != model.layer_dims[-1]:
        raise ValueError("dictionary size does not match the model output")
    s = model.scores(values)[0]
    idx = np.sort(np.lexsort((np.arange(s.size), -s))[:q])
    return SubspaceDecision(orthonormalize(d.beams[:, idx]), "parametric")


def predict_bases(values_db, model: BeamScorerModel, q: int = 4) -> np.ndarray:
    """Batched ``predict_subspace``: (n, n_t, q) orthonormal bases."""
    s = model.scores(values_db)
    d = model.dictionary().beams
    out = np.empty((len(s), model.n_t, q), dtype=complex)
    for i, row in enumerate(s):
        idx = np.sort(np.lexsort((np.arange(row.size), -row))[:q])
        out[i] = orthonormalize(d[:, idx])
    return out


# --- learned probing codebook -------------------------------------------------


@dataclass(frozen=True)
class CodebookConfig:
    k: int = 16
    key_domain: str = "db"
    neighbors: int = 10
    phase_levels: int = 8
    max_evals: int = 3000
    restarts: int = 2
    restart_perturbation: float = 0.3
    gram_bound: float = 0.05
    max_pair_coherence: float = 0.99
    val_size: int = 300
    memory_size: int = 1200
    objective: str = "retrieval"  # or "coverage"
    seed: int = 0


class GramBoundWarning(UserWarning):
    pass


def _directional_power_bins(channels, n_t: int) -> np.ndarray:
    g = channels / np.linalg.norm(channels, axis=1, keepdims=True)
    return np.mean(np.abs(g.conj() @ dft_codebook(n_t).beams) ** 2, axis=0)


def _retrieval_objective(channels, cfg: CodebookConfig, rng):
    """Mean over validation UEs of ``h_q^H P_mem h_q / ||h_q||^2`` where P_mem
    averages the direction projectors of the retrieved calibration neighbors."""
    n = len(channels)
    perm = rng.permutation(n)
    n_val = min(cfg.val_size, max(1, n // 4))
    val = perm[:n_val]
    mem = perm[n_val:n_val + cfg.memory_size]
    g = channels / np.linalg.norm(channels, axis=1, keepdims=True)
    overlap = np.abs(g[val].conj() @ g[mem].T) ** 2
    m = min(cfg.neighbors, len(mem))
    rows = np.arange(len(val))[:, None]
    hv, hm = channels[val], channels[mem]

    def power_db(y):
        return 10.0 * np.log10(np.maximum(1e4 * np.abs(y) ** 2, 1e-25))

    def score(yv, ym):
        kv = normalize_keys(power_db(yv), cfg.key_domain)
        km = normalize_keys(power_db(ym), cfg.key_domain)
        sims = kv @ km.T
        nn = np.argpartition(-sims, m - 1, axis=1)[:, :m]
        return float(overlap[rows, nn].mean())

    return hv, hm, score


def learn_probing_codebook(channels, cfg: CodebookConfig = CodebookConfig()) -> Codebook:
    """Phase-only K-beam codebook by random-restart coordinate ascent on beam phases.

    Starts from the DFT beams at the K strongest bins of the training set's
    directional power statistic. Every accepted move keeps the average
    off-diagonal Gram energy within ``gram_bound``.
    """
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    n_t = h.shape[1]
    if not 1 <= cfg.k <= n_t:
        raise ConfigError("need 1 <= k <= n_t")
    rng = np.random.default_rng([cfg.seed, 0xC0DE])
    stat = _directional_power_bins(h, n_t)
    bins = np.sort(np.lexsort((np.arange(n_t), -stat))[: cfg.k])
    b0 = dft_codebook(n_t).beams[:, bins]
    k = cfg.k

    def feasible(b):
        if k < 2:
            return True
        return gram_offdiag_energy(b) <= cfg.gram_bound and max_coherence(b) < cfg.max_pair_coherence

    if cfg.objective == "coverage":
        def evaluate(b, y_val=None, y_mem=None):
            return worst_case_sensing_energy(b)
        hv = hm = None
    elif cfg.objective == "retrieval":
        hv, hm, score = _retrieval_objective(h, cfg, rng)

        def evaluate(b, y_val=None, y_mem=None):
            yv = hv.conj() @ b if y_val is None else y_val
            ym = hm.conj() @ b if y_mem is None else y_mem
            return score(yv, ym)
    else:
        raise ConfigError(f"unknown codebook objective {cfg.objective!r}")

    best_b = b0.copy()
    best_j = evaluate(best_b)
    start_j = best_j
    evals_per_restart = cfg.max_evals // (cfg.restarts + 1)
    levels = 2 * np.pi * np.arange(1, cfg.phase_levels) / cfg.phase_levels
    amp = 1.0 / np.sqrt(n_t)
    for restart in range(cfg.restarts + 1):
        if restart == 0:
            b = best_b.copy()
        else:
            jitter = np.exp(1j * cfg.restart_perturbation * rng.standard_normal(best_b.shape))
            b = best_b * jitter
            if not feasible(b):
                b = best_b.copy()
        cur_j = evaluate(b)
        yv = hv.conj() @ b if hv is not None else None
        ym = hm.conj() @ b if hm is not None else None
        evals = 0
        while evals < evals_per_restart:
            improved = False
            for flat in rng.permutation(n_t * k):
                if evals >= evals_per_restart:
                    break
                n, col = divmod(int(flat), k)
                old = b[n, col]
                for rot in levels:
                    new = old * np.exp(1j * rot)
                    b[n, col] = new
                    evals += 1
                    if not feasible(b):
                        b[n, col] = old
                        continue
                    if yv is not None:
                        yv_c = yv.copy()
                        ym_c = ym.copy()
                        yv_c[:, col] += np.conj(hv[:, n]) * (new - old)
                        ym_c[:, col] += np.conj(hm[:, n]) * (new - old)
                        j = evaluate(b, yv_c, ym_c)
                    else:
                        j = evaluate(b)
                    if j > cur_j + 1e-12:
                        cur_j = j
                        old = new
                        if yv is not None:
                            yv, ym = yv_c, ym_c
                        improved = True
                    else:
                        b[n, col] = old
                b[n, col] = old
            if not improved:
                break
        if cur_j > best_j:
            best_j, best_b = cur_j, b.copy()
    best_b = amp * np.exp(1j * np.angle(best_b))
    if k >= 2 and not feasible(best_b):
        warnings.warn("learned codebook violates the Gram-energy bound", GramBoundWarning, stacklevel=2)
    log.info("codebook objective %.4f -> %.4f", start_j, best_j)
    cb = Codebook(best_b, "learned", "phase_only")
    return cb
