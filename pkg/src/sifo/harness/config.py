"""Experiment configuration: defaults, the tiny CI profile, TOML/JSON loading."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..calibration import FusionConfig
from ..channel import SiteParams
from ..errors import ConfigError
from ..parametric import CodebookConfig, TrainConfig

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SCHEMES = (
    "conv_t2_dft",
    "conv_t2_omp",
    "pt_sst2",
    "ft_sst2",
    "sst2",
    "memory_only",
    "sifo",
    "sifo_ft",
)
CONV_SCHEMES = ("conv_t2_dft", "conv_t2_omp")


@dataclass(frozen=True)
class OverheadModel:
    """Channel uses spent on acquisition per coherence interval."""

    ssb_uses: float = 16
    csirs_uses: float = 0
    feedback_uses: float = 0
    rsrp_uses: float = 0

    @property
    def total(self) -> float:
        return self.ssb_uses + self.csirs_uses + self.feedback_uses + self.rsrp_uses


def default_overheads(n_t: int, k: int) -> dict:
    conv = OverheadModel(ssb_uses=k, csirs_uses=n_t, feedback_uses=8)
    low = OverheadModel(ssb_uses=k, rsrp_uses=1)
    return {s: (conv if s in CONV_SCHEMES else low) for s in SCHEMES}


@dataclass(frozen=True)
class ExperimentConfig:
    n_sites: int = 4
    site_params: SiteParams = SiteParams()
    site_seed_base: int = 1000
    ues_per_site: int = 2500
    n_eval: int = 500
    n_t: int = 64
    k_beams: int = 16
    q_rank: int = 4
    oversample: int = 4
    rsrp_noise_db: float = 1.0
    tx_power_dbm: float = 40.0
    key_domain: str = "db"
    schemes: tuple = ("conv_t2_dft", "conv_t2_omp", "pt_sst2", "ft_sst2", "sst2", "sifo")
    budgets: tuple = (50, 200, 800)
    rate_budgets: tuple = (0, 50, 200, 800, 2000)
    seeds: tuple = (0,)
    rho_db: float = 10.0
    coherence_uses: float = 1024
    overhead: dict = field(default_factory=dict)
    fusion: FusionConfig = FusionConfig()
    train: TrainConfig = TrainConfig(steps=2000)
    finetune: TrainConfig = TrainConfig(steps=300)
    sst2: TrainConfig = TrainConfig(steps=1000)
    codebook: CodebookConfig = CodebookConfig()
    pretrain_shift_copies: int = 3  # angularly shifted copies of each source UE
    eig_method: str = "lapack"
    record_timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "rate_budgets", tuple(int(b) for b in self.rate_budgets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        over = default_overheads(self.n_t, self.k_beams)
        for name, val in dict(self.overhead).items():
            over[name] = val if isinstance(val, OverheadModel) else OverheadModel(**val)
        object.__setattr__(self, "overhead", over)
        if self.site_params.n_t != self.n_t:
            object.__setattr__(self, "site_params", replace(self.site_params, n_t=self.n_t))
        if self.codebook.k != self.k_beams or self.codebook.key_domain != self.key_domain:
            object.__setattr__(self, "codebook", replace(self.codebook, k=self.k_beams, key_domain=self.key_domain))
        if self.fusion.key_domain != self.key_domain or self.fusion.eig_method != self.eig_method:
            object.__setattr__(self, "fusion", replace(self.fusion, key_domain=self.key_domain,
                                                       eig_method=self.eig_method))
        self.validate()

    @property
    def calibration_pool(self) -> int:
        return self.ues_per_site - self.n_eval

    def validate(self) -> None:
        if self.n_sites < 1:
            raise ConfigError("n_sites must be >= 1")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ConfigError(f"unknown schemes {unknown}; known: {SCHEMES}")
        if any(b <= 0 for b in self.budgets) or any(b < 0 for b in self.rate_budgets):
            raise ConfigError("budgets must be positive (rate budgets may include 0)")
        if self.n_eval < 1 or self.calibration_pool < 1:
            raise ConfigError("need at least one evaluation and one calibration UE per site")
        for name, ov in self.overhead.items():
            if ov.total > self.coherence_uses:
                raise ConfigError(f"overhead of {name} ({ov.total}) exceeds coherence interval")
        if self.pretrain_shift_copies < 0:
            raise ConfigError("pretrain_shift_copies must be >= 0")
        if not 1 <= self.q_rank <= self.n_t or not 1 <= self.k_beams <= self.n_t:
            raise ConfigError("need 1 <= q_rank, k_beams <= n_t")

    def check_budgets(self, budgets) -> None:
        too_big = [b for b in budgets if b > self.calibration_pool]
        if too_big:
            raise ConfigError(f"budgets {too_big} exceed the target-site pool of {self.calibration_pool}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["overhead"] = {k: asdict(v) for k, v in self.overhead.items()}
        return d


TINY = dict(
    n_sites=2,
    n_t=16,
    k_beams=8,
    ues_per_site=700,
    n_eval=200,
    budgets=(50, 100, 200),
    rate_budgets=(0, 50, 200, 500),
    site_params=SiteParams(n_t=16, n_clusters=3, min_cluster_separation=0.25,
                           spread_range=(0.02, 0.05), paths_per_ue_range=(1, 3)),
    train=TrainConfig(steps=300, batch_size=256, hidden=(64, 64)),
    finetune=TrainConfig(steps=60, batch_size=128, hidden=(64, 64)),
    sst2=TrainConfig(steps=200, batch_size=128, hidden=(64, 64)),
    codebook=CodebookConfig(max_evals=300, val_size=100, memory_size=400),
)

_NESTED = {
    "site_params": SiteParams.from_dict,
    "fusion": lambda d: FusionConfig(**d),
    "train": lambda d: TrainConfig(**d),
    "finetune": lambda d: TrainConfig(**d),
    "sst2": lambda d: TrainConfig(**d),
    "codebook": lambda d: CodebookConfig(**d),
}


def config_from_dict(d: dict, tiny: bool = False) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = dict(TINY) if tiny else {}
    for key, val in d.items():
        if key in _NESTED and isinstance(val, dict):
            if key in base and not isinstance(base[key], dict):
                val = {**asdict(base[key]), **val}
            try:
                val = _NESTED[key](val)
            except TypeError as exc:
                raise ConfigError(f"bad [{key}] section: {exc}") from exc
        base[key] = val
    try:
        return ExperimentConfig(**base)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path=None, tiny: bool = False) -> ExperimentConfig:
    """Read a TOML or JSON config file; ``None`` gives the defaults."""
    if path is None:
        return config_from_dict({}, tiny)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            d = json.loads(text)
        else:
            d = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    return config_from_dict(d, tiny)
