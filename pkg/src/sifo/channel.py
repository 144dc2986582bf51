"""Synthetic clustered geometric channels for a uniform linear array.

A site is a mixture of angular clusters in spatial-frequency space. Each UE
draws a handful of resolvable paths around the cluster centers, with angles
that vary smoothly with a latent UE position; each snapshot draws Rayleigh
path gains on top of that geometry.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

# Table I defaults
N_T = 64
CARRIER_HZ = 3.5e9
SHADOWING_LOG_VARIANCE_DB2 = 1.0

_MAX_SEPARATION_RETRIES = 1000


def circular_distance(u1, u2):
    """Distance between spatial frequencies on the unit circle (period 1)."""
    d = np.mod(np.asarray(u1) - np.asarray(u2), 1.0)
    return np.minimum(d, 1.0 - d)


def wrap(u):
    """Map spatial frequencies into [-0.5, 0.5)."""
    return np.mod(np.asarray(u) + 0.5, 1.0) - 0.5


def steering_vector(u: float, n_t: int) -> np.ndarray:
    """ULA response ``a(u)[n] = exp(j 2 pi n u) / sqrt(n_t)``."""
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    n = np.arange(n_t)
    return np.exp(2j * np.pi * n * u) / np.sqrt(n_t)


def steering_matrix(us, n_t: int) -> np.ndarray:
    """Columns are ``steering_vector(u, n_t)`` for each ``u`` in ``us``."""
    us = np.atleast_1d(np.asarray(us, dtype=float))
    n = np.arange(n_t)[:, None]
    return np.exp(2j * np.pi * n * us[None, :]) / np.sqrt(n_t)


@dataclass(frozen=True)
class SiteParams:
    """Knobs of the synthetic site generator.

    Spatial frequencies are dimensionless (``d sin(phi) / lambda``), so the
    carrier only matters for documentation.
    """

    n_t: int = N_T
    n_clusters: int = 4
    min_cluster_separation: float = 0.12
    spread_range: tuple[float, float] = (0.005, 0.015)
    paths_per_ue_range: tuple[int, int] = (1, 3)
    min_path_separation: float | None = None  # default 2 / n_t
    path_power_spread_db: float = 1.5
    shadowing_log_variance: float = SHADOWING_LOG_VARIANCE_DB2
    mean_gain_db: float = 0.0
    rays_per_cluster: int = 1
    track_frequency_range: tuple[float, float] = (0.5, 1.5)
    ue_jitter: float = 0.002
    visibility_strength: float = 0.0
    visibility_frequency_range: tuple[float, float] = (1.0, 3.0)

    @property
    def path_separation(self) -> float:
        if self.min_path_separation is None:
            return 2.0 / self.n_t
        return self.min_path_separation

    def validate(self) -> None:
        if self.n_t < 1:
            raise ConfigError("n_t must be >= 1")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        lo, hi = self.spread_range
        if not 0 < lo <= hi:
            raise ConfigError("spread_range must be positive and ordered")
        pmin, pmax = self.paths_per_ue_range
        if not 1 <= pmin <= pmax:
            raise ConfigError("paths_per_ue_range must satisfy 1 <= min <= max")
        if self.shadowing_log_variance < 0 or self.path_power_spread_db < 0:
            raise ConfigError("variances must be non-negative")
        if self.n_clusters * self.min_cluster_separation > 1.0:
            raise ConfigError(
                f"{self.n_clusters} clusters cannot be separated by "
                f"{self.min_cluster_separation} on a unit circle"
            )
        if pmax * self.path_separation > 1.0:
            raise ConfigError("path separation infeasible for max paths per UE")
        if self.rays_per_cluster < 1 or self.ue_jitter < 0:
            raise ConfigError("rays_per_cluster must be >= 1 and ue_jitter >= 0")
        if self.visibility_strength < 0:
            raise ConfigError("visibility_strength must be >= 0")

    @property
    def n_tracks(self) -> int:
        """Scatterer tracks per cluster; enough for the largest path count."""
        need = -(-self.paths_per_ue_range[1] // self.n_clusters)
        return max(self.rays_per_cluster, need)

    @classmethod
    def from_dict(cls, d: dict) -> "SiteParams":
        d = dict(d)
        for key in ("spread_range", "paths_per_ue_range", "track_frequency_range", "visibility_frequency_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class SitePropagationModel:
    """Cluster mixture of one site.

    Each cluster carries ``n_tracks`` scatterer tracks. A track maps the latent
    UE position ``x`` in [0, 1) to a normalized angular offset
    ``sqrt(2) sin(2 pi (f x + phase))`` (unit variance over x), so that UEs
    close in position see nearly the same path directions. Track visibility
    also varies with position through ``sin(2 pi (g x + psi))``, which models
    blockage that is shared by neighboring UEs.
    """

    site_id: int
    seed: int
    cluster_centers: np.ndarray
    cluster_angular_spread: np.ndarray
    cluster_power_fractions: np.ndarray
    params: SiteParams
    track_frequency: np.ndarray = None  # (n_clusters, n_tracks)
    track_phase: np.ndarray = None
    visibility_frequency: np.ndarray = None
    visibility_phase: np.ndarray = None

    def __post_init__(self):
        if abs(self.cluster_power_fractions.sum() - 1.0) > 1e-12:
            raise ValueError("cluster power fractions must sum to 1")
        if np.any(self.cluster_power_fractions < 0):
            raise ValueError("cluster power fractions must be non-negative")
        if np.any(self.cluster_angular_spread <= 0):
            raise ValueError("cluster spreads must be positive")
        if np.any(self.cluster_centers < -0.5) or np.any(self.cluster_centers >= 0.5):
            raise ValueError("cluster centers must lie in [-0.5, 0.5)")
        shape = (len(self.cluster_centers), self.params.n_tracks)
        for name in ("track_frequency", "track_phase", "visibility_frequency", "visibility_phase"):
            val = getattr(self, name)
            if val is None:
                val = np.zeros(shape)
            object.__setattr__(self, name, np.asarray(val, dtype=float).reshape(shape))

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_centers)

    def track_offsets(self, x: float) -> np.ndarray:
        """Normalized offsets of every (cluster, track) at position x."""
        return np.sqrt(2.0) * np.sin(2 * np.pi * (self.track_frequency * x + self.track_phase))

    def visibility(self, x: float) -> np.ndarray:
        """Position-dependent visibility term in [-1, 1] of every (cluster, track)."""
        return np.sin(2 * np.pi * (self.visibility_frequency * x + self.visibility_phase))

    def to_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "seed": self.seed,
            "cluster_centers": self.cluster_centers.tolist(),
            "cluster_angular_spread": self.cluster_angular_spread.tolist(),
            "cluster_power_fractions": self.cluster_power_fractions.tolist(),
            "track_frequency": self.track_frequency.tolist(),
            "track_phase": self.track_phase.tolist(),
            "visibility_frequency": self.visibility_frequency.tolist(),
            "visibility_phase": self.visibility_phase.tolist(),
            "params": asdict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SitePropagationModel":
        return cls(
            site_id=int(d["site_id"]),
            seed=int(d["seed"]),
            cluster_centers=np.asarray(d["cluster_centers"], dtype=float),
            cluster_angular_spread=np.asarray(d["cluster_angular_spread"], dtype=float),
            cluster_power_fractions=np.asarray(d["cluster_power_fractions"], dtype=float),
            params=SiteParams.from_dict(d["params"]),
            track_frequency=d.get("track_frequency"),
            track_phase=d.get("track_phase"),
            visibility_frequency=d.get("visibility_frequency"),
            visibility_phase=d.get("visibility_phase"),
        )


def save_sites(sites, path) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in sites], fh, indent=1)


def load_sites(path) -> list[SitePropagationModel]:
    with open(path) as fh:
        return [SitePropagationModel.from_dict(d) for d in json.load(fh)]


def _separated_draw(draw, n: int, min_sep: float, rng, what: str) -> np.ndarray:
    for _ in range(_MAX_SEPARATION_RETRIES):
        u = draw(rng, n)
        if n < 2:
            return u
        d = circular_distance(u[:, None], u[None, :])
        d[np.diag_indices(n)] = np.inf
        if d.min() >= min_sep:
            return u
    raise ValueError(f"could not place {n} {what} with separation {min_sep}")


def sample_site(seed: int, params: SiteParams = SiteParams(), site_id: int | None = None) -> SitePropagationModel:
    """Draw a site: separated cluster centers, spreads, power fractions and tracks."""
    params.validate()
    rng = np.random.default_rng([seed, 0x517E])
    centers = _separated_draw(
        lambda r, n: r.uniform(-0.5, 0.5, n),
        params.n_clusters,
        params.min_cluster_separation,
        rng,
        "cluster centers",
    )
    spreads = rng.uniform(*params.spread_range, params.n_clusters)
    powers = rng.dirichlet(np.full(params.n_clusters, 2.0))
    powers = powers / powers.sum()
    shape = (params.n_clusters, params.n_tracks)
    freq = rng.uniform(*params.track_frequency_range, shape)
    phase = rng.uniform(0.0, 1.0, shape)
    vis_freq = rng.uniform(*params.visibility_frequency_range, shape)
    vis_phase = rng.uniform(0.0, 1.0, shape)
    return SitePropagationModel(
        site_id=seed if site_id is None else site_id,
        seed=seed,
        cluster_centers=wrap(centers),
        cluster_angular_spread=spreads,
        cluster_power_fractions=powers,
        params=params,
        track_frequency=freq,
        track_phase=phase,
        visibility_frequency=vis_freq,
        visibility_phase=vis_phase,
    )


@dataclass(frozen=True)
class UeGeometry:
    ue_id: int
    path_spatial_frequencies: np.ndarray
    path_mean_powers: np.ndarray
    large_scale_gain: float
    n_t: int
    clusters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    position: float = 0.0

    @property
    def n_paths(self) -> int:
        return len(self.path_spatial_frequencies)

    def steering(self) -> np.ndarray:
        return steering_matrix(self.path_spatial_frequencies, self.n_t)


def sample_ue_geometry(site: SitePropagationModel, ue_seed, ue_id: int = 0) -> UeGeometry:
    """Draw one UE: latent position, visible tracks, path angles, mean path
    powers and shadowed large-scale gain.

    Tracks are picked without replacement by Gumbel-top-L on
    ``log(power) + visibility_strength * visibility(x)``; with zero strength
    this is sampling proportional to cluster power.
    """
    p = site.params
    rng = np.random.default_rng(ue_seed)
    n_tracks = p.n_tracks
    n_paths = int(rng.integers(p.paths_per_ue_range[0], p.paths_per_ue_range[1] + 1))
    n_paths = min(n_paths, site.n_clusters * n_tracks)
    weights = np.repeat(site.cluster_power_fractions / n_tracks, n_tracks)
    chosen = {}

    def draw(r, n):
        x = r.uniform()
        live = weights > 0
        k = min(n, int(live.sum()))
        with np.errstate(divide="ignore"):
            score = np.log(weights) + p.visibility_strength * site.visibility(x).ravel()
        score = score + r.gumbel(size=score.size)
        flat = np.argsort(-score, kind="stable")[:k]
        c, t = np.divmod(flat, n_tracks)
        offs = site.track_offsets(x)[c, t]
        u = site.cluster_centers[c] + site.cluster_angular_spread[c] * offs
        u = u + p.ue_jitter * r.standard_normal(k)
        chosen.update(c=c, x=x)
        return wrap(u)

    u = _separated_draw(draw, n_paths, p.path_separation, rng, "paths")
    atten_db = rng.uniform(0.0, p.path_power_spread_db, len(u))
    powers = 10.0 ** (-atten_db / 10.0)
    powers = powers / powers.sum()
    shadow_db = np.sqrt(p.shadowing_log_variance) * rng.standard_normal()
    gain = 10.0 ** ((p.mean_gain_db + shadow_db) / 10.0)
    return UeGeometry(ue_id, u, powers, float(gain), p.n_t, chosen["c"], float(chosen["x"]))


@dataclass(frozen=True)
class UeChannel:
    ue_id: int
    h: np.ndarray
    snapshot_seed: object = None


def sample_ue_channel(geom: UeGeometry, snapshot_seed) -> UeChannel:
    """One block-fading snapshot ``h = sqrt(g) * sum_l alpha_l a(u_l)``."""
    if not geom.large_scale_gain > 0:
        raise ValueError("large-scale gain must be positive")
    rng = np.random.default_rng(snapshot_seed)
    alpha = np.sqrt(geom.path_mean_powers / 2.0) * (
        rng.standard_normal(geom.n_paths) + 1j * rng.standard_normal(geom.n_paths)
    )
    h = np.sqrt(geom.large_scale_gain) * (geom.steering() @ alpha)
    return UeChannel(geom.ue_id, h, snapshot_seed)


def ue_normalized_covariance(geom: UeGeometry) -> np.ndarray:
    """Gain-normalized UE covariance ``sum_l p_l a_l a_l^H / sum_l p_l``."""
    a = geom.steering()
    w = geom.path_mean_powers / geom.path_mean_powers.sum()
    r = (a * w[None, :]) @ a.conj().T
    return 0.5 * (r + r.conj().T)


def site_covariance(geoms) -> np.ndarray:
    """Mean of the UE-level normalized covariances over a UE population."""
    geoms = list(geoms)
    return sum(ue_normalized_covariance(g) for g in geoms) / len(geoms)


@dataclass
class UePool:
    """A batch of UEs from one site: geometries plus one snapshot each."""

    site_id: int
    geometries: list
    channels: np.ndarray  # (n_ues, n_t)

    @property
    def ue_ids(self) -> np.ndarray:
        return np.array([g.ue_id for g in self.geometries])

    def __len__(self) -> int:
        return len(self.geometries)

    def subset(self, idx) -> "UePool":
        idx = np.asarray(idx, dtype=int)
        return UePool(self.site_id, [self.geometries[i] for i in idx], self.channels[idx])

    def channel(self, i: int) -> UeChannel:
        return UeChannel(self.geometries[i].ue_id, self.channels[i])


def sample_ue_pool(site: SitePropagationModel, n_ues: int, seed: int, first_id: int = 0) -> UePool:
    """``n_ues`` UEs with seeds derived from ``(seed, site, ue_id)``."""
    geoms, hs = [], []
    for ue_id in range(first_id, first_id + n_ues):
        g = sample_ue_geometry(site, [seed, site.site_id, ue_id, 1], ue_id=ue_id)
        hs.append(sample_ue_channel(g, [seed, site.site_id, ue_id, 2]).h)
        geoms.append(g)
    return UePool(site.site_id, geoms, np.array(hs).reshape(n_ues, site.params.n_t))
