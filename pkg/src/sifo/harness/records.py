"""Metrics records, CSV emission/parsing and the gnuplot script."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = "scheme,site,budget,seed,mean_eta,p10,p50,p90,mean_rate,n_ues,wall_ms"
MEMORY_SCHEMES = ("memory_only", "sifo", "sifo_ft")


@dataclass(frozen=True)
class MetricsRecord:
    scheme: str
    site: int
    budget: int
    seed: int
    mean_eta: float
    p10: float
    p50: float
    p90: float
    mean_rate: float
    n_ues: int
    wall_ms: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mean_eta <= 1.0 + 1e-12:
            raise ValueError(f"mean_eta={self.mean_eta} outside [0, 1]")
        if not self.p10 <= self.p50 <= self.p90:
            raise ValueError("percentiles are not ordered")

    @property
    def degenerate(self) -> bool:
        """Memory-based scheme without calibration data (parametric fallback)
        or a target-only model without training data."""
        base = self.scheme.split("[")[0]
        return self.budget == 0 and (base in MEMORY_SCHEMES or base == "sst2")

    def sort_key(self):
        return (self.scheme, self.site, self.budget, self.seed)

    @classmethod
    def from_samples(cls, scheme, site, budget, seed, eta, rate, wall_ms=0.0) -> "MetricsRecord":
        eta = np.asarray(eta, dtype=float)
        p10, p50, p90 = np.percentile(eta, [10, 50, 90])
        return cls(scheme, int(site), int(budget), int(seed), float(eta.mean()), float(p10),
                   float(p50), float(p90), float(np.mean(rate)), int(eta.size), float(wall_ms))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_csv(records, path=None) -> str:
    """Write records sorted by (scheme, site, budget, seed); returns the text."""
    records = sorted(records, key=MetricsRecord.sort_key)
    if not records:
        raise ValueError("no records to write")
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join(_fmt(getattr(r, f)) for f in CSV_HEADER.split(",")))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_csv(path) -> list[MetricsRecord]:
    return parse_csv_text(Path(path).read_text())


def parse_csv_text(text: str) -> list[MetricsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or ",".join(rows[0]) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        s, site, budget, seed, *vals, n_ues, wall = row
        out.append(MetricsRecord(s, int(site), int(budget), int(seed), *map(float, vals), int(n_ues), float(wall)))
    return out


def emit_plot_script(records, path, csv_name: str = "results.csv") -> str:
    """gnuplot script drawing mean capture and rate against budget, one line per scheme."""
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    schemes = sorted({r.scheme for r in records})
    sites = sorted({r.site for r in records})
    lines = [
        "# usage: gnuplot -p " + Path(path).name,
        "set datafile separator ','",
        "set key outside right",
        "set xlabel 'target-site budget'",
        "set terminal pngcairo size 1000,420",
    ]
    for metric, col, label in (("eta", 5, "mean capture efficiency"), ("rate", 9, "mean effective rate (bit/s/Hz)")):
        for site in sites:
            lines.append(f"set output '{metric}_site{site}.png'")
            lines.append(f"set ylabel '{label}'")
            lines.append(f"set title 'site {site}'")
            plots = [
                f"'{csv_name}' using ((strcol(1) eq '{s}' && $2 == {site}) ? $3 : 1/0):{col} "
                f"with linespoints title '{s}'"
                for s in schemes
            ]
            lines.append("plot " + ", \\\n     ".join(plots))
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text)
    return text
