"""Command-line entry point: ``harness <subcommand> [--config F] [--seed S] [--out DIR] [--tiny]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..channel import save_sites
from ..errors import ConfigError, NumericalError
from .config import load_config
from .records import emit_csv, emit_plot_script
from .runner import Workspace, crossing_budget, run_ablation, run_effective_rate, run_loco

log = logging.getLogger("sifo.harness")

COMMANDS = ("gen-sites", "pretrain", "calibrate", "eval", "ablate", "rate", "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harness", description="Site-adaptive subspace acquisition experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML or JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed list with one seed")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--tiny", action="store_true", help="small CI profile (N_t=16, K=8, 2 sites)")
    p.add_argument("--which", choices=("adaptation_mode", "key_coordinates", "both"), default="both",
                   help="ablation to run (ablate only)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_results(records, out: Path, stem: str) -> None:
    emit_csv(records, out / f"{stem}.csv")
    emit_plot_script(records, out / f"{stem}.gp", csv_name=f"{stem}.csv")
    print(f"wrote {out / (stem + '.csv')} ({len(records)} rows)")


def _gen_sites(ws, out):
    save_sites(ws.sites(), out / "sites.json")
    print(f"wrote {out / 'sites.json'}")


def _pretrain(ws, out):
    for seed in ws.cfg.seeds:
        for t in range(ws.cfg.n_sites):
            ws.codebook(seed, t).save(out / f"codebook_seed{seed}_target{t}.json")
            ws.pretrained(seed, t).save(out / f"model_seed{seed}_target{t}.json")
    print(f"wrote codebooks and models to {out}")


def _calibrate(ws, out):
    ws.cfg.check_budgets(ws.cfg.budgets)
    for seed in ws.cfg.seeds:
        for t in range(ws.cfg.n_sites):
            for b in ws.cfg.budgets:
                ws.memory(seed, t, b).save(out / f"memory_seed{seed}_site{t}_budget{b}.json")
    print(f"wrote memories to {out}")


def _ablate(ws, out, which):
    for name in (("adaptation_mode", "key_coordinates") if which == "both" else (which,)):
        _write_results(run_ablation(ws.cfg, name, ws), out, f"ablation_{name}")


def _rate(ws, out):
    recs = run_effective_rate(ws.cfg, ws)
    _write_results(recs, out, "rate")
    b = crossing_budget(recs)
    (out / "rate_crossing.json").write_text(json.dumps({"scheme": "sifo", "reference": "conv_t2_omp",
                                                         "crossing_budget": b}) + "\n")
    print(f"sifo rate crosses conv_t2_omp at budget: {b if b is not None else 'none in sweep'}")


def run(args) -> int:
    cfg = load_config(args.config, tiny=args.tiny)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    ws = Workspace(cfg)
    cmd = args.command
    if cmd in ("gen-sites", "all"):
        _gen_sites(ws, out)
    if cmd in ("pretrain", "all"):
        _pretrain(ws, out)
    if cmd in ("calibrate", "all"):
        _calibrate(ws, out)
    if cmd in ("eval", "all"):
        _write_results(run_loco(cfg, ws), out, "loco")
    if cmd in ("ablate", "all"):
        _ablate(ws, out, args.which)
    if cmd in ("rate", "all"):
        _rate(ws, out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
