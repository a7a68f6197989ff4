"""Command line front end: ``ljchain <experiment> --config run.toml``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import io
from .config import ConfigError, RunConfig, parse_config
from .energy import BoundaryProgram
from .ensemble import ergodic_rows, sample_realization
from .homogenize import (RECOVERY_COLUMNS, CellFailure, convergence_study, predict_limit,
                         recovery_study)
from .minimize import InfeasibleBranch, detect_jumps, minimize_global
from .potentials import validate_class


def _seeds(cfg: RunConfig, offset: int) -> list[int]:
    return [int(s) + offset for s in cfg.get("seeds")]


def _table(rows, out=None):
    out = sys.stdout if out is None else out
    rows = [[str(c) for c in r] for r in rows]
    if not rows:
        return
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)), file=out)


def cmd_validate(cfg, args):
    reports = [validate_class(p, cfg.class_params) for p in cfg.potentials]
    io.write_json(Path(args.output) / "validate.json", [r.to_dict() for r in reports])
    rows = [("label", "pass", "failed")]
    for r in reports:
        rows.append((r.label, r.passed, ",".join(r.failures()) or "-"))
    _table(rows)
    return 0 if all(r.passed for r in reports) else 1


def cmd_predict(cfg, args):
    gammas = cfg.get("gammas") or [cfg.get("gamma")]
    preds = [predict_limit(cfg.ensemble, g).to_dict() for g in gammas]
    io.write_json(Path(args.output) / "predict.json", preds[0] if len(preds) == 1 else preds)
    rows = [("gamma", "alpha_bar", "beta", "gamma_star", "predicted_min", "regime")]
    for p in preds:
        rows.append((p["gamma"], p["alpha_bar"], p["beta"], p["gamma_star"], p["predicted_min"], p["regime"]))
    _table(rows)
    return 0


def cmd_minimize(cfg, args):
    n, seed = cfg.get("n"), cfg.get("seed") + args.seed_offset
    real = sample_realization(cfg.ensemble, n, seed)
    g_n = BoundaryProgram(cfg.get("gamma")).gamma_n(real)
    try:
        res = minimize_global(real, g_n, k_max=cfg.get("k_max"))
    except InfeasibleBranch as exc:
        print(f"error: cell n={n} seed={seed} failed: {exc}", file=sys.stderr)
        return 2
    jumps = detect_jumps(res)
    out = Path(args.output)
    payload = res.to_dict() | {"n": n, "seed": seed, "gamma_n": g_n,
                               "jumps": list(jumps.jump_locations)}
    io.write_json(out / "minimize.json", payload)
    io.write_csv(out / "minimize_bonds.csv", res.csv_rows(), command="minimize", n=n, seed=seed)
    _table([("n", "seed", "energy", "status", "broken_set", "jumps"),
            (n, seed, res.energy, res.status, list(res.broken_set), jumps.count)])
    return 0


def cmd_sweep(cfg, args):
    table = convergence_study(cfg.ensemble, cfg.get("gamma"), cfg.get("n_list"), _seeds(cfg, args.seed_offset),
                              mode=cfg.get("mode"), k_max=cfg.get("k_max"), workers=args.workers,
                              slope=cfg.get("slope"), rho=cfg.get("rho"), mu0=cfg.get("mu0"), at=cfg.get("at"))
    out = Path(args.output)
    io.write_csv(out / "sweep.csv", table.csv_rows(), command="sweep", mode=cfg.get("mode"))
    agg = table.aggregate()
    cols = ("n", "count", "energy_mean", "energy_std", "gap_mean")
    io.write_csv(out / "sweep_summary.csv", [cols] + [tuple(a[c] for c in cols) for a in agg], command="sweep")
    _table([cols] + [tuple(a[c] for c in cols) for a in agg])
    return 0


def cmd_recover(cfg, args):
    rows = recovery_study(cfg.ensemble, cfg.get("gamma"), cfg.get("n_list"), _seeds(cfg, args.seed_offset),
                          slope=cfg.get("slope"), rho=cfg.get("rho"), mu0=cfg.get("mu0"), at=cfg.get("at"),
                          workers=args.workers)
    body = [RECOVERY_COLUMNS] + [dataclasses.astuple(r) for r in rows]
    io.write_csv(Path(args.output) / "recover.csv", body, command="recover")
    _table([("n", "seed", "mu", "energy", "target_energy", "l1")] +
           [(r.n, r.seed, r.mu, r.energy, r.target_energy, r.l1) for r in rows])
    return 0


def cmd_ergodic(cfg, args):
    k = cfg.get("k")
    x_list = cfg.get("x_list") or []
    if x_list and k is None:
        print("error: experiment.k is required with x_list", file=sys.stderr)
        return 2
    rows = ergodic_rows(cfg.ensemble, cfg.get("n_list"), _seeds(cfg, args.seed_offset), x_list,
                        cfg.get("eps") or 0.1, k)
    io.write_csv(Path(args.output) / "ergodic.csv", rows, command="ergodic")
    _table(rows[:1] + rows[1:11])
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "predict": cmd_predict,
    "minimize": cmd_minimize,
    "sweep": cmd_sweep,
    "recover": cmd_recover,
    "ergodic": cmd_ergodic,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ljchain", description="Random Lennard-Jones chain experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--output", default=".", help="directory for CSV/JSON artifacts")
    parser.add_argument("--workers", type=int, default=None, help="worker processes (overrides [run] workers)")
    parser.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.workers is None:
        args.workers = cfg.workers
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    Path(args.output).mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args)
    except CellFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
