"""Command-line entry point: ``varanneal <command> [--config PATH] [--out DIR] ...``.

Each command writes one CSV per table, ``summary.csv`` (key, value) and the
resolved configuration ``config.ini``.  Reruns with the same configuration
produce identical bytes.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import experiments as ex
from .config import COMMANDS, ConfigError, ExperimentConfig, load_config
from .csvio import fmt, write_csv
from .errors import VarAnnealError
from .models import read_instance, sample_spin_glass, write_instance
from .product import ProductModel


def _run(cfg: ExperimentConfig) -> ex.ExperimentResult:
    c = cfg.command
    if c == "twoqubit-scan":
        return ex.twoqubit_scan(cfg.floats("A"), cfg.floats("T"), cfg.float("T_fixed"),
                                dt=cfg.float("dt"), samples=cfg.int("samples"))
    if c == "bipartite-scan":
        return ex.bipartite_scan(cfg.int("N"), cfg.floats("A"), cfg.float("T"), dt=cfg.float("dt"),
                                 samples=cfg.int("samples"))
    if c == "lmg-scan":
        return ex.lmg_scan(cfg.int("N"), cfg.floats("T"), dt=cfg.float("dt"),
                           samples=cfg.int("samples"), shift_theta=cfg.float("shift_theta"),
                           shift_phi=cfg.float("shift_phi"))
    if c == "spinglass-run":
        path = cfg.get("instance").strip()
        inst = read_instance(path) if path else sample_spin_glass(cfg.int("N"), cfg.int("seed"))
        return ex.spinglass_run(inst, cfg.ints("D"), cfg.floats("T"), N=inst.N, dt=cfg.float("dt"),
                                order=cfg.int("order"), samples=cfg.int("samples"),
                                trace_T=cfg.float("trace_T"),
                                oracle_T=cfg.optional_floats("oracle_T"),
                                oracle_dt=cfg.float("oracle_dt"),
                                oracle_order=cfg.int("oracle_order"), workers=cfg.workers)
    if c == "spinglass-histogram":
        return ex.spinglass_histogram(cfg.int("seed"), cfg.int("instances"), cfg.ints("D"),
                                      T=cfg.float("T"), N=cfg.int("N"), dt=cfg.float("dt"),
                                      order=cfg.int("order"), threshold=cfg.float("threshold"),
                                      recovery_D=cfg.int("recovery_D"), workers=cfg.workers)
    if c == "kappa-report":
        model = ProductModel(cfg.get("model").strip(), N=cfg.int("N"), A=cfg.float("A"))
        x0 = None
        if model.tag.value == "lmg":
            x0 = ex.lmg_initial(model.N, cfg.float("shift_theta"))
        return ex.kappa_report(model, cfg.floats("T"), dt=cfg.float("dt"),
                               samples=cfg.int("grid") - 1, s_min=cfg.float("s_min"),
                               s_max=cfg.float("s_max"), x0=x0, window=cfg.float("window"))
    raise ConfigError(f"unknown command {c!r}")


def write_outputs(cfg: ExperimentConfig, result: ex.ExperimentResult) -> list[str]:
    """Write every table, the summary and the resolved config into ``cfg.out``."""
    os.makedirs(cfg.out, exist_ok=True)
    h = cfg.digest()
    dt = cfg.float("dt") if "dt" in cfg.values else None
    written = []
    for name in sorted(result.tables):
        tab = result.tables[name]
        path = os.path.join(cfg.out, name + ".csv")
        write_csv(path, tab.columns, tab.rows, config_hash=h, dt=dt)
        written.append(path)
    keys = sorted(k for k in result.summary if not k.startswith("_"))
    path = os.path.join(cfg.out, "summary.csv")
    write_csv(path, ["key", "value"], [[k, result.summary[k]] for k in keys], config_hash=h, dt=dt)
    written.append(path)
    if result.report is not None:
        path = os.path.join(cfg.out, "kappa_report.txt")
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(f"# config_hash={h} dt={fmt(dt)}\n")
            fh.write(result.report)
        written.append(path)
    path = os.path.join(cfg.out, "config.ini")
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(f"[{cfg.command}]\n")
        fh.writelines(f"{k} = {cfg.values[k]}\n" for k in cfg.values)
    written.append(path)
    if cfg.command == "spinglass-run" and not cfg.get("instance").strip():
        path = os.path.join(cfg.out, "instance.txt")
        write_instance(sample_spin_glass(cfg.int("N"), cfg.int("seed")), path)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varanneal", description="Variational annealing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH", help="INI file with a [%s] section" % name)
        s.add_argument("--out", metavar="DIR", default=os.path.join("out", name))
        s.add_argument("--seed", metavar="U64", type=int,
                       help="instance seed (spin-glass commands; other commands are deterministic)")
        s.add_argument("--workers", metavar="INT", type=int, default=1)
        s.add_argument("--plots", action="store_true", help="also write SVG plots (needs matplotlib)")
        s.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       help="override one config value")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            if "seed" in load_config(args.command).values:
                overrides["seed"] = str(args.seed)
        cfg = load_config(args.command, args.config, overrides)
        unknown = set(overrides) - set(load_config(args.command).values)
        if unknown:
            raise ConfigError(f"unknown key(s) for {args.command}: {', '.join(sorted(unknown))}")
        cfg.out, cfg.workers, cfg.plots = args.out, args.workers, args.plots
        cfg.validate()
        result = _run(cfg)
    except ConfigError as exc:
        print(f"varanneal: config error: {exc}", file=sys.stderr)
        return 2
    except (VarAnnealError, ValueError, OSError) as exc:
        print(f"varanneal: {exc}", file=sys.stderr)
        return 1
    for path in write_outputs(cfg, result):
        print(path)
    if args.plots:
        from .plots import render

        for path in render(args.command, result, cfg.out):
            print(path)
    for k in sorted(result.summary):
        v = result.summary[k]
        if not k.startswith("_") and isinstance(v, float) and not math.isnan(v):
            print(f"{k} = {v:.6g}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
