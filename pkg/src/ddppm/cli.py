"""Command-line experiment harness.

Subcommands: validate, run, sweep, audit, bound, figdata.  Exit codes:
0 success, 1 validation failure or an everywhere-infeasible sweep,
2 usage or parse errors.  DDPPM_LOG sets the logging verbosity.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

from ddppm import __version__
from ddppm.experiment import (
    ConfigError,
    ExperimentConfig,
    FIG3_HEADER,
    SWEEP_HEADER,
    audit_deltas,
    build_workbench,
    parse_topology_spec,
    run_bound,
    run_fig3,
    run_single,
    run_sweep,
)
from ddppm.network import validate_mixing_matrix
from ddppm.serialize import write_csv, write_json

log = logging.getLogger("ddppm")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2


def _setup_logging() -> None:
    level = os.environ.get("DDPPM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args) -> ExperimentConfig:
    cfg = (ExperimentConfig.from_yaml(args.config) if args.config
           else ExperimentConfig())
    overrides = {}
    for name in ("seed", "jobs", "out", "compose"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "center", False):
        overrides["center"] = True
    return cfg.override(**overrides)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    try:
        from ddppm.data import load_csv
        spec = args.topology.strip()
        if Path(spec).exists():
            raw = load_csv(spec)
            if raw.n != raw.d:
                print(f"error: matrix is {raw.n}x{raw.d}, expected square")
                return EXIT_USAGE
            W = raw.rows
        else:
            top = parse_topology_spec(spec, c=1)
            W = top.W
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}")
        return EXIT_USAGE
    diag = validate_mixing_matrix(W)
    checks = [
        ("nonnegative entries (i)", diag.nonnegative),
        ("undirected support (ii)", diag.undirected),
        ("row stochastic (iii)", diag.row_stochastic),
        ("column stochastic (iii)", diag.col_stochastic),
        ("strongly connected (iv)", diag.connected),
        ("symmetric", diag.symmetric),
        ("lambda2 < 1", diag.lambda2 < 1.0),
    ]
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    print(f"lambda2 = {diag.lambda2!r}")
    if diag.ok:
        print("mixing matrix is valid")
        return EXIT_OK
    failed = ", ".join(name for name, ok in checks if not ok)
    print(f"mixing matrix is invalid: {failed}")
    return EXIT_INVALID


def cmd_run(args) -> int:
    cfg = _load_config(args)
    bench = build_workbench(cfg)
    payload = run_single(bench, include_trace=args.trace)
    path = _out_dir(cfg) / "run.json"
    write_json(path, payload)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.refine:
        cfg = cfg.override(refine=True)
    bench = build_workbench(cfg)
    rows = run_sweep(bench)
    path = _out_dir(cfg) / "sweep.csv"
    write_csv(path, SWEEP_HEADER, [r.as_list() for r in rows],
              {"config_digest": cfg.digest(), "version": __version__})
    print(f"wrote {path}")
    ddppm_rows = [r for r in rows if r.method == "ddppm"]
    if all(r.status == "infeasible" for r in ddppm_rows):
        print("no feasible parameters at any epsilon")
        return EXIT_INVALID
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _load_config(args)
    bench = build_workbench(cfg)
    epsilons = args.epsilons or [float(e) for e in cfg.epsilons]
    reports = audit_deltas(bench, bench.run_config, epsilons)
    out = _out_dir(cfg)
    for eps, report in zip(epsilons, reports):
        payload = report.to_json_dict()
        payload["version"] = __version__
        payload["config_digest"] = cfg.digest()
        payload["run_config"] = bench.run_config.to_dict()
        path = out / f"audit_eps_{eps:g}.json"
        write_json(path, payload)
        print(f"wrote {path}  (delta = {report.delta!r})")
    return EXIT_OK


def cmd_bound(args) -> int:
    cfg = _load_config(args)
    if args.gamma is not None:
        cfg = cfg.override(gamma=args.gamma)
    bench = build_workbench(cfg)
    payload = run_bound(bench)
    path = _out_dir(cfg) / "bound.json"
    write_json(path, payload)
    print(f"wrote {path}  (total = {payload['total']!r})")
    return EXIT_OK


def cmd_figdata(args) -> int:
    cfg = _load_config(args)
    bench = build_workbench(cfg)
    out = _out_dir(cfg)
    preamble = {"config_digest": cfg.digest(), "version": __version__}
    rows = run_sweep(bench)
    fig2 = out / "fig2_error_vs_epsilon.csv"
    write_csv(fig2, SWEEP_HEADER, [r.as_list() for r in rows], preamble)
    fig3_rows = run_fig3(bench)
    fig3 = out / "fig3_error_delta_vs_T.csv"
    write_csv(fig3, FIG3_HEADER, fig3_rows, preamble)
    print(f"wrote {fig2}")
    print(f"wrote {fig3}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddppm",
        description="Decentralized DP power method: simulator, privacy "
                    "auditor, and convergence-bound validator.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int, help="root RNG seed")
        p.add_argument("--jobs", type=int, help="worker processes for trials")
        p.add_argument("--out", help="output directory")
        p.add_argument("--center", action="store_true",
                       help="subtract column means before normalization")
        p.add_argument("--compose", choices=["stacked", "naive-sum"],
                       help="multi-rank privacy composition mode")

    p = sub.add_parser("validate", help="check a mixing matrix")
    p.add_argument("topology", help="generator like ring(4) or a CSV file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="one simulated run, JSON result")
    common(p)
    p.add_argument("--trace", action="store_true",
                   help="embed the full release trace (large)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="privacy-utility sweep CSV")
    common(p)
    p.add_argument("--refine", action="store_true",
                   help="grid-search around the suggested parameters")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="per-observer privacy report JSON")
    common(p)
    p.add_argument("--epsilon", dest="epsilons", type=float, action="append",
                   help="epsilon value (repeatable); default: config schedule")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bound", help="convergence bound report JSON")
    common(p)
    p.add_argument("--gamma", type=float, help="failure probability")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("figdata", help="plot-ready CSVs (error vs epsilon, "
                                       "error/delta vs iterations)")
    common(p)
    p.set_defaults(func=cmd_figdata)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
