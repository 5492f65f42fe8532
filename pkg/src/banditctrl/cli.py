"""Command line interface for the benchmark harness."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import presets
from .errors import ConfigError, SolverError
from .harness import (ExperimentConfig, config_from_dict, resolve_system,
                      run_experiment, write_outputs)
from .lds import CostFunction
from .policies import solve_dare
from .sysid import SysIdConfig, identify
from .harness import resolve_noise


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; bad flags are config errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    if path.endswith((".yaml", ".yml")):
        import yaml
        data = yaml.safe_load(text)
    elif path.endswith(".json"):
        data = json.loads(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            import yaml
            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                raise ConfigError(f"could not parse {path} as JSON or YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def _experiment_config(args) -> ExperimentConfig:
    raw = {}
    if getattr(args, "config", None):
        raw.update(_load_config_file(args.config))
    if getattr(args, "preset", None):
        raw["preset"] = args.preset
    overrides = {
        "horizon": getattr(args, "horizon", None),
        "runs": getattr(args, "runs", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
        "memory": getattr(args, "memory", None),
    }
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    if getattr(args, "algorithms", None):
        raw["algorithms"] = tuple(s.strip() for s in args.algorithms.split(",") if s.strip())
    if getattr(args, "oracle", False):
        raw["oracle"] = True
    if not raw:
        raise ConfigError("provide --preset or --config")
    return config_from_dict(raw)


def _print_summary(record) -> None:
    rows = record.summary_rows()
    cols = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    widths = {c: max(len(c), *(len(_fmt(r.get(c, ""))) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for row in rows:
        print("  ".join(_fmt(row.get(c, "")).ljust(widths[c]) for c in cols))


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _cmd_run(args) -> int:
    cfg = _experiment_config(args)
    record = run_experiment(cfg)
    _print_summary(record)
    if args.out:
        paths = write_outputs(record, args.out)
        print(f"wrote {paths['summary']}")
        if "regret" in paths:
            print(f"wrote {paths['regret']}")
        print(f"wrote {paths['plot']}")
    return 0


def _cmd_grid(args) -> int:
    cells = presets.grid_preset(args.grid)
    for cell in cells:
        raw = {"preset": cell}
        for key in ("runs", "horizon", "seed", "jobs"):
            val = getattr(args, key, None)
            if val is not None:
                raw[key] = val
        if args.oracle:
            raw["oracle"] = True
        cfg = config_from_dict(raw)
        record = run_experiment(cfg)
        out_dir = os.path.join(args.out, cell)
        write_outputs(record, out_dir)
        print(f"[{cell}] wrote {os.path.join(out_dir, 'summary.csv')}")
    return 0


def _cmd_sysid(args) -> int:
    sys_model = resolve_system(args.system)
    cost = CostFunction("quadratic")
    gen = resolve_noise(args.noise, sys_model.state_dim, args.budget, sys_model.w_bound)
    rng = np.random.default_rng(args.seed)
    w = gen.generate(args.budget, rng=rng)
    cfg = SysIdConfig(budget=args.budget, k=args.k)
    _, ident = identify(sys_model, cfg, w, cost, rng, method=args.method)
    report = ident.report()
    report["budget"] = args.budget
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        directory = os.path.dirname(os.path.abspath(args.out))
        os.makedirs(directory, exist_ok=True)
        tmp = args.out + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(text + "\n")
        os.replace(tmp, args.out)
    return 0


def _cmd_riccati(args) -> int:
    sys_model = resolve_system(args.system)
    sol = solve_dare(sys_model.a, sys_model.b)
    closed = sys_model.a - sys_model.b @ sol.k
    radius = float(np.max(np.abs(np.linalg.eigvals(closed))))
    payload = {
        "k": sol.k.tolist(),
        "p": sol.p.tolist(),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "closed_loop_spectral_radius": radius,
    }
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"system: {args.system}")
        print(f"gain K:\n{np.array(sol.k)}")
        print(f"residual: {sol.residual:.3e}")
        print(f"iterations: {sol.iterations}")
        print(f"closed-loop spectral radius: {radius:.6f}")
    return 0


def _cmd_validate(args) -> int:
    cfg = _experiment_config(args)
    resolve_system(cfg.system)
    CostFunction(cfg.cost)
    resolve_noise(cfg.noise, resolve_system(cfg.system).state_dim, cfg.horizon, 1.0)
    echo = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in cfg.__dict__.items()}
    print(json.dumps(echo, indent=2, sort_keys=True, default=str))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="banditctrl",
                     description="Benchmark online controllers for linear systems "
                                 "under adversarial disturbances.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    run_p = sub.add_parser("run", help="run one experiment cell", cls=_Parser)
    run_p.add_argument("--preset", help="named experiment preset")
    run_p.add_argument("--config", help="JSON or YAML config file")
    run_p.add_argument("--out", help="output directory (summary.csv, raw/, plot.svg)")
    run_p.add_argument("--horizon", type=int)
    run_p.add_argument("--runs", type=int)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--jobs", type=int)
    run_p.add_argument("--memory", type=int)
    run_p.add_argument("--algorithms", help="comma-separated algorithm names")
    run_p.add_argument("--oracle", action="store_true",
                       help="also compute best-DAC-in-hindsight regret")
    run_p.set_defaults(func=_cmd_run)

    grid_p = sub.add_parser("grid", help="run every cell of a benchmark grid", cls=_Parser)
    grid_p.add_argument("--grid", required=True,
                        help=f"grid name, one of {presets.list_grids()}")
    grid_p.add_argument("--out", required=True, help="root output directory")
    grid_p.add_argument("--runs", type=int)
    grid_p.add_argument("--horizon", type=int)
    grid_p.add_argument("--seed", type=int)
    grid_p.add_argument("--jobs", type=int)
    grid_p.add_argument("--oracle", action="store_true")
    grid_p.set_defaults(func=_cmd_grid)

    sysid_p = sub.add_parser("sysid", help="identify a system from sign probes", cls=_Parser)
    sysid_p.add_argument("--system", default="double-integrator-scaled")
    sysid_p.add_argument("--budget", type=int, default=5000)
    sysid_p.add_argument("--k", type=int, default=2, help="controllability index")
    sysid_p.add_argument("--method", choices=("moments", "least-squares"), default="moments")
    sysid_p.add_argument("--noise", default="zero")
    sysid_p.add_argument("--seed", type=int, default=0)
    sysid_p.add_argument("--out", help="write the identification report JSON here")
    sysid_p.set_defaults(func=_cmd_sysid)

    ric_p = sub.add_parser("riccati", help="solve the infinite-horizon LQR gain", cls=_Parser)
    ric_p.add_argument("--system", default="double-integrator")
    ric_p.add_argument("--json", action="store_true")
    ric_p.set_defaults(func=_cmd_riccati)

    val_p = sub.add_parser("validate", help="check a config and echo its resolution", cls=_Parser)
    val_p.add_argument("--preset")
    val_p.add_argument("--config")
    val_p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
