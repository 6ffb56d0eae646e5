"""Command-line front end.

Exit status: 0 on success, 1 on usage or I/O errors, 2 when a solver or
protocol contract is violated (e.g. gamma >= 1 for the oracle schedules).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from . import __version__
from .experiments import (
    WORKERS_ENV,
    ExperimentConfig,
    config_from_mapping,
    load_config,
    run_and_record,
    run_protocol,
    write_summary,
)
from .problems import SignalKind, load_instance, load_matrix, make_instance, read_meta, save_instance, write_meta
from .rip import compute_rip_constants, format_rip, parse_rip
from .solvers import Algorithm, ContractError, SolverConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver parameters")
    g.add_argument("--s", type=int, help="target sparsity")
    g.add_argument("--eta", type=float)
    g.add_argument("--delta1", type=float, help="initial error bound Delta_1")
    g.add_argument("--lambda-cap", type=float, help="Lambda for HPM1")
    g.add_argument("--lambda1", type=float, help="initial threshold for HPM2")
    g.add_argument("--rip-file", type=Path, help="key=value RIP constants (output of `rip`)")
    g.add_argument("--ut-e-inf", type=float, help="||U^T e||_inf for the noisy oracle schedule")
    g.add_argument("--max-iters", type=int)
    g.add_argument("--ista-lambda", type=float)
    g.add_argument("--ista-step", type=float)
    g.add_argument("--iht-gamma", type=float)
    g.add_argument("--pgh-lambda-target", type=float)
    g.add_argument("--pgh-dec-factor", type=float)
    g.add_argument("--pgh-inner-tol-factor", type=float)
    g.add_argument("--error-floor", type=float)


_SOLVER_FLAGS = ["s", "eta", "delta1", "lambda_cap", "lambda1", "ut_e_inf", "max_iters",
                 "ista_lambda", "ista_step", "iht_gamma", "pgh_lambda_target", "pgh_dec_factor",
                 "pgh_inner_tol_factor", "error_floor"]


def _solver_config(args, algorithm, base: SolverConfig | None = None) -> SolverConfig:
    kw = {k: getattr(args, k) for k in _SOLVER_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "rip_file", None) is not None:
        try:
            kw["rip"] = parse_rip(args.rip_file.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read RIP file: {exc}") from None
    cfg = dataclasses.replace(base or SolverConfig(), **kw)
    if algorithm is not None:
        cfg.algorithm = Algorithm(algorithm)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hpmcs", description=(
        "Homotopy proximal mapping solvers for compressive sensing. "
        f"Sweeps run trials on {WORKERS_ENV} worker threads (default: number of CPUs)."))
    p.add_argument("--version", action="version", version=f"hpmcs {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a problem instance directory")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--s", type=int, default=None, help="sparsity (sparse signals)")
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--signal", choices=["sparse", "powerlaw", "expdecay"], default="sparse")
    g.add_argument("--values", choices=["normal", "uniform"], default="normal",
                   help="distribution of sparse nonzeros")
    g.add_argument("--no-normalize", action="store_true", help="skip l2 normalisation of sparse signals")
    g.add_argument("--matrix", choices=["gaussian", "uniform", "frame"], default="gaussian")
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="run one solver on an instance directory")
    s.add_argument("--algo", required=True, choices=[a.value for a in Algorithm])
    s.add_argument("--in", dest="inp", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    _add_solver_args(s)

    w = sub.add_parser("sweep", help="eta or n sweep over one of the three HPM1 settings")
    w.add_argument("--config", type=Path, help="key = value config file; flags override it")
    w.add_argument("--kind", choices=["eta", "n"], default="eta")
    w.add_argument("--base", choices=["setting1", "setting2", "setting3"])
    w.add_argument("--eta-list", type=_float_list)
    w.add_argument("--n-list", type=_int_list)
    w.add_argument("--n", type=int)
    w.add_argument("--d", type=int)
    w.add_argument("--sigma", type=float)
    w.add_argument("--seed", type=int)
    w.add_argument("--trials", type=int)
    w.add_argument("--out", type=Path, required=True)
    _add_solver_args(w)

    r = sub.add_parser("rip", help="exhaustive RIP constants of a small matrix")
    r.add_argument("--matrix", type=Path, required=True)
    r.add_argument("--s", type=int, required=True)
    r.add_argument("--cap", type=int, default=None, help="maximum number of supports to enumerate")
    r.add_argument("--out", type=Path, help="also write the key=value lines to this file")

    c = sub.add_parser("compare", help="HPM2 against ISTA, IHT and PGH on one instance")
    c.add_argument("--in", dest="inp", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True)
    _add_solver_args(c)

    x = sub.add_parser("run", help="run a protocol from a key = value config file")
    x.add_argument("--config", type=Path, required=True)
    x.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value (repeatable)")
    x.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    return p


def _cmd_gen(args) -> int:
    if args.signal == "sparse":
        if args.s is None:
            raise UsageError("--s is required for sparse signals")
        kind = SignalKind.exact_sparse(args.s, normalize=not args.no_normalize, values=args.values,
                                       value_scale=math.sqrt(3.0 / args.n) if args.values == "uniform" else 1.0)
    elif args.signal == "powerlaw":
        kind = SignalKind.power_law()
    else:
        kind = SignalKind.exp_decay()
    try:
        inst = make_instance(args.n, args.d, kind, args.sigma, args.seed, matrix=args.matrix)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_instance(inst, args.out)
    print(f"wrote {args.out}")
    return 0


def _load(path: Path):
    try:
        return load_instance(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from None


def _cmd_solve(args) -> int:
    inst = _load(args.inp)
    cfg = _solver_config(args, args.algo)
    if args.s is None and inst.s_true is not None:
        cfg.s = inst.s_true
    row = run_and_record(inst, cfg, args.out, {"instance": str(args.inp)})
    keys = ("iterations", "prox_updates", "termination", "nnz",
            "final_error", "top_s_error", "top_s_projected_error", "support_excess")
    report = {k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in keys if k in row}
    write_meta(args.out / "report.txt", report)
    for k, v in report.items():
        print(f"{k}={v}")
    return 0


def _cmd_sweep(args) -> int:
    values = read_meta(args.config) if args.config else {}
    values["protocol"] = "eta_sweep" if args.kind == "eta" else "n_sweep"
    flag_map = {"base": args.base, "n": args.n, "d": args.d, "sigma": args.sigma,
                "seed": args.seed, "trials": args.trials}
    for k, v in flag_map.items():
        if v is not None:
            values[k] = str(v)
    if args.eta_list is not None:
        values["eta_list"] = ",".join(map(repr, args.eta_list))
    if args.n_list is not None:
        values["n_list"] = ",".join(map(str, args.n_list))
    for k in _SOLVER_FLAGS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = repr(v)
    values["output_dir"] = str(args.out)
    cfg = _config(values)
    rows = run_protocol(cfg)
    print(f"wrote {len(rows)} runs to {args.out}")
    return 0


def _config(values: dict) -> ExperimentConfig:
    try:
        return config_from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad configuration: {exc}") from None


def _cmd_rip(args) -> int:
    try:
        U = load_matrix(args.matrix)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read matrix: {exc}") from None
    kw = {} if args.cap is None else {"cap": args.cap}
    try:
        c = compute_rip_constants(U, args.s, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = format_rip(c)
    sys.stdout.write(text)
    if args.out:
        args.out.write_text(text)
    return 0


def _cmd_compare(args) -> int:
    inst = _load(args.inp)
    base = _solver_config(args, None)
    if args.s is None and inst.s_true is not None:
        base.s = inst.s_true
    rows = []
    for algo in (Algorithm.HPM2, Algorithm.ISTA, Algorithm.IHT, Algorithm.PGH):
        cfg = dataclasses.replace(base, algorithm=algo)
        row = run_and_record(inst, cfg, args.out / algo.value, {"instance": str(args.inp)})
        row.update(param="algorithm", value=algo.value)
        rows.append(row)
    write_summary(args.out / "summary.csv", rows)
    print(f"wrote {args.out / 'summary.csv'}")
    return 0


def _cmd_run(args) -> int:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    try:
        cfg = load_config(args.config, overrides)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad configuration: {exc}") from None
    rows = run_protocol(cfg)
    print(f"wrote {len(rows)} runs to {cfg.output_dir}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "rip": _cmd_rip,
    "compare": _cmd_compare,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ContractError as exc:
        print(f"hpmcs: contract violation: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"hpmcs: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"hpmcs: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
