"""Experiment protocols, trace/summary CSV output and ``key = value`` configs.

Each protocol generates seeded instances, runs solvers, and writes one
``trace.csv`` plus ``meta.txt`` per run and a ``summary.csv`` at the top of
the output directory. Trials run on a thread pool whose size comes from
the ``HPMCS_WORKERS`` environment variable (default: CPU count). Trials
share no mutable state and results are collected in submission order, so
output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .linalg import hard_threshold_top_s, set_difference_size, support
from .metrics import recovery_report
from .problems import ProblemInstance, SignalKind, derive_seed, make_instance, read_meta, write_meta
from .solvers import Algorithm, ContractError, IterateTrace, SolverConfig, solve

__all__ = [
    "TRACE_HEADER",
    "SUMMARY_HEADER",
    "WORKERS_ENV",
    "Protocol",
    "ExperimentConfig",
    "per_iteration_rows",
    "write_trace_csv",
    "read_trace_csv",
    "run_and_record",
    "run_protocol",
    "load_config",
    "config_from_mapping",
    "worker_count",
]

TRACE_HEADER = ["iter", "lambda", "error_l2", "error_top_s", "nnz", "support_excess", "objective"]
SUMMARY_HEADER = [
    "param", "value", "trial", "seed", "solver", "final_error", "top_s_error",
    "top_s_projected_error", "support_excess", "nnz", "iterations", "prox_updates", "termination",
]
WORKERS_ENV = "HPMCS_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


# -- traces -------------------------------------------------------------------

def per_iteration_rows(trace: IterateTrace, U: np.ndarray, y: np.ndarray,
                       x_star: np.ndarray | None = None, s: int | None = None) -> list[dict]:
    """One dict per record, keyed by :data:`TRACE_HEADER`; unknowns are ``None``.

    ``error_top_s`` is ``||x_t - x_*^s||``, ``support_excess`` counts
    nonzeros outside the support of ``x_*^s``, and ``objective`` is
    ``1/2 ||U x_t - y||^2 + lambda_t ||x_t||_1`` (empty when the solver has
    no threshold).
    """
    xs = s_star = None
    if x_star is not None and s is not None:
        xs = hard_threshold_top_s(x_star, min(s, x_star.shape[0]))
        s_star = support(xs)
    rows = []
    for rec in trace.records:
        x = rec.x(trace.d)
        row = dict.fromkeys(TRACE_HEADER)
        row["iter"] = rec.t
        row["lambda"] = rec.lam
        row["nnz"] = rec.nnz
        if x_star is not None:
            row["error_l2"] = float(np.linalg.norm(x - x_star))
        if xs is not None:
            row["error_top_s"] = float(np.linalg.norm(x - xs))
            row["support_excess"] = set_difference_size(support(x), s_star)
        if rec.lam is not None:
            if rec.idx is None:
                ux = U @ x
            else:
                ux = U[:, rec.idx] @ rec.vals
            res = ux - y
            row["objective"] = 0.5 * float(res @ res) + rec.lam * float(np.abs(rec.vals).sum())
        rows.append(row)
    return rows


def write_trace_csv(path, trace: IterateTrace, rows: list[dict]) -> Path:
    """Write `rows` under the fixed header; floats as ``%.17g``, unknowns empty."""
    if not trace.records:
        raise ValueError("cannot write an empty trace")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in TRACE_HEADER])
    return path


def read_trace_csv(path) -> list[dict]:
    """Parse a trace file back; empty fields become ``None``."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            parsed = {}
            for k, v in row.items():
                if v == "":
                    parsed[k] = None
                elif k in ("iter", "nnz", "support_excess"):
                    parsed[k] = int(v)
                else:
                    parsed[k] = float(v)
            out.append(parsed)
    return out


def _cfg_meta(cfg: SolverConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "rip":
            if v is not None:
                out.update({f"rip_delta_{k}": _fmt(val) for k, val in sorted(v.delta.items())})
                out["rip_theta_ss"] = _fmt(v.theta_ss)
            continue
        out[f.name] = v.value if isinstance(v, Enum) else _fmt(v)
    return out


def run_and_record(inst: ProblemInstance, cfg: SolverConfig, outdir, extra_meta: dict | None = None,
                   s_eval: int | None = None) -> dict:
    """Solve, write ``trace.csv`` and ``meta.txt`` into `outdir`, return a summary row."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    s_eval = s_eval or cfg.s
    trace = solve(inst, cfg)
    rows = per_iteration_rows(trace, inst.U, inst.y, inst.x_star, s_eval)
    if trace.records:
        write_trace_csv(outdir / "trace.csv", trace, rows)
    meta = dict(extra_meta or {})
    meta.update({f"instance_{k}": v for k, v in inst.meta.items()})
    meta.update(_cfg_meta(cfg))
    meta.update({k: _fmt(v) for k, v in trace.params.items()})
    meta["termination"] = trace.termination.value
    meta["prox_updates"] = trace.prox_updates
    write_meta(outdir / "meta.txt", meta)
    summary = {
        "solver": cfg.algorithm.value,
        "iterations": len(trace),
        "prox_updates": trace.prox_updates,
        "termination": trace.termination.value,
        "nnz": int(np.count_nonzero(trace.final_x)),
    }
    if inst.x_star is not None:
        rep = recovery_report(trace.final_x, inst.x_star, s_eval)
        summary.update(final_error=rep.full_error, top_s_error=rep.top_s_error,
                       top_s_projected_error=rep.top_s_projected_error,
                       support_excess=rep.support_excess)
    return summary


def write_summary(path, rows: list[dict]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in SUMMARY_HEADER])
    return path


# -- protocols ----------------------------------------------------------------

class Protocol(str, Enum):
    SETTING1 = "setting1"
    SETTING2 = "setting2"
    SETTING3 = "setting3"
    ETA_SWEEP = "eta_sweep"
    N_SWEEP = "n_sweep"
    PGH_COMPARE = "pgh_compare"
    BASELINE_COMPARE = "baseline_compare"
    CUSTOM = "custom"


# (signal kind, default sigma, default eta) per base setting
_SETTINGS = {
    "setting1": ("sparse", 0.0, 0.4),
    "setting2": ("sparse", 0.001, 0.4),
    "setting3": ("powerlaw", 0.001, 0.3),
}


@dataclass
class ExperimentConfig:
    protocol: Protocol = Protocol.SETTING1
    n: int = 2000
    d: int = 10000
    s: int = 20
    sigma: float | None = None
    seed: int = 0
    trials: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    base: str = "setting2"
    eta_list: list[float] | None = None
    n_list: list[int] | None = None
    iht_gamma_list: list[float] | None = None
    ista_lambda_list: list[float] | None = None
    signal: str = "sparse"
    matrix: str = "gaussian"
    output_dir: str = "runs"

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)

    def validate(self) -> None:
        if self.trials < 1:
            raise ContractError("trials must be >= 1")
        if self.n < 1 or self.d < 1 or self.s < 1 or self.s > self.d:
            raise ContractError("need n >= 1 and 1 <= s <= d")
        if self.sigma is not None and self.sigma < 0:
            raise ContractError("sigma must be nonnegative")
        if self.protocol is Protocol.ETA_SWEEP and not self.eta_list:
            raise ContractError("eta_sweep needs a non-empty eta_list")
        if self.protocol is Protocol.N_SWEEP and not self.n_list:
            raise ContractError("n_sweep needs a non-empty n_list")
        if self.base not in _SETTINGS:
            raise ContractError(f"base must be one of {sorted(_SETTINGS)}")
        if self.signal not in ("sparse", "powerlaw", "expdecay"):
            raise ContractError(f"unknown signal {self.signal!r}")
        if self.matrix not in ("gaussian", "uniform", "frame"):
            raise ContractError(f"unknown matrix {self.matrix!r}")


def _setting_instance(setting: str, n: int, d: int, s: int, sigma, seed: int) -> ProblemInstance:
    kind_name, default_sigma, _ = _SETTINGS[setting]
    kind = SignalKind.exact_sparse(s) if kind_name == "sparse" else SignalKind.power_law()
    if setting == "setting1":
        # noiseless by definition, whatever sigma says
        sigma = 0.0
    elif sigma is None:
        sigma = default_sigma
    return make_instance(n, d, kind, sigma, seed, matrix="gaussian")


def _setting_solver(setting: str, inst: ProblemInstance, s: int, eta: float,
                    base_cfg: SolverConfig) -> SolverConfig:
    """HPM1 with the Lambda convention of each setting, Delta_1 = ||x_*^s||."""
    ute = float(np.max(np.abs(inst.U.T @ inst.e)))
    xs = hard_threshold_top_s(inst.x_star, s)
    if setting == "setting1":
        lam_cap = 0.0
    elif setting == "setting2":
        lam_cap = math.sqrt(s) * ute
    else:
        lam_cap = math.sqrt(s) * ute + eta * float(np.linalg.norm(inst.x_star - xs))
    delta1 = max(float(np.linalg.norm(xs)), lam_cap)
    return dataclasses.replace(base_cfg, algorithm=Algorithm.HPM1, s=s, eta=eta,
                               lambda_cap=lam_cap, delta1=delta1)


def _default_eta(cfg: ExperimentConfig, setting: str) -> float:
    return cfg.eta_list[0] if cfg.eta_list else _SETTINGS[setting][2]


def _jobs_setting(cfg: ExperimentConfig, out: Path):
    setting = cfg.protocol.value if cfg.protocol.value in _SETTINGS else cfg.base
    etas = cfg.eta_list if cfg.protocol is Protocol.ETA_SWEEP else [_default_eta(cfg, setting)]
    ns = cfg.n_list if cfg.protocol is Protocol.N_SWEEP else [cfg.n]
    swept = "eta" if cfg.protocol is Protocol.ETA_SWEEP else "n" if cfg.protocol is Protocol.N_SWEEP else "setting"
    for trial in range(cfg.trials):
        seed = derive_seed(cfg.seed, trial)
        for n in ns:
            def job(n=n, seed=seed, trial=trial):
                inst = _setting_instance(setting, n, cfg.d, cfg.s, cfg.sigma, seed)
                rows = []
                for eta in etas:
                    scfg = _setting_solver(setting, inst, cfg.s, eta, cfg.solver)
                    value = {"eta": eta, "n": n, "setting": setting}[swept]
                    sub = out / f"trial{trial}" / f"{swept}_{value}"
                    if swept == "n" and len(etas) > 1:
                        sub = sub / f"eta_{eta}"
                    meta = {"protocol": cfg.protocol.value, "setting": setting, "trial": trial,
                            "seed": seed, "master_seed": cfg.seed, "eta": eta}
                    row = run_and_record(inst, scfg, sub, meta)
                    row.update(param=swept, value=value, trial=trial, seed=seed)
                    rows.append(row)
                return rows
            yield job


def _pgh_instance(cfg: ExperimentConfig, seed: int) -> ProblemInstance:
    kind = SignalKind.exact_sparse(cfg.s, normalize=False, values="uniform",
                                   value_scale=math.sqrt(3.0 / cfg.n))
    sigma = 0.01 if cfg.sigma is None else cfg.sigma
    return make_instance(cfg.n, cfg.d, kind, sigma, seed, matrix="uniform")


def _jobs_pgh(cfg: ExperimentConfig, out: Path):
    etas = cfg.eta_list or [0.182, 0.185]
    for trial in range(cfg.trials):
        seed = derive_seed(cfg.seed, trial)

        def job(seed=seed, trial=trial):
            inst = _pgh_instance(cfg, seed)
            rows = []
            base = {"protocol": cfg.protocol.value, "trial": trial, "seed": seed, "master_seed": cfg.seed}
            for eta in etas:
                scfg = dataclasses.replace(cfg.solver, algorithm=Algorithm.HPM2, s=cfg.s, eta=eta,
                                           lambda1=None, delta1=None)
                row = run_and_record(inst, scfg, out / f"trial{trial}" / f"hpm2_eta_{eta}", base)
                row.update(param="eta", value=eta, trial=trial, seed=seed)
                rows.append(row)
            pcfg = dataclasses.replace(cfg.solver, algorithm=Algorithm.PGH, s=cfg.s,
                                       max_iters=max(cfg.solver.max_iters, 1000))
            row = run_and_record(inst, pcfg, out / f"trial{trial}" / "pgh", base)
            row.update(param="lambda_target", value=pcfg.pgh_lambda_target, trial=trial, seed=seed)
            rows.append(row)
            return rows
        yield job


def _baseline_instance(cfg: ExperimentConfig, seed: int) -> ProblemInstance:
    sigma = 0.01 if cfg.sigma is None else cfg.sigma
    if cfg.signal == "expdecay":
        kind = SignalKind.exp_decay()
    elif cfg.signal == "powerlaw":
        kind = SignalKind.power_law()
    else:
        # uniform [-1, 1] nonzeros, unnormalised
        kind = SignalKind.exact_sparse(cfg.s, normalize=False, values="uniform")
    return make_instance(cfg.n, cfg.d, kind, sigma, seed, matrix="uniform")


def _jobs_baseline(cfg: ExperimentConfig, out: Path):
    etas = cfg.eta_list or [round(0.10 + 0.01 * i, 2) for i in range(11)]
    gammas = cfg.iht_gamma_list or [float(g) for g in range(1, 11)]
    lams = cfg.ista_lambda_list or [0.001, 0.01, 0.1, 1.0]
    for trial in range(cfg.trials):
        seed = derive_seed(cfg.seed, trial)

        def job(seed=seed, trial=trial):
            inst = _baseline_instance(cfg, seed)
            base = {"protocol": cfg.protocol.value, "trial": trial, "seed": seed, "master_seed": cfg.seed}
            rows = []
            grids = [
                (Algorithm.HPM2, "eta", etas),
                (Algorithm.IHT, "iht_gamma", gammas),
                (Algorithm.ISTA, "ista_lambda", lams),
            ]
            for algo, pname, values in grids:
                for v in values:
                    scfg = dataclasses.replace(cfg.solver, algorithm=algo, s=cfg.s, **{pname: v})
                    sub = out / f"trial{trial}" / f"{algo.value}_{pname}_{v}"
                    row = run_and_record(inst, scfg, sub, base)
                    row.update(param=pname, value=v, trial=trial, seed=seed)
                    rows.append(row)
            return rows
        yield job


def _jobs_custom(cfg: ExperimentConfig, out: Path):
    for trial in range(cfg.trials):
        seed = derive_seed(cfg.seed, trial)

        def job(seed=seed, trial=trial):
            if cfg.signal == "sparse":
                kind = SignalKind.exact_sparse(cfg.s)
            elif cfg.signal == "powerlaw":
                kind = SignalKind.power_law()
            else:
                kind = SignalKind.exp_decay()
            inst = make_instance(cfg.n, cfg.d, kind, cfg.sigma or 0.0, seed, matrix=cfg.matrix)
            scfg = dataclasses.replace(cfg.solver, s=cfg.s)
            meta = {"protocol": cfg.protocol.value, "trial": trial, "seed": seed, "master_seed": cfg.seed}
            row = run_and_record(inst, scfg, out / f"trial{trial}", meta)
            row.update(param="algorithm", value=scfg.algorithm.value, trial=trial, seed=seed)
            return [row]
        yield job


def run_protocol(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """Run `cfg` and write everything under ``cfg.output_dir``. Returns the summary rows."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.protocol in (Protocol.SETTING1, Protocol.SETTING2, Protocol.SETTING3,
                        Protocol.ETA_SWEEP, Protocol.N_SWEEP):
        jobs = list(_jobs_setting(cfg, out))
    elif cfg.protocol is Protocol.PGH_COMPARE:
        jobs = list(_jobs_pgh(cfg, out))
    elif cfg.protocol is Protocol.BASELINE_COMPARE:
        jobs = list(_jobs_baseline(cfg, out))
    else:
        jobs = list(_jobs_custom(cfg, out))
    workers = workers or worker_count()
    if workers == 1 or len(jobs) == 1:
        results = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: j(), jobs))
    rows = [row for chunk in results for row in chunk]
    write_summary(out / "summary.csv", rows)
    meta = {k: v for k, v in _experiment_meta(cfg).items()}
    meta["trial_seeds"] = ",".join(str(derive_seed(cfg.seed, t)) for t in range(cfg.trials))
    write_meta(out / "meta.txt", meta)
    return rows


def _experiment_meta(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "solver":
            out.update({f"solver_{k}": val for k, val in _cfg_meta(v).items()})
        elif isinstance(v, Enum):
            out[f.name] = v.value
        elif isinstance(v, list):
            out[f.name] = ",".join(_fmt(x) for x in v)
        else:
            out[f.name] = _fmt(v)
    return out


# -- config files ---------------------------------------------------------------

_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
_EXP_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LISTS = {"eta_list": float, "n_list": int, "iht_gamma_list": float, "ista_lambda_list": float}


def _coerce(name: str, raw: str, default):
    if name in _LISTS:
        return [_LISTS[name](x) for x in raw.replace(" ", "").split(",") if x]
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if name in ("protocol", "algorithm", "base", "signal", "matrix", "output_dir"):
        return raw
    return float(raw)


def config_from_mapping(values: dict) -> ExperimentConfig:
    """Build a config from string values; solver keys may be bare or prefixed ``solver.``."""
    exp_kwargs, solver_kwargs = {}, {}
    defaults_exp = ExperimentConfig()
    defaults_solver = SolverConfig()
    for key, raw in values.items():
        name = key[len("solver."):] if key.startswith("solver.") else key
        if name in _EXP_FIELDS and name != "solver" and not key.startswith("solver."):
            exp_kwargs[name] = _coerce(name, raw, getattr(defaults_exp, name))
        elif name in _SOLVER_FIELDS and name != "rip":
            solver_kwargs[name] = _coerce(name, raw, getattr(defaults_solver, name))
        else:
            raise ValueError(f"unknown config key {key!r}")
    if "s" in exp_kwargs:
        solver_kwargs.setdefault("s", exp_kwargs["s"])
    return ExperimentConfig(solver=SolverConfig(**solver_kwargs), **exp_kwargs)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    values = read_meta(path)
    values.update(overrides or {})
    return config_from_mapping(values)
