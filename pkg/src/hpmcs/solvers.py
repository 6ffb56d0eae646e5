"""Homotopy proximal mapping solvers and the ISTA / IHT / PGH baselines.

Every solver starts from ``x_1 = 0`` and returns an :class:`IterateTrace`.
Record ``k`` (1-based) holds the iterate ``x_{k+1}`` produced with
threshold ``lambda_k``, so the k-th record is the one the convergence
theorems bound by ``Delta_{k+1}``.

The HPM variants differ only in their threshold schedule; all of them call
:func:`prox_gradient_step` with unit step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .linalg import hard_threshold_top_s, soft_threshold
from .problems import ProblemInstance
from .rip import RipConstants, gamma_condition

__all__ = [
    "Algorithm",
    "Termination",
    "ContractError",
    "SolverConfig",
    "IterateRecord",
    "IterateTrace",
    "LAMBDA_FLOOR",
    "prox_gradient_step",
    "power_iteration_lmax",
    "run_hpm_oracle_noiseless",
    "run_hpm_oracle_noisy",
    "run_hpm1",
    "run_hpm2",
    "run_ista",
    "run_iht",
    "run_pgh",
    "solve",
]

SQRT2 = math.sqrt(2.0)
# keeps every soft-threshold strict when a schedule collapses to zero
LAMBDA_FLOOR = 1e-15


class Algorithm(str, Enum):
    HPM_ORACLE_NOISELESS = "hpm-oracle"
    HPM_ORACLE_NOISY = "hpm-oracle-noisy"
    HPM1 = "hpm1"
    HPM2 = "hpm2"
    ISTA = "ista"
    IHT = "iht"
    PGH = "pgh"


class Termination(str, Enum):
    MAX_ITERS = "max_iters"
    SPARSITY_STOP = "sparsity_stop"
    PLATEAU = "plateau"
    CONVERGED = "converged"
    DIVERGED = "diverged"


class ContractError(ValueError):
    """A solver precondition does not hold (e.g. gamma >= 1, missing RIP constants)."""


@dataclass
class SolverConfig:
    """Algorithm choice plus every tunable. Unused fields are ignored by a given solver."""

    algorithm: Algorithm = Algorithm.HPM2
    s: int = 1
    eta: float = 0.15
    delta1: float | None = None
    lambda_cap: float = 0.0
    lambda1: float | None = None
    rip: RipConstants | None = None
    ut_e_inf: float | None = None
    max_iters: int = 200
    ista_lambda: float = 0.01
    ista_step: float | None = None
    iht_gamma: float = 1.0
    pgh_lambda_target: float = 1.0
    pgh_dec_factor: float = 0.7
    pgh_inner_tol_factor: float = 0.2
    pgh_L0: float = 1.0
    pgh_L_min: float = 1e-3
    pgh_gamma_inc: float = 2.0
    pgh_gamma_dec: float = 2.0
    error_floor: float = 1e-12

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)

    def validate(self) -> None:
        """Raise :class:`ContractError` when the configuration cannot run."""
        if self.s < 1:
            raise ContractError("s must be >= 1")
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")
        a = self.algorithm
        if a is Algorithm.HPM1 and not (1 + SQRT2) * self.eta < 1:
            raise ContractError(f"HPM1 needs eta < sqrt(2) - 1, got eta={self.eta}")
        if a is Algorithm.HPM2 and not 2 * (1 + SQRT2) * self.eta < 1:
            raise ContractError(f"HPM2 needs 2(1+sqrt(2)) eta < 1, got eta={self.eta}")
        if a in (Algorithm.HPM1, Algorithm.HPM2) and self.eta <= 0:
            raise ContractError("eta must be positive")
        if self.lambda_cap < 0:
            raise ContractError("Lambda must be nonnegative")
        if a is Algorithm.ISTA and self.ista_lambda <= 0:
            raise ContractError("ista_lambda must be positive")
        if a is Algorithm.IHT and self.iht_gamma <= 0:
            raise ContractError("iht_gamma must be positive")
        if a is Algorithm.PGH:
            if self.pgh_lambda_target <= 0:
                raise ContractError("pgh_lambda_target must be positive")
            if not 0 < self.pgh_dec_factor < 1:
                raise ContractError("pgh_dec_factor must lie in (0, 1)")
            if self.pgh_inner_tol_factor < 0:
                raise ContractError("pgh_inner_tol_factor must be nonnegative")
        if a in (Algorithm.HPM_ORACLE_NOISELESS, Algorithm.HPM_ORACLE_NOISY):
            if self.rip is None:
                raise ContractError("oracle HPM schedules need RIP constants")
            try:
                g = gamma_condition(self.rip, self.s)
            except ValueError as exc:
                raise ContractError(str(exc)) from None
            if not g.satisfied:
                raise ContractError(f"gamma = {g.gamma:.6g} >= 1; the oracle schedule has no guarantee")


@dataclass
class IterateRecord:
    """One iteration. The iterate is stored sparsely as (idx, vals) unless dense."""

    t: int
    lam: float | None
    nnz: int
    prox_updates: int
    idx: np.ndarray | None
    vals: np.ndarray
    delta_bound: float | None = None

    def x(self, d: int) -> np.ndarray:
        if self.idx is None:
            return self.vals.copy()
        out = np.zeros(d)
        out[self.idx] = self.vals
        return out


@dataclass
class IterateTrace:
    algorithm: Algorithm
    d: int
    records: list[IterateRecord] = field(default_factory=list)
    final_x: np.ndarray | None = None
    termination: Termination = Termination.MAX_ITERS
    prox_updates: int = 0
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def iterate(self, k: int) -> np.ndarray:
        """The iterate stored in record `k` (0-based list position)."""
        return self.records[k].x(self.d)

    def previous(self, k: int) -> np.ndarray:
        """The iterate record `k` was computed from (``x_1 = 0`` for the first)."""
        return np.zeros(self.d) if k == 0 else self.iterate(k - 1)

    def iterates(self):
        for r in self.records:
            yield r.x(self.d)

    def _append(self, x: np.ndarray, lam, delta_bound=None) -> None:
        nz = np.flatnonzero(x)
        if nz.size > self.d // 4:
            idx, vals = None, x.copy()
        else:
            idx, vals = nz, x[nz].copy()
        self.records.append(IterateRecord(
            t=len(self.records) + 1,
            lam=None if lam is None else float(lam),
            nnz=int(nz.size),
            prox_updates=self.prox_updates,
            idx=idx,
            vals=vals,
            delta_bound=None if delta_bound is None else float(delta_bound),
        ))


def prox_gradient_step(U: np.ndarray, y: np.ndarray, x_t: np.ndarray, lam: float,
                       step: float = 1.0) -> np.ndarray:
    """``soft_threshold(x_t - step * U^T (U x_t - y), step * lam)``.

    With ``step = 1`` this is exactly the HPM update.
    """
    if x_t.shape[0] != U.shape[1] or y.shape[0] != U.shape[0]:
        raise ValueError(f"dimension mismatch: U is {U.shape}, x has {x_t.shape[0]}, y has {y.shape[0]}")
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    grad = U.T @ (U @ x_t - y)
    return soft_threshold(x_t - step * grad, step * lam)


def power_iteration_lmax(U: np.ndarray, iters: int = 50, rtol: float = 1e-6) -> float:
    """Largest eigenvalue of ``U^T U`` by power iteration from a fixed start vector."""
    v = np.full(U.shape[1], 1.0 / math.sqrt(U.shape[1]))
    est = 0.0
    for _ in range(iters):
        w = U.T @ (U @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


def _plateaued(x_new: np.ndarray, x_old: np.ndarray, floor: float) -> bool:
    # a zero iterate is the homotopy start, never a converged state
    return bool(np.any(x_new)) and float(np.linalg.norm(x_new - x_old)) <= floor


def _top_s_norm(x: np.ndarray, s: int) -> float:
    return float(np.linalg.norm(hard_threshold_top_s(x, min(s, x.shape[0]))))


def _ground_truth_delta1(inst: ProblemInstance, cfg: SolverConfig, need: float) -> float:
    """Delta_1 from the config, or from ground truth; checked against `need` when known."""
    if cfg.delta1 is None:
        if not inst.has_ground_truth:
            raise ContractError("delta1 is required when the instance has no ground truth")
        return need
    if inst.has_ground_truth and cfg.delta1 < need * (1 - 1e-12):
        raise ContractError(f"delta1={cfg.delta1:.6g} is below the required {need:.6g}")
    return cfg.delta1


def _run_schedule(inst, cfg, algorithm, lambdas_and_bounds, params) -> IterateTrace:
    U, y = inst.U, inst.y
    trace = IterateTrace(algorithm=algorithm, d=inst.d, params=params)
    x = np.zeros(inst.d)
    for lam, bound in lambdas_and_bounds:
        x_new = prox_gradient_step(U, y, x, max(lam, LAMBDA_FLOOR))
        trace.prox_updates += 1
        trace._append(x_new, max(lam, LAMBDA_FLOOR), bound)
        done = _plateaued(x_new, x, cfg.error_floor)
        x = x_new
        if done:
            trace.termination = Termination.PLATEAU
            break
    trace.final_x = x
    return trace


def _oracle_common(inst, cfg):
    cfg.validate()
    s = cfg.s
    c = cfg.rip
    gamma = gamma_condition(c, s).gamma
    coef = (c.delta[s] + SQRT2 * c.theta_ss) / math.sqrt(s)
    need = float(np.linalg.norm(inst.x_star)) if inst.has_ground_truth else 0.0
    delta1 = _ground_truth_delta1(inst, cfg, need)
    return gamma, coef, delta1


def run_hpm_oracle_noiseless(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """HPM with ``lambda_t = (delta_s + sqrt2 theta_ss)/sqrt(s) * Delta_t``, ``Delta_{t+1} = gamma Delta_t``."""
    cfg = replace(cfg, algorithm=Algorithm.HPM_ORACLE_NOISELESS)
    if inst.e is not None and np.any(inst.e):
        raise ContractError("the noiseless oracle schedule needs e = 0")
    gamma, coef, delta1 = _oracle_common(inst, cfg)

    def schedule():
        delta = delta1
        for _ in range(cfg.max_iters):
            nxt = gamma * delta
            yield coef * delta, nxt
            delta = nxt

    params = {"gamma": gamma, "delta1": delta1}
    return _run_schedule(inst, cfg, Algorithm.HPM_ORACLE_NOISELESS, schedule(), params)


def run_hpm_oracle_noisy(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """HPM with the noisy oracle schedule.

    ``lambda_t = coef * Delta_t + ||U^T e||_inf`` and
    ``Delta_{t+1} = gamma Delta_t + (1 + sqrt2) sqrt(s) ||U^T e||_inf``.
    """
    cfg = replace(cfg, algorithm=Algorithm.HPM_ORACLE_NOISY)
    gamma, coef, delta1 = _oracle_common(inst, cfg)
    ute = cfg.ut_e_inf
    if ute is None:
        if inst.e is None:
            raise ContractError("ut_e_inf is required when the noise vector is unknown")
        ute = float(np.max(np.abs(inst.U.T @ inst.e)))
    offset = (1 + SQRT2) * math.sqrt(cfg.s) * ute

    def schedule():
        delta = delta1
        for _ in range(cfg.max_iters):
            nxt = gamma * delta + offset
            yield coef * delta + ute, nxt
            delta = nxt

    params = {"gamma": gamma, "delta1": delta1, "ut_e_inf": ute}
    return _run_schedule(inst, cfg, Algorithm.HPM_ORACLE_NOISY, schedule(), params)


def _default_delta1(inst: ProblemInstance, cfg: SolverConfig) -> float:
    # crude ||x_*|| proxy when nothing better is known
    return float(np.max(np.abs(inst.U.T @ inst.y))) * math.sqrt(cfg.s)


def run_hpm1(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """HPM1: ``lambda_t = (Lambda + eta Delta_t)/sqrt(s)``, ``Delta_{t+1} = gamma Delta_t + (1+sqrt2) Lambda``.

    Without an explicit `delta1`, Delta_1 is ``max(||x_*^s||, Lambda)`` when
    ground truth is attached and ``sqrt(s) ||U^T y||_inf`` otherwise.
    """
    cfg = replace(cfg, algorithm=Algorithm.HPM1)
    cfg.validate()
    s, eta, lam_cap = cfg.s, cfg.eta, cfg.lambda_cap
    gamma = (1 + SQRT2) * eta
    if inst.has_ground_truth:
        need = max(_top_s_norm(inst.x_star, s), lam_cap)
        delta1 = _ground_truth_delta1(inst, cfg, need)
    else:
        delta1 = cfg.delta1 if cfg.delta1 is not None else max(_default_delta1(inst, cfg), lam_cap)

    def schedule():
        delta = delta1
        for _ in range(cfg.max_iters):
            nxt = gamma * delta + (1 + SQRT2) * lam_cap
            yield (lam_cap + eta * delta) / math.sqrt(s), nxt
            delta = nxt

    params = {"gamma": gamma, "delta1": delta1, "Lambda": lam_cap, "eta": eta}
    return _run_schedule(inst, cfg, Algorithm.HPM1, schedule(), params)


def run_hpm2(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """HPM2: geometric threshold decay with the 2s sparsity stop.

    ``lambda_1`` is `lambda1` if given, else ``2 eta Delta_1 / sqrt(s)`` if
    `delta1` is given, else ``||U^T y||_inf``. When an update would leave more
    than ``2s`` nonzeros it is discarded, the previous iterate is returned and
    the trace terminates with ``SPARSITY_STOP``.
    """
    cfg = replace(cfg, algorithm=Algorithm.HPM2)
    cfg.validate()
    s, eta = cfg.s, cfg.eta
    gamma = 2 * (1 + SQRT2) * eta
    U, y = inst.U, inst.y
    if cfg.lambda1 is not None:
        lam = cfg.lambda1
    elif cfg.delta1 is not None:
        lam = 2 * eta * cfg.delta1 / math.sqrt(s)
    else:
        lam = float(np.max(np.abs(U.T @ y)))
    trace = IterateTrace(algorithm=Algorithm.HPM2, d=inst.d,
                         params={"gamma": gamma, "lambda1": lam, "eta": eta})
    x = np.zeros(inst.d)
    for _ in range(cfg.max_iters):
        lam_t = max(lam, LAMBDA_FLOOR)
        x_new = prox_gradient_step(U, y, x, lam_t)
        trace.prox_updates += 1
        lam = gamma * lam
        if np.count_nonzero(x_new) > 2 * s:
            trace.termination = Termination.SPARSITY_STOP
            break
        trace._append(x_new, lam_t)
        done = _plateaued(x_new, x, cfg.error_floor)
        x = x_new
        if done:
            trace.termination = Termination.PLATEAU
            break
    trace.final_x = x
    return trace


def run_ista(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """Fixed-lambda proximal gradient on ``1/2 ||Ux - y||^2 + lambda ||x||_1``, step ``1/L``."""
    cfg = replace(cfg, algorithm=Algorithm.ISTA)
    cfg.validate()
    U, y = inst.U, inst.y
    if cfg.ista_step is not None:
        step = cfg.ista_step
    else:
        L = power_iteration_lmax(U)
        step = 1.0 / L if L > 0 else 1.0
    lam = cfg.ista_lambda
    trace = IterateTrace(algorithm=Algorithm.ISTA, d=inst.d, params={"step": step, "lambda": lam})
    x = np.zeros(inst.d)
    for _ in range(cfg.max_iters):
        x_new = prox_gradient_step(U, y, x, lam, step)
        trace.prox_updates += 1
        trace._append(x_new, lam)
        done = _plateaued(x_new, x, cfg.error_floor)
        x = x_new
        if done:
            trace.termination = Termination.PLATEAU
            break
    trace.final_x = x
    return trace


def run_iht(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """Iterative hard thresholding ``x <- H_s(x - U^T(Ux - y) / gamma)``.

    Stops with ``DIVERGED`` (keeping the last finite iterate) if the iterates
    overflow, which happens when ``1/gamma`` is too large for the matrix.
    """
    cfg = replace(cfg, algorithm=Algorithm.IHT)
    cfg.validate()
    U, y, s = inst.U, inst.y, min(cfg.s, inst.d)
    trace = IterateTrace(algorithm=Algorithm.IHT, d=inst.d, params={"gamma": cfg.iht_gamma})
    x = np.zeros(inst.d)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.max_iters):
            x_new = hard_threshold_top_s(x - (U.T @ (U @ x - y)) / cfg.iht_gamma, s)
            trace.prox_updates += 1
            if not np.all(np.isfinite(x_new)):
                trace.termination = Termination.DIVERGED
                break
            trace._append(x_new, None)
            done = _plateaued(x_new, x, cfg.error_floor)
            x = x_new
            if done:
                trace.termination = Termination.PLATEAU
                break
    trace.final_x = x
    return trace


def run_pgh(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """Proximal-gradient homotopy on the l1-regularised least-squares objective.

    Stages start at ``lambda = ||U^T y||_inf``. Each stage takes proximal
    gradient steps with a backtracking estimate ``L`` of the local Lipschitz
    constant (grow by ``gamma_inc`` until the quadratic upper bound holds,
    shrink by ``gamma_dec`` after each accepted step). A stage ends when an
    accepted step moves no entry by more than ``inner_tol_factor * lambda``.
    Then ``lambda <- max(lambda_target, dec_factor * lambda)``. The run ends
    after the stage at ``lambda_target``. Every prox evaluation, including
    rejected line-search trials, counts towards `prox_updates`, which is
    capped by `max_iters`.
    """
    cfg = replace(cfg, algorithm=Algorithm.PGH)
    cfg.validate()
    U, y = inst.U, inst.y
    target = cfg.pgh_lambda_target
    lam = max(float(np.max(np.abs(U.T @ y))), target)
    L = cfg.pgh_L0
    trace = IterateTrace(algorithm=Algorithm.PGH, d=inst.d,
                         params={"lambda_target": target, "lambda0": lam})
    x = np.zeros(inst.d)
    r = U @ x - y
    f = 0.5 * float(r @ r)
    budget_left = True
    while budget_left:
        while True:
            g = U.T @ r
            while True:
                if trace.prox_updates >= cfg.max_iters:
                    budget_left = False
                    break
                x_new = soft_threshold(x - g / L, lam / L)
                trace.prox_updates += 1
                r_new = U @ x_new - y
                f_new = 0.5 * float(r_new @ r_new)
                dx = x_new - x
                if f_new <= f + float(g @ dx) + 0.5 * L * float(dx @ dx) * (1 + 1e-12):
                    break
                L *= cfg.pgh_gamma_inc
            if not budget_left:
                break
            trace._append(x_new, lam)
            moved = float(np.max(np.abs(dx)))
            x, r, f = x_new, r_new, f_new
            L = max(cfg.pgh_L_min, L / cfg.pgh_gamma_dec)
            if moved <= cfg.pgh_inner_tol_factor * lam:
                break
        if not budget_left:
            trace.termination = Termination.MAX_ITERS
            break
        if lam <= target:
            trace.termination = Termination.CONVERGED
            break
        lam = max(target, cfg.pgh_dec_factor * lam)
    trace.final_x = x
    return trace


_DISPATCH = {
    Algorithm.HPM_ORACLE_NOISELESS: run_hpm_oracle_noiseless,
    Algorithm.HPM_ORACLE_NOISY: run_hpm_oracle_noisy,
    Algorithm.HPM1: run_hpm1,
    Algorithm.HPM2: run_hpm2,
    Algorithm.ISTA: run_ista,
    Algorithm.IHT: run_iht,
    Algorithm.PGH: run_pgh,
}


def solve(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """Run the solver named by ``cfg.algorithm``."""
    return _DISPATCH[cfg.algorithm](inst, cfg)
