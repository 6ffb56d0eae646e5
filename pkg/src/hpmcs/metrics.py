"""Recovery errors, convergence-rate fits and per-step inequality checkers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import hard_threshold_top_s, set_difference_size, support
from .rip import RipConstants

__all__ = [
    "CHECK_TOL",
    "RecoveryReport",
    "recovery_report",
    "trace_errors",
    "fit_rate",
    "fit_linear_rate",
    "LemmaCheck",
    "check_lemma_fund",
    "check_top_s_lemma",
    "Prop1Check",
    "check_prop1_count",
    "theorem4_envelope",
]

# absolute slack for inequality checks on O(1)-scale quantities
CHECK_TOL = 1e-9


@dataclass(frozen=True)
class RecoveryReport:
    full_error: float
    top_s_error: float
    top_s_projected_error: float
    support_excess: int
    nnz: int
    rate_estimate: float | None = None


def recovery_report(x_hat: np.ndarray, x_star: np.ndarray, s: int) -> RecoveryReport:
    """Errors of `x_hat` against `x_star` and against its top-`s` part.

    ``S_*`` is the support of ``x_star^s`` (ties at the boundary go to the
    lowest index).
    """
    if x_hat.shape != x_star.shape:
        raise ValueError(f"dimension mismatch: {x_hat.shape} vs {x_star.shape}")
    if s < 1:
        raise ValueError("s must be >= 1")
    s_eff = min(s, x_star.shape[0])
    xs = hard_threshold_top_s(x_star, s_eff)
    return RecoveryReport(
        full_error=float(np.linalg.norm(x_hat - x_star)),
        top_s_error=float(np.linalg.norm(x_hat - xs)),
        top_s_projected_error=float(np.linalg.norm(hard_threshold_top_s(x_hat, s_eff) - xs)),
        support_excess=set_difference_size(support(x_hat), support(xs)),
        nnz=int(np.count_nonzero(x_hat)),
    )


def trace_errors(trace, x_ref: np.ndarray) -> np.ndarray:
    """``||x_k - x_ref||_2`` for every recorded iterate."""
    return np.array([np.linalg.norm(x - x_ref) for x in trace.iterates()])


def fit_rate(errors, floor: float = 0.0) -> float:
    """Per-iteration contraction factor from a least-squares fit of ``log(error)`` on the index.

    Only entries above `floor` are used. The natural-log slope ``b`` is
    returned as ``exp(b)``, so an exact ``gamma**t`` sequence gives ``gamma``.
    """
    errors = np.asarray(errors, dtype=np.float64)
    t = np.arange(errors.shape[0], dtype=np.float64)
    keep = errors > floor
    if np.count_nonzero(keep) < 5:
        raise ValueError(f"need at least 5 errors above {floor}, got {int(np.count_nonzero(keep))}")
    tk, lk = t[keep], np.log(errors[keep])
    tc = tk - tk.mean()
    slope = float(tc @ (lk - lk.mean()) / (tc @ tc))
    return math.exp(slope)


def fit_linear_rate(trace, x_ref: np.ndarray, floor: float) -> float:
    return fit_rate(trace_errors(trace, x_ref), floor)


class LemmaCheck(NamedTuple):
    holds: bool
    slack: float


def check_lemma_fund(U, y, x_t, x_next, lambda_t: float, x_ref, s: int) -> LemmaCheck:
    """Per-step inequality for a proximal step taken at threshold `lambda_t`.

    ``||x_next - x||^2 <= lambda_t sqrt(s) ||x_next - x||
    + |(x_next - x)^T (U^T(U x_t - y) - (x_t - x))|`` with ``x = x_ref``.
    `x_ref` must be `s`-sparse.
    """
    if np.count_nonzero(x_ref) > s:
        raise ValueError(f"x_ref has {np.count_nonzero(x_ref)} nonzeros, more than s={s}")
    diff = x_next - x_ref
    nd = float(np.linalg.norm(diff))
    lhs = nd * nd
    inner = float(diff @ (U.T @ (U @ x_t - y) - (x_t - x_ref)))
    rhs = lambda_t * math.sqrt(s) * nd + abs(inner)
    return LemmaCheck(lhs <= rhs + CHECK_TOL, rhs - lhs)


def check_top_s_lemma(x: np.ndarray, y_sparse: np.ndarray, s: int) -> bool:
    """``||x^s - y||_2 <= sqrt(3) ||x - y||_2`` for `s`-sparse `y` in dimension ``2s``."""
    if x.shape != y_sparse.shape or x.shape[0] != 2 * s:
        raise ValueError(f"both vectors must have length 2s={2 * s}")
    if np.count_nonzero(y_sparse) > s:
        raise ValueError("y_sparse must be s-sparse")
    lhs = float(np.linalg.norm(hard_threshold_top_s(x, s) - y_sparse))
    return lhs <= math.sqrt(3.0) * float(np.linalg.norm(x - y_sparse)) + 1e-12


class Prop1Check(NamedTuple):
    count: int
    holds: bool


def check_prop1_count(U, x_t, x_star, rip: RipConstants, s: int) -> Prop1Check:
    """Count large off-support entries of ``x_t - U^T U (x_t - x_star)``.

    Entries outside ``S_*`` with magnitude above
    ``(delta_s + sqrt2 theta_ss)/sqrt(s) * ||x_t - x_star||`` are counted;
    ``holds`` is ``count <= s``. Requires ``|S(x_t) \\ S_*| <= s``, otherwise
    the check does not apply and ``ValueError`` is raised.
    """
    s_star = support(x_star)
    if set_difference_size(support(x_t), s_star) > s:
        raise ValueError("hypothesis |S(x_t) \\ S_*| <= s does not hold; check not applicable")
    if s not in rip.delta or rip.theta_ss is None:
        raise ValueError(f"RIP constants delta_{s} and theta_ss are required")
    diff = x_t - x_star
    x_tilde = x_t - U.T @ (U @ diff)
    off = np.ones(x_t.shape[0], dtype=bool)
    off[s_star] = False
    thresh = (rip.delta[s] + math.sqrt(2.0) * rip.theta_ss) / math.sqrt(s) * float(np.linalg.norm(diff))
    count = int(np.count_nonzero(np.abs(x_tilde[off]) > thresh))
    return Prop1Check(count, count <= s)


def theorem4_envelope(lam_cap: float, eta: float, gamma: float, T: int, delta1: float) -> float:
    """``max(Lambda / eta, gamma**T * Delta_1)``, the HPM2 error envelope."""
    return max(lam_cap / eta, gamma**T * delta1)
