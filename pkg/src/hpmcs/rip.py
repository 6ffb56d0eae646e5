"""Exhaustive restricted isometry / orthogonality constants for tiny matrices.

Computing RIP constants is NP-hard, so these routines enumerate every
support and are only meant to certify small instances (d up to ~30,
s up to ~3). Enumeration is capped and refuses to start past the cap.

Eigenvalues come from LAPACK's symmetric solver (``numpy.linalg.eigvalsh``)
and spectral norms from the SVD, both batched over supports. Results are
max-reductions, so chunking does not change them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linalg import as_matrix, as_vector

__all__ = [
    "DEFAULT_CAP",
    "EnumerationCapError",
    "RipConstants",
    "delta_exhaustive",
    "theta_exhaustive",
    "compute_rip_constants",
    "gamma_condition",
    "GammaResult",
    "ut_e_inf_bound_report",
    "BoundReport",
    "format_rip",
    "parse_rip",
]

DEFAULT_CAP = 10**6
_CHUNK = 100_000


class EnumerationCapError(ValueError):
    """Raised when the number of supports to enumerate exceeds the cap."""


@dataclass
class RipConstants:
    """RIP constants of one matrix: ``delta[k]`` per level and ``theta_ss`` at level `s`."""

    delta: dict[int, float] = field(default_factory=dict)
    theta_ss: float | None = None
    s: int | None = None


def _check_cap(count: int, cap: int, what: str) -> None:
    if count > cap:
        raise EnumerationCapError(
            f"{what} needs {count} subsets, above the cap of {cap}; shrink d or k"
        )


def _combos(d: int, k: int):
    it = itertools.combinations(range(d), k)
    while True:
        chunk = list(itertools.islice(it, _CHUNK))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.intp)


def delta_exhaustive(U, k: int, cap: int = DEFAULT_CAP) -> float:
    """Smallest delta with all eigenvalues of every ``U_T^T U_T``, ``|T| = k``, in [1-delta, 1+delta]."""
    U = as_matrix(U, "U")
    d = U.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    _check_cap(math.comb(d, k), cap, f"delta_{k}")
    G = U.T @ U
    best = 0.0
    for T in _combos(d, k):
        sub = G[T[:, :, None], T[:, None, :]]
        w = np.linalg.eigvalsh(sub)
        best = max(best, float(np.max(np.maximum(w[:, -1] - 1.0, 1.0 - w[:, 0]))))
    return best


def theta_exhaustive(U, s: int, cap: int = DEFAULT_CAP) -> float:
    """Restricted orthogonality constant: max ``||U_T^T U_T'||_2`` over disjoint T, T' of size s.

    Smaller supports are dominated by the size-s ones that contain them.
    """
    U = as_matrix(U, "U")
    d = U.shape[1]
    if s < 1 or 2 * s > d:
        raise ValueError(f"need 1 <= s and 2s <= d, got s={s}, d={d}")
    pairs = math.comb(d, s) * math.comb(d - s, s) // 2
    _check_cap(pairs, cap, f"theta_{s},{s}")
    G = U.T @ U
    combos = np.array(list(itertools.combinations(range(d), s)), dtype=np.intp)
    member = np.zeros((len(combos), d), dtype=bool)
    member[np.arange(len(combos))[:, None], combos] = True
    best = 0.0
    for i, T in enumerate(combos):
        rest = combos[i + 1:]
        if rest.size == 0:
            continue
        disjoint = rest[~member[i + 1:][:, T].any(axis=1)]
        if disjoint.size == 0:
            continue
        sub = G[T[None, :, None], disjoint[:, None, :]]
        best = max(best, float(np.max(np.linalg.norm(sub, ord=2, axis=(1, 2)))))
    return best


def compute_rip_constants(U, s: int, cap: int = DEFAULT_CAP) -> RipConstants:
    """delta_1 .. delta_{3s} plus theta_{s,s}, everything the oracle schedules need."""
    U = as_matrix(U, "U")
    kmax = min(3 * s, U.shape[1])
    delta = {k: delta_exhaustive(U, k, cap) for k in range(1, kmax + 1)}
    return RipConstants(delta=delta, theta_ss=theta_exhaustive(U, s, cap), s=s)


class GammaResult(NamedTuple):
    gamma: float
    satisfied: bool


def gamma_condition(c: RipConstants, s: int) -> GammaResult:
    """``gamma = delta_s + sqrt(2) theta_{s,s} + delta_{3s}``; the oracle schedules need gamma < 1."""
    missing = [f"delta_{k}" for k in (s, 3 * s) if k not in c.delta]
    if c.theta_ss is None or c.s != s:
        missing.append(f"theta_{s},{s}")
    if missing:
        raise ValueError(f"RIP constants missing: {', '.join(missing)}")
    g = c.delta[s] + math.sqrt(2.0) * c.theta_ss + c.delta[3 * s]
    return GammaResult(g, g < 1.0)


class BoundReport(NamedTuple):
    actual: float
    bound: float
    within: bool


def ut_e_inf_bound_report(U, e, theta_const: float, tau: float) -> BoundReport:
    """Compare ``||U^T e||_inf`` against ``theta ||e||_2 sqrt((tau + log d) / n)``.

    The bound only holds with probability ``1 - 2 exp(-tau)``, so this
    reports rather than asserts.
    """
    U = as_matrix(U, "U")
    e = as_vector(e, "e")
    if e.shape[0] != U.shape[0]:
        raise ValueError("dimension mismatch between U and e")
    if theta_const <= 0 or tau <= 0:
        raise ValueError("theta_const and tau must be positive")
    n, d = U.shape
    actual = float(np.max(np.abs(U.T @ e)))
    bound = theta_const * float(np.linalg.norm(e)) * math.sqrt((tau + math.log(d)) / n)
    return BoundReport(actual, bound, actual <= bound)


def format_rip(c: RipConstants) -> str:
    """Render as ``key=value`` lines (the ``rip`` subcommand output, also a valid rip file)."""
    lines = [f"s={c.s}"]
    lines += [f"delta_{k}={c.delta[k]:.17g}" for k in sorted(c.delta)]
    lines.append(f"theta_ss={c.theta_ss:.17g}")
    if c.s is not None and c.s in c.delta and 3 * c.s in c.delta:
        g = gamma_condition(c, c.s)
        lines.append(f"gamma={g.gamma:.17g}")
        lines.append(f"gamma_satisfied={str(g.satisfied).lower()}")
    return "\n".join(lines) + "\n"


def parse_rip(text: str) -> RipConstants:
    c = RipConstants()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        k, _, v = line.partition("=")
        k, v = k.strip(), v.strip()
        if k == "s":
            c.s = int(v)
        elif k.startswith("delta_"):
            c.delta[int(k[len("delta_"):])] = float(v)
        elif k == "theta_ss":
            c.theta_ss = float(v)
    return c
