"""Seeded generation of measurement matrices, signals, noise and instances.

All randomness comes from numpy's ``PCG64`` bit generator
(``numpy.random.default_rng(seed)``); normal variates use numpy's ziggurat
sampler. Output is bitwise reproducible for a fixed numpy version.

Seeds for independent pieces are derived from a master seed with
:func:`derive_seed` (``master XOR splitmix64(index)``).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import as_matrix, as_vector, matvec

__all__ = [
    "MASK64",
    "splitmix64",
    "derive_seed",
    "SignalKind",
    "ProblemInstance",
    "gen_gaussian_matrix",
    "gen_uniform_matrix",
    "gen_incoherent_frame",
    "gen_signal",
    "gen_uniform_noise",
    "assemble",
    "make_instance",
    "save_instance",
    "load_instance",
    "load_matrix",
    "read_meta",
    "write_meta",
]

MASK64 = (1 << 64) - 1

# component offsets fed to derive_seed by make_instance
_MATRIX, _SIGNAL, _NOISE = 1, 2, 3


def splitmix64(x: int) -> int:
    """One output of the SplitMix64 generator seeded at state `x`."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Sub-seed for trial (or component) `index`: ``master XOR splitmix64(index)``."""
    return (int(master) & MASK64) ^ splitmix64(int(index) & MASK64)


@dataclass(frozen=True)
class SignalKind:
    """Which target signal to draw.

    ``name`` is one of ``"sparse"``, ``"powerlaw"``, ``"expdecay"``. For
    sparse signals ``values`` picks the nonzero distribution: ``"normal"``
    (standard normal) or ``"uniform"`` (uniform on [-1, 1] times
    ``value_scale``).
    """

    name: str
    s: int | None = None
    normalize: bool = True
    values: str = "normal"
    value_scale: float = 1.0

    def __post_init__(self):
        if self.name not in ("sparse", "powerlaw", "expdecay"):
            raise ValueError(f"unknown signal kind {self.name!r}")
        if self.name == "sparse" and (self.s is None or self.s < 1):
            raise ValueError("sparse signals need s >= 1")
        if self.values not in ("normal", "uniform"):
            raise ValueError(f"unknown value distribution {self.values!r}")

    @classmethod
    def exact_sparse(cls, s: int, normalize: bool = True, values: str = "normal",
                     value_scale: float = 1.0) -> "SignalKind":
        return cls("sparse", s=s, normalize=normalize, values=values, value_scale=value_scale)

    @classmethod
    def power_law(cls) -> "SignalKind":
        return cls("powerlaw", normalize=True)

    @classmethod
    def exp_decay(cls) -> "SignalKind":
        # left unnormalised on purpose
        return cls("expdecay", normalize=False)

    def describe(self) -> str:
        if self.name == "sparse":
            return f"sparse(s={self.s},values={self.values},scale={self.value_scale!r},normalize={self.normalize})"
        return self.name


@dataclass(frozen=True)
class ProblemInstance:
    """Observations ``y = U @ x_star + e`` together with what generated them.

    `x_star` and `e` are ``None`` for instances loaded without ground truth.
    """

    U: np.ndarray
    y: np.ndarray
    x_star: np.ndarray | None = None
    e: np.ndarray | None = None
    s_true: int | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def has_ground_truth(self) -> bool:
        return self.x_star is not None


def gen_gaussian_matrix(n: int, d: int, seed: int) -> np.ndarray:
    """i.i.d. N(0, 1/n) entries."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)) / math.sqrt(n)


def gen_uniform_matrix(n: int, d: int, seed: int) -> np.ndarray:
    """i.i.d. uniform entries on [-1, 1] scaled by sqrt(3/n), i.e. variance 1/n."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, d)) * math.sqrt(3.0 / n)


def gen_incoherent_frame(n: int, d: int, seed: int, iters: int = 500,
                         shrink: float = 0.9) -> np.ndarray:
    """Unit-norm columns with low mutual coherence, for certifiable tiny instances.

    Starts from a seeded Gaussian matrix and alternates between clipping the
    off-diagonal Gram entries (towards the Welch bound) and projecting back
    onto rank-`n` Gram matrices. Small RIP constants follow from the low
    coherence, which plain Gaussian matrices at n ~ d ~ 30 do not give.
    """
    if not 1 <= n <= d:
        raise ValueError("need 1 <= n <= d")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, d))
    U /= np.linalg.norm(U, axis=0)
    if n == d:
        return U
    welch = math.sqrt((d - n) / (n * (d - 1)))
    for _ in range(iters):
        G = U.T @ U
        off = G - np.diag(np.diag(G))
        target = max(welch, shrink * float(np.max(np.abs(off))))
        G = np.clip(G, -target, target)
        np.fill_diagonal(G, 1.0)
        w, Q = np.linalg.eigh(G)
        w, Q = w[-n:], Q[:, -n:]
        U = (Q * np.sqrt(np.maximum(w, 0.0))).T
        U /= np.linalg.norm(U, axis=0)
    return U


def _partial_fisher_yates(rng: np.random.Generator, d: int, s: int) -> np.ndarray:
    perm = np.arange(d)
    for i in range(s):
        j = int(rng.integers(i, d))
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:s]


def gen_signal(d: int, kind: SignalKind, seed: int) -> np.ndarray:
    """Draw a target signal of length `d`.

    * ``sparse``: `s` nonzeros at uniformly chosen positions (partial
      Fisher-Yates), unit l2 norm when ``normalize`` is set.
    * ``powerlaw``: entries ``1/i`` (1-indexed), normalised.
    * ``expdecay``: entries ``exp(-i)`` (1-indexed), not normalised.
    """
    if d < 1:
        raise ValueError("d must be positive")
    i = np.arange(1, d + 1, dtype=np.float64)
    if kind.name == "sparse":
        if kind.s > d:
            raise ValueError(f"s={kind.s} exceeds d={d}")
        rng = np.random.default_rng(seed)
        pos = _partial_fisher_yates(rng, d, kind.s)
        if kind.values == "normal":
            vals = rng.standard_normal(kind.s)
        else:
            vals = rng.uniform(-1.0, 1.0, size=kind.s) * kind.value_scale
        x = np.zeros(d)
        x[pos] = vals
    elif kind.name == "powerlaw":
        x = 1.0 / i
    else:
        x = np.exp(-i)
    if kind.normalize:
        nrm = np.linalg.norm(x)
        if nrm > 0:
            x = x / nrm
    return x


def gen_uniform_noise(n: int, sigma: float, seed: int) -> np.ndarray:
    """i.i.d. uniform noise on [-sigma, sigma]; exactly zero when sigma is 0."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    return rng.uniform(-sigma, sigma, size=n)


def assemble(U, x_star, e, s_true: int | None = None, seed: int | None = None,
             meta: dict | None = None) -> ProblemInstance:
    U = as_matrix(U, "U")
    x_star = as_vector(x_star, "x_star")
    e = as_vector(e, "e")
    if e.shape[0] != U.shape[0]:
        raise ValueError(f"dimension mismatch: U is {U.shape}, e has length {e.shape[0]}")
    y = matvec(U, x_star) + e
    return ProblemInstance(U=U, y=y, x_star=x_star, e=e, s_true=s_true, seed=seed,
                           meta=dict(meta or {}))


def make_instance(n: int, d: int, kind: SignalKind, sigma: float, seed: int,
                  matrix: str = "gaussian") -> ProblemInstance:
    """Generate a full instance from one seed (matrix, signal and noise get derived sub-seeds)."""
    if matrix == "gaussian":
        U = gen_gaussian_matrix(n, d, derive_seed(seed, _MATRIX))
    elif matrix == "uniform":
        U = gen_uniform_matrix(n, d, derive_seed(seed, _MATRIX))
    elif matrix == "frame":
        U = gen_incoherent_frame(n, d, derive_seed(seed, _MATRIX))
    else:
        raise ValueError(f"unknown matrix ensemble {matrix!r}")
    x = gen_signal(d, kind, derive_seed(seed, _SIGNAL))
    e = gen_uniform_noise(n, sigma, derive_seed(seed, _NOISE))
    meta = {"n": n, "d": d, "kind": kind.describe(), "matrix": matrix,
            "sigma": repr(float(sigma)), "seed": seed}
    s_true = kind.s if kind.name == "sparse" else None
    return assemble(U, x, e, s_true=s_true, seed=seed, meta=meta)


# -- serialisation ---------------------------------------------------------

def write_meta(path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {v}\n")


def read_meta(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _save_vector(path, v):
    np.savetxt(path, v.reshape(-1, 1), fmt="%.17g")


def save_instance(inst: ProblemInstance, directory) -> Path:
    """Write ``U.csv``, ``y.csv`` and (when known) ``x_star.csv``, ``e.csv``, ``meta.txt``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "U.csv", inst.U, fmt="%.17g", delimiter=",")
    _save_vector(out / "y.csv", inst.y)
    if inst.x_star is not None:
        _save_vector(out / "x_star.csv", inst.x_star)
    if inst.e is not None:
        _save_vector(out / "e.csv", inst.e)
    meta = {"n": inst.n, "d": inst.d}
    meta.update(inst.meta)
    if inst.s_true is not None:
        meta["s_true"] = inst.s_true
    if inst.seed is not None:
        meta["seed"] = inst.seed
    write_meta(out / "meta.txt", meta)
    return out


def _load_vector(path) -> np.ndarray:
    return as_vector(np.loadtxt(path, delimiter=",", ndmin=1).reshape(-1), os.fspath(path))


def load_matrix(path) -> np.ndarray:
    return as_matrix(np.loadtxt(path, delimiter=",", ndmin=2), os.fspath(path))


def load_instance(directory) -> ProblemInstance:
    """Read an instance directory written by :func:`save_instance`.

    ``U.csv`` and ``y.csv`` are required; ground truth files are optional.
    """
    d = Path(directory)
    U = load_matrix(d / "U.csv")
    y = _load_vector(d / "y.csv")
    if y.shape[0] != U.shape[0]:
        raise ValueError(f"y has length {y.shape[0]} but U has {U.shape[0]} rows")
    x_star = _load_vector(d / "x_star.csv") if (d / "x_star.csv").exists() else None
    e = _load_vector(d / "e.csv") if (d / "e.csv").exists() else None
    meta = read_meta(d / "meta.txt") if (d / "meta.txt").exists() else {}
    s_true = int(meta["s_true"]) if "s_true" in meta else None
    seed = int(meta["seed"]) if "seed" in meta else None
    return ProblemInstance(U=U, y=y, x_star=x_star, e=e, s_true=s_true, seed=seed, meta=meta)
