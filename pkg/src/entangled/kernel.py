"""Correlated interaction kernel J(a, b) and competition kernel C(a, b).

Each of the L traits owns an AR(1) "interaction series" and an independent
"switch series" of length ``trait_size``. A pair of companies is mapped to an
index of series ``i`` by a fixed signed sum of both companies' coordinates;
the series value at that index is the trait-``i`` interaction, zeroed when
the switch value there is below ``c_connect``.

The functions here are plain Python/numpy and evaluate one pair at a time.
The simulation loop in :mod:`entangled._core` re-implements the same maps
in compiled form; tests check the two against each other.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .params import EconomyParams, ParameterError
from .rng import stream

KERNEL_FORMAT = "entangled-kernel"
KERNEL_VERSION = 1


class EstimatorError(ValueError):
    """Statistic undefined for the given input (e.g. a constant series)."""


@dataclass(frozen=True)
class Ar1Series:
    values: np.ndarray
    rho: float
    xi: float

    def __len__(self):
        return len(self.values)


def ar1_rho(xi: float) -> float:
    return math.exp(-1.0 / xi)


def burn_in_steps(xi: float) -> int:
    return int(math.ceil(10 * xi))


def build_ar1_series(seed, length: int, xi: float) -> Ar1Series:
    """Generate ``x[n+1] = rho * x[n] + N(0, 1)`` with ``rho = exp(-1/xi)``.

    The recursion starts from ``x = 0`` and the first ``ceil(10 * xi)`` values
    are discarded. ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if length < 1:
        raise ParameterError(f"length must be >= 1, got {length}", "length")
    if not xi > 0 or math.isinf(xi):
        raise ParameterError(f"xi must be finite and > 0, got {xi}", "xi")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rho = ar1_rho(xi)
    burn = burn_in_steps(xi)
    shocks = rng.standard_normal(burn + length)
    x = lfilter([1.0], [1.0, -rho], shocks)
    values = np.ascontiguousarray(x[burn:])
    values.flags.writeable = False
    return Ar1Series(values=values, rho=rho, xi=xi)


@dataclass(frozen=True, eq=False)
class InteractionKernel:
    """Immutable interaction/competition kernel.

    ``interaction`` and ``switch`` are ``(L, trait_size)`` arrays, ``b`` and
    ``c`` are ``(L, L)`` sign matrices. ``gated`` is the interaction table
    with switched-off entries already set to zero.
    """

    interaction: np.ndarray
    switch: np.ndarray
    b: np.ndarray
    c: np.ndarray
    c_connect: float
    xi: float
    trait_size: int
    seed: int | None = None
    ring_competition: bool = True

    def __post_init__(self):
        L = self.b.shape[0]
        for name in ("interaction", "switch", "b", "c"):
            arr = getattr(self, name)
            arr = np.ascontiguousarray(arr, dtype=np.int64 if name in ("b", "c") else np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.b.shape != (L, L) or self.c.shape != (L, L):
            raise ParameterError("sign matrices must be L x L")
        if not (np.isin(self.b, (-1, 1)).all() and np.isin(self.c, (-1, 1)).all()):
            raise ParameterError("sign matrices must contain only -1 and +1")
        if self.interaction.shape != (L, self.trait_size) or self.switch.shape != (L, self.trait_size):
            raise ParameterError("series tables must be L x trait_size")
        gated = np.where(self.switch >= self.c_connect, self.interaction, 0.0)
        gated.flags.writeable = False
        object.__setattr__(self, "gated", gated)

    @property
    def L(self) -> int:
        return self.b.shape[0]

    @property
    def rho(self) -> float:
        return ar1_rho(self.xi)

    def series(self, i: int, kind: str = "interaction") -> Ar1Series:
        table = self.interaction if kind == "interaction" else self.switch
        return Ar1Series(values=table[i], rho=self.rho, xi=self.xi)

    def with_c_connect(self, c_connect: float) -> "InteractionKernel":
        return InteractionKernel(self.interaction, self.switch, self.b, self.c,
                                 c_connect, self.xi, self.trait_size, self.seed,
                                 self.ring_competition)


def build_kernel(seed: int, params: EconomyParams) -> InteractionKernel:
    """Draw the 2L series and both sign matrices from independent streams of ``seed``."""
    L, T = params.L, params.trait_size
    interaction = np.stack([build_ar1_series(stream(seed, f"kernel/interaction/{i}"), T, params.xi).values
                            for i in range(L)])
    switch = np.stack([build_ar1_series(stream(seed, f"kernel/switch/{i}"), T, params.xi).values
                       for i in range(L)])
    b = stream(seed, "kernel/b").choice(np.array([-1, 1]), size=(L, L))
    c = stream(seed, "kernel/c").choice(np.array([-1, 1]), size=(L, L))
    return InteractionKernel(interaction, switch, b, c, params.c_connect, params.xi, T,
                             seed=int(seed), ring_competition=params.ring_competition)


def _check_position(kernel: InteractionKernel, pos) -> np.ndarray:
    p = np.asarray(pos, dtype=np.int64)
    if p.shape != (kernel.L,):
        raise ParameterError(f"position must have {kernel.L} coordinates, got {p.shape}")
    if (p < 0).any() or (p >= kernel.trait_size).any():
        raise ParameterError(f"coordinates must lie in [0, {kernel.trait_size}), got {list(p)}")
    return p


def pair_index(kernel: InteractionKernel, i: int, pos_a, pos_b) -> int:
    """Series index of trait ``i`` for the ordered pair (a, b); always in [0, trait_size)."""
    a = _check_position(kernel, pos_a)
    b = _check_position(kernel, pos_b)
    signed = int(kernel.b[i] @ a + kernel.c[i] @ b)
    return signed % kernel.trait_size


def interaction(kernel: InteractionKernel, pos_a, pos_b) -> float:
    """J(a, b): gated trait contributions summed and scaled by 1/sqrt(L)."""
    total = 0.0
    for i in range(kernel.L):
        k = pair_index(kernel, i, pos_a, pos_b)
        if kernel.switch[i, k] >= kernel.c_connect:
            total += kernel.interaction[i, k]
    return total / math.sqrt(kernel.L)


def competition_distances(kernel: InteractionKernel, pos_a, pos_b) -> np.ndarray:
    """Per-trait separations d_i entering the competition kernel."""
    a = _check_position(kernel, pos_a)
    b = _check_position(kernel, pos_b)
    T = kernel.trait_size
    delta = a - b
    if not kernel.ring_competition:
        return np.abs(kernel.b @ delta).astype(float)
    half = T // 2
    delta = (delta + half) % T - half
    s = (kernel.b @ delta) % T
    return np.minimum(s, T - s).astype(float)


def competition(kernel: InteractionKernel, pos_a, pos_b) -> float:
    d = competition_distances(kernel, pos_a, pos_b)
    return math.exp(-d.mean() / kernel.xi)


def active_fraction(kernel: InteractionKernel) -> float:
    return float(np.mean(kernel.switch >= kernel.c_connect))


def empirical_autocorrelation(series, tau: int) -> float:
    """Lag-``tau`` sample autocorrelation (mean-removed, normalised by lag-0)."""
    x = np.asarray(getattr(series, "values", series), dtype=float)
    if not 0 <= tau < len(x):
        raise EstimatorError(f"tau must lie in [0, {len(x)}), got {tau}")
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0.0:
        raise EstimatorError("autocorrelation of a constant series is undefined")
    if tau == 0:
        return 1.0
    return float(np.dot(x[:-tau], x[tau:]) / denom)


def _profile_pairs(kernel: InteractionKernel, distance: int, samples: int,
                   rng: np.random.Generator, axis: int):
    """Index arrays of (a, g) and (b, g) for random a, g with b = a shifted by ``distance``."""
    T, L = kernel.trait_size, kernel.L
    a = rng.integers(0, T, size=(samples, L))
    g = rng.integers(0, T, size=(samples, L))
    b = a.copy()
    b[:, axis] = (b[:, axis] + int(distance)) % T
    ag = (a @ kernel.b.T + g @ kernel.c.T) % T
    bg = (b @ kernel.b.T + g @ kernel.c.T) % T
    return ag, bg


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = x - x.mean()
    y = y - y.mean()
    denom = math.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom == 0.0:
        raise EstimatorError("correlation of constant samples is undefined")
    return float(np.dot(x, y) / denom)


def profile_correlation(kernel: InteractionKernel, distance: int, samples: int, seed,
                        *, axis: int = 0, summed: bool = False) -> float:
    """Monte Carlo correlation between the interaction profiles of two companies.

    Two companies ``distance`` trait units apart along ``axis`` are compared
    through their (ungated) trait-``i`` interactions with random third
    companies; the per-trait correlations are averaged over traits. With
    ``summed=True`` the full gated J is correlated instead.

    A single kernel holds only about ``trait_size / xi`` independent stretches
    of each series, so this estimate carries realisation noise that more
    ``samples`` cannot remove; see :func:`ensemble_profile_correlation`.
    """
    if samples < 100:
        raise ParameterError(f"samples must be >= 100, got {samples}", "samples")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ag, bg = _profile_pairs(kernel, distance, samples, rng, axis)
    rows = np.arange(kernel.L)
    if summed:
        ja = kernel.gated[rows, ag].sum(axis=1) / math.sqrt(kernel.L)
        jb = kernel.gated[rows, bg].sum(axis=1) / math.sqrt(kernel.L)
        return _pearson(ja, jb)
    return float(np.mean([_pearson(kernel.interaction[i, ag[:, i]], kernel.interaction[i, bg[:, i]])
                          for i in range(kernel.L)]))


def ensemble_profile_correlation(params: EconomyParams, distance: int, samples: int, seed: int,
                                 n_kernels: int = 200, *, axis: int = 0) -> float:
    """Profile correlation pooled over ``n_kernels`` independently drawn kernels.

    For every trait the sampled value pairs of all kernels are pooled into a
    single Pearson correlation; the result is the mean over traits. Pooling
    averages out the realisation noise of individual series.
    """
    if samples < 100:
        raise ParameterError(f"samples must be >= 100, got {samples}", "samples")
    rng = np.random.default_rng(seed)
    xs = [[] for _ in range(params.L)]
    ys = [[] for _ in range(params.L)]
    for k in range(n_kernels):
        kernel = build_kernel(int(rng.integers(2**63)), params)
        ag, bg = _profile_pairs(kernel, distance, samples, rng, axis)
        for i in range(params.L):
            xs[i].append(kernel.interaction[i, ag[:, i]])
            ys[i].append(kernel.interaction[i, bg[:, i]])
    return float(np.mean([_pearson(np.concatenate(xs[i]), np.concatenate(ys[i]))
                          for i in range(params.L)]))


def expected_profile_correlation(distance: int, xi: float, trait_size: int) -> float:
    """Analytic profile correlation for the non-circular series.

    A shift of ``distance`` along the ring moves the series index by
    ``distance`` for a fraction ``1 - distance/T`` of pairs and by
    ``T - distance`` for the rest, since the series does not wrap.
    """
    d = int(distance) % trait_size
    frac = d / trait_size
    return (1 - frac) * math.exp(-d / xi) + frac * math.exp(-(trait_size - d) / xi)


def save_kernel(kernel: InteractionKernel, path) -> None:
    doc = {
        "format": KERNEL_FORMAT,
        "version": KERNEL_VERSION,
        "seed": kernel.seed,
        "c_connect": kernel.c_connect,
        "xi": kernel.xi,
        "trait_size": kernel.trait_size,
        "ring_competition": kernel.ring_competition,
        "b": kernel.b.tolist(),
        "c": kernel.c.tolist(),
        "interaction": kernel.interaction.tolist(),
        "switch": kernel.switch.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_kernel(path) -> InteractionKernel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != KERNEL_FORMAT:
        raise ParameterError(f"{path} is not a kernel file")
    if doc.get("version") != KERNEL_VERSION:
        raise ParameterError(f"unsupported kernel file version {doc.get('version')}")
    c_connect = doc["c_connect"]
    return InteractionKernel(
        interaction=np.array(doc["interaction"]), switch=np.array(doc["switch"]),
        b=np.array(doc["b"]), c=np.array(doc["c"]),
        c_connect=float(c_connect), xi=float(doc["xi"]), trait_size=int(doc["trait_size"]),
        seed=doc["seed"], ring_competition=bool(doc["ring_competition"]),
    )


def kernel_digest(kernel: InteractionKernel) -> str:
    h = hashlib.sha256()
    for arr in (kernel.interaction, kernel.switch, kernel.b, kernel.c):
        h.update(arr.tobytes())
    h.update(repr((kernel.c_connect, kernel.xi, kernel.trait_size, kernel.ring_competition)).encode())
    return h.hexdigest()[:16]


def validation_series(seed: int, xi: float, length: int, count: int) -> list[Ar1Series]:
    """``count`` long AR(1) series used to check the analytic moments."""
    return [build_ar1_series(stream(seed, f"validation/{k}"), length, xi) for k in range(count)]


def autocorrelation_table(series: Sequence[Ar1Series], lags: Sequence[int]) -> list[tuple[int, float, float]]:
    """Rows ``(tau, mean empirical autocorrelation, rho**tau)``."""
    rho = series[0].rho
    return [(tau, float(np.mean([empirical_autocorrelation(s, tau) for s in series])), rho ** tau)
            for tau in lags]
