"""Observables computed from run records.

Everything here is a pure function of :class:`RunRecord` / :class:`Snapshot`
data, so recomputing from a persisted record gives identical output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .records import RunRecord, Snapshot

#: US-dollar to model-currency conversion used for display only.
DOLLAR_TO_MODEL_CURRENCY = 0.0006
ITERATIONS_PER_YEAR = 100
GROWTH_LAG = 100
MIN_AGE = 75
DEFAULT_CAPITAL_BINS = 8


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    excluded: int = 0

    @property
    def normalization(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"bin_edges": [float(e) for e in self.bin_edges],
                "counts": [int(c) for c in self.counts],
                "normalization": self.normalization, "excluded": int(self.excluded)}

    def is_non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.counts) <= 0))


def gdp(obj) -> float:
    """Sum of capital over live companies (snapshot, economy or capital array)."""
    capital = getattr(obj, "capital", obj)
    if hasattr(obj, "n") and not isinstance(obj, Snapshot):
        capital = capital[: obj.n]
    return float(np.sum(capital))


def growth_rate(series: Sequence[float], lag: int = GROWTH_LAG) -> np.ndarray:
    """``(v[t] - v[t-lag]) / v[t-lag]`` for ``t >= lag``; NaN where the reference is zero."""
    v = np.asarray(series, dtype=float)
    if len(v) <= lag:
        return np.empty(0)
    ref = v[:-lag]
    out = np.full(len(v) - lag, np.nan)
    ok = ref != 0
    out[ok] = (v[lag:][ok] - ref[ok]) / ref[ok]
    return out


def volatility(rates: Sequence[float], window: int | None = None) -> np.ndarray:
    """Sample variance of ``rates``: rolling over ``window`` points, or whole-series
    (a length-1 array) when ``window`` is None. Missing (NaN) rates are dropped."""
    r = np.asarray(rates, dtype=float)
    r = r[~np.isnan(r)]
    if window is None:
        if len(r) < 2:
            return np.empty(0)
        # exact zero for constant input rather than rounding residue
        return np.array([r.var(ddof=1) if np.ptp(r) > 0 else 0.0])
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(r) < window:
        return np.empty(0)
    w = np.lib.stride_tricks.sliding_window_view(r, window)
    return np.where(np.ptp(w, axis=1) > 0, w.var(axis=1, ddof=1), 0.0)


def window_variance(rates: np.ndarray, start: int, stop: int, lag: int = GROWTH_LAG) -> float:
    """Variance of growth rates whose end iteration lies in [start, stop].

    ``rates[k]`` is the rate ending at iteration ``k + lag + 1`` (series rows
    are 1-based iterations).
    """
    iters = np.arange(len(rates)) + lag + 1
    sel = rates[(iters >= start) & (iters <= stop)]
    v = volatility(sel)
    return float(v[0]) if len(v) else float("nan")


def default_capital_edges(capital: np.ndarray, n_bins: int = DEFAULT_CAPITAL_BINS) -> np.ndarray:
    capital = np.asarray(capital, dtype=float)
    if len(capital) == 0:
        return np.geomspace(1.0, 10.0, n_bins + 1)
    lo, hi = capital.min(), capital.max()
    if hi <= lo:
        hi = lo * 1.0001 + 1e-12
    return np.geomspace(lo, hi, n_bins + 1)


def _histogram(values: np.ndarray, edges: np.ndarray) -> Histogram:
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts.astype(np.int64), excluded=int(len(values) - counts.sum()))


def capital_histogram(snapshot: Snapshot, edges=None, n_bins: int = DEFAULT_CAPITAL_BINS) -> Histogram:
    """Companies per capital bin; default edges are log-spaced over the observed range."""
    if edges is None:
        edges = default_capital_edges(snapshot.capital, n_bins)
    return _histogram(snapshot.capital, edges)


def default_age_edges(max_age: int, min_age: int = MIN_AGE, width: int = ITERATIONS_PER_YEAR) -> np.ndarray:
    n = max(1, int(np.ceil((max_age - min_age + 1) / width)))
    return min_age + width * np.arange(n + 1, dtype=float)


def age_histogram(snapshot: Snapshot, edges=None, min_age: int = MIN_AGE,
                  width: int = ITERATIONS_PER_YEAR) -> Histogram:
    """Companies per age bin, ignoring those younger than ``min_age`` iterations.

    Default bins are ``width`` iterations wide starting at ``min_age``; the
    excluded count includes the young companies.
    """
    ages = snapshot.ages
    old = ages[ages >= min_age]
    if edges is None:
        edges = default_age_edges(int(old.max()) if len(old) else min_age, min_age, width)
    h = _histogram(old, edges)
    h.excluded += int(len(ages) - len(old))
    return h


def survival_filter(records: Iterable[RunRecord]) -> tuple[list[RunRecord], list[RunRecord]]:
    survivors, collapsed = [], []
    for rec in records:
        (collapsed if rec.collapsed else survivors).append(rec)
    return survivors, collapsed


OBSERVABLES: dict[str, Callable[[RunRecord], np.ndarray]] = {
    "gdp": lambda r: r.gdp,
    "n_companies": lambda r: r.n_companies,
    "births": lambda r: r.column("births"),
    "deaths": lambda r: r.column("deaths"),
    "resources": lambda r: r.column("resources"),
    "gdp_growth": lambda r: growth_rate(r.gdp),
}


def ensemble_average(records: Sequence[RunRecord], observable="gdp") -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mean and sample standard deviation over runs, truncated to the shortest."""
    if not records:
        raise ValueError("ensemble_average needs at least one record")
    fn = OBSERVABLES[observable] if isinstance(observable, str) else observable
    series = [np.asarray(fn(r), dtype=float) for r in records]
    length = min(len(s) for s in series)
    stack = np.stack([s[:length] for s in series])
    sd = stack.std(axis=0, ddof=1) if len(series) > 1 else np.zeros(length)
    return stack.mean(axis=0), sd


def turnover_per_year(record: RunRecord) -> np.ndarray:
    """(births + deaths) per 100 iterations divided by the mean company count."""
    s = record.series
    k = len(s) // ITERATIONS_PER_YEAR
    if k == 0:
        return np.empty(0)
    blocks = s[: k * ITERATIONS_PER_YEAR].reshape(k, ITERATIONS_PER_YEAR, -1)
    events = blocks[:, :, 3].sum(axis=1) + blocks[:, :, 4].sum(axis=1)
    mean_n = blocks[:, :, 2].mean(axis=1)
    out = np.full(k, np.nan)
    ok = mean_n > 0
    out[ok] = events[ok] / mean_n[ok]
    return out
