"""Economy state and the stochastic capital dynamics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .kernel import InteractionKernel, build_kernel, kernel_digest, load_kernel
from .params import EconomyParams, ParameterError
from .records import RunRecord, Snapshot
from .rng import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Company:
    id: int
    position: tuple[int, ...]
    capital: float
    birth_iteration: int


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    births: int
    deaths: int
    gdp: float
    n_companies: int
    resources: int
    collapsed: bool


def gain_probability(h: float) -> float:
    """Logistic map of the weight H to the probability of gaining capital."""
    if h >= 0:
        return 1.0 / (1.0 + math.exp(-h))
    e = math.exp(h)
    return e / (1.0 + e)


def apply_gain(capital: float, j_plus: float, j_tot: float, c_g: float) -> float:
    if j_tot == 0:
        return capital
    return capital * (1.0 + c_g * j_plus / j_tot)


def apply_loss(capital: float, j_minus: float, j_tot: float, c_l: float) -> float:
    if j_tot == 0:
        return capital
    return capital * (1.0 - c_l * j_minus / j_tot)


def weight_terms(j_sum: float, comp_sum: float, n: int, resources: int,
                 params: EconomyParams) -> tuple[float, float, float]:
    """The three signed terms of H: interaction benefit, competition, resource pressure."""
    first = params.a1 * j_sum / comp_sum if comp_sum >= _core.EPS_COMP else 0.0
    r = resources if resources > 0 else _core.EPS_RES
    return first, -params.a2 * comp_sum, -params.a3 * n / r


def _coef(params: EconomyParams) -> np.ndarray:
    coef = np.zeros(_core.COEF_SIZE)
    coef[_core.C_A1] = params.a1
    coef[_core.C_A2] = params.a2
    coef[_core.C_A3] = params.a3
    coef[_core.C_CG] = params.c_g
    coef[_core.C_CL] = params.c_l
    coef[_core.C_BT] = params.bankruptcy_threshold
    coef[_core.C_IT] = params.investment_threshold
    coef[_core.C_PINV] = params.p_inv
    coef[_core.C_XI] = params.xi
    coef[_core.C_DEDUCT] = float(params.spawn_deducts)
    coef[_core.C_RING] = float(params.ring_competition)
    coef[_core.C_HALF_WIDTH] = params.spawn_half_width
    coef[_core.C_EPS_COMP] = _core.EPS_COMP
    coef[_core.C_EPS_RES] = _core.EPS_RES
    return coef


class Economy:
    """Live companies, resource pool and RNG of one run.

    Company rows ``0 .. n-1`` of the arrays are live; row order changes when
    companies are removed, so refer to companies across updates by ``ids``.
    """

    def __init__(self, params: EconomyParams, kernel: InteractionKernel, rng: np.random.Generator):
        if kernel.L != params.L or kernel.trait_size != params.trait_size:
            raise ParameterError("kernel shape does not match params (L, trait_size)")
        cap = params.resource_total
        self.params = params
        self.kernel = kernel
        self.rng = rng
        self.pos = np.zeros((cap, params.L), dtype=np.int64)
        self.aidx = np.zeros((cap, params.L), dtype=np.int64)
        self.bidx = np.zeros((cap, params.L), dtype=np.int64)
        self.capital = np.zeros(cap)
        self.birth = np.zeros(cap, dtype=np.int64)
        self.ids = np.zeros(cap, dtype=np.int64)
        self.jsum = np.zeros(cap)
        self.jplus = np.zeros(cap)
        self.jminus = np.zeros(cap)
        self.csum = np.zeros(cap)
        self.npos = np.zeros(cap, dtype=np.int64)
        self.nneg = np.zeros(cap, dtype=np.int64)
        self.state = np.zeros(_core.STATE_SIZE, dtype=np.int64)
        self.state[_core.S_RES] = params.resource_total
        self.coef = _coef(params)
        self._co = (self.pos, self.aidx, self.bidx, self.capital, self.birth, self.ids,
                    self.jsum, self.jplus, self.jminus, self.csum, self.npos, self.nneg)
        self._kn = (kernel.gated, kernel.b, kernel.c,
                    _core.competition_table(kernel.L, kernel.trait_size, kernel.xi))
        # Largest relative deviations (H, J_tot) seen by the cache check.
        self.deviation = np.zeros(2)
        self.check_caches = False
        self.collapsed = False

    # -- views ------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.state[_core.S_N])

    @property
    def resources(self) -> int:
        return int(self.state[_core.S_RES])

    @property
    def iteration(self) -> int:
        return int(self.state[_core.S_ITER])

    def gdp(self) -> float:
        return float(self.capital[: self.n].sum())

    def company(self, row: int) -> Company:
        self._check_row(row)
        return Company(int(self.ids[row]), tuple(int(v) for v in self.pos[row]),
                       float(self.capital[row]), int(self.birth[row]))

    def companies(self) -> list[Company]:
        return [self.company(r) for r in range(self.n)]

    def row_of(self, company_id: int) -> int:
        rows = np.flatnonzero(self.ids[: self.n] == company_id)
        if len(rows) == 0:
            raise KeyError(company_id)
        return int(rows[0])

    def snapshot(self) -> Snapshot:
        n = self.n
        return Snapshot(iteration=self.iteration, ids=self.ids[:n].copy(), positions=self.pos[:n].copy(),
                        capital=self.capital[:n].copy(), birth=self.birth[:n].copy())

    def _check_row(self, row: int):
        if not 0 <= row < self.n:
            raise IndexError(f"row {row} is not a live company (n={self.n})")

    # -- construction -----------------------------------------------------

    def add_company(self, position, capital: float) -> int:
        """Insert a company (resource unit taken from the pool); returns its row."""
        if self.resources < 1:
            raise ParameterError("no resource units left to found a company")
        if not capital > 0:
            raise ParameterError(f"capital must be > 0, got {capital}", "capital")
        p = np.asarray(position, dtype=np.int64)
        if p.shape != (self.params.L,) or (p < 0).any() or (p >= self.params.trait_size).any():
            raise ParameterError(f"invalid position {position!r}")
        return int(_core.insert_company(self._co, self._kn, self.state, self.coef, p, float(capital)))

    def recompute_caches(self) -> None:
        _core.recompute_caches(self._co, self._kn, self.n, self.coef)

    # -- observables of one company -------------------------------------

    def interaction_sums(self, row: int) -> tuple[float, float, float, float]:
        """(sum J, sum J+, sum J-, sum |J|) over all other live companies."""
        self._check_row(row)
        jp, jm = float(self.jplus[row]), float(self.jminus[row])
        return float(self.jsum[row]), jp, jm, jp + jm

    def competition_sum(self, row: int) -> float:
        self._check_row(row)
        return float(self.csum[row])

    def weight(self, row: int) -> float:
        self._check_row(row)
        return float(_core.weight_from_sums(self.jsum[row], self.csum[row], self.n, self.resources, self.coef))

    def weight_terms(self, row: int) -> tuple[float, float, float]:
        self._check_row(row)
        return weight_terms(float(self.jsum[row]), float(self.csum[row]), self.n, self.resources, self.params)

    # -- dynamics ---------------------------------------------------------

    def maybe_spawn(self, row: int) -> Company | None:
        """Investment by the company in ``row``; draws from the run's RNG."""
        self._check_row(row)
        if not self.capital[row] > self.params.investment_threshold:
            raise ParameterError("only companies above the investment threshold may invest")
        child = _core.try_spawn(self.rng, self._co, self._kn, self.state, self.coef, row)
        return None if child < 0 else self.company(int(child))

    def remove_bankrupt(self, row: int) -> None:
        self._check_row(row)
        if not self.capital[row] < self.params.bankruptcy_threshold:
            raise ParameterError("company is not below the bankruptcy threshold")
        _core.delete_company(self._co, self._kn, self.state, self.coef, row)
        self.state[_core.S_DEATHS] += 1

    def update_once(self) -> int:
        """One stochastic update. Returns 0 (no event), 1 (bankruptcy) or 2 (spawn)."""
        return int(_core.update_once(self.rng, self._co, self._kn, self.state, self.coef,
                                     self.check_caches, self.deviation))

    def run_iteration(self) -> IterationLog:
        if self.n == 0:
            self.collapsed = True
            self.state[_core.S_ITER] += 1
            return IterationLog(self.iteration, 0, 0, 0.0, 0, self.resources, True)
        births, deaths, gdp = _core.run_iteration(self.rng, self._co, self._kn, self.state, self.coef,
                                                  self.check_caches, self.deviation)
        self.collapsed = self.n == 0
        return IterationLog(self.iteration, int(births), int(deaths), float(gdp), self.n,
                            self.resources, self.collapsed)


def init_economy(params: EconomyParams, seed: int, kernel: InteractionKernel) -> Economy:
    """Uniform random placement with capital uniform in [1.1 BT, 1.1 IT]."""
    params.validate()
    init_rng = stream(seed, "economy/init")
    econ = Economy(params, kernel, stream(seed, "economy/dynamics"))
    n0 = params.initial_companies
    pos = init_rng.integers(0, params.trait_size, size=(n0, params.L))
    cap = init_rng.uniform(1.1 * params.bankruptcy_threshold, 1.1 * params.investment_threshold, size=n0)
    econ.pos[:n0] = pos
    econ.capital[:n0] = cap
    econ.ids[:n0] = np.arange(n0)
    econ.state[_core.S_N] = n0
    econ.state[_core.S_RES] = params.resource_total - n0
    econ.state[_core.S_NEXT_ID] = n0
    econ.recompute_caches()
    return econ


def resolve_kernel(params: EconomyParams, seed: int, kernel_policy="resample") -> InteractionKernel:
    """``kernel_policy``: "resample" (kernel drawn from the run seed), a path
    to a kernel file, or an :class:`InteractionKernel`."""
    if isinstance(kernel_policy, InteractionKernel):
        return kernel_policy
    if kernel_policy in (None, "resample"):
        return build_kernel(seed, params)
    kernel = load_kernel(kernel_policy)
    return kernel.with_c_connect(params.c_connect) if kernel.c_connect != params.c_connect else kernel


def run_simulation(params: EconomyParams, seed: int, kernel_policy="resample",
                   check_conservation: bool = False) -> RunRecord:
    """Run ``params.iterations`` iterations, stopping early on collapse (N = 0)."""
    kernel = resolve_kernel(params, seed, kernel_policy)
    econ = init_economy(params, seed, kernel)
    total = params.resource_total
    rows = []
    snapshots = []
    for _ in range(params.iterations):
        rec = econ.run_iteration()
        if check_conservation and rec.n_companies + rec.resources != total:
            raise AssertionError(f"conservation violated at iteration {rec.iteration}")
        rows.append((rec.iteration, rec.gdp, rec.n_companies, rec.births, rec.deaths, rec.resources))
        if rec.iteration % params.snapshot_interval == 0 or rec.collapsed:
            snapshots.append(econ.snapshot())
        if rec.collapsed:
            log.info("run seed=%s collapsed at iteration %d", seed, rec.iteration)
            break
    if rows and (not snapshots or snapshots[-1].iteration != rows[-1][0]):
        snapshots.append(econ.snapshot())
    series = np.array(rows, dtype=np.float64).reshape(-1, 6)
    return RunRecord(
        params=params, seed=int(seed), series=series, snapshots=snapshots,
        collapsed=econ.collapsed, final_iteration=econ.iteration, kernel_digest=kernel_digest(kernel),
    )


def calibrate(params: EconomyParams, seed: int, warmup: int = 200, kernel_policy="resample") -> dict:
    """Mean magnitude of each term of H over the live companies after ``warmup`` iterations.

    Useful for choosing a1, a2, a3 so that no single term dominates.
    """
    kernel = resolve_kernel(params, seed, kernel_policy)
    econ = init_economy(params, seed, kernel)
    for _ in range(warmup):
        if econ.run_iteration().collapsed:
            break
    n = econ.n
    out = {"iteration": econ.iteration, "n_companies": n, "resources": econ.resources,
           "interaction": float("nan"), "competition": float("nan"), "resource": float("nan"),
           "mean_weight": float("nan")}
    if n:
        terms = np.array([econ.weight_terms(r) for r in range(n)])
        out.update(interaction=float(np.abs(terms[:, 0]).mean()), competition=float(np.abs(terms[:, 1]).mean()),
                   resource=float(np.abs(terms[:, 2]).mean()), mean_weight=float(terms.sum(axis=1).mean()))
    return out
