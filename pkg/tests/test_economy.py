import math

import numpy as np
import pytest

from entangled import _core
from entangled.economy import (Economy, apply_gain, apply_loss, calibrate, gain_probability, init_economy,
                               resolve_kernel, run_simulation, weight_terms)
from entangled.kernel import build_kernel, competition, interaction, save_kernel
from entangled.params import EconomyParams, ParameterError
from entangled.rng import stream

from conftest import small_params


def empty_economy(params, seed=0, kernel=None):
    kernel = kernel or build_kernel(seed, params)
    return Economy(params, kernel, stream(seed, "test"))


def oracle_sums(econ, row):
    """Sums for one company from the pure-Python pair functions."""
    k = econ.kernel
    js = jp = jm = cs = 0.0
    for other in range(econ.n):
        if other == row:
            continue
        v = interaction(k, econ.pos[row], econ.pos[other])
        js += v
        jp += max(v, 0.0)
        jm += max(-v, 0.0)
        cs += competition(k, econ.pos[row], econ.pos[other])
    return js, jp, jm, cs


def oracle_weight(econ, row):
    js, _, _, cs = oracle_sums(econ, row)
    return sum(weight_terms(js, cs, econ.n, econ.resources, econ.params))


# -- pure functions ----------------------------------------------------------------

def test_gain_probability_values():
    assert gain_probability(0.0) == 0.5
    assert gain_probability(math.log(3)) == pytest.approx(0.75)
    assert gain_probability(-50.0) < 1e-21
    assert gain_probability(800.0) == 1.0 and gain_probability(-800.0) == 0.0


def test_gain_probability_is_monotone():
    grid = np.linspace(-30, 30, 601)
    values = [gain_probability(h) for h in grid]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_capital_updates():
    assert apply_gain(10.0, 3.0, 4.0, 0.2) == pytest.approx(11.5)
    assert apply_loss(10.0, 1.0, 4.0, 0.2) == pytest.approx(9.5)
    assert apply_gain(10.0, 0.0, 0.0, 0.2) == 10.0
    assert apply_loss(10.0, 0.0, 0.0, 0.2) == 10.0


def test_weight_terms_example():
    p = EconomyParams(a1=1.0, a2=1.0, a3=1.0)
    t = weight_terms(2.0, 0.5, 100, 900, p)
    assert sum(t) == pytest.approx(4 - 0.5 - 100 / 900)
    assert sum(t) == pytest.approx(3.3889, abs=1e-4)


def test_weight_terms_edge_cases():
    p = EconomyParams(a1=1.0, a2=1.0, a3=2.0)
    # alone: no interaction term, competition sum 0
    assert weight_terms(0.0, 0.0, 1, 99, p) == (0.0, -0.0, -2.0 / 99)
    # empty resource pool uses the documented stand-in
    assert weight_terms(0.0, 1.0, 10, 0, p)[2] == pytest.approx(-2.0 * 10 / _core.EPS_RES)
    # doubling the J sum doubles the first term only
    a, b = weight_terms(1.5, 0.7, 10, 20, p), weight_terms(3.0, 0.7, 10, 20, p)
    assert b[0] == pytest.approx(2 * a[0]) and b[1:] == a[1:]


# -- initialisation --------------------------------------------------------------

def test_init_economy_defaults():
    p = EconomyParams(bankruptcy_threshold=1.0, investment_threshold=100.0)
    econ = init_economy(p, 1, build_kernel(1, p))
    assert econ.n == 1000 and econ.resources == p.resource_total - 1000 and econ.iteration == 0
    cap = econ.capital[:econ.n]
    assert cap.min() >= 1.1 and cap.max() <= 110.0
    assert cap.max() > 100.0
    assert (econ.pos[:econ.n] >= 0).all() and (econ.pos[:econ.n] < 1000).all()


def test_init_economy_is_deterministic(params):
    k = build_kernel(1, params)
    a, b = init_economy(params, 3, k), init_economy(params, 3, k)
    assert np.array_equal(a.pos[:a.n], b.pos[:b.n])
    assert np.array_equal(a.capital[:a.n], b.capital[:b.n])


def test_kernel_shape_mismatch_is_rejected(params):
    with pytest.raises(ParameterError):
        Economy(params, build_kernel(0, params.with_(L=2)), stream(0, "x"))


# -- sums and weights --------------------------------------------------------------

def test_single_company_sums():
    p = small_params(initial_companies=0)
    econ = empty_economy(p)
    row = econ.add_company((1, 2, 3), 5.0)
    assert econ.interaction_sums(row) == (0.0, 0.0, 0.0, 0.0)
    assert econ.competition_sum(row) == 0.0
    assert econ.weight(row) == pytest.approx(-p.a3 * 1 / (p.resource_total - 1))


def test_identical_position_competition():
    econ = empty_economy(small_params(initial_companies=0))
    econ.add_company((7, 8, 9), 5.0)
    econ.add_company((7, 8, 9), 5.0)
    assert econ.competition_sum(0) == 1.0 and econ.competition_sum(1) == 1.0


def test_interaction_sums_follow_the_pairs():
    from entangled.kernel import InteractionKernel
    p = small_params(initial_companies=0)
    inter = np.zeros((3, 1000))
    # company 0 at the origin; companies at (1,0,0), (2,0,0), (3,0,0) map to indices 1, 2, 3
    inter[:, 1], inter[:, 2], inter[:, 3] = 2.0, -1.0, 0.0
    k = InteractionKernel(inter, np.ones((3, 1000)), np.ones((3, 3), int), np.ones((3, 3), int),
                          0.0, 300.0, 1000)
    econ = empty_economy(p, kernel=k)
    econ.add_company((0, 0, 0), 5.0)
    for x in (1, 2, 3):
        econ.add_company((x, 0, 0), 5.0)
    s = 3 / math.sqrt(3)
    js, jp, jm, jt = econ.interaction_sums(0)
    assert (js, jp, jm, jt) == pytest.approx((1 * s, 2 * s, 1 * s, 3 * s))
    assert jp + jm == jt


def test_competition_sum_two_at_xi():
    p = small_params(initial_companies=0)
    econ = empty_economy(p, kernel=build_kernel(0, p))
    econ.kernel.b  # noqa: B018
    from entangled.kernel import InteractionKernel
    k = InteractionKernel(np.zeros((3, 1000)), np.ones((3, 1000)), np.ones((3, 3), int),
                          np.ones((3, 3), int), 0.0, 300.0, 1000)
    econ = empty_economy(p, kernel=k)
    econ.add_company((0, 0, 0), 5.0)
    econ.add_company((300, 0, 0), 5.0)
    econ.add_company((700, 0, 0), 5.0)
    assert econ.competition_sum(0) == pytest.approx(2 * math.exp(-1))


def test_caches_match_python_oracle(params):
    p = params.with_(p_inv=0.5, investment_threshold=30.0)
    econ = init_economy(p, 2, build_kernel(2, p))
    for _ in range(5):
        econ.run_iteration()
        for row in range(0, econ.n, 7):
            js, jp, jm, cs = oracle_sums(econ, row)
            assert econ.interaction_sums(row)[:3] == pytest.approx((js, jp, jm), rel=1e-9, abs=1e-9)
            assert econ.competition_sum(row) == pytest.approx(cs, rel=1e-9)
            assert econ.weight(row) == pytest.approx(oracle_weight(econ, row), rel=1e-9, abs=1e-12)


def test_raw_competition_mode_matches_oracle(params):
    p = params.with_(ring_competition=False)
    econ = init_economy(p, 2, build_kernel(2, p))
    econ.run_iteration()
    for row in range(0, econ.n, 11):
        assert econ.competition_sum(row) == pytest.approx(oracle_sums(econ, row)[3], rel=1e-9)


def test_cache_check_reports_tiny_deviation(params):
    econ = init_economy(params, 4, build_kernel(4, params))
    econ.check_caches = True
    for _ in range(5):
        econ.run_iteration()
    assert econ.deviation.max() < 1e-9


# -- update rules --------------------------------------------------------------------

def test_isolated_company_keeps_capital():
    p = small_params(initial_companies=0)
    econ = empty_economy(p)
    econ.add_company((1, 2, 3), 5.0)
    for _ in range(20):
        econ.update_once()
    assert econ.n == 1 and econ.capital[0] == 5.0


def test_isolated_company_below_threshold_is_removed():
    p = small_params(initial_companies=0)
    econ = empty_economy(p)
    econ.add_company((1, 2, 3), 0.5)
    assert econ.update_once() == _core.DIED
    assert econ.n == 0 and econ.resources == p.resource_total


def test_capital_at_threshold_is_retained():
    p = small_params(initial_companies=0, bankruptcy_threshold=1.0)
    econ = empty_economy(p)
    econ.add_company((1, 2, 3), 1.0)
    econ.update_once()
    assert econ.n == 1


def test_remove_bankrupt_requires_low_capital():
    p = small_params(initial_companies=0)
    econ = empty_economy(p)
    econ.add_company((1, 2, 3), 5.0)
    with pytest.raises(ParameterError):
        econ.remove_bankrupt(0)
    econ.capital[0] = 0.9
    econ.remove_bankrupt(0)
    assert econ.n == 0 and econ.resources == p.resource_total


def test_spawn_transfers_ten_percent():
    p = small_params(initial_companies=0, p_inv=1.0, investment_threshold=100.0)
    econ = empty_economy(p)
    econ.add_company((500, 500, 500), 200.0)
    child = econ.maybe_spawn(0)
    assert child is not None
    assert child.capital == pytest.approx(20.0)
    assert econ.capital[0] == pytest.approx(180.0)
    assert econ.n == 2 and econ.resources == p.resource_total - 2


def test_spawn_without_deduction():
    p = small_params(initial_companies=0, p_inv=1.0, spawn_deducts=False)
    econ = empty_economy(p)
    econ.add_company((500, 500, 500), 200.0)
    econ.maybe_spawn(0)
    assert econ.capital[0] == 200.0


def test_spawn_locality_wraps_around_the_ring():
    p = small_params(initial_companies=0, p_inv=1.0, resource_total=400, spawn_deducts=False)
    econ = empty_economy(p)
    econ.add_company((0, 999, 10), 1e6)
    for _ in range(300):
        child = econ.maybe_spawn(0)
        d = np.abs(np.array(child.position) - econ.pos[0])
        assert (np.minimum(d, 1000 - d) <= 50).all()


def test_spawn_needs_a_resource_unit():
    p = small_params(initial_companies=0, p_inv=1.0, resource_total=1)
    econ = empty_economy(p)
    econ.add_company((1, 1, 1), 500.0)
    assert econ.maybe_spawn(0) is None
    assert econ.capital[0] == 500.0


def test_spawn_probability_zero_never_spawns():
    p = small_params(initial_companies=0, p_inv=0.0)
    econ = empty_economy(p)
    econ.add_company((1, 1, 1), 500.0)
    assert all(econ.maybe_spawn(0) is None for _ in range(50))


def test_add_company_validation():
    econ = empty_economy(small_params(initial_companies=0, resource_total=1))
    with pytest.raises(ParameterError):
        econ.add_company((1000, 0, 0), 1.0)
    with pytest.raises(ParameterError):
        econ.add_company((1, 0, 0), 0.0)
    econ.add_company((1, 0, 0), 1.0)
    with pytest.raises(ParameterError):
        econ.add_company((2, 0, 0), 1.0)


def test_update_replay_is_deterministic(params):
    k = build_kernel(6, params)
    a, b = init_economy(params, 6, k), init_economy(params, 6, k)
    events_a = [a.update_once() for _ in range(300)]
    events_b = [b.update_once() for _ in range(300)]
    assert events_a == events_b
    assert np.array_equal(a.capital[:a.n], b.capital[:b.n])


def test_iteration_uses_n_at_start(params):
    econ = init_economy(params.with_(p_inv=1.0, investment_threshold=20.0), 1, build_kernel(1, params))
    n0 = econ.n
    before = econ.rng.bit_generator.state
    econ.run_iteration()
    # replaying exactly n0 updates from the same RNG state reproduces the iteration
    replay = init_economy(params.with_(p_inv=1.0, investment_threshold=20.0), 1, build_kernel(1, params))
    replay.rng.bit_generator.state = before
    for _ in range(n0):
        replay.update_once()
    assert np.array_equal(np.sort(replay.capital[:replay.n]), np.sort(econ.capital[:econ.n]))


def test_empty_economy_iteration_collapses():
    econ = empty_economy(small_params(initial_companies=0))
    log = econ.run_iteration()
    assert log.collapsed and econ.collapsed and log.n_companies == 0 and econ.iteration == 1


def test_threshold_and_conservation_after_each_iteration(params):
    econ = init_economy(params, 8, build_kernel(8, params))
    for _ in range(params.iterations):
        log = econ.run_iteration()
        assert econ.n + econ.resources == params.resource_total
        assert log.gdp == pytest.approx(econ.gdp())
        cap = econ.capital[:econ.n]
        assert (cap >= params.bankruptcy_threshold).all() and np.isfinite(cap).all()


# -- whole runs --------------------------------------------------------------------

def test_run_simulation_record(params):
    rec = run_simulation(params, 3, check_conservation=True)
    assert rec.series.shape == (rec.final_iteration, 6)
    assert [s.iteration for s in rec.snapshots][:4] == [10, 20, 30, 40]
    assert all(s.iteration <= rec.final_iteration for s in rec.snapshots)


def test_run_simulation_is_byte_identical(params):
    assert run_simulation(params, 5).to_bytes() == run_simulation(params, 5).to_bytes()
    assert run_simulation(params, 5).to_bytes() != run_simulation(params, 6).to_bytes()


def test_empty_start_is_flagged_collapsed():
    rec = run_simulation(small_params(initial_companies=0, iterations=20), 1)
    assert rec.collapsed and rec.final_iteration == 1
    assert rec.n_companies[-1] == 0
    assert rec.snapshots[-1].iteration == rec.final_iteration


def test_last_company_is_never_removed():
    # heavy losses thin the economy out, but a lone company has no interactions
    # and keeps its capital, so the count never reaches zero
    p = small_params(a3=50.0, c_l=0.9, c_g=0.0, iterations=200)
    rec = run_simulation(p, 1)
    assert not rec.collapsed and rec.final_iteration == 200
    assert rec.n_companies[-1] >= 1
    assert rec.n_companies.min() >= 1


def test_lone_survivor_sums_are_exactly_zero():
    p = small_params(initial_companies=0)
    econ = empty_economy(p, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(40):
        econ.add_company(rng.integers(0, 1000, 3), 5.0)
    survivor = int(econ.ids[0])
    while econ.n > 1:
        rows = [r for r in range(econ.n) if econ.ids[r] != survivor]
        row = int(rng.choice(rows))
        econ.capital[row] = 0.5
        econ.remove_bankrupt(row)
    assert econ.interaction_sums(0) == (0.0, 0.0, 0.0, 0.0)
    assert econ.competition_sum(0) == 0.0
    for _ in range(50):
        econ.update_once()
    assert econ.n == 1 and econ.capital[0] == 5.0


def test_sums_reset_when_partners_leave_in_reverse_order():
    from entangled.kernel import InteractionKernel
    p = small_params(initial_companies=0)
    rng = np.random.default_rng(1)
    inter = rng.normal(size=(3, 1000))
    switch = np.ones((3, 1000))
    k = InteractionKernel(inter, switch, np.ones((3, 3), int), np.ones((3, 3), int), 0.0, 300.0, 1000)
    econ = empty_economy(p, kernel=k)
    econ.add_company((0, 0, 0), 5.0)
    for x in rng.integers(1, 300, 25):
        econ.add_company((int(x), 0, 0), 5.0)
    assert econ.interaction_sums(0)[3] > 0
    while econ.n > 1:
        econ.capital[econ.n - 1] = 0.5
        econ.remove_bankrupt(econ.n - 1)
    assert econ.interaction_sums(0) == (0.0, 0.0, 0.0, 0.0)


def test_kernel_policy_from_file(tmp_path, params):
    k = build_kernel(42, params)
    save_kernel(k, tmp_path / "k.json")
    a = run_simulation(params, 1, tmp_path / "k.json")
    b = run_simulation(params, 1, k)
    assert a.kernel_digest == b.kernel_digest and a.to_bytes() == b.to_bytes()
    assert resolve_kernel(params.with_(c_connect=5.0), 1, tmp_path / "k.json").c_connect == 5.0


def test_calibrate_reports_term_magnitudes(params):
    out = calibrate(params, 1, warmup=5)
    assert out["iteration"] == 5 and out["n_companies"] > 0
    for key in ("interaction", "competition", "resource"):
        assert out[key] >= 0
