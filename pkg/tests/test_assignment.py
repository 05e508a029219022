import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from pgikit.assignment import auction_assign, auction_assign_batch
from pgikit.errors import InvalidArgumentError, SolverStalledError


def _brute_force(cost):
    n = cost.shape[0]
    return min(cost[range(n), list(p)].sum() for p in itertools.permutations(range(cost.shape[1]), n))


def test_trivial_cases():
    res = auction_assign([[3.5]])
    assert res.match.tolist() == [0] and res.total_cost == 3.5
    res = auction_assign([[1.0, 2.0], [2.0, 1.0]])
    assert res.match.tolist() == [0, 1] and res.total_cost == 2.0


def test_match_is_injective_and_total_is_consistent():
    cost = np.random.default_rng(0).uniform(size=(20, 30))
    res = auction_assign(cost, 1e-9)
    assert len(set(res.match.tolist())) == 20
    assert res.total_cost == pytest.approx(cost[np.arange(20), res.match].sum(), abs=0)


@pytest.mark.parametrize("seed", range(10))
def test_small_square_matches_brute_force(seed):
    cost = np.random.default_rng(seed).uniform(0, 10, size=(6, 6))
    res = auction_assign(cost, 1e-6)
    assert res.total_cost <= _brute_force(cost) + res.eps_bound


@pytest.mark.parametrize("seed", range(5))
def test_rectangular_matches_brute_force(seed):
    cost = np.random.default_rng(seed).uniform(size=(3, 6))
    res = auction_assign(cost, 1e-9)
    assert res.total_cost <= _brute_force(cost) + res.eps_bound


@pytest.mark.parametrize("shape", [(40, 40), (12, 25), (50, 90)])
def test_matches_hungarian(shape):
    cost = np.random.default_rng(sum(shape)).uniform(size=shape)
    res = auction_assign(cost, 1e-9)
    r, c = linear_sum_assignment(cost)
    opt = cost[r, c].sum()
    assert opt - 1e-12 <= res.total_cost <= opt + res.eps_bound


def test_integer_costs_exact():
    rng = np.random.default_rng(3)
    for _ in range(5):
        cost = rng.integers(0, 50, size=(30, 30)).astype(float)
        res = auction_assign(cost, 0.99 / 30)
        r, c = linear_sum_assignment(cost)
        assert res.total_cost == cost[r, c].sum()


def test_equal_costs_resolve_deterministically():
    res = auction_assign(np.ones((4, 4)))
    assert sorted(res.match.tolist()) == [0, 1, 2, 3]
    assert np.array_equal(res.match, auction_assign(np.ones((4, 4))).match)


def test_batch_equals_single():
    costs = np.random.default_rng(5).uniform(0, 2, size=(16, 12, 25))
    costs[3] *= 10  # problems with different cost scales run different schedules
    batch = auction_assign_batch(costs, 1e-7)
    for c, b in zip(costs, batch):
        s = auction_assign(c, 1e-7)
        assert np.array_equal(s.match, b.match)
        assert s.total_cost == b.total_cost


def test_rejects_bad_inputs():
    with pytest.raises(InvalidArgumentError):
        auction_assign(np.ones((3, 2)))
    with pytest.raises(InvalidArgumentError):
        auction_assign([[1.0, -1.0]])
    with pytest.raises(InvalidArgumentError):
        auction_assign([[1.0, np.inf]])
    with pytest.raises(InvalidArgumentError):
        auction_assign([[1.0]], eps_final=0)


def test_bid_budget():
    cost = np.random.default_rng(0).uniform(size=(30, 30))
    with pytest.raises(SolverStalledError):
        auction_assign(cost, 1e-9, max_bids=10)
