"""Epsilon-scaling auction solver for min-cost (rectangular) assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SolverStalledError

MAX_BIDS = 1_000_000
SCALING_FACTOR = 5.0


@dataclass
class AssignmentResult:
    match: np.ndarray
    total_cost: float
    eps_bound: float


def _phase(benefit, prices, eps, active, bids_left):
    """One auction round per active problem at fixed ``eps``.

    Jacobi bidding on a batch of independent square problems; ties for an object
    go to the lowest person index. Inactive problems are left untouched.
    """
    n_prob, n, _ = benefit.shape
    assigned = np.full((n_prob, n), -1, dtype=np.int64)
    owner = np.full((n_prob, n), -1, dtype=np.int64)
    assigned[~active] = 0  # placeholder so inactive problems never bid
    bids = 0
    while True:
        fp, fi = np.nonzero(assigned < 0)
        if fp.size == 0:
            break
        bids += fp.size
        if bids > bids_left:
            raise SolverStalledError("auction exceeded its bid budget")
        net = benefit[fp, fi] - prices[fp]
        r = np.arange(fp.size)
        best_j = np.argmax(net, axis=1)
        best = net[r, best_j]
        net[r, best_j] = -np.inf
        second = net.max(axis=1)
        bid = prices[fp, best_j] + (best - second) + eps[fp]

        # per (problem, object): highest bid wins, equal bids go to the lowest person
        order = np.lexsort((fi, -bid, best_j, fp))
        key = fp[order] * n + best_j[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = key[1:] != key[:-1]
        win = order[first]
        wp, wj, wi = fp[win], best_j[win], fi[win]

        prev = owner[wp, wj]
        lost = prev >= 0
        assigned[wp[lost], prev[lost]] = -1
        owner[wp, wj] = wi
        assigned[wp, wi] = wj
        prices[wp, wj] = bid[win]
    return assigned, bids


def _check_cost(c: np.ndarray, eps_final: float) -> None:
    if c.ndim != 3 or c.shape[1] == 0:
        raise InvalidArgumentError("cost must be a non-empty 2D matrix")
    n_rows, n_cols = c.shape[1:]
    if n_rows > n_cols:
        raise InvalidArgumentError(f"need rows <= cols, got {n_rows}x{n_cols}")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise InvalidArgumentError("costs must be finite and non-negative")
    if not eps_final > 0:
        raise InvalidArgumentError("eps_final must be positive")


def auction_assign_batch(costs, eps_final: float = 1e-6,
                         max_bids: int = MAX_BIDS) -> list[AssignmentResult]:
    """Solve a stack of equally shaped ``(rows, cols)`` problems in lockstep.

    Each problem follows its own epsilon schedule, so every result is identical
    to what :func:`auction_assign` returns for that matrix alone. ``max_bids``
    is a budget per problem.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 3 or c.shape[0] == 0:
        raise InvalidArgumentError("costs must be a non-empty (batch, rows, cols) stack")
    _check_cost(c, eps_final)
    n_prob, n_rows, n_cols = c.shape
    if n_cols == 1:
        return [AssignmentResult(np.zeros(1, dtype=np.int64), float(c[p, 0, 0]), 0.0)
                for p in range(n_prob)]

    benefit = np.zeros((n_prob, n_cols, n_cols))
    benefit[:, :n_rows] = -c
    prices = np.zeros((n_prob, n_cols))
    eps = np.maximum(c.max(axis=(1, 2)) / 4.0, eps_final)
    done = np.zeros(n_prob, dtype=bool)
    match = np.zeros((n_prob, n_cols), dtype=np.int64)
    spent = 0
    while not done.all():
        active = ~done
        assigned, bids = _phase(benefit, prices, eps, active, max_bids * n_prob - spent)
        spent += bids
        match[active] = assigned[active]
        done |= active & (eps <= eps_final)
        eps = np.where(done, eps, np.maximum(eps / SCALING_FACTOR, eps_final))

    rows = np.arange(n_rows)
    out = []
    for p in range(n_prob):
        m = match[p, :n_rows].copy()
        out.append(AssignmentResult(m, float(c[p, rows, m].sum()), n_cols * eps_final))
    return out


def auction_assign(cost, eps_final: float = 1e-6, max_bids: int = MAX_BIDS) -> AssignmentResult:
    """Minimize ``sum(cost[r, match[r]])`` over injective row-to-column matchings.

    Rectangular problems (rows < cols) are padded with zero-cost dummy rows so the
    forward auction runs on a square instance. The returned ``eps_bound`` certifies
    ``total_cost <= optimum + eps_bound``; with integer costs and
    ``eps_final < 1 / cols`` the assignment is exactly optimal.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0:
        raise InvalidArgumentError("cost must be a non-empty 2D matrix")
    return auction_assign_batch(c[None], eps_final, max_bids)[0]
