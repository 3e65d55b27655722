"""Inventory-style consumption scheduling: the closed-form time-varying rule
and a discretized backward-induction oracle to check it against.

The consumer minimizes  sum_k lambda_k*u_k + p(x_{k+1}) + h(u_k, d_k)  with
backlog dynamics x_{k+1} = x_k + u_k - d_k, x_k <= 0 and x_n = 0, where
p(x) = beta*x**2 and h(u, d) = rho*(u - d)**2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .policies import ConsumerState, theorem1_policy, theorem1_terminal


class OracleError(RuntimeError):
    pass


class GridEscapeError(OracleError):
    """The optimal backlog hit the lower edge of the oracle grid."""


class InfeasibleTerminalError(OracleError):
    """No admissible consumption clears the backlog by the end of the horizon."""


@dataclass(frozen=True)
class InventoryProblem:
    demand: tuple
    prices: tuple
    beta: float
    rho: float = 0.0

    def __post_init__(self):
        demand = tuple(float(v) for v in self.demand)
        prices = tuple(float(v) for v in self.prices)
        if len(demand) < 1:
            raise ValueError("horizon must be >= 1")
        if len(prices) != len(demand):
            raise ValueError(f"need one price per hour: {len(prices)} prices for {len(demand)} demands")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho!r}")
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def horizon(self) -> int:
        return len(self.demand)

    def backlog_cost(self, x):
        return self.beta * np.square(x)

    def deviation_cost(self, u, d):
        return self.rho * np.square(np.subtract(u, d))


@dataclass(frozen=True)
class DPOracleGrid:
    x_min: float
    x_steps: int = 2000
    u_max: float = 10.0
    u_steps: int = 2000

    def __post_init__(self):
        if not self.x_min < 0:
            raise ValueError(f"x_min must be < 0, got {self.x_min!r}")
        if not self.u_max > 0:
            raise ValueError(f"u_max must be > 0, got {self.u_max!r}")
        if self.x_steps < 100 or self.u_steps < 100:
            raise ValueError("grids need at least 100 points per axis")

    @property
    def x_cell(self) -> float:
        return -self.x_min / (self.x_steps - 1)

    @property
    def u_cell(self) -> float:
        return self.u_max / (self.u_steps - 1)

    @property
    def cell(self) -> float:
        """Coarser of the two resolutions; the unit for agreement tolerances."""
        return max(self.x_cell, self.u_cell)


@dataclass(frozen=True)
class ScheduleResult:
    consumption: np.ndarray
    backlog: np.ndarray  # x_0 .. x_n
    total_cost: float
    cost_to_go: Optional[np.ndarray] = None  # oracle only: J_k at the realized x_k


def realized_cost(problem: InventoryProblem, consumption: Sequence[float]) -> float:
    """Cost of a schedule under the realized prices; x_n must come out at zero."""
    u = np.asarray(consumption, dtype=float)
    d = np.asarray(problem.demand)
    x_next = np.cumsum(u - d)
    return float(
        math.fsum(np.asarray(problem.prices) * u)
        + math.fsum(problem.backlog_cost(x_next))
        + math.fsum(problem.deviation_cost(u, d))
    )


def solve_theorem1(problem: InventoryProblem, lambda_prior: float) -> ScheduleResult:
    """Apply the time-varying closed-form rule along the realized price path.

    ``lambda_prior`` is the price of the hour before the horizon starts.
    """
    if problem.rho != 0:
        raise ValueError("the closed-form schedule covers rho = 0 only")
    n = problem.horizon
    d = problem.demand
    lam = (float(lambda_prior),) + problem.prices
    u = np.empty(n)
    x = np.zeros(n + 1)
    for k in range(n):
        k_to_go = n - k
        if k_to_go >= 2:
            u[k] = theorem1_policy(k_to_go, lam[k + 1], lam[k], d[k], problem.beta)
        else:
            u[k] = theorem1_terminal(x[k], d[k])
        x[k + 1] = x[k] + u[k] - d[k]
    # the terminal rule clears the backlog by definition; drop rounding residue
    x[n] = 0.0
    return ScheduleResult(u, x, realized_cost(problem, u))


def cost_to_go_theorem1(k_to_go: int, x_now: float, lambda_now: float, lambda_prev: float,
                        demand_tail: Sequence[float], beta: float) -> float:
    """Closed-form optimal cost with ``k_to_go`` hours left, starting from backlog ``x_now``."""
    demand_tail = list(demand_tail)
    if k_to_go < 1:
        raise ValueError(f"k_to_go must be >= 1, got {k_to_go!r}")
    if len(demand_tail) != k_to_go:
        raise ValueError(f"demand_tail has {len(demand_tail)} entries, expected {k_to_go}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta!r}")
    energy = lambda_now * (math.fsum(demand_tail) - x_now)
    if k_to_go == 1:
        return energy
    shift = (lambda_now - lambda_prev) / (2.0 * beta * (k_to_go - 1))
    return (k_to_go - 1) * beta * (x_now - shift) ** 2 + energy


def foc_residual(u_k: float, state: ConsumerState, lambda_k: float, d_k: float, rho: float, gamma: float) -> float:
    """First-order optimality residual for consumption ``u_k`` with continuation value gamma*x**2.

    The current backlog is recovered from the previous hour's optimality
    condition, x_k = (2*rho*(d_{k-1} - u_{k-1}) - lambda_{k-1}) / (2*gamma).
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma!r}")
    x_k = (2.0 * rho * (state.prev_demand - state.prev_consumption) - state.prev_price) / (2.0 * gamma)
    x_next = x_k + u_k - d_k
    return lambda_k + 2.0 * rho * (u_k - d_k) + 2.0 * gamma * x_next


# --- backward-induction oracle --------------------------------------------------


_BIG = 1e300


class _Backward:
    """Backward induction on a fixed backlog grid with a frozen future price.

    Tables hold V(x) = p(x) + J(x) at the grid nodes: the backlog penalty of
    arriving at x plus the optimal cost of the hours that follow.  Off-grid
    states are valued by linear interpolation; states outside [x_min, 0] are
    inadmissible (+inf).
    """

    def __init__(self, problem: InventoryProblem, grid: DPOracleGrid,
                 backlog_cost: Callable, deviation_cost: Callable):
        self.problem = problem
        self.grid = grid
        self.p = backlog_cost
        self.h = deviation_cost
        self.xs = np.linspace(grid.x_min, 0.0, grid.x_steps)
        self.us = np.linspace(0.0, grid.u_max, grid.u_steps)
        self.dx = grid.x_cell

    def interp(self, table: np.ndarray, x_next):
        """Value of ``table`` at arbitrary backlog levels."""
        x_next = np.asarray(x_next, dtype=float)
        pos = (x_next - self.grid.x_min) / self.dx
        last = self.grid.x_steps - 1
        inside = (pos >= -1e-9) & (pos <= last + 1e-9)
        i = np.clip(np.floor(pos).astype(np.int64), 0, last - 1)
        w = np.clip(pos - i, 0.0, 1.0)
        finite = np.where(np.isfinite(table), table, np.inf)
        with np.errstate(invalid="ignore"):
            val = np.where(w == 0.0, finite[i], np.where(w == 1.0, finite[i + 1],
                                                        finite[i] * (1.0 - w) + finite[i + 1] * w))
        return np.where(inside, val, np.inf)

    def terminal_table(self, j: int, price: float) -> np.ndarray:
        d = self.problem.demand[j]
        u = d - self.xs
        feasible = (u >= 0.0) & (u <= self.grid.u_max)
        return np.where(feasible, self.p(self.xs) + price * u + self.h(u, d), np.inf)

    def stage_table(self, j: int, price: float, following: np.ndarray) -> np.ndarray:
        n_x = self.grid.x_steps
        d = self.problem.demand[j]
        # x_i + u - d lies at fractional grid index i + (u - d)/dx: for each u the
        # successor values form a contiguous window of the padded table
        shift = (self.us - d) / self.dx
        base = np.floor(shift).astype(np.int64)
        w = (shift - base)[:, None]
        # snap near-integer shifts so rounding does not push a node off the grid
        snap = w > 1.0 - 1e-9
        base = base + snap[:, 0]
        w = np.where(snap, 0.0, w)
        pad = n_x + 1
        padded = np.full(n_x + 2 * pad, _BIG)
        padded[pad:pad + n_x] = np.where(np.isfinite(following), following, _BIG)
        starts = np.clip(pad + base, 0, len(padded) - n_x - 1)
        windows = np.lib.stride_tricks.sliding_window_view(padded, n_x)
        cont = windows[starts] * (1.0 - w) + windows[starts + 1] * w
        # a zero interpolation weight must not pull in the inadmissible neighbour
        cont = np.where(w == 0.0, windows[starts], cont)
        stage = (price * self.us + self.h(self.us, d))[:, None]
        best = (stage + cont).min(axis=0)
        best = np.where(best >= _BIG * 0.5, np.inf, best)
        return self.p(self.xs) + best

    def continuation(self, k: int, price: float) -> np.ndarray:
        """Table of p + J for hour k+1 when every hour from k+1 on is priced at ``price``."""
        n = self.problem.horizon
        table = self.terminal_table(n - 1, price)
        for j in range(n - 2, k, -1):
            table = self.stage_table(j, price, table)
        return table


def dp_oracle(problem: InventoryProblem, grid: DPOracleGrid, lambda_prior: float,
              belief: str = "current",
              backlog_cost: Optional[Callable] = None,
              deviation_cost: Optional[Callable] = None) -> ScheduleResult:
    """Certainty-equivalent backward induction along the realized price path.

    At hour k the consumer pays the realized price for its own decision and
    values the remaining hours with every future price frozen at its
    expectation: the current price (``belief="current"``, the martingale
    assumption) or the previous price (``belief="previous"``, an expectation
    formed an hour earlier; ``lambda_prior`` seeds it).  The value function of
    the remaining hours is recomputed on the backlog grid at every hour.
    Consumption is restricted to [0, u_max] and backlog to [x_min, 0]; the last
    hour clears the backlog exactly.

    ``backlog_cost`` and ``deviation_cost`` override the quadratic p and h with
    any vectorized convex functions.
    """
    if belief not in ("current", "previous"):
        raise ValueError(f"belief must be 'current' or 'previous', got {belief!r}")
    if max(problem.demand) >= grid.u_max:
        raise ValueError("u_max must exceed the largest demand")
    p = backlog_cost or problem.backlog_cost
    h = deviation_cost or problem.deviation_cost
    solver = _Backward(problem, grid, p, h)
    n = problem.horizon
    d = problem.demand
    lam = problem.prices
    u = np.empty(n)
    x = np.zeros(n + 1)
    values = np.empty(n)
    for k in range(n):
        if k == n - 1:
            u[k] = d[k] - x[k]
            if not 0.0 <= u[k] <= grid.u_max:
                raise InfeasibleTerminalError(f"clearing backlog {x[k]:.6g} needs u={u[k]:.6g}, outside [0, {grid.u_max}]")
            values[k] = lam[k] * u[k] + float(h(u[k], d[k]))
        else:
            future_price = lam[k] if belief == "current" else (lambda_prior if k == 0 else lam[k - 1])
            following = solver.continuation(k, future_price)
            x_next = x[k] + solver.us - d[k]
            cost = lam[k] * solver.us + h(solver.us, d[k]) + solver.interp(following, x_next)
            best = int(np.argmin(cost))
            if not math.isfinite(cost[best]):
                raise InfeasibleTerminalError(f"no feasible consumption at hour {k} from backlog {x[k]:.6g}")
            u[k] = solver.us[best]
            values[k] = cost[best]
            if x_next[best] <= grid.x_min + solver.dx:
                raise GridEscapeError(f"backlog {x_next[best]:.6g} at hour {k + 1} reached the grid edge {grid.x_min}")
        x[k + 1] = x[k] + u[k] - d[k]
    x[n] = 0.0
    return ScheduleResult(u, x, realized_cost(problem, u), values)


# --- closed form vs. oracle -----------------------------------------------------


@dataclass(frozen=True)
class OracleComparison:
    problem: InventoryProblem
    lambda_prior: float
    closed_form: np.ndarray
    oracle: Optional[np.ndarray]
    max_abs_diff: float
    tolerance: float
    passed: bool
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "horizon": self.problem.horizon,
            "beta": self.problem.beta,
            "demand": list(self.problem.demand),
            "prices": list(self.problem.prices),
            "lambda_prior": self.lambda_prior,
            "closed_form": self.closed_form.tolist(),
            "oracle": None if self.oracle is None else self.oracle.tolist(),
            "max_abs_diff": self.max_abs_diff,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "error": self.error,
        }


def default_oracle_grid(steps: int = 2000) -> DPOracleGrid:
    """Grid wide enough for prices and demands in [0, 5] with beta >= 1."""
    return DPOracleGrid(x_min=-15.0, x_steps=steps, u_max=20.0, u_steps=steps)


def compare_with_oracle(problem: InventoryProblem, lambda_prior: float, grid: DPOracleGrid,
                        cells: float = 2.0, belief: str = "current") -> OracleComparison:
    """Run both schedules and check every hour agrees within ``cells`` grid cells."""
    closed = solve_theorem1(problem, lambda_prior).consumption
    tolerance = cells * grid.cell
    try:
        oracle = dp_oracle(problem, grid, lambda_prior, belief=belief).consumption
    except OracleError as exc:
        return OracleComparison(problem, lambda_prior, closed, None, math.inf, tolerance, False,
                                f"{type(exc).__name__}: {exc}")
    diff = float(np.max(np.abs(oracle - closed)))
    return OracleComparison(problem, lambda_prior, closed, oracle, diff, tolerance, diff <= tolerance)


def random_instance(rng: np.random.Generator, max_horizon: int = 6, high: float = 5.0,
                    beta_range=(1.0, 8.0), max_tries: int = 10_000):
    """Draw (problem, lambda_prior) with prices and demands uniform on [0, high].

    Draws are rejected until the closed-form schedule keeps backlog <= 0 and
    consumption >= 0, since the oracle enforces both and the closed form does not.
    """
    if max_horizon < 2:
        raise ValueError("max_horizon must be >= 2")
    for _ in range(max_tries):
        n = int(rng.integers(2, max_horizon + 1))
        problem = InventoryProblem(
            demand=tuple(rng.uniform(0.0, high, n)),
            prices=tuple(rng.uniform(0.0, high, n)),
            beta=float(rng.uniform(*beta_range)),
        )
        lambda_prior = float(rng.uniform(0.0, high))
        result = solve_theorem1(problem, lambda_prior)
        if np.all(result.backlog <= 0.0) and np.all(result.consumption >= 0.0):
            return problem, lambda_prior
    raise RuntimeError(f"no admissible instance in {max_tries} draws")
