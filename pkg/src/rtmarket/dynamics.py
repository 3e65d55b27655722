"""Closed-loop market simulation with ex-ante pricing.

Each hour the operator forecasts next hour's load as the current consumption,
u_hat[k+1] = u[k], and sets the next price at the supplier's marginal cost,
price[k+1] = 2*alpha*u_hat[k+1].  The consumer answers each announced price
with one of three rules: static, price memory, or price-and-consumption
memory.

Seeding: price[0] and price[1] are given.  The price memory rule treats the
hour before the start as priced at price[0], so u[0] = d[0].  The
price-and-consumption memory rule starts from u[0] = price[1]/(2*alpha), the
consumption consistent with the second seed price.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .core import DemandProfile, MarketParams, Trajectory
from .policies import ConsumerState, pc_memory_policy, price_memory_policy, static_policy

OVERFLOW_BOUND = 1e12
# deviation ceiling of a run still called bounded
BOUNDED_LIMIT = 1e3


class Model(str, Enum):
    STATIC = "static"
    PRICE_MEMORY = "price-memory"
    PC_MEMORY = "pc-memory"


@dataclass(frozen=True)
class SimulationConfig:
    model: Model
    params: MarketParams
    demand: DemandProfile
    lambda0: float
    lambda1: float = 0.0
    horizon: int = 500
    marginal_value_inverse: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if int(self.horizon) != self.horizon or self.horizon < 2:
            raise ValueError(f"horizon must be an integer >= 2, got {self.horizon!r}")
        for name in ("lambda0", "lambda1"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.model is Model.STATIC and self.marginal_value_inverse is None:
            raise ValueError("the static model needs marginal_value_inverse")


def recursion_coefficients(model: Model, params: MarketParams):
    """(a, b, c) in price[k+1] = a*price[k] + b*price[k-1] + 2*alpha*d[k] - c*d[k-1]."""
    model = Model(model)
    if model is Model.PRICE_MEMORY:
        eps = params.epsilon
        return -eps, eps, 0.0
    if model is Model.PC_MEMORY:
        a, g, r = params.alpha, params.gamma, params.rho
        return (r - a) / (g + r), a / (g + r), 2.0 * a * r / (g + r)
    raise ValueError("the static model has no linear price recursion")


def simulate_price_recursion(params: MarketParams, demand, lambda0: float, lambda1: float, n: int,
                             model: Model = Model.PRICE_MEMORY, lag: int = 1) -> np.ndarray:
    """Price-only form of the closed loop, with consumption eliminated.

    ``lag`` is how many hours the demand forcing trails the price it drives.
    The closed loop has ``lag=1``: the price of hour k+1 is set from the
    consumption of hour k, so it carries d[k].  ``lag=0`` pairs price[k] with
    d[k] instead.  Demand indices before 0 are read as d[0].

    Returns the prices; the array is shorter than ``n`` if the run overflowed.
    """
    model = Model(model)
    if lag not in (0, 1):
        raise ValueError("lag must be 0 or 1")
    if n < 2:
        raise ValueError("n must be >= 2")
    d = np.asarray(demand, dtype=float)
    if len(d) < n:
        raise ValueError(f"need {n} demand values, got {len(d)}")
    alpha = params.alpha
    lam = np.empty(n)
    lam[0], lam[1] = lambda0, lambda1

    def dem(i):
        return d[max(i, 0)]

    if model is Model.PRICE_MEMORY:
        eps = alpha / params.beta
        for k in range(2, n):
            lam[k] = -eps * lam[k - 1] + eps * lam[k - 2] + 2.0 * alpha * dem(k - lag)
            if not abs(lam[k]) <= OVERFLOW_BOUND:
                return lam[:k]
    elif model is Model.PC_MEMORY:
        g, r = params.gamma, params.rho
        for k in range(1, n - 1):
            lam[k + 1] = ((r - alpha) / (g + r)) * lam[k] + (alpha / (g + r)) * lam[k - 1] \
                + 2.0 * alpha * dem(k + 1 - lag) - (2.0 * alpha * r / (g + r)) * dem(k - lag)
            if not abs(lam[k + 1]) <= OVERFLOW_BOUND:
                return lam[:k + 1]
    else:
        raise ValueError("the static model has no linear price recursion")
    return lam


def periodic_steady_state(model: Model, params: MarketParams, demand_cycle) -> np.ndarray:
    """Prices over one period of the periodic solution of the closed loop.

    ``demand_cycle`` holds d[0..P-1] of a P-periodic demand; the result S
    satisfies S[(k+1) % P] = a*S[k % P] + b*S[(k-1) % P] + 2*alpha*d[k] - c*d[k-1].
    When a characteristic root is a P-th root of unity (for instance the root
    -1 at epsilon = 1/2 with an even period) the periodic solution is not
    unique and the least-norm one is returned.
    """
    a, b, c = recursion_coefficients(model, params)
    d = np.asarray(demand_cycle, dtype=float)
    period = len(d)
    system = np.zeros((period, period))
    rhs = np.empty(period)
    for k in range(period):
        row = (k + 1) % period
        system[row, row] += 1.0
        system[row, k % period] -= a
        system[row, (k - 1) % period] -= b
        rhs[row] = 2.0 * params.alpha * d[k] - c * d[(k - 1) % period]
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(system, rhs, rcond=None)[0]


def equilibrium_path(config: SimulationConfig, n: int) -> Optional[np.ndarray]:
    """Price path the closed loop settles on, when the demand is periodic."""
    period = config.demand.period
    if config.model is Model.STATIC or period is None:
        return None
    cycle = periodic_steady_state(config.model, config.params, config.demand.values(period))
    return cycle[np.arange(n) % period]


def is_contracting(deviation) -> bool:
    """Bounded-and-contracting test for a deviation from equilibrium.

    The largest deviation over the last quarter of the run must be below the
    largest over the first quarter and below the fixed ceiling.
    """
    dev = np.abs(np.asarray(deviation, dtype=float))
    if len(dev) == 0 or not np.all(np.isfinite(dev)):
        return False
    q = max(len(dev) // 4, 1)
    first, last = dev[:q].max(), dev[-q:].max()
    if last >= BOUNDED_LIMIT:
        return False
    return bool(last < first or last <= 1e-12 * max(first, 1.0))


def simulate(config: SimulationConfig) -> Trajectory:
    n = int(config.horizon)
    params = config.params
    model = config.model
    d = config.demand.values(n)
    price = np.empty(n)
    u = np.empty(n)
    forecast = np.full(n, np.nan)
    price[0] = config.lambda0
    if model is not Model.STATIC:
        price[1] = config.lambda1
    length = n
    overflow = False
    for k in range(n):
        if model is Model.STATIC:
            u[k] = static_policy(price[k], config.marginal_value_inverse)
        elif model is Model.PRICE_MEMORY:
            prev = price[k - 1] if k > 0 else config.lambda0
            u[k] = price_memory_policy(price[k], prev, d[k], params.beta)
        elif k == 0:
            u[k] = price[1] / (2.0 * params.alpha)
        else:
            state = ConsumerState(price[k - 1], u[k - 1], d[k - 1])
            u[k] = pc_memory_policy(state, price[k], d[k], params.rho, params.gamma)
        if k + 1 >= n or (k == 0 and model is not Model.STATIC):
            continue
        forecast[k + 1] = u[k]
        price[k + 1] = params.marginal_cost(forecast[k + 1])
        if not abs(price[k + 1]) <= OVERFLOW_BOUND:
            length, overflow = k + 1, True
            break
    price, u, d, forecast = price[:length], u[:length], d[:length], forecast[:length]
    backlog = np.zeros(length)
    for k in range(length - 1):
        backlog[k + 1] = backlog[k] + u[k] - d[k]
    if overflow:
        diverged = True
    else:
        reference = equilibrium_path(config, length)
        diverged = reference is not None and not is_contracting(price - reference)
    return Trajectory(price, u, d, backlog, forecast=forecast, diverged=diverged, overflow=overflow)
