"""Consumption decision rules.

None of the rules clamp consumption at zero: a negative value is energy sold
back to the grid, and the linear closed-loop analysis depends on the rules
staying linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class ConsumerState:
    """Memory carried from the previous hour: price, consumption and demand."""

    prev_price: float
    prev_consumption: float
    prev_demand: float

    def __post_init__(self):
        for name in ("prev_price", "prev_consumption", "prev_demand"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")


def price_memory_policy(lambda_k: float, lambda_prev: float, d_k: float, beta: float) -> float:
    """Consume demand minus the backlog that offsets the latest price change."""
    _positive("beta", beta)
    return d_k + (lambda_prev - lambda_k) / (2.0 * beta)


def pc_memory_policy(state: ConsumerState, lambda_k: float, d_k: float, rho: float, gamma: float) -> float:
    """Price-and-consumption memory rule.

    Root of the first-order condition for a quadratic continuation value
    gamma*x**2 plus the deviation penalty rho*(u - d)**2.  The arithmetic is
    ordered so that ``rho == 0`` gives bit-for-bit the price memory rule with
    ``beta = gamma``.
    """
    _positive("gamma", gamma)
    if not rho >= 0:
        raise ValueError(f"rho must be >= 0, got {rho!r}")
    memory = 2.0 * rho * (d_k - state.prev_demand + state.prev_consumption)
    numerator = d_k + (state.prev_price - lambda_k + memory) / (2.0 * gamma)
    return numerator / (rho / gamma + 1.0)


def theorem1_policy(k_to_go: int, lambda_now: float, lambda_prev: float, d_now: float, beta: float) -> float:
    """Time-varying inventory rule with ``k_to_go`` decisions left (including this one).

    The price change is spread over the ``k_to_go - 1`` hours of backlog that
    remain before the horizon closes.  The final hour uses
    :func:`theorem1_terminal` instead.
    """
    if int(k_to_go) != k_to_go or k_to_go < 2:
        raise ValueError(f"k_to_go must be an integer >= 2, got {k_to_go!r}")
    _positive("beta", beta)
    return d_now - (lambda_now - lambda_prev) / (2.0 * beta * (k_to_go - 1))


def theorem1_terminal(x_now: float, d_now: float) -> float:
    """Last-hour consumption: clear the backlog so that x_n = 0."""
    return d_now - x_now


def static_policy(lambda_k: float, marginal_value_inverse: Callable[[float], float]) -> float:
    """Memoryless consumption u = v'^-1(lambda)."""
    try:
        u = float(marginal_value_inverse(lambda_k))
    except (ValueError, ArithmeticError) as exc:
        raise ValueError(f"price {lambda_k!r} outside the marginal value domain") from exc
    if not math.isfinite(u):
        raise ValueError(f"price {lambda_k!r} outside the marginal value domain")
    return u
