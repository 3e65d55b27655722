"""Shared domain types used by the simulator and the analysis code."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# hours per demand cycle of the sinusoidal profile
SINUSOID_PERIOD = 12


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return value


@dataclass(frozen=True)
class MarketParams:
    """Quadratic curvatures of the supply cost c(x)=alpha*x**2, backlog
    disutility p(x)=beta*x**2 and consumer value function V(x)=gamma*x**2,
    plus the weight rho of the deviation penalty rho*(u - d)**2.

    Only one of ``beta``/``gamma`` is needed by each consumption model; a
    missing one is mirrored from the other so that the price-and-consumption
    memory model with ``rho=0`` reduces to the price memory model.
    """

    alpha: float
    beta: Optional[float] = None
    gamma: Optional[float] = None
    rho: float = 0.0

    def __post_init__(self):
        if self.beta is None and self.gamma is None:
            raise ValueError("at least one of beta or gamma is required")
        beta = self.gamma if self.beta is None else self.beta
        gamma = self.beta if self.gamma is None else self.gamma
        object.__setattr__(self, "alpha", _check_positive("alpha", self.alpha))
        object.__setattr__(self, "beta", _check_positive("beta", beta))
        object.__setattr__(self, "gamma", _check_positive("gamma", gamma))
        rho = float(self.rho)
        if not math.isfinite(rho) or rho < 0:
            raise ValueError(f"rho must be finite and >= 0, got {rho!r}")
        object.__setattr__(self, "rho", rho)

    @property
    def epsilon(self) -> float:
        return self.alpha / self.beta

    @property
    def epsilon_tilde(self) -> float:
        return self.alpha / self.gamma

    @property
    def v_tilde(self) -> float:
        """Slope of the inverse marginal value, 1/(2*gamma)."""
        return 1.0 / (2.0 * self.gamma)

    def marginal_cost(self, quantity):
        """Supplier marginal cost 2*alpha*x, i.e. the ex-ante price for a predicted load."""
        return 2.0 * self.alpha * quantity

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "rho": self.rho,
            "epsilon": self.epsilon,
            "epsilon_tilde": self.epsilon_tilde,
        }


def demand_constant(d: float, n: int) -> np.ndarray:
    d = float(d)
    if not math.isfinite(d) or d < 0:
        raise ValueError(f"demand must be finite and >= 0, got {d!r}")
    if int(n) < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    return np.full(int(n), d)


def sinusoid_phase(k, lag: int = 0):
    """Phase (k - 5 - lag)*pi/6 of the 12-hour demand cycle (peak at k=8)."""
    return (np.asarray(k, dtype=float) - 5.0 - lag) * np.pi / 6.0


def demand_sinusoid(mu: float, amplitude: float, alpha: float, n: int) -> np.ndarray:
    """Hourly demand whose scaled value 2*alpha*d_k is mu + A*sin((k-5)*pi/6)."""
    mu, amplitude = float(mu), float(amplitude)
    alpha = _check_positive("alpha", alpha)
    if amplitude < 0 or mu < amplitude:
        raise ValueError(f"need mu >= amplitude >= 0 for nonnegative demand, got mu={mu}, A={amplitude}")
    if int(n) < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    # reduce k mod 12 first so that d_{k+12} == d_k holds bitwise
    k = np.arange(int(n)) % SINUSOID_PERIOD
    return (mu + amplitude * np.sin(sinusoid_phase(k))) / (2.0 * alpha)


@dataclass(frozen=True)
class DemandProfile:
    """Known demand sequence: ``constant``, ``sinusoid`` or ``custom``."""

    kind: str
    d: float = 0.0
    mu: float = 0.0
    amplitude: float = 0.0
    alpha: float = 1.0
    sequence: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind == "constant":
            demand_constant(self.d, 1)
        elif self.kind == "sinusoid":
            demand_sinusoid(self.mu, self.amplitude, self.alpha, 1)
        elif self.kind == "custom":
            seq = tuple(float(v) for v in self.sequence)
            if not seq:
                raise ValueError("custom demand needs at least one value")
            if any(not math.isfinite(v) or v < 0 for v in seq):
                raise ValueError("custom demand values must be finite and >= 0")
            object.__setattr__(self, "sequence", seq)
        else:
            raise ValueError(f"unknown demand kind {self.kind!r}")

    @classmethod
    def constant(cls, d: float) -> "DemandProfile":
        return cls("constant", d=float(d))

    @classmethod
    def sinusoid(cls, mu: float, amplitude: float, alpha: float) -> "DemandProfile":
        return cls("sinusoid", mu=float(mu), amplitude=float(amplitude), alpha=float(alpha))

    @classmethod
    def custom(cls, sequence: Sequence[float]) -> "DemandProfile":
        return cls("custom", sequence=tuple(sequence))

    @property
    def period(self) -> Optional[int]:
        """Exact period of the realized sequence, or None when aperiodic."""
        return {"constant": 1, "sinusoid": SINUSOID_PERIOD}.get(self.kind)

    def values(self, n: int) -> np.ndarray:
        if self.kind == "constant":
            return demand_constant(self.d, n)
        if self.kind == "sinusoid":
            return demand_sinusoid(self.mu, self.amplitude, self.alpha, n)
        if len(self.sequence) < n:
            raise ValueError(f"custom demand has {len(self.sequence)} values, need {n}")
        return np.array(self.sequence[:n])


@dataclass(frozen=True)
class Trajectory:
    """Aligned price, consumption, demand and backlog series.

    ``forecast[k]`` is the load the operator predicted for hour k when it set
    ``price[k]`` (NaN where the price was a seed).  ``diverged`` flags a run
    judged unstable; ``overflow`` means it was cut short at the overflow guard.
    """

    price: np.ndarray
    consumption: np.ndarray
    demand: np.ndarray
    backlog: np.ndarray
    forecast: Optional[np.ndarray] = None
    diverged: bool = False
    overflow: bool = False

    def __post_init__(self):
        arrays = [np.array(a, dtype=float) for a in (self.price, self.consumption, self.demand, self.backlog)]
        if len({len(a) for a in arrays}) != 1:
            raise ValueError("trajectory series must have equal length")
        forecast = self.forecast
        if forecast is not None:
            forecast = np.array(forecast, dtype=float)
            if len(forecast) != len(arrays[0]):
                raise ValueError("forecast must match trajectory length")
            arrays.append(forecast)
        for a in arrays:
            a.setflags(write=False)
        for name, a in zip(("price", "consumption", "demand", "backlog"), arrays):
            object.__setattr__(self, name, a)
        object.__setattr__(self, "forecast", forecast)

    def __len__(self) -> int:
        return len(self.price)
