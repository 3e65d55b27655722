"""Stability of the price recursions and their closed-form solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional

import numpy as np

from .core import DemandProfile, MarketParams, sinusoid_phase
from .dynamics import Model, SimulationConfig, simulate

SQRT3 = math.sqrt(3.0)
# half-width of the parameter band around a stability boundary where
# simulated and analytic verdicts are not compared
BOUNDARY_BAND = 5e-4


def _ordered_roots(s: float, q: float):
    """Real roots of x**2 - s*x - q = 0, smaller first, without cancellation."""
    disc = s * s + 4.0 * q
    if disc < 0:
        raise ArithmeticError(f"negative discriminant {disc!r}")
    root = math.sqrt(disc)
    if s >= 0:
        big = (s + root) / 2.0
        small = -q / big if big != 0 else 0.0
        return small, big
    small = (s - root) / 2.0
    return small, -q / small


def roots_price_memory(epsilon: float):
    """Roots of x**2 + eps*x - eps = 0."""
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon!r}")
    return _ordered_roots(-epsilon, epsilon)


def roots_pc_memory(alpha: float, gamma: float, rho: float):
    """Roots of x**2 - (rho - alpha)/(gamma + rho)*x - alpha/(gamma + rho) = 0."""
    if not (alpha > 0 and gamma > 0 and rho >= 0):
        raise ValueError(f"need alpha > 0, gamma > 0, rho >= 0; got {alpha}, {gamma}, {rho}")
    return _ordered_roots((rho - alpha) / (gamma + rho), alpha / (gamma + rho))


@dataclass(frozen=True)
class StabilityReport:
    roots: tuple
    spectral_radius: float
    stable: bool
    threshold_note: str

    def as_dict(self) -> dict:
        return {
            "roots": list(self.roots),
            "spectral_radius": self.spectral_radius,
            "stable": self.stable,
            "threshold_note": self.threshold_note,
        }


def _report(roots, stable, note):
    radius = max(abs(roots[0]), abs(roots[1]))
    return StabilityReport(tuple(roots), radius, bool(stable), note)


def is_stable_price_memory(epsilon: float) -> StabilityReport:
    roots = roots_price_memory(epsilon)
    return _report(roots, epsilon < 0.5, "price memory: stable iff 0 <= epsilon < 1/2")


def is_stable_pc_memory(alpha: float, gamma: float, rho: float) -> StabilityReport:
    roots = roots_pc_memory(alpha, gamma, rho)
    if alpha < gamma / 2.0:
        return _report(roots, True, "alpha < gamma/2: stable for every rho >= 0")
    threshold = alpha - gamma / 2.0
    return _report(roots, rho > threshold,
                   f"alpha >= gamma/2: stable iff rho > alpha - gamma/2 = {threshold:.17g}")


def stability_report(model: Model, params: MarketParams) -> StabilityReport:
    if Model(model) is Model.PRICE_MEMORY:
        return is_stable_price_memory(params.epsilon)
    if Model(model) is Model.PC_MEMORY:
        return is_stable_pc_memory(params.alpha, params.gamma, params.rho)
    raise ValueError("no stability theory for the static model")


def fixed_point(alpha: float, d: float):
    """Equilibrium (price, consumption) under constant demand, for either memory model."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha!r}")
    if not d >= 0:
        raise ValueError(f"d must be >= 0, got {d!r}")
    return 2.0 * alpha * d, d


# --- closed forms ---------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormSolution:
    """price[k] = c1*x1**k + c2*x2**k + e0 + e1*sin(th_k) + e2*cos(th_k),
    th_k = (k - 5 - lag)*pi/6.  Constant demand has e1 = e2 = 0 and e0 = 2*alpha*d.

    With a repeated root (only x1 = x2 = 0) the transient is c1 at k=0 and c2
    at k=1 and nothing afterwards.
    """

    x1: float
    x2: float
    c1: float
    c2: float
    e0: float
    e1: float = 0.0
    e2: float = 0.0
    lag: int = 1

    @property
    def is_sinusoid(self) -> bool:
        return self.e1 != 0.0 or self.e2 != 0.0

    def particular(self, k):
        th = sinusoid_phase(k, self.lag)
        return self.e0 + self.e1 * np.sin(th) + self.e2 * np.cos(th)

    def transient(self, k):
        k = np.asarray(k)
        if self.x1 == self.x2:
            return np.where(k == 0, self.c1, 0.0) + np.where(k == 1, self.c2, 0.0)
        kf = k.astype(float)
        total = np.zeros(kf.shape)
        # skip absent modes so a zero constant never meets an overflowing power
        with np.errstate(over="ignore"):
            for c, x in ((self.c1, self.x1), (self.c2, self.x2)):
                if c != 0.0:
                    total = total + c * np.power(x, kf)
        return total

    def evaluate(self, k):
        return self.transient(k) + self.particular(k)

    def as_dict(self) -> dict:
        return {"x1": self.x1, "x2": self.x2, "c1": self.c1, "c2": self.c2,
                "e0": self.e0, "e1": self.e1, "e2": self.e2, "lag": self.lag}


def fit_closed_form(roots, lambda0: float, lambda1: float, e0: float,
                    e1: float = 0.0, e2: float = 0.0, lag: int = 1) -> ClosedFormSolution:
    """Match the homogeneous constants to the two seed prices."""
    x1, x2 = roots
    shell = ClosedFormSolution(x1, x2, 0.0, 0.0, e0, e1, e2, lag)
    dev0 = lambda0 - float(shell.particular(0))
    dev1 = lambda1 - float(shell.particular(1))
    if x1 == x2:
        if x1 != 0.0:
            raise ArithmeticError("repeated nonzero root cannot arise from these recursions")
        return ClosedFormSolution(x1, x2, dev0, dev1, e0, e1, e2, lag)
    c1 = (dev1 - x2 * dev0) / (x1 - x2)
    c2 = (x1 * dev0 - dev1) / (x1 - x2)
    return ClosedFormSolution(x1, x2, c1, c2, e0, e1, e2, lag)


def closed_form_constant(params: MarketParams, d: float, lambda0: float, lambda1: float,
                         model: Model = Model.PRICE_MEMORY) -> ClosedFormSolution:
    model = Model(model)
    if model is Model.PRICE_MEMORY:
        roots = roots_price_memory(params.epsilon)
    elif model is Model.PC_MEMORY:
        roots = roots_pc_memory(params.alpha, params.gamma, params.rho)
    else:
        raise ValueError("no closed form for the static model")
    return fit_closed_form(roots, lambda0, lambda1, fixed_point(params.alpha, d)[0])


def sinusoid_particular(epsilon: float, mu: float, amplitude: float):
    """Coefficients (e0, e1, e2) of the periodic price response to sinusoidal demand."""
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon!r}")
    den = 1.0 + (SQRT3 - 1.0) * epsilon + (2.0 - SQRT3) * epsilon ** 2
    e1 = (1.0 + epsilon * (SQRT3 - 1.0) / 2.0) / den * amplitude
    e2 = (epsilon * (1.0 - SQRT3) / 2.0) / den * amplitude
    return float(mu), e1, e2


def closed_form_variable(params: MarketParams, mu: float, amplitude: float,
                         lambda0: float, lambda1: float, lag: int = 1) -> ClosedFormSolution:
    """Price memory closed form under 12-hour sinusoidal demand.

    ``lag=1`` matches the simulated closed loop; ``lag=0`` matches the
    recursion that pairs price[k] with d[k] (see simulate_price_recursion).
    """
    eps = params.epsilon
    e0, e1, e2 = sinusoid_particular(eps, mu, amplitude)
    return fit_closed_form(roots_price_memory(eps), lambda0, lambda1, e0, e1, e2, lag)


@dataclass(frozen=True)
class LimitingSinusoid:
    mean: float
    magnitude: float
    phase_shift: float

    def value(self, k, lag: int = 1):
        return self.mean + self.magnitude * np.sin(sinusoid_phase(k, lag) + self.phase_shift)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "magnitude": self.magnitude, "phase_shift": self.phase_shift}


def limiting_sinusoid(epsilon: float, mu: float, amplitude: float) -> LimitingSinusoid:
    """Periodic orbit the stable price memory loop converges to under sinusoidal demand."""
    if not 0 <= epsilon < 0.5:
        raise ValueError(f"no limiting sinusoid unless 0 <= epsilon < 1/2, got {epsilon!r}")
    _, e1, e2 = sinusoid_particular(epsilon, mu, amplitude)
    magnitude = math.hypot(e1, e2)
    if amplitude == 0:
        return LimitingSinusoid(float(mu), 0.0, 0.0)
    denominator = SQRT3 * e2 + e1
    # principal arctan branch is only valid while this stays positive
    assert denominator > 0, f"phase branch ambiguity at epsilon={epsilon}"
    phase = math.pi / 3.0 + math.atan((e2 - SQRT3 * e1) / denominator)
    return LimitingSinusoid(float(mu), magnitude, phase)


# --- stability sweeps -----------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    coords: dict
    analytic_stable: bool
    empirical_stable: bool
    spectral_radius: float
    near_boundary: bool

    @property
    def agrees(self) -> bool:
        return self.near_boundary or self.analytic_stable == self.empirical_stable


def _empirical_stable(model, params, steps, d, seeds) -> bool:
    config = SimulationConfig(model, params, DemandProfile.constant(d), seeds[0], seeds[1], steps)
    return not simulate(config).diverged


def _check_grid_size(count: int):
    if count > 1_000_000:
        raise ValueError(f"sweep grid has {count} points, limit is 1e6")


def stability_sweep_epsilon(epsilons: Iterable[float], beta: float = 4.0, steps: int = 2000,
                            d: float = 1.0, seeds=(0.0, 0.0)) -> list:
    """Analytic verdict vs. simulation for the price memory model over epsilon = alpha/beta.

    Every epsilon must be positive since the simulation needs alpha > 0.  The
    seeds default to zero prices so every run starts off equilibrium.
    """
    eps_values = sorted(float(e) for e in epsilons)
    _check_grid_size(len(eps_values))
    if eps_values and not eps_values[0] > 0:
        raise ValueError("epsilon sweep values must be > 0")
    points = []
    for eps in eps_values:
        report = is_stable_price_memory(eps)
        params = MarketParams(alpha=eps * beta, beta=beta)
        empirical = _empirical_stable(Model.PRICE_MEMORY, params, steps, d, seeds)
        near = abs(eps - 0.5) <= BOUNDARY_BAND
        points.append(SweepPoint({"epsilon": eps}, report.stable, empirical, report.spectral_radius, near))
    return points


def stability_sweep_pc(alphas: Iterable[float], gammas: Iterable[float], rhos: Iterable[float],
                       steps: int = 2000, d: float = 1.0, seeds=(0.0, 0.0)) -> list:
    """Same comparison for the price-and-consumption memory model over an (alpha, gamma, rho) grid."""
    grid = list(product(sorted(set(map(float, alphas))), sorted(set(map(float, gammas))),
                        sorted(set(map(float, rhos)))))
    _check_grid_size(len(grid))
    points = []
    for alpha, gamma, rho in grid:
        report = is_stable_pc_memory(alpha, gamma, rho)
        params = MarketParams(alpha=alpha, gamma=gamma, rho=rho)
        empirical = _empirical_stable(Model.PC_MEMORY, params, steps, d, seeds)
        near = abs(rho - (alpha - gamma / 2.0)) <= BOUNDARY_BAND
        points.append(SweepPoint({"alpha": alpha, "gamma": gamma, "rho": rho},
                                 report.stable, empirical, report.spectral_radius, near))
    return points


def closed_form_for(model: Model, params: MarketParams, demand: DemandProfile,
                    lambda0: float, lambda1: float) -> Optional[ClosedFormSolution]:
    """Closed-form price path matching :func:`simulate`, when one is known."""
    model = Model(model)
    if model is Model.STATIC:
        return None
    if demand.kind == "constant":
        return closed_form_constant(params, demand.d, lambda0, lambda1, model)
    if demand.kind == "sinusoid" and model is Model.PRICE_MEMORY:
        return closed_form_variable(params, demand.mu, demand.amplitude, lambda0, lambda1, lag=1)
    return None
