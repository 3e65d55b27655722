import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtmarket.core import (
    DemandProfile,
    MarketParams,
    Trajectory,
    demand_constant,
    demand_sinusoid,
)


def test_demand_constant_fill():
    assert demand_constant(1, 3).tolist() == [1.0, 1.0, 1.0]
    assert demand_constant(0, 2).tolist() == [0.0, 0.0]


@pytest.mark.parametrize("d, n", [(-1.0, 3), (1.0, 0), (float("nan"), 2)])
def test_demand_constant_rejects(d, n):
    with pytest.raises(ValueError):
        demand_constant(d, n)


def test_constant_demand_gives_fixed_point_price():
    d = demand_constant(1, 500)
    assert np.all(MarketParams(alpha=1.92, beta=4).marginal_cost(d) == 3.84)


def test_sinusoid_landmarks():
    mu, amp, alpha = 3.84, 1.0, 1.92
    d = demand_sinusoid(mu, amp, alpha, 24)
    assert d[8] == pytest.approx((mu + amp) / (2 * alpha), rel=1e-15)
    assert d[5] == pytest.approx(mu / (2 * alpha), rel=1e-15)
    assert d[2] == pytest.approx((mu - amp) / (2 * alpha), rel=1e-15)
    assert int(np.argmax(d[:12])) == 8
    assert int(np.argmin(d[:12])) == 2
    assert int(np.argmin(d[12:])) + 12 == 14


def test_sinusoid_rejects_negative_demand():
    with pytest.raises(ValueError):
        demand_sinusoid(0.5, 1.0, 1.0, 12)
    with pytest.raises(ValueError):
        demand_sinusoid(1.0, -0.1, 1.0, 12)
    with pytest.raises(ValueError):
        demand_sinusoid(1.0, 0.5, 0.0, 12)


@given(
    mu=st.floats(0.0, 100.0),
    frac=st.floats(0.0, 1.0),
    alpha=st.floats(1e-3, 100.0),
)
def test_sinusoid_exactly_periodic_and_scaled(mu, frac, alpha):
    amp = mu * frac
    d = demand_sinusoid(mu, amp, alpha, 60)
    assert np.array_equal(d[12:], d[:-12])
    k = np.arange(60)
    target = mu + amp * np.sin((k - 5) * np.pi / 6)
    assert np.all(np.abs(2 * alpha * d - target) <= 1e-12 * max(mu, 1e-300) + 1e-300)
    assert np.all(d >= 0)


def test_market_params_mirrors_missing_curvature():
    p = MarketParams(alpha=2.04, gamma=4.0)
    assert p.beta == 4.0
    q = MarketParams(alpha=1.92, beta=4.0)
    assert q.gamma == 4.0
    assert q.epsilon == pytest.approx(0.48)
    assert p.epsilon_tilde == pytest.approx(0.51)
    assert p.v_tilde == 0.125


@given(
    bad=st.one_of(st.floats(max_value=0.0), st.just(float("nan")), st.just(float("inf"))),
    slot=st.sampled_from(["alpha", "beta", "gamma"]),
)
def test_market_params_rejects_nonpositive(bad, slot):
    kwargs = {"alpha": 1.0, "beta": 1.0, "gamma": 1.0}
    kwargs[slot] = bad
    with pytest.raises(ValueError):
        MarketParams(**kwargs)


@given(rho=st.floats(max_value=-1e-300, allow_infinity=True))
def test_market_params_rejects_negative_rho(rho):
    with pytest.raises(ValueError):
        MarketParams(alpha=1.0, beta=1.0, rho=rho)


def test_market_params_needs_a_curvature():
    with pytest.raises(ValueError):
        MarketParams(alpha=1.0)


def test_market_params_frozen():
    p = MarketParams(alpha=1.0, beta=2.0)
    with pytest.raises(AttributeError):
        p.alpha = 3.0


def test_demand_profile_variants():
    assert DemandProfile.constant(2.0).values(3).tolist() == [2.0, 2.0, 2.0]
    assert DemandProfile.constant(2.0).period == 1
    sin = DemandProfile.sinusoid(3.0, 1.0, 1.5)
    assert sin.period == 12
    assert np.array_equal(sin.values(30), demand_sinusoid(3.0, 1.0, 1.5, 30))
    custom = DemandProfile.custom([1, 2, 3])
    assert custom.period is None
    assert custom.values(2).tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        custom.values(4)
    with pytest.raises(ValueError):
        DemandProfile.custom([1.0, -1.0])
    with pytest.raises(ValueError):
        DemandProfile("weekly")


def test_trajectory_lengths_and_readonly():
    price = np.array([1.0, 2.0])
    traj = Trajectory(price, [1.0, 1.0], [1.0, 1.0], [0.0, 0.0])
    assert len(traj) == 2
    with pytest.raises(ValueError):
        traj.price[0] = 5.0
    # the caller's array is copied, not frozen
    price[0] = 7.0
    assert traj.price[0] == 1.0
    with pytest.raises(ValueError):
        Trajectory([1.0], [1.0, 2.0], [1.0], [0.0])
    with pytest.raises(ValueError):
        Trajectory([1.0], [1.0], [1.0], [0.0], forecast=[1.0, 2.0])


def test_as_dict_contains_ratios():
    d = MarketParams(alpha=1.0, beta=4.0).as_dict()
    assert d["epsilon"] == 0.25 and d["epsilon_tilde"] == 0.25
    assert math.isclose(d["rho"], 0.0)
