import math

import pytest
from hypothesis import given, strategies as st

from rtmarket.policies import (
    ConsumerState,
    pc_memory_policy,
    price_memory_policy,
    static_policy,
    theorem1_policy,
    theorem1_terminal,
)

price = st.floats(-50.0, 50.0)
energy = st.floats(0.0, 20.0)
curv = st.floats(0.01, 50.0)


@pytest.mark.parametrize(
    "lam, prev, d, beta, expected",
    [(3, 3, 1, 4, 1.0), (4, 3, 1, 4, 0.875), (2, 3, 0, 4, 0.125)],
)
def test_price_memory_examples(lam, prev, d, beta, expected):
    assert price_memory_policy(lam, prev, d, beta) == expected


def test_price_memory_can_sell_back():
    assert price_memory_policy(10.0, 0.0, 0.5, 1.0) < 0


@pytest.mark.parametrize("beta", [0.0, -1.0, float("nan")])
def test_price_memory_rejects_beta(beta):
    with pytest.raises(ValueError):
        price_memory_policy(1.0, 1.0, 1.0, beta)


def test_pc_memory_hand_value():
    state = ConsumerState(prev_price=0.0, prev_consumption=1.0, prev_demand=1.0)
    u = pc_memory_policy(state, 1.0, 1.0, rho=0.1, gamma=4.0)
    assert u == pytest.approx((1 + (1 / 8) * (-1 + 0.2)) / (0.025 + 1), rel=1e-15)
    assert u == pytest.approx(0.87805, abs=1e-5)


@given(lam=price, prev=price, d=energy, u_prev=st.floats(-20.0, 20.0), d_prev=energy, beta=curv)
def test_pc_memory_reduces_to_price_memory(lam, prev, d, u_prev, d_prev, beta):
    state = ConsumerState(prev, u_prev, d_prev)
    assert pc_memory_policy(state, lam, d, 0.0, beta) == price_memory_policy(lam, prev, d, beta)


@given(lam=price, d=energy, rho=st.floats(0.0, 10.0), gamma=curv)
def test_pc_memory_fixed_point(lam, d, rho, gamma):
    state = ConsumerState(lam, d, d)
    assert pc_memory_policy(state, lam, d, rho, gamma) == pytest.approx(d, rel=1e-12, abs=1e-12)


def test_pc_memory_rejects_params():
    state = ConsumerState(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        pc_memory_policy(state, 1.0, 1.0, rho=-0.1, gamma=1.0)
    with pytest.raises(ValueError):
        pc_memory_policy(state, 1.0, 1.0, rho=0.1, gamma=0.0)


def test_consumer_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        ConsumerState(float("inf"), 0.0, 0.0)
    with pytest.raises(ValueError):
        ConsumerState(0.0, float("nan"), 0.0)


def test_deferral_schedule_examples():
    assert theorem1_policy(2, 4, 3, 1, 4) == 0.875
    assert theorem1_policy(5, 4, 3, 1, 4) == 0.96875
    assert theorem1_policy(7, 2.5, 2.5, 1.25, 3) == 1.25


@given(lam=price, prev=price, d=energy, beta=curv)
def test_deferral_two_to_go_is_price_memory(lam, prev, d, beta):
    assert theorem1_policy(2, lam, prev, d, beta) == price_memory_policy(lam, prev, d, beta)


@pytest.mark.parametrize("k", [1, 0, -3, 2.5])
def test_deferral_rejects_short_horizon(k):
    with pytest.raises(ValueError):
        theorem1_policy(k, 1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("x, d, expected", [(0, 1, 1), (-0.5, 1, 1.5), (-2, 0, 2)])
def test_terminal_clears_backlog(x, d, expected):
    u = theorem1_terminal(x, d)
    assert u == expected
    assert x + u - d == 0


def test_static_policy():
    assert static_policy(1.0, lambda lam: max(0.0, 2.0 - lam)) == 1.0
    assert static_policy(123.0, lambda lam: 0.7) == 0.7
    assert static_policy(0.25, lambda lam: 1.0 - lam) == 0.75


def test_static_policy_domain_errors():
    with pytest.raises(ValueError):
        static_policy(-1.0, math.sqrt)
    with pytest.raises(ValueError):
        static_policy(0.0, lambda lam: 1.0 / lam)
    with pytest.raises(ValueError):
        static_policy(1.0, lambda lam: float("inf"))
