import numpy as np
import pytest

from safeplan import lagrange


def test_augmented_positive_branch_example():
    ctl = lagrange.AugmentedLagrangian(lam=0.01, mu=1e-6)
    psi = ctl.penalty_and_update(1.0)
    assert psi == 0.01 * 1.0 + 0.5e-6
    assert ctl.lam == 0.010001


def test_augmented_negative_branch_example():
    ctl = lagrange.AugmentedLagrangian(lam=0.01, mu=1e-6)
    psi = ctl.penalty_and_update(-1e5)
    assert psi == -(0.01**2) / (2e-6)
    assert np.isclose(psi, -50.0, rtol=1e-12)  # exact in decimal arithmetic
    assert ctl.lam == 0.0


def test_augmented_zero_gap_is_neutral():
    ctl = lagrange.AugmentedLagrangian(lam=0.01, mu=1e-6)
    psi = ctl.penalty_and_update(0.0)
    assert psi == 0.0
    assert ctl.lam == 0.01


def test_augmented_penalty_value_is_pure():
    ctl = lagrange.AugmentedLagrangian(lam=0.05, mu=1e-3)
    before = ctl.lam
    v1 = ctl.penalty_value(2.0)
    v2 = ctl.penalty_value(2.0)
    assert v1 == v2
    assert ctl.lam == before


def test_augmented_multiplier_never_negative(rng):
    ctl = lagrange.AugmentedLagrangian(lam=0.01, mu=1e-2)
    for delta in rng.normal(scale=50.0, size=500):
        ctl.penalty_and_update(float(delta))
        assert ctl.lam >= 0.0


def test_augmented_penalty_continuous_at_branch_boundary():
    # boundary: lam + mu*delta = 0  =>  delta* = -lam/mu
    ctl = lagrange.AugmentedLagrangian(lam=0.3, mu=0.02)
    boundary = -ctl.lam / ctl.mu
    lo = ctl.penalty_value(boundary - 1e-9)
    hi = ctl.penalty_value(boundary + 1e-9)
    assert abs(lo - hi) < 1e-8


def test_augmented_schedule_paper_floor():
    ctl = lagrange.AugmentedLagrangian(mu=1e-6, nu=5e-9, mu_floor=1.0)
    assert ctl.schedule_penalty() == 1.0


def test_augmented_schedule_geometric_growth():
    ctl = lagrange.AugmentedLagrangian(mu=1e-6, nu=5e-9, mu_floor=0.0)
    mu1 = ctl.schedule_penalty()
    assert np.isclose(mu1, 1e-6 * (1 + 5e-9), rtol=1e-15)
    prev = mu1
    for _ in range(20):
        cur = ctl.schedule_penalty()
        assert cur > prev
        prev = cur


def test_augmented_validation():
    with pytest.raises(ValueError):
        lagrange.AugmentedLagrangian(mu=0.0)
    ctl = lagrange.AugmentedLagrangian(lam=-5.0)
    assert ctl.lam == 0.0


def test_pid_first_episode_example():
    ctl = lagrange.PidLagrangian(kp=0.01, ki=0.1, kd=0.01, cost_limit=2.0)
    lam = ctl.update(5.0)
    # D=3, P=5, I=3 -> 0.01*5 + 0.1*3 + 0.01*3 = 0.38
    assert np.isclose(lam, 0.38, atol=1e-15)
    assert ctl.integral == 3.0
    assert ctl.prev_cost == 5.0


def test_pid_at_limit_fixed_point():
    ctl = lagrange.PidLagrangian(cost_limit=2.0)
    ctl.update(5.0)
    frozen_integral = ctl.integral
    lams = [ctl.update(2.0) for _ in range(10)]
    assert ctl.integral == frozen_integral  # D=0 stops accumulating
    # P is 0 after the first repeat, D=0: lam settles at ki * I
    assert all(np.isclose(l, ctl.ki * frozen_integral) for l in lams[1:])


def test_pid_clamps_at_upper_bound():
    ctl = lagrange.PidLagrangian(cost_limit=2.0, lam_max=0.75)
    for _ in range(50):
        lam = ctl.update(100.0)
        assert lam <= 0.75
    assert ctl.lam == 0.75


def test_pid_nondecreasing_under_sustained_violation():
    ctl = lagrange.PidLagrangian(cost_limit=2.0)
    prev = 0.0
    for _ in range(30):
        lam = ctl.update(4.0)
        assert lam >= prev - 1e-15 or lam == 0.75
        prev = lam


def test_pid_integral_drains_under_compliance():
    ctl = lagrange.PidLagrangian(cost_limit=2.0)
    ctl.update(10.0)
    start_integral = ctl.integral
    slack = 1.0  # episodes at cost_limit - slack
    expected_episodes = int(np.ceil(start_integral / slack))
    for i in range(expected_episodes):
        ctl.update(2.0 - slack)
    assert ctl.integral == 0.0


def test_pid_multiplier_never_negative():
    ctl = lagrange.PidLagrangian(cost_limit=2.0)
    ctl.update(5.0)
    for _ in range(20):
        lam = ctl.update(0.0)
        assert lam >= 0.0
    assert ctl.lam == 0.0


def test_pid_rejects_negative_cost():
    with pytest.raises(ValueError):
        lagrange.PidLagrangian().update(-1.0)


def test_pid_recomputed_from_scratch_each_episode():
    # lam is not accumulated into itself: a compliant episode after violations
    # drops lam back to the PI terms alone
    ctl = lagrange.PidLagrangian(kp=0.5, ki=0.0, kd=0.0, cost_limit=2.0)
    ctl.update(10.0)  # P = 10 -> lam = 0.75 (clamped)
    lam = ctl.update(1.0)  # P = 0, I disabled, D < 0 -> lam = 0
    assert lam == 0.0
