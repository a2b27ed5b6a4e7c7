import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safeplan import returns


def nstep_expansion(rewards, values, gamma, lam):
    """Independent non-recursive oracle: weighted sum of n-step returns."""
    h = len(rewards) - 1
    out = np.empty(h + 1)
    out[h] = values[h]
    for t in range(h):
        span = h - t

        def g(n):
            acc = sum(gamma**i * rewards[t + i] for i in range(n))
            return acc + gamma**n * values[t + n]

        total = sum((1 - lam) * lam ** (n - 1) * g(n) for n in range(1, span))
        total += lam ** (span - 1) * g(span)
        out[t] = total
    return out


def test_lambda_return_hand_example():
    s = returns.RolloutScalars(
        rewards=np.array([1.0, 2.0, 0.0]),
        costs=np.zeros(3),
        values_reward=np.array([0.0, 4.0, 8.0]),
        values_cost=np.zeros(3),
        discount=0.5,
        reward_lambda=0.5,
    )
    np.testing.assert_allclose(returns.lambda_return(s, "reward"), [3.5, 6.0, 8.0])


def test_lambda_zero_is_one_step_bootstrap(rng):
    h = 6
    r = rng.normal(size=h + 1)
    v = rng.normal(size=h + 1)
    out = returns.lambda_return_arrays(r, v, 0.9, 0.0)
    for t in range(h):
        assert np.isclose(out[t], r[t] + 0.9 * v[t + 1])
    assert out[h] == v[h]


def test_terminal_entry_is_value(rng):
    r = rng.normal(size=5)
    v = rng.normal(size=5)
    out = returns.lambda_return_arrays(r, v, 0.99, 0.95)
    assert out[-1] == v[-1]


def test_matches_nstep_expansion_oracle(rng):
    for _ in range(100):
        h = int(rng.integers(1, 17))
        gamma = rng.uniform(0.5, 0.999)
        lam = rng.uniform(0.0, 1.0)
        r = rng.normal(size=h + 1)
        v = rng.normal(size=h + 1)
        fast = returns.lambda_return_arrays(r, v, gamma, lam)
        slow = nstep_expansion(r, v, gamma, lam)
        np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_batched_recurrence_matches_single(rng):
    r = rng.normal(size=(4, 9))
    v = rng.normal(size=(4, 9))
    batched = returns.lambda_return_arrays(r, v, 0.95, 0.9)
    for i in range(4):
        np.testing.assert_array_equal(batched[i], returns.lambda_return_arrays(r[i], v[i], 0.95, 0.9))


@settings(max_examples=50)
@given(st.integers(0, 7), st.floats(1e-3, 5.0))
def test_monotone_in_rewards(t_bump, bump):
    rng = np.random.default_rng(9)
    r = rng.normal(size=9)
    v = rng.normal(size=9)
    base = returns.lambda_return_arrays(r, v, 0.9, 0.7)
    r2 = r.copy()
    r2[t_bump] += bump
    bumped = returns.lambda_return_arrays(r2, v, 0.9, 0.7)
    assert np.all(bumped[: t_bump + 1] >= base[: t_bump + 1] - 1e-12)


def test_kind_selects_channel(rng):
    s = returns.RolloutScalars(
        rewards=rng.normal(size=6),
        costs=rng.uniform(0, 1, size=6),
        values_reward=rng.normal(size=6),
        values_cost=rng.uniform(0, 1, size=6),
        discount=0.99,
        reward_lambda=0.9,
        cost_lambda=0.5,
    )
    np.testing.assert_array_equal(
        returns.lambda_return(s, "cost"),
        returns.lambda_return_arrays(s.costs, s.values_cost, 0.99, 0.5),
    )
    with pytest.raises(ValueError):
        returns.lambda_return(s, "both")


def test_rollout_scalars_validation():
    with pytest.raises(ValueError):
        returns.RolloutScalars(
            rewards=np.zeros(3), costs=np.zeros(4),
            values_reward=np.zeros(3), values_cost=np.zeros(3),
        )
    with pytest.raises(ValueError):
        returns.RolloutScalars(
            rewards=np.zeros(3), costs=-np.ones(3),
            values_reward=np.zeros(3), values_cost=np.zeros(3),
        )


def test_discounted_variant_reduces_to_scalar(rng):
    r = rng.normal(size=8)
    v = rng.normal(size=8)
    d = np.full(8, 0.97)
    np.testing.assert_allclose(
        returns.discounted_lambda_return(r, v, d, 0.9),
        returns.lambda_return_arrays(r, v, 0.97, 0.9),
        atol=1e-14,
    )


def test_discounted_variant_zero_discount_cuts_bootstrap(rng):
    r = rng.normal(size=5)
    v = rng.normal(size=5)
    d = np.zeros(5)
    out = returns.discounted_lambda_return(r, v, d, 0.9)
    np.testing.assert_allclose(out[:-1], r[:-1])


def test_horizon_cost_examples():
    assert returns.horizon_cost(np.zeros(4), 0.9) == 0.0
    assert returns.horizon_cost(np.ones(3), 1.0) == 3.0
    assert np.isclose(returns.horizon_cost(np.array([1.0, 2.0, 4.0]), 0.5), 3.0)


def test_horizon_cost_matches_direct_sum(rng):
    for _ in range(50):
        h = int(rng.integers(1, 20))
        gamma = rng.uniform(0.1, 1.0)
        c = rng.uniform(0, 2, size=h)
        direct = sum(gamma**i * c[i] for i in range(h))
        assert np.isclose(returns.horizon_cost(c, gamma), direct, atol=1e-12)
        assert returns.horizon_cost(c, gamma) >= 0.0


def test_horizon_cost_batch(rng):
    c = rng.uniform(0, 1, size=(6, 10))
    batched = returns.horizon_cost_batch(c, 0.97)
    for i in range(6):
        assert np.isclose(batched[i], returns.horizon_cost(c[i], 0.97))


def test_episode_scaled_cost():
    assert returns.episode_scaled_cost(0.0, 15, 300) == 0.0
    assert returns.episode_scaled_cost(3.0, 15, 300) == 60.0
    scaled = returns.episode_scaled_cost(0.05, 15, 300)
    assert np.isclose(scaled, 1.0)
    assert scaled < 2.0  # classified safe downstream
    with pytest.raises(ValueError):
        returns.episode_scaled_cost(1.0, 0, 300)


def test_episode_scaled_cost_linear(rng):
    j = rng.uniform(0, 5)
    a = returns.episode_scaled_cost(j, 15, 300)
    b = returns.episode_scaled_cost(2 * j, 15, 300)
    assert np.isclose(b, 2 * a)
