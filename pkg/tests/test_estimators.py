import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from truncdq import estimators as est
from truncdq.envs.random_env import random_finite
from truncdq.mdp import Bernoulli, ConfigurationError, EstimationError, Switchback, Trajectory, simulate, simulate_many
from truncdq.validate import naive_truncated_dq

finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def trajectories(draw, max_len=40):
    T = draw(st.integers(1, max_len))
    z = draw(hnp.arrays(np.int64, T, elements=st.integers(0, 1)))
    y = draw(hnp.arrays(np.float64, T, elements=finite))
    return z, y


@given(trajectories(), st.data(), st.floats(0.05, 0.95))
def test_window_sums_bit_identical_to_naive_loop(zy, data, theta):
    z, y = zy
    k = data.draw(st.integers(0, len(z) - 1))
    assert est.truncated_dq((z, y), k, theta) == naive_truncated_dq(z, y, k, theta)


@given(trajectories())
def test_k_zero_is_dm(zy):
    assert est.truncated_dq(zy, 0) == est.dm(zy)


@given(trajectories(max_len=25))
def test_k_scan_matches_per_k(zy):
    T = len(zy[0])
    ks = sorted({0, T // 3, T // 2, T - 1})
    scan = est.k_scan(zy, ks)
    for k in ks:
        assert scan[k] == est.truncated_dq(zy, k)
    assert est.untruncated_dq(zy) == scan[T - 1]


def test_hand_computed_example():
    z = np.array([1, 0, 1, 0])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    # windows for k=1: 3, 5, 7, 4; weights 2, -2, 2, -2
    assert est.truncated_dq((z, y), 1) == (6 - 10 + 14 - 8) / 4
    assert est.dm((z, y)) == (2 - 4 + 6 - 8) / 4


def test_batched_rows_match_single():
    env = random_finite(3, 20, seed=0)
    batch = simulate_many(env, Bernoulli(), 1, 6)
    vals = est.truncated_dq(batch, 3)
    for i in range(6):
        assert vals[i] == est.truncated_dq(batch[i], 3)


def test_weights_and_k_validation():
    zy = (np.array([0, 1, 1]), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ConfigurationError):
        est.truncated_dq(zy, 3)
    with pytest.raises(ConfigurationError):
        est.dm(zy, theta=1.0)
    with pytest.raises(EstimationError):
        est.dm((np.array([0, 1]), np.array([1.0])))


def test_non_finite_estimate_rejected():
    with pytest.raises(EstimationError):
        est.EstimateReport("dm", {}, math.nan)


def test_report_csv_row():
    r = est.EstimateReport("truncated_dq", {"k": 3}, 0.25, seed=7, horizon=100)
    assert r.estimator_id == "truncated_dq(k=3)"
    assert r.to_csv() == "truncated_dq(k=3),k=3,0.25,7,100\n"


def test_weighted_theta_unbiased_on_average():
    env = random_finite(3, 10, seed=9)
    from truncdq import truth as gt

    batch = simulate_many(env, Bernoulli(0.3), 4, 40_000)
    vals = est.truncated_dq(batch, 2, theta=0.3)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    # E[w_u] = 0 and the 1/theta, -1/(1-theta) weights target a gradient at theta=0.3;
    # at k=0 it is the direct effect under pi_0.3
    laws = gt.state_laws(env, 0.3)
    direct = np.mean([laws[t] @ (env.reward_means[:, 1] - env.reward_means[:, 0]) for t in range(10)])
    assert abs(est.dm(batch, 0.3).mean() - direct) <= 4 * se
    assert np.isfinite(vals).all()


# ----------------------------------------------------------------------
# switchback


def test_block_aggregate_and_errors():
    z = np.array([1, 1, 0, 0, 0, 1])
    y = np.arange(6.0)
    b = np.array([0, 0, 1, 1, 1, 2])
    zb, sums, counts = est.block_aggregate(z, y, b)
    np.testing.assert_array_equal(zb, [1, 0, 1])
    np.testing.assert_array_equal(sums, [1.0, 9.0, 5.0])
    np.testing.assert_array_equal(counts, [2, 3, 1])
    with pytest.raises(EstimationError):
        est.block_aggregate(np.array([1, 0]), y[:2], np.array([0, 0]))


def test_block_dq_k0_equals_step_dm():
    env = random_finite(3, 40, seed=2)
    tr = simulate(env, Switchback(4), 5, 0)
    assert est.truncated_dq_blocks(tr, 0) == pytest.approx(est.dm(tr), abs=1e-14)


def test_block_dq_with_unit_blocks_equals_step_dq():
    env = random_finite(3, 30, seed=2)
    tr = simulate(env, Bernoulli(), 5, 0)
    for k in (0, 1, 4):
        assert est.truncated_dq_blocks(tr, k, blocks=np.arange(30)) == pytest.approx(est.truncated_dq(tr, k), abs=1e-13)


def test_switchback_bc_balanced_no_burn_in_is_block_dm():
    z = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    y = np.array([3.0, 5.0, 1.0, 2.0, 4.0, 4.0, 0.0, 1.0])
    tr = Trajectory(np.zeros(8, int), z, y, 0, {}, blocks=np.arange(8) // 2)
    block_dm = np.mean([4.0, 4.0]) - np.mean([1.5, 0.5])
    assert est.switchback_bc(tr, 2, 0) == block_dm
    # burn-in of one step keeps only the second step of each block
    assert est.switchback_bc(tr, 2, 1) == np.mean([5.0, 4.0]) - np.mean([2.0, 1.0])


def test_switchback_bc_errors():
    z = np.ones(6, int)
    tr = Trajectory(np.zeros(6, int), z, np.ones(6), 0, {}, blocks=np.arange(6) // 3)
    with pytest.raises(EstimationError):
        est.switchback_bc(tr, 3, 0)
    with pytest.raises(ConfigurationError):
        est.switchback_bc(tr, 3, 3)
    bern = Trajectory(np.zeros(6, int), z, np.ones(6), 0, {})
    with pytest.raises(ConfigurationError):
        est.switchback_bc(bern, 3, 0)


def test_switchback_bc_event_times():
    times = np.array([0.5, 3.0, 6.0, 8.5, 12.0, 14.0])
    b = (times // 5).astype(int)
    z = np.array([1, 1, 0, 0, 1, 1])
    y = np.array([10.0, 20.0, 1.0, 2.0, 30.0, 40.0])
    tr = Trajectory(np.zeros(6, int), z, y, 0, {}, blocks=b, times=times)
    # burn-in of 2 minutes drops t=0.5 and t=6.0 (first 2 minutes of blocks 0 and 1)
    assert est.switchback_bc(tr, 5, 2) == np.mean([20.0, 35.0]) - 2.0


# ----------------------------------------------------------------------
# tabular baselines


def test_tabular_fit_counts():
    x = np.array([0, 1, 1, 0, 1])
    z = np.array([1, 1, 0, 1, 0])
    y = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    m = est.fit_tabular(x, z, y)
    np.testing.assert_allclose(m.P[1, 0], [0.0, 1.0])
    np.testing.assert_allclose(m.P[1, 1], [0.0, 1.0])
    np.testing.assert_allclose(m.P[0, 1], [1.0, 0.0])
    assert (0, 0) in m.unvisited
    np.testing.assert_allclose(m.r, [[0.0, 2.5], [4.0, 2.0]])


def test_stationary_baselines_recover_iid_effect():
    from truncdq.envs.random_env import iid_env

    env = iid_env(3, 3000, seed=4, effect=1.0)
    tr = simulate(env, Bernoulli(), 2, 0)
    for mode in ("model_ope", "stationary_dq"):
        val, diag = est.stationary_model_baseline(tr, mode)
        assert val == pytest.approx(1.0, abs=0.1)
        assert diag["num_states"] == 3
    with pytest.raises(ConfigurationError):
        est.stationary_model_baseline(tr, "lstd")


def test_stationary_law_and_multichain_guard():
    P = np.array([[0.9, 0.1], [0.3, 0.7]])
    pi = est._stationary(P)
    np.testing.assert_allclose(pi, [0.75, 0.25], atol=1e-12)
    with pytest.raises(EstimationError, match="unichain"):
        est._stationary(np.eye(2))
