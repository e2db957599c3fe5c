import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncdq import truth as gt
from truncdq.envs.queue import QueueConfig, arrival_multiplier, arrival_rates, build_queue
from truncdq.envs.rates import (
    BINS,
    DAYS,
    RateTableError,
    default_rate_table,
    load_rate_table,
    synthetic_rate_table,
    write_rate_table,
)
from truncdq.envs.rideshare import RideshareConfig, RideshareSim, block_level, travel_minutes
from truncdq.envs.two_state import TwoStateConfig, build_two_state, mixing_targets, shift_toward_state1
from truncdq.mdp import AlwaysControl, AlwaysTreat, Bernoulli, ConfigurationError, Switchback, kernel_deviation, simulate

# ----------------------------------------------------------------------
# two-state


def test_two_state_rows_are_stochastic_and_deviation_bounded():
    env = build_two_state(TwoStateConfig(horizon=500, kernel_shift=0.1, seed=3))
    P = env.kernels.P
    assert (P >= 0).all()
    np.testing.assert_allclose(P.sum(axis=-1), 1.0, atol=1e-15)
    assert kernel_deviation(env) <= 0.1 + 1e-15


def test_two_state_deviation_equals_shift_without_clipping():
    env = build_two_state(TwoStateConfig(horizon=200, kernel_shift=0.05, noise_std=0.0, seed=1))
    assert kernel_deviation(env) == pytest.approx(0.05, abs=1e-15)


def test_mixing_targets_have_requested_tv():
    for g in (0.1, 0.5, 0.7):
        for persistent in (True, False):
            mu = mixing_targets(g, persistent)
            assert 0.5 * np.abs(mu[0] - mu[1]).sum() == pytest.approx(g)


def test_shift_toward_state1_clips():
    P0 = np.array([[0.05, 0.95], [0.6, 0.4]])
    P1 = shift_toward_state1(P0, 0.1)
    np.testing.assert_allclose(P1, [[0.0, 1.0], [0.5, 0.5]])


def test_two_state_config_errors():
    with pytest.raises(ConfigurationError):
        build_two_state(TwoStateConfig(target_mixing=1.0))
    with pytest.raises(ConfigurationError):
        build_two_state(TwoStateConfig(kernel_shift=1.5))
    with pytest.raises(ConfigurationError):
        build_two_state(TwoStateConfig(shift_by_state=(1.0, 2.0)))


def test_two_state_seed_controls_build_and_shift_reuses_noise():
    a = build_two_state(TwoStateConfig(horizon=50, seed=4, kernel_shift=0.02))
    b = build_two_state(TwoStateConfig(horizon=50, seed=4, kernel_shift=0.2))
    c = build_two_state(TwoStateConfig(horizon=50, seed=5))
    np.testing.assert_array_equal(a.kernels.P[:, 0], b.kernels.P[:, 0])
    np.testing.assert_array_equal(a.reward_means, b.reward_means)
    assert not np.array_equal(a.kernels.P[:, 0], c.kernels.P[:, 0])


def test_two_state_fixed_rewards():
    env = build_two_state(TwoStateConfig(horizon=10, reward_means=((0, 1), (0, -1))))
    np.testing.assert_array_equal(env.reward_means, [[0, 1], [0, -1]])


# ----------------------------------------------------------------------
# rate tables


def test_bundled_table_matches_generator(tmp_path):
    np.testing.assert_allclose(default_rate_table(), synthetic_rate_table(), atol=1e-4)
    path = tmp_path / "r.csv"
    write_rate_table(synthetic_rate_table(), path)
    np.testing.assert_allclose(load_rate_table(path), synthetic_rate_table(), atol=1e-4)


def _table_lines():
    return ["day,bin,rate"] + [f"{d},{b},1.0" for d in range(DAYS) for b in range(BINS)]


@given(st.integers(0, DAYS * BINS - 1), st.sampled_from(["drop", "dup", "neg", "garbage", "day"]))
def test_rate_table_errors_name_the_problem(idx, fault):
    import tempfile

    lines = _table_lines()
    row = idx + 2  # header is row 1
    if fault == "drop":
        del lines[idx + 1]
        expect = "missing cell"
    elif fault == "dup":
        lines.append(lines[idx + 1])
        row = len(lines)
        expect = f"row {row}: duplicate"
    elif fault == "neg":
        d, b, _ = lines[idx + 1].split(",")
        lines[idx + 1] = f"{d},{b},-1"
        expect = f"row {row}"
    elif fault == "garbage":
        lines[idx + 1] = "x,y,z"
        expect = f"row {row}"
    else:
        _, b, r = lines[idx + 1].split(",")
        lines[idx + 1] = f"9,{b},{r}"
        expect = f"row {row}: day 9"
    with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as fh:
        fh.write("\n".join(lines) + "\n")
    with pytest.raises(RateTableError, match=expect):
        load_rate_table(fh.name)


def test_rate_table_header_required(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("d,b,r\n")
    with pytest.raises(RateTableError, match="row 1"):
        load_rate_table(p)


# ----------------------------------------------------------------------
# queue


def test_queue_horizon_and_rates():
    cfg = QueueConfig(weeks=4)
    assert cfg.horizon == 40_320
    assert QueueConfig(weeks=1).horizon == 10_080
    lam = arrival_rates(QueueConfig(weeks=1), 1.0)
    base = default_rate_table()[0, 0] * 0.9
    assert lam[0, 0] == pytest.approx(arrival_multiplier(1.0) * base)
    assert lam[0, 5] == pytest.approx(arrival_multiplier(1.0) * base / 2.0)


def test_queue_treatment_lowers_arrivals_and_queue():
    env = build_queue(QueueConfig(weeks=1))
    assert (env.kernels.up[:, 1] <= env.kernels.up[:, 0]).all()
    tau, _ = gt.exact_gate(env)
    assert tau > 0  # shorter queues under treatment with reward -X_t


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.sampled_from([0.3, 0.5, 0.7]))
def test_queue_stays_in_support(seed, theta):
    env = build_queue(QueueConfig(weeks=1, max_queue_len=6, rate_scale=2.0))
    tr = simulate(env, Bernoulli(theta), seed)
    assert tr.states.min() >= 0 and tr.states.max() <= 6
    assert (np.abs(np.diff(tr.states)) <= 1).all()


def test_queue_uniformization_error_names_cell():
    with pytest.raises(ConfigurationError, match=r"uniformization error at t=\d+, k=0"):
        build_queue(QueueConfig(weeks=1, step_minutes=5.0, rate_scale=10.0))


def test_queue_arrival_reward_variant():
    env = build_queue(QueueConfig(weeks=1, reward="arrival_joined"))
    tr = simulate(env, Bernoulli(), 0)
    assert set(np.unique(tr.rewards)) <= {0.0, 1.0}
    with pytest.raises(ConfigurationError):
        build_queue(QueueConfig(weeks=1, reward="wait"))


# ----------------------------------------------------------------------
# ride-share


def test_travel_time_symmetric():
    a = np.array([[0, 0], [3, 4]])
    b = np.array([[3, 4], [0, 0]])
    np.testing.assert_array_equal(travel_minutes(a, b, 1.0), [7, 7])
    np.testing.assert_array_equal(travel_minutes(a, a, 1.0), [0, 0])


def test_rideshare_hand_traced_dispatch():
    cfg = RideshareConfig(grid_size=5, num_drivers=1, num_arrivals=3)
    sim = RideshareSim(cfg)
    times = np.array([0.0, 1.0, 10.0])
    pickup = np.array([[2, 0], [2, 4], [4, 4]])
    dropoff = np.array([[2, 3], [0, 4], [4, 0]])
    z = np.array([0, 1, 1])
    accept_u = np.array([0.5, 0.9, 0.1])
    avail, rewards, who = sim.run_events(times, pickup, dropoff, accept_u, z, np.array([[0, 0]]))
    # rider 1: pickup 2 min away, 3-minute trip at 0.01/s -> price 1.8, ETA 120 s
    p1 = 1 / (1 + math.exp(-(-0.3 * 1.8 - 0.005 * 120 + 4.0)))
    # rider 2: driver busy until minute 5, then 1 cell away -> ETA 300 s, price 0.02*120 = 2.4
    p2 = 1 / (1 + math.exp(-(-0.3 * 2.4 - 0.005 * 300 + 4.0)))
    assert 0.5 < p1 and 0.9 > p2  # rider 1 accepts, rider 2 declines
    np.testing.assert_array_equal(avail, [1, 0, 1])
    np.testing.assert_allclose(rewards, [1.8, 0.0, 4.8])
    np.testing.assert_array_equal(who, [0, -1, 0])


def test_rideshare_ties_go_to_lowest_index():
    sim = RideshareSim(RideshareConfig(grid_size=5, num_drivers=3, num_arrivals=1))
    start = np.array([[4, 4], [1, 2], [2, 1]])  # drivers 1 and 2 both 1 cell from (1, 1)
    _, _, who = sim.run_events(np.array([0.0]), np.array([[1, 1]]), np.array([[3, 3]]), np.zeros(1), np.zeros(1, int), start)
    assert who[0] == 1


def test_rideshare_validation():
    with pytest.raises(ConfigurationError):
        RideshareSim(RideshareConfig(num_drivers=0))


def test_rideshare_simulation_shapes_and_pairing():
    sim = RideshareSim(RideshareConfig(num_arrivals=2000, num_drivers=20, grid_size=10))
    a = sim.simulate(Switchback(10), 1, 0)
    b = sim.simulate(Switchback(10), 1, 0)
    assert len(a) == 2000 and np.array_equal(a.rewards, b.rewards)
    assert (np.diff(a.times) >= 0).all()
    np.testing.assert_array_equal(a.blocks, (a.times // 10).astype(int))
    for blk in np.unique(a.blocks):
        assert len(set(a.actions[a.blocks == blk])) == 1
    t1, t0 = sim.simulate(AlwaysTreat(), 1, 0), sim.simulate(AlwaysControl(), 1, 0)
    np.testing.assert_array_equal(t1.times, t0.times)
    assert t1.rewards[t1.rewards > 0].mean() > t0.rewards[t0.rewards > 0].mean()
    coarse = block_level(a)
    assert len(coarse) == len(np.unique(a.blocks))
