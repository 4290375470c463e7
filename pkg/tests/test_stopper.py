"""Stop controller tests: stat matrices, fill rule, stop rule, entropy, noise."""

import math
import statistics

import numpy as np
import pytest

from stoprl.stopper import (
    EpisodeStatMatrix,
    NoiseSchedule,
    StopController,
    buffer_entropy,
    stop_decision,
)


def matrix_with_episodes(capacity, max_len, episodes):
    """Build a matrix from a list of per-episode value sequences."""
    m = EpisodeStatMatrix(capacity, max_len)
    for ep in episodes:
        for i, v in enumerate(ep):
            m.write(i, v)
        m.close_episode()
    return m


def brute_force_column_median(values, valid, col):
    """Independent fill-rule + median oracle over raw cell states."""
    n_rows, n_cols = values.shape
    tail = [
        values[r][c]
        for r in range(n_rows)
        for c in range(col, n_cols)
        if valid[r][c]
    ]
    filled = []
    for r in range(n_rows):
        if not any(valid[r]):
            continue
        if valid[r][col]:
            filled.append(values[r][col])
        else:
            filled.append(min(tail))
    return statistics.median(filled)


# ------------------------------------------------------------ stat matrix


def test_write_then_read_back():
    m = EpisodeStatMatrix(4, 10)
    m.write(3, 2.5)
    assert m.values[m.write_cursor, 3] == 2.5
    assert m.valid[m.write_cursor, 3]


def test_two_episodes_use_distinct_rows():
    m = EpisodeStatMatrix(4, 10)
    m.write(0, 1.0)
    first_row = m.write_cursor
    m.close_episode()
    m.write(0, 2.0)
    assert m.write_cursor != first_row
    assert m.values[first_row, 0] == 1.0
    assert m.values[m.write_cursor, 0] == 2.0


def test_fifo_overwrites_oldest_episode():
    m = matrix_with_episodes(3, 5, [[1.0], [2.0], [3.0], [4.0]])
    col = m.filled_column(0)
    assert sorted(col.tolist()) == [2.0, 3.0, 4.0]


def test_write_past_max_len_raises():
    m = EpisodeStatMatrix(2, 5)
    with pytest.raises(IndexError):
        m.write(5, 1.0)


# ------------------------------------------------------------ column medians


def test_column_median_all_valid():
    m = matrix_with_episodes(5, 3, [[1.0], [3.0], [2.0]])
    assert m.column_median(0) == 2.0


def test_column_median_outlier_robust():
    m = matrix_with_episodes(5, 3, [[1.0], [2.0], [100.0]])
    assert m.column_median(0) == 2.0


def test_column_median_even_count_averages_middle_pair():
    m = matrix_with_episodes(6, 2, [[1.0], [2.0], [4.0], [8.0]])
    assert m.column_median(0) == 3.0


def test_fill_rule_uses_minimum_of_later_columns():
    # episode 1 stops after step 0; its column-1 cell is filled with the
    # minimum written value over columns >= 1
    episodes = [[5.0, 4.0, 6.0], [2.0], [7.0, 9.0, 1.0]]
    m = matrix_with_episodes(5, 3, episodes)
    got = m.column_median(1)
    want = brute_force_column_median(m.values, m.valid, 1)
    assert got == want
    # the fill value itself is min(4.0, 6.0, 9.0, 1.0) = 1.0
    assert sorted(m.filled_column(1).tolist()) == [1.0, 4.0, 9.0]


def test_column_median_matches_brute_force_on_random_matrices():
    rng = np.random.default_rng(123)
    for _ in range(40):
        cap = int(rng.integers(2, 7))
        max_len = int(rng.integers(2, 6))
        n_eps = int(rng.integers(1, 10))
        episodes = [
            rng.normal(size=int(rng.integers(1, max_len + 1))).tolist()
            for _ in range(n_eps)
        ]
        m = matrix_with_episodes(cap, max_len, episodes)
        for col in range(max_len):
            got = m.column_median(col)
            if got is None:
                continue
            want = brute_force_column_median(m.values, m.valid, col)
            assert got == pytest.approx(want, rel=1e-12)


def test_column_median_none_when_empty():
    m = EpisodeStatMatrix(3, 4)
    assert m.column_median(0) is None


def test_resize_grow_keeps_every_episode():
    m = matrix_with_episodes(4, 2, [[1.0], [2.0], [3.0]])
    m.resize(8)
    assert m.capacity_episodes == 8
    assert sorted(m.filled_column(0).tolist()) == [1.0, 2.0, 3.0]


def test_resize_shrink_keeps_most_recent():
    m = matrix_with_episodes(8, 2, [[float(k)] for k in range(1, 6)])
    m.resize(3)  # newest rows kept: episodes 4, 5 plus the open row
    assert sorted(m.filled_column(0).tolist()) == [4.0, 5.0]
    m.write(0, 9.0)  # open row still writable after resize
    assert sorted(m.filled_column(0).tolist()) == [4.0, 5.0, 9.0]


def test_resize_then_close_recycles_oldest():
    m = matrix_with_episodes(4, 2, [[1.0], [2.0], [3.0]])
    m.resize(3)
    m.write(0, 4.0)
    m.close_episode()  # wraps onto the oldest kept row
    m.write(0, 5.0)
    assert sorted(m.filled_column(0).tolist()) == [3.0, 4.0, 5.0]


# ------------------------------------------------------------ omega


def make_controller(**kw):
    defaults = dict(max_len=10, start_step=0, stat_episodes=4)
    defaults.update(kw)
    return StopController(**defaults)


def test_omega_arithmetic():
    ctrl = make_controller(omega_scale=1.0)
    for q, g in ((0.0, 2.0), (0.0, 2.0), (0.0, 2.0)):
        ctrl.record_step(0, q, g)
        ctrl.close_episode()
    assert ctrl.compute_omega(0, 4.0) == pytest.approx(0.5)


def test_omega_floor_on_zero_denominator():
    ctrl = make_controller(omega_scale=1.0)
    ctrl.record_step(0, 0.0, 2.0)
    ctrl.close_episode()
    assert ctrl.compute_omega(0, 0.0) == pytest.approx(2.0 / 1e-8)


def test_omega_scale_applied():
    ctrl = make_controller(omega_scale=0.5)
    ctrl.record_step(0, 0.0, 3.0)
    ctrl.close_episode()
    assert ctrl.compute_omega(0, 1.5) == pytest.approx(1.0)


# ------------------------------------------------------------ stop rule


def test_stop_rule_positive_epsilon():
    assert stop_decision(q_hat=0.4, omega=0.5, epsilon=1.0, q_col_min=0.0, q_col_max=2.0)


def test_stop_rule_negative_epsilon_switches_to_inverse():
    # raw threshold -2.0 clipped up to -1.8; q_hat -1.5 is above it
    assert not stop_decision(q_hat=-1.5, omega=0.5, epsilon=-1.0, q_col_min=-1.8, q_col_max=-0.2)


def test_stop_rule_boundary_is_strict():
    assert not stop_decision(q_hat=0.5, omega=0.5, epsilon=1.0, q_col_min=0.0, q_col_max=2.0)


def test_stop_rule_scale_equivariant_for_nonnegative_epsilon():
    rng = np.random.default_rng(7)
    for _ in range(200):
        eps = float(rng.uniform(0, 3))
        omega = float(rng.uniform(0.1, 3))
        lo, hi = sorted(rng.uniform(0, 4, size=2).tolist())
        q = float(rng.uniform(-1, 5))
        c = float(rng.uniform(0.01, 100))
        base = stop_decision(q, omega, eps, lo, hi)
        scaled = stop_decision(q * c, omega, eps * c, lo * c, hi * c)
        assert base == scaled


def test_threshold_always_inside_column_bounds():
    rng = np.random.default_rng(8)
    for _ in range(200):
        eps = float(rng.normal())
        omega = float(rng.uniform(0.05, 5))
        lo, hi = sorted(rng.normal(size=2).tolist())
        raw = omega * eps if eps >= 0 else eps / omega
        threshold = min(max(raw, lo), hi)
        assert lo <= threshold <= hi
        # decision agrees with an explicitly clipped threshold
        q = float(rng.normal())
        assert stop_decision(q, omega, eps, lo, hi) == (q < threshold)


def test_controller_inert_before_start_step():
    ctrl = make_controller(start_step=100)
    for _ in range(3):
        ctrl.record_step(0, 5.0, 1.0)
        ctrl.close_episode()
    # absurdly low q_hat, still no stop before the gate opens
    assert not ctrl.should_stop(global_step=99, step=0, q_hat=-1e9, td_error_mag=1.0)
    assert ctrl.should_stop(global_step=100, step=0, q_hat=-1e9, td_error_mag=1.0)


def test_controller_no_stop_without_data():
    ctrl = make_controller(start_step=0)
    assert not ctrl.should_stop(global_step=5, step=0, q_hat=-1.0, td_error_mag=1.0)


def test_median_robust_to_large_outliers():
    rng = np.random.default_rng(42)
    clean = rng.uniform(0.5, 1.5, size=150)
    poisoned = clean.copy()
    top = np.argsort(clean)[-8:]  # ~5% contamination at the top
    poisoned[top] *= 10.0
    m_clean = matrix_with_episodes(151, 1, [[v] for v in clean])
    m_poisoned = matrix_with_episodes(151, 1, [[v] for v in poisoned])
    assert m_clean.column_median(0) == m_poisoned.column_median(0)
    assert abs(poisoned.mean() - clean.mean()) > 0.3 * clean.mean()


# ------------------------------------------------------------ entropy


def entropy_oracle(vals, bins=32):
    lo, hi = min(vals), max(vals)
    if lo == hi:
        return 0.0
    width = (hi - lo) / bins
    counts = [0] * bins
    for v in vals:
        counts[min(int((v - lo) / width), bins - 1)] += 1
    total = len(vals)
    return -sum((c / total) * math.log(c / total) for c in counts if c)


def test_entropy_constant_data_is_zero():
    m = matrix_with_episodes(5, 3, [[2.0, 2.0], [2.0]])
    assert buffer_entropy(m) == 0.0


def test_entropy_uniform_over_bins_is_log_bins():
    # k/31 grid puts exactly one value in each of the 32 bins
    vals = [k / 31 for k in range(32)]
    m = matrix_with_episodes(33, 1, [[v] for v in vals])
    assert buffer_entropy(m) == pytest.approx(math.log(32), rel=1e-12)


def test_entropy_matches_independent_oracle():
    rng = np.random.default_rng(11)
    episodes = [rng.normal(size=int(rng.integers(1, 6))).tolist() for _ in range(20)]
    m = matrix_with_episodes(25, 6, episodes)
    vals = m.values[m.valid].tolist()
    assert buffer_entropy(m) == pytest.approx(entropy_oracle(vals), rel=1e-12)


def test_entropy_empty_matrix_raises():
    with pytest.raises(ValueError):
        buffer_entropy(EpisodeStatMatrix(3, 3))


# ------------------------------------------------------------ resizing


def inject_bimodal(ctrl, n=16):
    for k in range(n):
        ctrl.record_step(0, float(k % 2), 0.1)
        ctrl.close_episode()


def test_no_growth_when_entropy_at_baseline():
    ctrl = make_controller(stat_episodes=20, k_max=40, entropy_check_interval=10)
    inject_bimodal(ctrl)
    baseline = buffer_entropy(ctrl.bq)
    ctrl.entropy_baseline = baseline  # H_t == baseline exactly: strict > fails
    ctrl.maybe_resize(global_step=10)
    assert ctrl.current_capacity == 20


def test_growth_arithmetic():
    ctrl = make_controller(
        stat_episodes=150, k_max=300, resize_amount=10, overflow_rate=0.05,
        entropy_check_interval=1000,
    )
    inject_bimodal(ctrl)  # H_t = ln 2
    ctrl.entropy_baseline = math.log(2) / 1.1  # H_t = 1.1 * baseline > 1.05 * baseline
    ctrl.maybe_resize(global_step=1000)
    assert ctrl.current_capacity == 160


def test_growth_saturates_at_k_max():
    ctrl = make_controller(
        stat_episodes=20, k_max=50, resize_amount=10, entropy_check_interval=10,
    )
    inject_bimodal(ctrl)
    ctrl.entropy_baseline = 0.01
    for step in range(10, 100, 10):
        ctrl.maybe_resize(global_step=step)
    assert ctrl.current_capacity == 50


def test_shrink_returns_toward_initial_size():
    ctrl = make_controller(
        stat_episodes=20, k_max=50, resize_amount=10, entropy_check_interval=10,
    )
    inject_bimodal(ctrl)
    ctrl.entropy_baseline = 0.01
    ctrl.maybe_resize(global_step=10)
    assert ctrl.current_capacity == 30
    ctrl.entropy_baseline = 10.0  # entropy now far below the baseline
    ctrl.maybe_resize(global_step=20)
    assert ctrl.current_capacity == 20
    ctrl.maybe_resize(global_step=30)
    assert ctrl.current_capacity == 20  # never below the initial size


def test_resize_skipped_off_interval():
    ctrl = make_controller(stat_episodes=20, k_max=50, entropy_check_interval=10)
    inject_bimodal(ctrl)
    ctrl.entropy_baseline = 0.01
    ctrl.maybe_resize(global_step=7)
    assert ctrl.current_capacity == 20


def test_baseline_self_calibrates_at_activation():
    ctrl = make_controller(start_step=50)
    inject_bimodal(ctrl)
    assert ctrl.entropy_baseline is None
    ctrl.should_stop(global_step=50, step=0, q_hat=0.0, td_error_mag=0.1)
    assert ctrl.entropy_baseline == pytest.approx(buffer_entropy(ctrl.bq))


# ------------------------------------------------------------ noise schedule


def schedule_with_beta(beta, window=10, **kw):
    sched = NoiseSchedule(window=window, **kw)
    n_true = round(beta * window)
    for k in range(window):
        sched.record_episode_end(stop_step=0 if k < n_true else 50, was_forced_stop=k < n_true)
    return sched


def test_sigma_decays_to_base_when_no_stops():
    sched = NoiseSchedule(sigma_upper=0.25, sigma_base=0.1, temp_tau=10, temp_mu=5)
    assert sched.sigma() == 0.1


def test_sigma_midpoint_arithmetic():
    sched = schedule_with_beta(0.5, sigma_upper=0.25, sigma_base=0.1, temp_tau=10, temp_mu=5)
    assert sched.sigma() == pytest.approx(0.125, rel=1e-12)


def test_sigma_stays_below_upper_bound_at_full_rate():
    sched = schedule_with_beta(1.0, sigma_upper=0.25, sigma_base=0.1, temp_tau=10, temp_mu=5)
    assert sched.sigma() == pytest.approx(0.25 / (1 + math.exp(-5)), rel=1e-12)
    assert sched.sigma() < 0.25


def test_sigma_nondecreasing_in_beta():
    sigmas = [schedule_with_beta(b / 10).sigma() for b in range(11)]
    assert all(a <= b for a, b in zip(sigmas, sigmas[1:]))
    assert all(0.1 <= s < 0.25 for s in sigmas)


def test_early_stop_flag_semantics():
    sched = NoiseSchedule(early_step_threshold=20)
    sched.record_episode_end(stop_step=19, was_forced_stop=True)
    sched.record_episode_end(stop_step=20, was_forced_stop=True)
    sched.record_episode_end(stop_step=5, was_forced_stop=False)
    assert list(sched.recent_flags) == [True, False, False]


def test_flag_window_is_bounded():
    sched = NoiseSchedule(window=3, early_step_threshold=20)
    for _ in range(10):
        sched.record_episode_end(stop_step=0, was_forced_stop=True)
    assert len(sched.recent_flags) == 3
    assert sched.beta() == 1.0


# ------------------------------------------------------------ diagnostics


def test_diagnostic_dump_round_trips(tmp_path):
    import json

    ctrl = make_controller(stat_episodes=3)
    ctrl.record_step(0, 1.0, 0.5)
    ctrl.close_episode()
    path = str(tmp_path / "ctrl.json")
    ctrl.dump_json(path)
    with open(path) as fh:
        blob = json.load(fh)
    assert blob["current_capacity"] == 3
    assert blob["bq"]["values"][0][0] == 1.0
    assert blob["bq"]["valid"][0][0] is True
