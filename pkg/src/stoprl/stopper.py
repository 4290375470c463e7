"""Adaptive early-stop controller.

Keeps two K x L rolling matrices of per-step statistics over the K most
recent episodes: one of min-critic Q values, one of TD-error magnitudes.
Per-step medians of those columns form a quality threshold and a learning
potential weight; an episode is cut short when the fresh Q estimate falls
below the (sign-aware, clipped) effective threshold. A histogram-entropy
check resizes the episode capacity, and an episode-level schedule raises
exploration noise when forced stops pile up early in episodes.
"""

from __future__ import annotations

import json
from collections import deque

import numpy as np

TD_FLOOR = 1e-8  # guards the weight denominator


def _median(a: np.ndarray) -> float:
    """np.median semantics (mean of the middle pair when even) via partition."""
    n = a.size
    mid = n >> 1
    if n & 1:
        return float(np.partition(a, mid)[mid])
    part = np.partition(a, [mid - 1, mid])
    return 0.5 * (float(part[mid - 1]) + float(part[mid]))


class EpisodeStatMatrix:
    """Ring of per-episode, per-step scalar statistics.

    One row per episode, recycled FIFO; within a row, written cells form a
    prefix [0, stop_step). The row at ``write_cursor`` is the episode being
    collected right now.
    """

    def __init__(self, capacity_episodes: int, max_len: int):
        if capacity_episodes <= 0 or max_len <= 0:
            raise ValueError("capacity and max_len must be positive")
        self.max_len = max_len
        self.values = np.zeros((capacity_episodes, max_len))
        self.valid = np.zeros((capacity_episodes, max_len), dtype=bool)
        self.write_cursor = 0
        # the cursor row may still hold the oldest episode; it is recycled
        # lazily so the matrix keeps K full episodes between episodes
        self._pending_clear = False
        # per-column minimum over written cells (+inf where column empty),
        # kept incrementally so the fill rule is O(L) per lookup
        self._col_min = np.full(max_len, np.inf)

    @property
    def capacity_episodes(self) -> int:
        return self.values.shape[0]

    def _recompute_col_min(self) -> None:
        masked = np.where(self.valid, self.values, np.inf)
        self._col_min = masked.min(axis=0)

    def write(self, step: int, value: float) -> None:
        if not 0 <= step < self.max_len:
            raise IndexError(f"step {step} outside [0, {self.max_len})")
        if self._pending_clear:
            self.valid[self.write_cursor, :] = False
            self._pending_clear = False
            self._recompute_col_min()
        self.values[self.write_cursor, step] = value
        self.valid[self.write_cursor, step] = True
        if value < self._col_min[step]:
            self._col_min[step] = value

    def close_episode(self) -> None:
        self.write_cursor = (self.write_cursor + 1) % self.capacity_episodes
        self._pending_clear = True

    def used_rows(self) -> np.ndarray:
        # written cells form a prefix, so a used row is valid at step 0
        return self.valid[:, 0]

    def has_data(self) -> bool:
        return bool(self.valid.any())

    def fill_value(self, step: int) -> float | None:
        """Minimum over all written cells at steps >= ``step`` (any episode)."""
        low = self._col_min[step:].min()
        return None if low == np.inf else float(low)

    def filled_column(self, step: int) -> np.ndarray | None:
        """Column ``step`` over used rows, substituting the fill-down minimum
        for episodes that stopped before reaching it. None when nothing in
        the matrix can speak to this step."""
        used = self.used_rows()
        if not used.any():
            return None
        col_valid = self.valid[:, step]
        out = self.values[used, step].copy()
        missing = ~col_valid[used]
        if missing.any():
            fill = self.fill_value(step)
            if fill is None:
                return None
            out[missing] = fill
        return out

    def column_median(self, step: int) -> float | None:
        col = self.filled_column(step)
        if col is None:
            return None
        return _median(col)

    def column_valid_minmax(self, step: int) -> tuple[float, float] | None:
        col_valid = self.valid[:, step]
        if not col_valid.any():
            return None
        vals = self.values[col_valid, step]
        return float(vals.min()), float(vals.max())

    def chronological_rows(self) -> np.ndarray:
        """Row indices oldest to newest; the open row comes last."""
        k = self.capacity_episodes
        cursor = self.write_cursor
        return np.concatenate([np.arange(cursor + 1, k), np.arange(0, cursor + 1)])

    def resize(self, new_capacity: int) -> None:
        """Change episode capacity, keeping the most recent episodes."""
        if new_capacity <= 0:
            raise ValueError("capacity must be positive")
        if self._pending_clear:
            self.valid[self.write_cursor, :] = False
            self._pending_clear = False
        order = self.chronological_rows()
        keep = order[-min(new_capacity, len(order)):]
        values = np.zeros((new_capacity, self.max_len))
        valid = np.zeros((new_capacity, self.max_len), dtype=bool)
        offset = new_capacity - len(keep)
        values[offset:] = self.values[keep]
        valid[offset:] = self.valid[keep]
        self.values = values
        self.valid = valid
        self.write_cursor = new_capacity - 1
        self._recompute_col_min()


def buffer_entropy(matrix: EpisodeStatMatrix, bins: int = 32) -> float:
    """Shannon entropy (nats) of the histogram of all written values."""
    if not matrix.has_data():
        raise ValueError("matrix holds no data")
    vals = matrix.values[matrix.valid]
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(vals, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def stop_decision(
    q_hat: float,
    omega: float,
    epsilon: float,
    q_col_min: float,
    q_col_max: float,
) -> bool:
    """Sign-aware stop rule with the effective threshold clipped to the
    observed Q range of the column. Stop (True) iff q_hat < threshold."""
    if epsilon >= 0.0:
        raw = omega * epsilon
    else:
        raw = epsilon / omega
    threshold = min(max(raw, q_col_min), q_col_max)
    return q_hat < threshold


class StopController:
    """Gate deciding, per environment step, whether to cut the episode."""

    def __init__(
        self,
        max_len: int,
        start_step: int,
        stat_episodes: int = 150,
        k_min: int | None = None,
        k_max: int | None = None,
        omega_scale: float = 0.5,
        entropy_baseline: float | None = None,
        overflow_rate: float = 0.05,
        resize_amount: int = 10,
        entropy_check_interval: int = 1000,
    ):
        self.initial_episodes = stat_episodes
        self.k_min = stat_episodes if k_min is None else k_min
        self.k_max = 2 * stat_episodes if k_max is None else k_max
        if not self.k_min <= stat_episodes <= self.k_max:
            raise ValueError("need k_min <= stat_episodes <= k_max")
        self.start_step = start_step
        self.omega_scale = omega_scale
        self.entropy_baseline = entropy_baseline
        self.overflow_rate = overflow_rate
        self.resize_amount = resize_amount
        self.entropy_check_interval = entropy_check_interval
        self.bq = EpisodeStatMatrix(stat_episodes, max_len)
        self.bg = EpisodeStatMatrix(stat_episodes, max_len)

    @property
    def current_capacity(self) -> int:
        return self.bq.capacity_episodes

    # ------------------------------------------------------------ recording

    def record_step(self, step: int, q_hat: float, td_error_mag: float) -> None:
        self.bq.write(step, q_hat)
        self.bg.write(step, td_error_mag)

    def close_episode(self) -> None:
        self.bq.close_episode()
        self.bg.close_episode()

    # ------------------------------------------------------------ thresholds

    def column_threshold(self, step: int) -> float | None:
        return self.bq.column_median(step)

    def compute_omega(self, step: int, current_td_mag: float) -> float | None:
        med = self.bg.column_median(step)
        if med is None:
            return None
        return self.omega_scale * med / max(current_td_mag, TD_FLOOR)

    def active(self, global_step: int) -> bool:
        return global_step >= self.start_step

    def _ensure_baseline(self) -> None:
        if self.entropy_baseline is None and self.bq.has_data():
            self.entropy_baseline = buffer_entropy(self.bq)

    def should_stop(self, global_step: int, step: int, q_hat: float, td_error_mag: float) -> bool:
        """Full gate: inert before start_step, then the clipped sign-aware rule."""
        if not self.active(global_step):
            return False
        self._ensure_baseline()
        epsilon = self.column_threshold(step)
        omega = self.compute_omega(step, td_error_mag)
        bounds = self.bq.column_valid_minmax(step)
        if epsilon is None or omega is None or bounds is None:
            return False
        return stop_decision(q_hat, omega, epsilon, bounds[0], bounds[1])

    # ------------------------------------------------------------ resizing

    def maybe_resize(self, global_step: int) -> None:
        """Entropy check; grows capacity under high distributional disorder,
        shrinks back toward the initial size otherwise. No-op until active
        and a baseline exists."""
        if global_step % self.entropy_check_interval != 0:
            return
        if not self.active(global_step) or not self.bq.has_data():
            return
        self._ensure_baseline()
        current = buffer_entropy(self.bq)
        k = self.current_capacity
        if current > (1.0 + self.overflow_rate) * self.entropy_baseline:
            new_k = min(k + self.resize_amount, self.k_max)
        else:
            new_k = max(k - self.resize_amount, self.initial_episodes)
        if new_k != k:
            self.bq.resize(new_k)
            self.bg.resize(new_k)

    # ------------------------------------------------------------ diagnostics

    def to_diagnostic_dict(self) -> dict:
        def matrix_blob(m: EpisodeStatMatrix) -> dict:
            return {
                "values": m.values.tolist(),
                "valid": m.valid.tolist(),
                "write_cursor": m.write_cursor,
            }

        return {
            "start_step": self.start_step,
            "omega_scale": self.omega_scale,
            "entropy_baseline": self.entropy_baseline,
            "overflow_rate": self.overflow_rate,
            "resize_amount": self.resize_amount,
            "entropy_check_interval": self.entropy_check_interval,
            "initial_episodes": self.initial_episodes,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "current_capacity": self.current_capacity,
            "bq": matrix_blob(self.bq),
            "bg": matrix_blob(self.bg),
        }

    def dump_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_diagnostic_dict(), fh)


class NoiseSchedule:
    """Episode-level exploration noise: a logistic ramp in the recent
    early-stop frequency, floored at the base noise level."""

    def __init__(
        self,
        sigma_upper: float = 0.25,
        sigma_base: float = 0.1,
        temp_tau: float = 10.0,
        temp_mu: float = 5.0,
        window: int = 50,
        early_step_threshold: int = 20,
    ):
        if not sigma_base < sigma_upper:
            raise ValueError("need sigma_base < sigma_upper")
        self.sigma_upper = sigma_upper
        self.sigma_base = sigma_base
        self.temp_tau = temp_tau
        self.temp_mu = temp_mu
        self.window = window
        self.early_step_threshold = early_step_threshold
        self.recent_flags: deque[bool] = deque(maxlen=window)

    def beta(self) -> float:
        return sum(self.recent_flags) / self.window

    def sigma(self) -> float:
        b = self.beta()
        ramp = self.sigma_upper / (1.0 + np.exp(-b * self.temp_tau + self.temp_mu))
        return float(max(ramp, self.sigma_base))

    def record_episode_end(self, stop_step: int, was_forced_stop: bool) -> None:
        self.recent_flags.append(bool(was_forced_stop and stop_step < self.early_step_threshold))
