"""Experiment configuration: one flat, JSON-serializable record.

Every named knob of the stop mechanism (omega_scale, start_step,
stat_episodes, overflow_rate, resize_amount, entropy_check_interval,
sigma_upper, sigma_base, temp_tau, temp_mu, window, early_step_threshold)
is an explicit key so sweeps can address them directly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .maze import MAX_EPISODE_STEPS

MODES = ("vanilla", "least")

# desk-scale step budgets per maze size
DEFAULT_TOTAL_STEPS = {"small": 100_000, "medium": 150_000, "large": 200_000}
START_FRACTION = 0.10  # stop gate opens after this share of training


@dataclass
class ExperimentConfig:
    # experiment
    maze: str = "medium"
    mode: str = "least"
    seed: int = 0
    total_steps: int | None = None      # None: desk-scale default for the maze
    eval_interval: int = 2000
    eval_episodes: int = 10
    warmup_steps: int = 5000

    # agent
    hidden: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 128
    discount: float = 0.95
    polyak_rate: float = 0.005
    policy_delay: int = 2
    policy_noise_std: float = 0.2
    policy_noise_clip: float = 0.5
    buffer_capacity: int | None = None  # None: total_steps // 10, the source
                                        # protocol's buffer-to-budget ratio

    # stop controller
    start_step: int | None = None       # None: START_FRACTION * total_steps
    stat_episodes: int = 150
    k_min: int | None = None            # None: stat_episodes
    k_max: int | None = None            # None: 2 * stat_episodes
    omega_scale: float = 0.5
    entropy_baseline: float | None = None  # None: self-calibrated at the gate
    overflow_rate: float = 0.05
    resize_amount: int = 10
    entropy_check_interval: int = 1000

    # exploration noise schedule
    sigma_upper: float = 0.35
    sigma_base: float = 0.1
    temp_tau: float = 10.0
    temp_mu: float = 5.0
    window: int = 50
    early_step_threshold: int = int(0.4 * MAX_EPISODE_STEPS)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.total_steps is None and self.maze in DEFAULT_TOTAL_STEPS:
            self.total_steps = DEFAULT_TOTAL_STEPS[self.maze]
        if self.total_steps is None:
            raise ValueError("total_steps required for custom mazes")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if self.start_step is None:
            self.start_step = int(START_FRACTION * self.total_steps)
        if self.buffer_capacity is None:
            self.buffer_capacity = max(1000, self.total_steps // 10)
        self.hidden = tuple(int(h) for h in self.hidden)

    def resolved_k_min(self) -> int:
        return self.stat_episodes if self.k_min is None else self.k_min

    def resolved_k_max(self) -> int:
        return 2 * self.stat_episodes if self.k_max is None else self.k_max

    def with_overrides(self, **kw) -> "ExperimentConfig":
        blob = dataclasses.asdict(self)
        blob.update(kw)
        return ExperimentConfig(**blob)

    def to_dict(self) -> dict:
        blob = dataclasses.asdict(self)
        blob["hidden"] = list(self.hidden)
        return blob

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, blob: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(blob) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**blob)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
