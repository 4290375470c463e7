"""Seeded training runs, run-directory IO, and cross-arm summaries.

One run = one seed = one worker process. A run emits:

  curve.csv       per-eval rows (fixed header, see CURVE_HEADER)
  stops.csv       one row per finished episode (index, stop step, forced,
                  final position)
  buffer_mid.csv  (q, loss) of every stored transition at the mid-training
                  snapshot, evaluated by the then-current critics
  summary.json    config echo plus scalar aggregates

All emitted numbers are fully determined by (config, seed); nothing
wall-clock-dependent is written.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ExperimentConfig
from .maze import MAX_EPISODE_STEPS, MAX_SPEED, MazeEnv, MazeLayout, normalized_score
from .replay import ReplayBuffer, buffer_probe_values, classify_quadrants, hidden_fau
from .stopper import NoiseSchedule, StopController
from .td3 import Td3Agent

CURVE_HEADER = (
    "step,score_mean,score_std,K,sigma,beta,"
    "frac_lowq_lowloss,frac_lowq_highloss,frac_highq_lowloss,frac_highq_highloss,"
    "fau_actor,fau_critic"
)
STOPS_HEADER = "episode,stop_step,forced,final_x,final_y"
FAU_PROBE_SIZE = 256


class TrainingDiverged(RuntimeError):
    """Non-finite loss inside the update loop; run aborted."""


@dataclass
class EvalRow:
    step: int
    score_mean: float
    score_std: float
    stat_capacity: int
    sigma: float
    beta: float
    frac_lowq_lowloss: float
    frac_lowq_highloss: float
    frac_highq_lowloss: float
    frac_highq_highloss: float
    fau_actor: float
    fau_critic: float


@dataclass
class EpisodeEvent:
    episode: int
    stop_step: int
    forced: bool
    final_x: float
    final_y: float


@dataclass
class RunRecord:
    config: ExperimentConfig
    rows: list[EvalRow]
    episodes: list[EpisodeEvent]
    mid_q: np.ndarray
    mid_loss: np.ndarray

    def final_score(self) -> float | None:
        return self.rows[-1].score_mean if self.rows else None

    def best_score(self) -> float | None:
        return max((r.score_mean for r in self.rows), default=None)


def steps_to_score(record: RunRecord, target: float) -> int | None:
    """First eval step whose mean score reaches ``target``; None if never."""
    for row in record.rows:
        if row.score_mean >= target:
            return row.step
    return None


# --------------------------------------------------------------- training


def _sample_probe_inputs(layout: MazeLayout, rng: np.random.Generator):
    """Fixed held-out inputs for the plasticity probe: free-space states and
    uniform actions, drawn once at run start."""
    states = np.empty((FAU_PROBE_SIZE, 4))
    k = 0
    while k < FAU_PROBE_SIZE:
        x = rng.uniform(0.0, layout.n_cols)
        y = rng.uniform(0.0, layout.n_rows)
        if layout.collides_xy(x, y):
            continue
        states[k, 0] = x
        states[k, 1] = y
        states[k, 2] = rng.uniform(-MAX_SPEED, MAX_SPEED)
        states[k, 3] = rng.uniform(-MAX_SPEED, MAX_SPEED)
        k += 1
    actions = rng.uniform(-1.0, 1.0, size=(FAU_PROBE_SIZE, 2))
    return states, np.concatenate([states, actions], axis=1)


def _evaluate(agent: Td3Agent, layout: MazeLayout, rng: np.random.Generator, n_episodes: int):
    """Deterministic-policy episodes (no noise, no stopping, no buffer writes)."""
    envs = [MazeEnv(layout) for _ in range(n_episodes)]
    obs = np.stack([env.reset(rng) for env in envs])
    trajectories = [[env.position] for env in envs]
    active = list(range(n_episodes))
    while active:
        actions = agent.actor.forward(obs[active])
        still = []
        for row, idx in enumerate(active):
            env = envs[idx]
            o, _, terminated, truncated = env.step(actions[row])
            trajectories[idx].append(env.position)
            if not (terminated or truncated):
                obs[idx] = o
                still.append(idx)
        active = still
    return np.array([
        normalized_score(np.array(traj), layout) for traj in trajectories
    ])


def run_training(config: ExperimentConfig) -> RunRecord:
    """Execute one seeded run of the full loop (act, store, probe, fill the
    stat matrices, entropy resize, stop gate, TD3 updates)."""
    with threadpool_limits(1):
        return _run_training_inner(config)


def _run_training_inner(config: ExperimentConfig) -> RunRecord:
    least = config.mode == "least"
    rng = np.random.default_rng(config.seed)
    layout = MazeLayout.named(config.maze)
    env = MazeEnv(layout)
    agent = Td3Agent(
        state_dim=4,
        action_dim=2,
        rng=rng,
        hidden=config.hidden,
        actor_lr=config.actor_lr,
        critic_lr=config.critic_lr,
        discount=config.discount,
        polyak_rate=config.polyak_rate,
        policy_noise_std=config.policy_noise_std,
        policy_noise_clip=config.policy_noise_clip,
        policy_delay=config.policy_delay,
    )
    buffer = ReplayBuffer(config.buffer_capacity, 4, 2)
    ctrl = StopController(
        max_len=MAX_EPISODE_STEPS,
        start_step=config.start_step,
        stat_episodes=config.stat_episodes,
        k_min=config.resolved_k_min(),
        k_max=config.resolved_k_max(),
        omega_scale=config.omega_scale,
        entropy_baseline=config.entropy_baseline,
        overflow_rate=config.overflow_rate,
        resize_amount=config.resize_amount,
        entropy_check_interval=config.entropy_check_interval,
    )
    sched = NoiseSchedule(
        sigma_upper=config.sigma_upper,
        sigma_base=config.sigma_base,
        temp_tau=config.temp_tau,
        temp_mu=config.temp_mu,
        window=config.window,
        early_step_threshold=config.early_step_threshold,
    )
    fau_states, fau_state_actions = _sample_probe_inputs(layout, rng)

    rows: list[EvalRow] = []
    episodes: list[EpisodeEvent] = []
    mid_q = np.zeros(0)
    mid_loss = np.zeros(0)
    mid_step = config.total_steps // 2

    state = env.reset(rng)
    episode_index = 0
    step_in_episode = 0

    for t in range(1, config.total_steps + 1):
        sigma = sched.sigma() if least else config.sigma_base
        if t <= config.warmup_steps:
            action = rng.uniform(-1.0, 1.0, size=2)
        else:
            action = agent.select_action(state, sigma, rng)
        obs, reward, terminated, truncated = env.step(action)
        done = 1.0 if terminated else 0.0  # stops and time limits bootstrap
        buffer.push(state, action, reward, obs, done)
        probe = agent.probe_step(state, action, reward, obs, done)
        ctrl.record_step(step_in_episode, probe.q_hat, probe.td_error_mag)

        forced = False
        if least:
            ctrl.maybe_resize(t)
            if not (terminated or truncated):
                forced = ctrl.should_stop(t, step_in_episode, probe.q_hat, probe.td_error_mag)

        if terminated or truncated or forced:
            episodes.append(EpisodeEvent(
                episode=episode_index,
                stop_step=step_in_episode,
                forced=forced,
                final_x=float(obs[0]),
                final_y=float(obs[1]),
            ))
            if least:
                sched.record_episode_end(step_in_episode, forced)
            ctrl.close_episode()
            state = env.reset(rng)
            episode_index += 1
            step_in_episode = 0
        else:
            state = obs
            step_in_episode += 1

        if t > config.warmup_steps and buffer.size >= config.batch_size:
            batch = buffer.sample(config.batch_size, rng)
            try:
                agent.update_critics(batch, rng)
                if t % config.policy_delay == 0:
                    agent.update_actor(batch)
                    agent.polyak_update()
            except FloatingPointError as exc:
                raise TrainingDiverged(f"step {t}: {exc}") from exc

        if t % config.eval_interval == 0:
            rows.append(_eval_row(
                t, agent, buffer, ctrl, sched, layout, rng, config,
                fau_states, fau_state_actions, least,
            ))
        if t == mid_step and buffer.size > 0:
            mid_q, mid_loss = buffer_probe_values(buffer, agent)
            mid_q = mid_q.copy()
            mid_loss = mid_loss.copy()

    return RunRecord(config, rows, episodes, mid_q, mid_loss)


def _eval_row(
    t, agent, buffer, ctrl, sched, layout, rng, config,
    fau_states, fau_state_actions, least,
) -> EvalRow:
    scores = _evaluate(agent, layout, rng, config.eval_episodes)
    q, loss = buffer_probe_values(buffer, agent)
    quad = classify_quadrants(q, loss, float(q.mean()), float(loss.mean()))
    return EvalRow(
        step=t,
        score_mean=float(scores.mean()),
        score_std=float(scores.std()),
        stat_capacity=ctrl.current_capacity,
        sigma=sched.sigma() if least else config.sigma_base,
        beta=sched.beta() if least else 0.0,
        frac_lowq_lowloss=quad.low_q_low_loss,
        frac_lowq_highloss=quad.low_q_high_loss,
        frac_highq_lowloss=quad.high_q_low_loss,
        frac_highq_highloss=quad.high_q_high_loss,
        fau_actor=hidden_fau(agent.actor, fau_states),
        fau_critic=hidden_fau(agent.critic1, fau_state_actions),
    )


# --------------------------------------------------------------- run IO


def write_run(record: RunRecord, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "curve.csv", "w", newline="") as fh:
        fh.write(CURVE_HEADER + "\n")
        for r in record.rows:
            fh.write(",".join([
                str(r.step), repr(r.score_mean), repr(r.score_std),
                str(r.stat_capacity), repr(r.sigma), repr(r.beta),
                repr(r.frac_lowq_lowloss), repr(r.frac_lowq_highloss),
                repr(r.frac_highq_lowloss), repr(r.frac_highq_highloss),
                repr(r.fau_actor), repr(r.fau_critic),
            ]) + "\n")

    with open(out / "stops.csv", "w", newline="") as fh:
        fh.write(STOPS_HEADER + "\n")
        for e in record.episodes:
            fh.write(",".join([
                str(e.episode), str(e.stop_step), str(int(e.forced)),
                repr(e.final_x), repr(e.final_y),
            ]) + "\n")

    with open(out / "buffer_mid.csv", "w", newline="") as fh:
        fh.write("q,loss\n")
        for qv, lv in zip(record.mid_q.tolist(), record.mid_loss.tolist()):
            fh.write(f"{qv!r},{lv!r}\n")

    forced_stops = sum(1 for e in record.episodes if e.forced)
    summary = {
        "config": record.config.to_dict(),
        "final_score_mean": record.final_score(),
        "best_score_mean": record.best_score(),
        "episodes": len(record.episodes),
        "forced_stops": forced_stops,
        "eval_rows": len(record.rows),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_run(run_dir: str) -> RunRecord:
    run = Path(run_dir)
    with open(run / "summary.json") as fh:
        summary = json.load(fh)
    config = ExperimentConfig.from_dict(summary["config"])

    rows = []
    with open(run / "curve.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            rows.append(EvalRow(
                step=int(line["step"]),
                score_mean=float(line["score_mean"]),
                score_std=float(line["score_std"]),
                stat_capacity=int(line["K"]),
                sigma=float(line["sigma"]),
                beta=float(line["beta"]),
                frac_lowq_lowloss=float(line["frac_lowq_lowloss"]),
                frac_lowq_highloss=float(line["frac_lowq_highloss"]),
                frac_highq_lowloss=float(line["frac_highq_lowloss"]),
                frac_highq_highloss=float(line["frac_highq_highloss"]),
                fau_actor=float(line["fau_actor"]),
                fau_critic=float(line["fau_critic"]),
            ))

    episodes = []
    with open(run / "stops.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            episodes.append(EpisodeEvent(
                episode=int(line["episode"]),
                stop_step=int(line["stop_step"]),
                forced=bool(int(line["forced"])),
                final_x=float(line["final_x"]),
                final_y=float(line["final_y"]),
            ))

    qs, losses = [], []
    with open(run / "buffer_mid.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            qs.append(float(line["q"]))
            losses.append(float(line["loss"]))

    return RunRecord(config, rows, episodes, np.array(qs), np.array(losses))


def _run_one_seed(config_blob: dict, seed: int, out_dir: str) -> str:
    config = ExperimentConfig.from_dict({**config_blob, "seed": seed})
    record = run_training(config)
    write_run(record, out_dir)
    return out_dir


def run_seeds(
    config: ExperimentConfig,
    seeds: list[int],
    out_root: str,
    workers: int | None = None,
) -> list[str]:
    """Independent parallel workers, one per seed; returns the run dirs."""
    out_dirs = [str(Path(out_root) / f"{config.mode}_seed{seed}") for seed in seeds]
    blob = config.to_dict()
    if len(seeds) <= 1:
        for seed, out_dir in zip(seeds, out_dirs):
            _run_one_seed(blob, seed, out_dir)
        return out_dirs
    workers = workers or min(len(seeds), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_one_seed, blob, seed, out_dir)
            for seed, out_dir in zip(seeds, out_dirs)
        ]
        for future in futures:
            future.result()
    return out_dirs


# --------------------------------------------------------------- summaries


def aggregate_curve(records: list[RunRecord]) -> tuple[np.ndarray, np.ndarray]:
    """(steps, cross-seed mean score) for records sharing an eval grid."""
    steps = [r.step for r in records[0].rows]
    for rec in records[1:]:
        if [r.step for r in rec.rows] != steps:
            raise ValueError("records have mismatched eval grids")
    scores = np.array([[r.score_mean for r in rec.rows] for rec in records])
    return np.array(steps), scores.mean(axis=0)


def shared_split_quadrants(
    vanilla_records: list[RunRecord], least_records: list[RunRecord]
) -> dict | None:
    """Mid-training buffer composition of both arms, classified against the
    split points (mean q, mean loss) of the pooled stop-arm snapshots."""
    if any(len(r.mid_q) == 0 for r in vanilla_records + least_records):
        return None
    q_split = float(np.concatenate([r.mid_q for r in least_records]).mean())
    loss_split = float(np.concatenate([r.mid_loss for r in least_records]).mean())

    def arm_fractions(records):
        per_seed = np.array([
            classify_quadrants(r.mid_q, r.mid_loss, q_split, loss_split).fractions()
            for r in records
        ])
        return per_seed.mean(axis=0)

    names = ("low_q_low_loss", "low_q_high_loss", "high_q_low_loss", "high_q_high_loss")
    return {
        "q_split": q_split,
        "loss_split": loss_split,
        "vanilla": dict(zip(names, arm_fractions(vanilla_records).tolist())),
        "least": dict(zip(names, arm_fractions(least_records).tolist())),
    }


def compare_runs(vanilla_records: list[RunRecord], least_records: list[RunRecord]) -> dict:
    """Cross-arm summary: final scores, catch-up speed, buffer composition."""
    if not vanilla_records or not least_records:
        raise ValueError("need at least one record per arm")

    def finals(records):
        return np.array([r.final_score() for r in records], dtype=np.float64)

    van_final = finals(vanilla_records)
    least_final = finals(least_records)

    van_steps, van_curve = aggregate_curve(vanilla_records)
    least_steps, least_curve = aggregate_curve(least_records)
    vanilla_max = float(van_curve.max()) if len(van_curve) else None
    catchup = None
    if vanilla_max is not None:
        hits = np.nonzero(least_curve >= vanilla_max)[0]
        catchup = int(least_steps[hits[0]]) if len(hits) else None

    def quad_means(records):
        last = [r.rows[-1] for r in records if r.rows]
        if not last:
            return None
        arr = np.array([
            [r.frac_lowq_lowloss, r.frac_lowq_highloss, r.frac_highq_lowloss, r.frac_highq_highloss]
            for r in last
        ])
        names = ("low_q_low_loss", "low_q_high_loss", "high_q_low_loss", "high_q_high_loss")
        return dict(zip(names, arr.mean(axis=0).tolist()))

    return {
        "seeds": {"vanilla": len(vanilla_records), "least": len(least_records)},
        "budget_steps": vanilla_records[0].config.total_steps,
        "final_score": {
            "vanilla": {"mean": float(van_final.mean()), "std": float(van_final.std())},
            "least": {"mean": float(least_final.mean()), "std": float(least_final.std())},
        },
        "vanilla_max_score": vanilla_max,
        "least_steps_to_vanilla_max": catchup,
        "final_quadrants": {
            "vanilla": quad_means(vanilla_records),
            "least": quad_means(least_records),
        },
        "mid_quadrants_shared_split": shared_split_quadrants(vanilla_records, least_records),
    }


def comparison_table(summary: dict) -> str:
    lines = [
        f"{'metric':<34}{'vanilla':>16}{'least':>16}",
        "-" * 66,
    ]
    fs = summary["final_score"]
    lines.append(
        f"{'final score (mean +- std)':<34}"
        f"{fs['vanilla']['mean']:>10.2f} +-{fs['vanilla']['std']:>4.1f}"
        f"{fs['least']['mean']:>10.2f} +-{fs['least']['std']:>4.1f}"
    )
    lines.append(f"{'vanilla max score':<34}{summary['vanilla_max_score']:>16.2f}{'':>16}")
    catchup = summary["least_steps_to_vanilla_max"]
    lines.append(
        f"{'steps to vanilla max (least)':<34}{'':>16}"
        f"{str(catchup) if catchup is not None else 'never':>16}"
    )
    mid = summary["mid_quadrants_shared_split"]
    if mid:
        for key in ("low_q_low_loss", "high_q_high_loss"):
            lines.append(
                f"{'mid ' + key:<34}{mid['vanilla'][key]:>16.4f}{mid['least'][key]:>16.4f}"
            )
    return "\n".join(lines)


def write_comparison(summary: dict, vanilla_records, least_records, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "final_scores.csv", "w", newline="") as fh:
        fh.write("arm,seed,final_score\n")
        for arm, records in (("vanilla", vanilla_records), ("least", least_records)):
            for rec in records:
                fh.write(f"{arm},{rec.config.seed},{rec.final_score()!r}\n")
    fs = summary["final_score"]
    with open(out / "comparison.csv", "w", newline="") as fh:
        fh.write("metric,vanilla,least\n")
        fh.write(f"final_score_mean,{fs['vanilla']['mean']!r},{fs['least']['mean']!r}\n")
        fh.write(f"final_score_std,{fs['vanilla']['std']!r},{fs['least']['std']!r}\n")
        fh.write(f"vanilla_max_score,{summary['vanilla_max_score']!r},\n")
        fh.write(f"least_steps_to_vanilla_max,,{summary['least_steps_to_vanilla_max']}\n")
        mid = summary["mid_quadrants_shared_split"]
        if mid:
            for key in ("low_q_low_loss", "low_q_high_loss", "high_q_low_loss", "high_q_high_loss"):
                fh.write(f"mid_{key},{mid['vanilla'][key]!r},{mid['least'][key]!r}\n")


def position_histogram(records: list[RunRecord], last_n: int = 50) -> np.ndarray:
    """Counts of the final positions of each run's last ``last_n`` episodes,
    binned into layout cells. Returned with row 0 at the bottom."""
    if not records:
        raise ValueError("no records")
    layout = MazeLayout.named(records[0].config.maze)
    counts = np.zeros((layout.n_rows, layout.n_cols), dtype=int)
    for rec in records:
        for event in rec.episodes[-last_n:]:
            r, c = layout.cell_of(np.array([event.final_x, event.final_y]))
            if 0 <= r < layout.n_rows and 0 <= c < layout.n_cols:
                counts[r, c] += 1
    return counts


def write_position_grid(counts: np.ndarray, path: str) -> None:
    # rows written top-down so the CSV reads like the layout text
    with open(path, "w", newline="") as fh:
        for row in counts[::-1]:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
