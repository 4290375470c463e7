"""Renderers: each turns documented CSVs into one image, deterministically.

Inputs are the files the training harness emits (curve.csv, the
final-position grid, final_scores.csv); nothing here reaches into any
other state, so the file format is the entire interface.

curve.csv header:
  step,score_mean,score_std,K,sigma,beta,
  frac_lowq_lowloss,frac_lowq_highloss,frac_highq_lowloss,frac_highq_highloss,
  fau_actor,fau_critic
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

QUADRANT_COLUMNS = (
    "frac_lowq_lowloss",
    "frac_lowq_highloss",
    "frac_highq_lowloss",
    "frac_highq_highloss",
)
SAVEFIG_KW = {"dpi": 120, "metadata": {"Software": "stoprl-plot"}}


class SchemaError(ValueError):
    """Input file does not match the documented layout."""


def read_curve(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise SchemaError(f"{path}: missing column {column!r}")
        rows = list(reader)
    return {
        column: np.array([float(row[column]) for row in rows])
        for column in required
    }


def arm_label(path: str) -> str:
    """Run-dir name with any trailing _seed<N> stripped."""
    name = Path(path).parent.name or Path(path).stem
    base, sep, tail = name.rpartition("_seed")
    if sep and tail.isdigit():
        return base
    return name


def _grouped_curves(paths: list[str], labels: list[str] | None, columns: tuple[str, ...]):
    """Group per-run curves by label -> (steps, stacked column arrays)."""
    if labels and len(labels) != len(paths):
        raise SchemaError("--labels must match the number of inputs")
    groups: dict[str, list[dict[str, np.ndarray]]] = {}
    for k, path in enumerate(paths):
        label = labels[k] if labels else arm_label(path)
        groups.setdefault(label, []).append(read_curve(path, ("step",) + columns))
    out = {}
    for label, curves in groups.items():
        steps = curves[0]["step"]
        for c in curves[1:]:
            if len(c["step"]) != len(steps) or not np.array_equal(c["step"], steps):
                raise SchemaError(f"{label}: runs disagree on eval steps")
        out[label] = (steps, {col: np.stack([c[col] for c in curves]) for col in columns})
    return out


def render_curves(paths: list[str], out: str, labels: list[str] | None = None) -> None:
    """Learning curves: per-label mean line with a cross-run std band."""
    groups = _grouped_curves(paths, labels, ("score_mean",))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for idx, (label, (steps, cols)) in enumerate(sorted(groups.items())):
        scores = cols["score_mean"]
        mean = scores.mean(axis=0)
        std = scores.std(axis=0)
        color = f"C{idx}"
        ax.plot(steps, mean, label=f"{label} (n={len(scores)})", color=color)
        ax.fill_between(steps, mean - std, mean + std, color=color, alpha=0.2, linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("normalized score")
    ax.set_ylim(-2, 105)
    ax.grid(alpha=0.3)
    if groups:
        ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out, **SAVEFIG_KW)
    plt.close(fig)


def render_quadrants(paths: list[str], out: str, labels: list[str] | None = None) -> None:
    """Stacked-area composition of the replay buffer over time."""
    groups = _grouped_curves(paths, labels, QUADRANT_COLUMNS)
    n = max(len(groups), 1)
    fig, axes = plt.subplots(1, n, figsize=(5.4 * n, 4.0), squeeze=False)
    names = ("low Q / low loss", "low Q / high loss", "high Q / low loss", "high Q / high loss")
    colors = ("#f2f2f2", "#7ea6e0", "#f0b37e", "#333333")
    for ax, (label, (steps, cols)) in zip(axes[0], sorted(groups.items())):
        fractions = [cols[c].mean(axis=0) for c in QUADRANT_COLUMNS]
        if len(steps):
            ax.stackplot(steps, fractions, labels=names, colors=colors)
        ax.set_title(label)
        ax.set_xlabel("environment steps")
        ax.set_ylabel("buffer fraction")
        ax.set_ylim(0, 1)
    if groups and len(steps):
        axes[0][-1].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, **SAVEFIG_KW)
    plt.close(fig)


def render_noise(paths: list[str], out: str, labels: list[str] | None = None) -> None:
    """Exploration noise trace; early-stop rate on a twin axis."""
    groups = _grouped_curves(paths, labels, ("sigma", "beta"))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax2 = ax.twinx()
    for idx, (label, (steps, cols)) in enumerate(sorted(groups.items())):
        color = f"C{idx}"
        ax.plot(steps, cols["sigma"].mean(axis=0), color=color, label=f"{label} sigma")
        ax2.plot(steps, cols["beta"].mean(axis=0), color=color, linestyle="--", alpha=0.6)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("exploration noise sigma")
    ax2.set_ylabel("early-stop rate beta (dashed)")
    ax.grid(alpha=0.3)
    if groups:
        ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(out, **SAVEFIG_KW)
    plt.close(fig)


def read_position_grid(path: str) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line_no, line in enumerate(csv.reader(fh), start=1):
            if not line:
                continue
            try:
                rows.append([float(v) for v in line])
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: non-numeric cell") from exc
    if not rows:
        raise SchemaError(f"{path}: empty grid")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise SchemaError(f"{path}: ragged grid rows")
    return np.array(rows)


def render_positions(path: str, out: str) -> None:
    """Heatmap of final-position counts over layout cells (top row first)."""
    grid = read_position_grid(path)
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    image = ax.imshow(grid, cmap="magma", interpolation="nearest")
    fig.colorbar(image, ax=ax, label="episodes ending in cell")
    ax.set_xlabel("column")
    ax.set_ylabel("row (top first)")
    fig.tight_layout()
    fig.savefig(out, **SAVEFIG_KW)
    plt.close(fig)


def render_box(path: str, out: str) -> None:
    """Box plot of per-seed final scores per arm (final_scores.csv)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in ("arm", "seed", "final_score"):
            if column not in header:
                raise SchemaError(f"{path}: missing column {column!r}")
        arms: dict[str, list[float]] = {}
        for row in reader:
            arms.setdefault(row["arm"], []).append(float(row["final_score"]))
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    if arms:
        names = sorted(arms)
        ax.boxplot([arms[n] for n in names], tick_labels=names, medianprops={"color": "black"})
    ax.set_ylabel("final normalized score")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(out, **SAVEFIG_KW)
    plt.close(fig)
