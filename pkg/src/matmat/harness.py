"""Experiment driver: learning-rate sweeps, CSV reports, and SVG charts.

A sweep trains every (algorithm, learning rate) cell on one shared split so
cells are comparable, evaluates MAE/RMSE and the Matthew degree on the held
out pairs, and records divergent cells as data instead of crashing.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import dataset
from .blocktarget import BlockSpec, ChannelBinding, SideChannel, scalar_spec
from .errors import ConfigError, DivergenceError
from .factorization import (
    DEFAULT_CLAMP,
    TrainConfig,
    predict_many,
    train_classic,
    train_matmat,
)
from .metrics import EvalReport, mae, matthew_degree, rmse, storage_footprint, topk

ALGORITHMS = ("classic", "matmat")
DEFAULT_GRID = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sweep needs, from data path to output directory."""

    data_path: str
    algorithms: tuple[str, ...] = ALGORITHMS
    grid: tuple[float, ...] = DEFAULT_GRID
    epochs: int = 30
    d: int = 2
    t: int = 2
    seed: int = 0
    test_fraction: float = 0.1
    k: int = 10
    init_std: float = 0.1
    l2: float = 0.0
    clamp: tuple[float, float] = DEFAULT_CLAMP
    out_dir: str = "."

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}, expected one of {ALGORITHMS}")
        if not self.grid:
            raise ConfigError("learning-rate grid must be non-empty")
        for lr in self.grid:
            if not lr > 0:
                raise ConfigError(f"learning rates must be > 0, got {lr}")


@dataclass(frozen=True)
class SweepResult:
    """One EvalReport per (algorithm, learning rate) cell."""

    reports: list[EvalReport] = field(default_factory=list)


def matmat_block_spec(t: int) -> BlockSpec:
    """Popularity channel layout at block size t (plain scalar block at t=1)."""
    if t == 1:
        return scalar_spec()
    return BlockSpec(
        t=t,
        channels=(
            ChannelBinding((0, 1), SideChannel.ITEM_POPULARITY),
            ChannelBinding((1, 0), SideChannel.USER_POPULARITY),
        ),
    )


def run_experiment(config: ExperimentConfig) -> SweepResult:
    """Train and evaluate every grid cell on one shared deterministic split."""
    records = dataset.load_ratings(config.data_path)
    table = dataset.build_interactions(records)
    pop = dataset.compute_popularity(table)
    split = dataset.split(table, config.test_fraction, config.seed)

    reports = []
    for algorithm in sorted(set(config.algorithms)):
        for lr in sorted(set(config.grid)):
            train_config = TrainConfig(
                learning_rate=lr,
                epochs=config.epochs,
                d=config.d,
                seed=config.seed,
                init_std=config.init_std,
                l2=config.l2,
                clamp=config.clamp,
            )
            try:
                if algorithm == "matmat":
                    model, _ = train_matmat(table, pop, matmat_block_spec(config.t), split, train_config)
                else:
                    model, _ = train_classic(table, split, train_config)
            except DivergenceError:
                reports.append(_diverged_report(table, split, algorithm, lr, config.seed))
                continue
            reports.append(evaluate(model, table, split, config.k, algorithm, lr, config.seed))
    return SweepResult(reports=reports)


def evaluate(model, table, split, k, algorithm, learning_rate, seed) -> EvalReport:
    """Score one trained model on the test split (star-scale errors)."""
    us, iis, rs = table.arrays()
    test_idx = np.asarray(split.test, dtype=np.int64)
    preds = predict_many(model, us[test_idx], iis[test_idx])
    actuals = rs[test_idx]
    lists = topk(model, table, split, k)
    return EvalReport(
        mae=mae(preds, actuals),
        rmse=rmse(preds, actuals),
        matthew_degree=matthew_degree(lists),
        n_test=test_idx.shape[0],
        n_cold=_count_cold(us, iis, split),
        algorithm=algorithm,
        learning_rate=learning_rate,
        seed=seed,
    )


def _count_cold(us, iis, split) -> int:
    train_idx = np.asarray(split.train, dtype=np.int64)
    test_idx = np.asarray(split.test, dtype=np.int64)
    seen_users = np.isin(us[test_idx], np.unique(us[train_idx]))
    seen_items = np.isin(iis[test_idx], np.unique(iis[train_idx]))
    return int(np.sum(~(seen_users & seen_items)))


def _diverged_report(table, split, algorithm, learning_rate, seed) -> EvalReport:
    us, iis, _ = table.arrays()
    nan = float("nan")
    return EvalReport(
        mae=nan,
        rmse=nan,
        matthew_degree=nan,
        n_test=len(split.test),
        n_cold=_count_cold(us, iis, split),
        algorithm=algorithm,
        learning_rate=learning_rate,
        seed=seed,
        diverged=True,
    )


def emit_csv(result: SweepResult, path: str) -> str:
    """Write the sweep as CSV, rows ordered by (algorithm, learning_rate)."""
    rows = sorted(result.reports, key=lambda r: (r.algorithm, r.learning_rate))
    lines = ["algorithm,learning_rate,mae,rmse,matthew_degree,n_test,n_cold,diverged"]
    for r in rows:
        lines.append(
            f"{r.algorithm},{r.learning_rate:.6f},{r.mae:.6f},{r.rmse:.6f},"
            f"{r.matthew_degree:.6f},{r.n_test},{r.n_cold},{str(r.diverged).lower()}"
        )
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


# --- SVG charts -------------------------------------------------------------
#
# Point mapping, also relied on by tests:
#   x(lr) = LEFT + (ln lr - ln lr_min) / (ln lr_max - ln lr_min) * plot_width
#   y(v)  = TOP + plot_height - (v - v_lo) / (v_hi - v_lo) * plot_height
# where (v_lo, v_hi) is the finite value range padded by 5% on each side
# (plus/minus 0.5 when the range is a single value), and a degenerate axis
# places points at the center.

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 24, 44, 56
PLOT_W = WIDTH - LEFT - RIGHT
PLOT_H = HEIGHT - TOP - BOTTOM
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _log_x(lr: float, lo: float, hi: float) -> float:
    if lo == hi:
        return LEFT + PLOT_W / 2
    return LEFT + (math.log(lr) - math.log(lo)) / (math.log(hi) - math.log(lo)) * PLOT_W


def _lin_y(value: float, lo: float, hi: float) -> float:
    if lo == hi:
        return TOP + PLOT_H / 2
    return TOP + PLOT_H - (value - lo) / (hi - lo) * PLOT_H


def _value_bounds(values) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def emit_charts(result: SweepResult, out_dir: str) -> list[str]:
    """Write mae.svg and matthew.svg line charts; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for field_name, title, filename in (
        ("mae", "MAE vs learning rate", "mae.svg"),
        ("matthew_degree", "Matthew degree vs learning rate", "matthew.svg"),
    ):
        series = {}
        for r in sorted(result.reports, key=lambda r: (r.algorithm, r.learning_rate)):
            series.setdefault(r.algorithm, []).append((r.learning_rate, getattr(r, field_name)))
        path = os.path.join(out_dir, filename)
        svg = _line_chart(title, field_name.replace("_", " "), series)
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(svg)
        except OSError as exc:
            raise OSError(f"cannot write chart to {path}: {exc}") from exc
        paths.append(path)
    return paths


def _line_chart(title: str, ylabel: str, series: dict[str, list[tuple[float, float]]]) -> str:
    rates = sorted({lr for points in series.values() for lr, _ in points})
    finite = [v for points in series.values() for _, v in points if math.isfinite(v)]
    x_lo, x_hi = (rates[0], rates[-1]) if rates else (0.001, 0.1)
    y_lo, y_hi = _value_bounds(finite) if finite else (0.0, 1.0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f'  <rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'  <text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" font-size="15" fill="#333">{title}</text>',
    ]

    # horizontal grid plus y tick labels
    for j in range(6):
        v = y_lo + (y_hi - y_lo) * j / 5
        y = _lin_y(v, y_lo, y_hi)
        out.append(
            f'  <line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + PLOT_W}" y2="{y:.2f}" '
            f'stroke="#e0e0e0" stroke-width="1"/>'
        )
        out.append(
            f'  <text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11" '
            f'fill="#666">{v:.3f}</text>'
        )

    # x ticks at each swept rate (log positions)
    for lr in rates:
        x = _log_x(lr, x_lo, x_hi)
        out.append(
            f'  <line x1="{x:.2f}" y1="{TOP + PLOT_H}" x2="{x:.2f}" y2="{TOP + PLOT_H + 5}" '
            f'stroke="#333" stroke-width="1"/>'
        )
        out.append(
            f'  <text x="{x:.2f}" y="{TOP + PLOT_H + 18}" text-anchor="middle" font-size="11" '
            f'fill="#333">{lr:g}</text>'
        )

    for index, (name, points) in enumerate(sorted(series.items())):
        color = PALETTE[index % len(PALETTE)]
        coords = [
            (_log_x(lr, x_lo, x_hi), _lin_y(v, y_lo, y_hi))
            for lr, v in points
            if math.isfinite(v)
        ]
        polyline = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
        out.append(
            f'  <polyline fill="none" stroke="{color}" stroke-width="2" points="{polyline}"/>'
        )
        for x, y in coords:
            out.append(f'  <circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        legend_y = TOP + 10 + 18 * index
        out.append(
            f'  <rect x="{LEFT + PLOT_W - 110}" y="{legend_y - 9}" width="12" height="12" fill="{color}"/>'
        )
        out.append(
            f'  <text x="{LEFT + PLOT_W - 93}" y="{legend_y + 2}" font-size="12" fill="#333">{name}</text>'
        )

    out.append(
        f'  <line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + PLOT_H}" stroke="#333" stroke-width="1"/>'
    )
    out.append(
        f'  <line x1="{LEFT}" y1="{TOP + PLOT_H}" x2="{LEFT + PLOT_W}" y2="{TOP + PLOT_H}" '
        f'stroke="#333" stroke-width="1"/>'
    )
    out.append(
        f'  <text x="{LEFT + PLOT_W / 2:.2f}" y="{HEIGHT - 14}" text-anchor="middle" font-size="12" '
        f'fill="#333">learning rate (log scale)</text>'
    )
    out.append(
        f'  <text x="18" y="{TOP + PLOT_H / 2:.2f}" text-anchor="middle" font-size="12" fill="#333" '
        f'transform="rotate(-90, 18, {TOP + PLOT_H / 2:.2f})">{ylabel}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- storage footprint ------------------------------------------------------

_UNITS = ("B", "KB", "MB", "GB", "TB", "PB", "EB")


def human_bytes(n: int) -> str:
    """Format a byte count with decimal units (1 KB = 1000 B)."""
    value = float(n)
    for unit in _UNITS:
        if value < 1000 or unit == _UNITS[-1]:
            return f"{value:.1f} {unit}"
        value /= 1000
    return f"{value:.1f} {_UNITS[-1]}"


def footprint_command(n_users: int, n_items: int, t: int, d: int, bytes_per_value: int) -> tuple[int, int]:
    """Print the tensor-vs-factors storage comparison; returns both byte counts."""
    tensor_bytes, matmat_bytes = storage_footprint(n_users, n_items, t, d, bytes_per_value)
    ratio = tensor_bytes / matmat_bytes
    print(f"dense block tensor : {tensor_bytes} bytes ({human_bytes(tensor_bytes)})")
    print(f"matmat factors     : {matmat_bytes} bytes ({human_bytes(matmat_bytes)})")
    print(f"ratio (tensor/matmat): {ratio:.2f}")
    return tensor_bytes, matmat_bytes
