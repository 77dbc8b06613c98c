"""Accuracy, markup-action accounting, composition extrapolation, and the
pool-size scaling experiment.

Markup cost follows the crowd-vote regime: one fully labeled image costs
votes_per_label markup actions (42 by default). Composition accuracy
scores the labeled part of a corpus as ground truth and the unlabeled
remainder at the model's accuracy, which is how corpus-level numbers
scale to datasets far larger than the labeled budget.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from morphal.errors import ConfigError, InputError

SCALING_COLUMNS = ["N", "A", "R", "seed", "final_test_acc"]


def accuracy(predicted, true) -> float:
    """Fraction of positions where the two label vectors agree."""
    p = np.asarray(predicted).reshape(-1)
    t = np.asarray(true).reshape(-1)
    if p.size == 0:
        raise InputError("accuracy of empty vectors is undefined")
    if p.size != t.size:
        raise InputError(f"length mismatch: {p.size} vs {t.size}")
    return float((p == t).sum() / p.size)


def markup_actions(n_labeled: int, votes_per_label: int = 42) -> int:
    """Total markup actions for n fully labeled images."""
    if n_labeled < 0:
        raise InputError("n_labeled must be >= 0")
    if votes_per_label < 1:
        raise InputError("votes_per_label must be >= 1")
    return n_labeled * votes_per_label


@dataclass
class ExtrapolationInput:
    """Corpus-composition inputs: labeled budget, target corpus size, and
    model accuracy on the unlabeled part."""

    a_labeled: int
    n_total: int
    acc_unlabeled: float

    def __post_init__(self):
        if self.a_labeled < 1:
            raise InputError("a_labeled must be >= 1")
        if self.a_labeled > self.n_total:
            raise InputError(
                f"a_labeled {self.a_labeled} exceeds n_total {self.n_total}"
            )
        if not (0.0 <= self.acc_unlabeled <= 1.0):
            raise InputError(f"acc_unlabeled {self.acc_unlabeled} outside [0,1]")


def composed_accuracy(inp: ExtrapolationInput) -> float:
    """Corpus accuracy with the labeled part scored 1.0 and the unlabeled
    remainder scored at acc_unlabeled."""
    a, n = inp.a_labeled, inp.n_total
    return (a * 1.0 + (n - a) * inp.acc_unlabeled) / n


def ratio_R(n_total: int, a_labeled: int) -> float:
    """Pool-to-budget ratio N/A."""
    if a_labeled < 1:
        raise InputError("a_labeled must be >= 1")
    return n_total / a_labeled


@dataclass
class ScalingConfig:
    """One scaling sweep: fixed labeled budget A over growing pools N."""

    a_labeled: int
    n_values: list[int]
    seeds: list[int]

    def __post_init__(self):
        if self.a_labeled < 1:
            raise InputError("a_labeled must be >= 1")
        if not self.n_values or not self.seeds:
            raise InputError("n_values and seeds must be nonempty")
        bad = [n for n in self.n_values if n < self.a_labeled]
        if bad:
            raise InputError(f"every N must be >= A, offending: {bad}")


def run_scaling_experiment(cfg: ScalingConfig, dataset, train_cfg,
                           split=None, split_seed: int = 0,
                           strategy: str = "uncertainty") -> list[dict]:
    """Run one active-learning sweep per (N, seed) cell.

    Each cell subsamples a train pool of size N, runs the 4%/1% schedule
    truncated at A total labels, and records the final test accuracy.
    Cells are independent; rows come back sorted by (N, seed).
    """
    from morphal.active_learning import (
        Oracle,
        build_schedule,
        run_active_learning,
    )
    from morphal.data import DatasetSplit, make_splits

    if split is None:
        split = make_splits(dataset.ids, seed=split_seed)
    if max(cfg.n_values) > len(split.train_ids):
        raise InputError(
            f"largest N {max(cfg.n_values)} exceeds the train pool "
            f"({len(split.train_ids)} ids)"
        )
    oracle = Oracle(mode="dataset", labels=dataset.labels)
    rows = []
    for n_pool in cfg.n_values:
        for seed in cfg.seeds:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 30, n_pool]))
            pool_ids = [split.train_ids[i]
                        for i in rng.choice(len(split.train_ids), size=n_pool,
                                            replace=False)]
            schedule = build_schedule(n_pool, cap_frac=cfg.a_labeled / n_pool)
            if sum(schedule.quotas) != cfg.a_labeled:
                raise ConfigError(
                    f"schedule cap {sum(schedule.quotas)} != A {cfg.a_labeled}"
                )
            cell_split = DatasetSplit(pool_ids, split.val_ids, split.test_ids)
            reports = run_active_learning(dataset, cell_split, schedule,
                                          train_cfg, strategy, oracle, seed=seed)
            rows.append({
                "N": n_pool,
                "A": cfg.a_labeled,
                "R": ratio_R(n_pool, cfg.a_labeled),
                "seed": seed,
                "final_test_acc": reports[-1].test_acc,
            })
    rows.sort(key=lambda r: (r["N"], r["seed"]))
    return rows


def _format_cell(value) -> str:
    # repr of a Python float is the shortest decimal that parses back to
    # the same bits, so emitted CSVs round-trip losslessly.
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report_csv(rows: list[dict], path, columns: list[str] | None = None) -> None:
    """Write rows as CSV with a stable column order and lossless floats."""
    if not rows:
        raise InputError("no rows to emit")
    columns = list(columns) if columns is not None else list(rows[0].keys())
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise InputError(f"rows lack columns {missing}")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def parse_report_csv(path) -> list[dict]:
    """Read back a CSV written by emit_report_csv, restoring numbers."""
    def restore(text: str):
        for conv in (int, float):
            try:
                return conv(text)
            except ValueError:
                continue
        return text

    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return [{col: restore(cell) for col, cell in zip(header, row)}
                for row in reader if row]
