"""Pool-based active learning over the AAE classifier.

A run partitions the train pool into labeled/unlabeled sets, seeds with a
random 4% (by default), then repeatedly: retrains from scratch on the
labeled set (the unlabeled pool feeds the unsupervised phases), scores the
unlabeled pool, and queries the most uncertain images (probability closest
to 0.5) or a uniform-random baseline, until 10% of the pool is labeled.
Every label costs votes_per_label markup actions (42 by default).

The ``ActiveLearningRun`` state machine is shared by batch runs (dataset
oracle answers synchronously) and the HTTP labeling service (a human
answers query by query), so scripted human sessions replay identically
to dataset-oracle runs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from morphal.aae import TrainConfig, model_from_document, train_model
from morphal.aae import _layer_to_json  # reused for run checkpoints
from morphal.aae import AaeModel
from morphal.data import Dataset, DatasetSplit, binarize_label
from morphal.errors import (
    ConfigError,
    InputError,
    MorphalError,
    StateError,
)
from morphal.metrics import accuracy

DEFAULT_VOTES_PER_LABEL = 42
REPORT_COLUMNS = ["round", "labeled", "actions", "val_acc", "test_acc",
                  "strategy", "seed"]
STRATEGIES = ("uncertainty", "random")

RUN_CHECKPOINT_VERSION = 1

# Seed-stream tags for the per-round generators.
_SELECT_STREAM = 10
_TRAIN_SEED_STREAM = 20


class PoolState:
    """Disjoint labeled/unlabeled partition with markup-action accounting."""

    def __init__(self, ids):
        ids = list(ids)
        if len(set(ids)) != len(ids):
            raise InputError("pool ids must be unique")
        self.universe = frozenset(ids)
        self.unlabeled: set[str] = set(ids)
        self.labeled: dict[str, int] = {}
        self.actions_spent = 0

    @property
    def labeled_count(self) -> int:
        return len(self.labeled)

    def mark_labeled(self, image_id: str, label: int, cost: int) -> None:
        if image_id in self.labeled:
            raise StateError(f"id {image_id!r} is already labeled")
        if image_id not in self.unlabeled:
            raise InputError(f"id {image_id!r} is not in the pool")
        if label not in (0, 1):
            raise InputError(f"label must be 0 or 1, got {label!r}")
        if cost < 0:
            raise InputError("cost must be >= 0")
        self.unlabeled.remove(image_id)
        self.labeled[image_id] = int(label)
        self.actions_spent += cost

    def check_partition(self) -> None:
        if set(self.labeled) & self.unlabeled:
            raise StateError("labeled and unlabeled sets overlap")
        if set(self.labeled) | self.unlabeled != self.universe:
            raise StateError("pool partition lost ids")


@dataclass
class AlSchedule:
    """Per-round label quotas derived from seed/step/cap fractions."""

    seed_frac: float
    step_frac: float
    cap_frac: float
    n_train: int
    quotas: list[int]

    @property
    def total_labels(self) -> int:
        return sum(self.quotas)

    @property
    def n_rounds(self) -> int:
        return len(self.quotas)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_schedule(n_train: int, seed_frac: float = 0.04,
                   step_frac: float = 0.01, cap_frac: float = 0.10) -> AlSchedule:
    """Compile fractions into per-round quotas: one seed round, then
    fixed-size increments, the last truncated to land exactly on the cap."""
    if n_train < 1:
        raise InputError("n_train must be >= 1")
    if not (0.0 < seed_frac <= cap_frac <= 1.0):
        raise ConfigError(
            f"need 0 < seed_frac <= cap_frac <= 1, got {seed_frac}/{cap_frac}"
        )
    if step_frac <= 0.0:
        raise ConfigError("step_frac must be positive")
    cap = max(1, _round_half_up(cap_frac * n_train))
    seed = min(max(1, _round_half_up(seed_frac * n_train)), cap)
    step = max(1, _round_half_up(step_frac * n_train))
    quotas = [seed]
    total = seed
    while total < cap:
        quota = min(step, cap - total)
        quotas.append(quota)
        total += quota
    return AlSchedule(seed_frac, step_frac, cap_frac, n_train, quotas)


@dataclass
class Oracle:
    """Label source: the dataset's vote fractions or a live human."""

    mode: str = "dataset"
    votes_per_label: int = DEFAULT_VOTES_PER_LABEL
    labels: Optional[dict] = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in ("dataset", "human"):
            raise ConfigError(f"oracle mode must be dataset or human, got {self.mode!r}")
        if self.votes_per_label < 1:
            raise ConfigError("votes_per_label must be >= 1")
        if self.mode == "dataset" and self.labels is None:
            raise ConfigError("dataset oracle needs label records")


def oracle_label(oracle: Oracle, image_id: str, pool: PoolState,
                 answer: Optional[int] = None) -> tuple[int, int]:
    """Resolve one label and its markup cost (the pool is only consulted,
    not mutated). Dataset mode binarizes the stored vote fraction; human
    mode passes through a submitted answer."""
    if image_id in pool.labeled:
        raise StateError(f"id {image_id!r} is already labeled")
    if image_id not in pool.unlabeled:
        raise InputError(f"id {image_id!r} is not in the pool")
    if oracle.mode == "dataset":
        record = oracle.labels.get(image_id)
        if record is None:
            raise InputError(f"oracle has no vote fraction for {image_id!r}")
        label = binarize_label(record.p_positive, oracle.threshold)
    else:
        if answer not in (0, 1):
            raise InputError(f"human answer must be 0 or 1, got {answer!r}")
        label = int(answer)
    return label, oracle.votes_per_label


def uncertainty_score(p: float) -> float:
    """Distance from a coin flip; 0 means maximally uncertain."""
    if not (0.0 <= p <= 1.0):
        raise InputError(f"probability {p} outside [0,1]")
    return abs(p - 0.5)


def select_queries(predictions: dict[str, float], k: int, strategy: str,
                   rng: Optional[np.random.Generator] = None) -> list[str]:
    """Pick up to k query ids.

    uncertainty: the k smallest |p - 0.5|, ties broken by ascending id.
    random: k ids drawn uniformly without replacement via rng.
    """
    if not predictions:
        raise InputError("no predictions to select from")
    if k < 1:
        raise InputError("k must be >= 1")
    if strategy == "uncertainty":
        ranked = sorted(predictions,
                        key=lambda i: (uncertainty_score(predictions[i]), i))
        return ranked[:k]
    if strategy == "random":
        if rng is None:
            raise InputError("random strategy needs an rng")
        ids = sorted(predictions)
        take = min(k, len(ids))
        picks = rng.choice(len(ids), size=take, replace=False)
        return [ids[i] for i in picks]
    raise ConfigError(f"unknown strategy {strategy!r}")


@dataclass
class RoundReport:
    """One completed round: cumulative counts and accuracies."""

    round_index: int
    labeled: int
    actions: int
    val_acc: float
    test_acc: float
    strategy: str
    seed: int


class RunAborted(MorphalError):
    """Oracle failure mid-round; partial reports are preserved."""

    def __init__(self, reports: list[RoundReport], cause: Exception):
        super().__init__(f"active-learning run aborted: {cause}")
        self.reports = reports
        self.cause = cause


class ActiveLearningRun:
    """The active-learning state machine.

    Life cycle per round: answer every pending query (``submit``), then
    ``finish_round`` retrains from a fresh per-round seed, evaluates, and
    selects the next round's queries. All randomness is derived from
    (seed, round), so a run checkpointed and resumed mid-round reproduces
    the uninterrupted run bit for bit.
    """

    def __init__(self, dataset: Dataset, split: DatasetSplit,
                 schedule: AlSchedule, train_cfg: TrainConfig, strategy: str,
                 seed: int, votes_per_label: int = DEFAULT_VOTES_PER_LABEL,
                 threshold: float = 0.5, _defer_seed_selection: bool = False):
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        if schedule.n_train != len(split.train_ids):
            raise ConfigError(
                f"schedule built for {schedule.n_train} ids but train pool "
                f"has {len(split.train_ids)}"
            )
        self.dataset = dataset
        self.split = split
        self.schedule = schedule
        self.train_cfg = train_cfg
        self.strategy = strategy
        self.seed = seed
        self.votes_per_label = votes_per_label
        self.threshold = threshold

        self.pool = PoolState(split.train_ids)
        self.round_index = 0
        self.pending: list[str] = []
        self.reports: list[RoundReport] = []
        self.model: Optional[AaeModel] = None

        self._x_val = dataset.pixel_matrix(split.val_ids)
        self._y_val = dataset.binary_labels(split.val_ids, threshold)
        self._x_test = dataset.pixel_matrix(split.test_ids)
        self._y_test = dataset.binary_labels(split.test_ids, threshold)

        if not _defer_seed_selection:
            rng = self._round_rng(0)
            ids = sorted(self.pool.unlabeled)
            picks = rng.choice(len(ids), size=self.schedule.quotas[0],
                               replace=False)
            self.pending = [ids[i] for i in picks]

    def _round_rng(self, round_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, _SELECT_STREAM, round_index]))

    def _round_train_seed(self, round_index: int) -> int:
        ss = np.random.SeedSequence([self.seed, _TRAIN_SEED_STREAM, round_index])
        return int(ss.generate_state(1)[0])

    @property
    def done(self) -> bool:
        return self.round_index >= self.schedule.n_rounds

    def pending_queries(self) -> list[str]:
        return list(self.pending)

    def quota_remaining(self) -> int:
        return len(self.pending)

    def round_complete(self) -> bool:
        return not self.pending and not self.done

    def submit(self, image_id: str, label: int) -> None:
        """Apply one answered query to the pool."""
        if self.done:
            raise StateError("run is complete; no labels accepted")
        if image_id not in self.pending:
            if image_id in self.pool.labeled:
                raise StateError(f"id {image_id!r} was already answered")
            raise InputError(f"id {image_id!r} is not a pending query")
        self.pool.mark_labeled(image_id, label, self.votes_per_label)
        self.pending.remove(image_id)

    def finish_round(self) -> RoundReport:
        """Retrain on the current labeled set, evaluate, and queue the next
        round's queries."""
        if self.done:
            raise StateError("run is complete")
        if self.pending:
            raise StateError(f"{len(self.pending)} queries still unanswered")

        labeled_ids = sorted(self.pool.labeled)
        x_lab = self.dataset.pixel_matrix(labeled_ids)
        y_lab = np.array([self.pool.labeled[i] for i in labeled_ids], dtype=float)
        unlabeled_ids = sorted(self.pool.unlabeled)
        x_unl = (self.dataset.pixel_matrix(unlabeled_ids)
                 if unlabeled_ids else None)

        model, _ = train_model(self.dataset.n_pixels, (x_lab, y_lab), x_unl,
                               self.train_cfg,
                               seed=self._round_train_seed(self.round_index))
        self.model = model

        report = RoundReport(
            round_index=self.round_index,
            labeled=self.pool.labeled_count,
            actions=self.pool.actions_spent,
            val_acc=accuracy((model.predict_proba(self._x_val) >= 0.5).astype(int),
                             self._y_val),
            test_acc=accuracy((model.predict_proba(self._x_test) >= 0.5).astype(int),
                              self._y_test),
            strategy=self.strategy,
            seed=self.seed,
        )
        self.reports.append(report)
        self.round_index += 1

        if not self.done and unlabeled_ids:
            probs = model.predict_proba(x_unl)
            predictions = dict(zip(unlabeled_ids, probs.tolist()))
            quota = min(self.schedule.quotas[self.round_index],
                        len(unlabeled_ids))
            self.pending = select_queries(predictions, quota, self.strategy,
                                          self._round_rng(self.round_index))
        else:
            self.round_index = self.schedule.n_rounds
            self.pending = []
        return report

    # --- checkpointing -------------------------------------------------

    def to_document(self) -> dict:
        doc = {
            "format_version": RUN_CHECKPOINT_VERSION,
            "kind": "al_run",
            "seed": self.seed,
            "strategy": self.strategy,
            "votes_per_label": self.votes_per_label,
            "threshold": self.threshold,
            "schedule": asdict(self.schedule),
            "train_cfg": asdict(self.train_cfg),
            "split": asdict(self.split),
            "round_index": self.round_index,
            "pending": list(self.pending),
            "pool": {
                "labeled": {i: self.pool.labeled[i]
                            for i in sorted(self.pool.labeled)},
                "unlabeled": sorted(self.pool.unlabeled),
                "actions_spent": self.pool.actions_spent,
            },
            "reports": [asdict(r) for r in self.reports],
            "model": None,
        }
        if self.model is not None:
            doc["model"] = {
                "format_version": 1,
                "d_z": self.model.d_z,
                "rng_seed": self.seed,
                "rounds_completed": self.round_index,
                "networks": {name: [_layer_to_json(l) for l in net.layers]
                             for name, net in self.model.networks().items()},
            }
        return doc

    @classmethod
    def from_document(cls, dataset: Dataset, doc: dict) -> "ActiveLearningRun":
        from morphal.errors import DataFormatError

        if not isinstance(doc, dict) or doc.get("kind") != "al_run":
            raise DataFormatError("not an active-learning run checkpoint")
        if doc.get("format_version") != RUN_CHECKPOINT_VERSION:
            raise DataFormatError(
                f"unsupported run checkpoint version {doc.get('format_version')!r}"
            )
        try:
            split = DatasetSplit(**doc["split"])
            schedule = AlSchedule(**doc["schedule"])
            cfg = TrainConfig(**doc["train_cfg"])
            run = cls(dataset, split, schedule, cfg, doc["strategy"],
                      doc["seed"], doc["votes_per_label"], doc["threshold"],
                      _defer_seed_selection=True)
            pool_doc = doc["pool"]
            for image_id, label in pool_doc["labeled"].items():
                run.pool.mark_labeled(image_id, label, 0)
            run.pool.actions_spent = pool_doc["actions_spent"]
            if set(pool_doc["unlabeled"]) != run.pool.unlabeled:
                raise DataFormatError("pool partition does not match the split")
            run.round_index = doc["round_index"]
            run.pending = list(doc["pending"])
            run.reports = [RoundReport(**r) for r in doc["reports"]]
            if doc.get("model") is not None:
                run.model, _ = model_from_document(doc["model"])
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"malformed run checkpoint: {exc}") from None
        run.pool.check_partition()
        return run


def run_active_learning(dataset: Dataset, split: DatasetSplit,
                        schedule: AlSchedule, train_cfg: TrainConfig,
                        strategy: str, oracle: Oracle,
                        seed: Optional[int] = None) -> list[RoundReport]:
    """Drive a full run with a synchronous (dataset) oracle.

    Oracle failures abort the run and surface the partial reports via
    RunAborted.
    """
    if oracle.mode != "dataset":
        raise ConfigError("run_active_learning needs a dataset oracle; "
                          "human runs go through the labeling service")
    seed = train_cfg.seed if seed is None else seed
    run = ActiveLearningRun(dataset, split, schedule, train_cfg, strategy,
                            seed, votes_per_label=oracle.votes_per_label,
                            threshold=oracle.threshold)
    while not run.done:
        for image_id in run.pending_queries():
            try:
                label, _cost = oracle_label(oracle, image_id, run.pool)
            except MorphalError as exc:
                raise RunAborted(run.reports, exc) from exc
            run.submit(image_id, label)
        run.finish_round()
    return run.reports


def reports_to_rows(reports: list[RoundReport]) -> list[dict]:
    return [{
        "round": r.round_index,
        "labeled": r.labeled,
        "actions": r.actions,
        "val_acc": r.val_acc,
        "test_acc": r.test_acc,
        "strategy": r.strategy,
        "seed": r.seed,
    } for r in reports]


def write_round_reports(reports: list[RoundReport], path) -> None:
    from morphal.metrics import emit_report_csv

    emit_report_csv(reports_to_rows(reports), path, columns=REPORT_COLUMNS)
