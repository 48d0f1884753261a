"""Task-stream replay, evaluation, synthetic data, and hyperparameter sweeps.

A stream is an ordered list of tasks, each bringing a disjoint group of
classes with one training batch per class. ``run_cil`` feeds the batches to
the selected method in arrival order, evaluates after every task on the
test rows whose labels have been seen so far (micro accuracy, sample
weighted), and reports the trace plus the final accuracy after the last
task.

Class arrival order depends only on the shuffle seed, never on the task
count, so methods whose statistics are order-determined (all of them here)
produce identical final predictions for any number of tasks.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .batch import FeatureBatch, split_by_class
from .classify import (
    NcmModel,
    ncm_predict,
    softmax,
    solve_lda,
    predict as lda_predict,
)
from .errors import AggregationError, ConfigError, KldaError
from .rff import RffConfig, build_projector, transform_array
from .stats import GaussianAccumulator

METHODS = ("ncm", "lda", "klda", "klda-e")


@dataclass(frozen=True)
class Task:
    class_ids: tuple[int, ...]
    batches: dict[int, FeatureBatch]


@dataclass(frozen=True)
class TaskStream:
    tasks: list[Task]
    test_set: FeatureBatch
    shuffle_seed: int = 0

    def __post_init__(self):
        seen: set[int] = set()
        for task in self.tasks:
            overlap = seen.intersection(task.class_ids)
            if overlap:
                raise ConfigError(f"classes {sorted(overlap)} appear in more than one task")
            seen.update(task.class_ids)
            for cid in task.class_ids:
                if cid not in task.batches:
                    raise ConfigError(f"task lists class {cid} but has no batch for it")
        missing = set(np.unique(self.test_set.labels)) - seen
        if missing:
            raise ConfigError(f"test labels {sorted(missing)} never appear in any task")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def raw_width(self) -> int:
        return self.test_set.width

    @property
    def num_classes(self) -> int:
        return sum(len(t.class_ids) for t in self.tasks)


@dataclass(frozen=True)
class MethodConfig:
    method: str
    transform_dim: int = 5000
    sigma: float = 1e-3
    ridge: float = 1e-4
    ensemble_size: int = 5
    rff_seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.transform_dim < 1:
            raise ConfigError(f"transform_dim must be >= 1, got {self.transform_dim}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.ridge < 0:
            raise ConfigError(f"ridge must be non-negative, got {self.ridge}")
        if self.ensemble_size < 1:
            raise ConfigError(f"ensemble_size must be >= 1, got {self.ensemble_size}")


@dataclass
class RunReport:
    method: str
    dataset: str
    seeds: dict[str, int]
    hyperparameters: dict
    per_task_accuracy_trace: list[float]
    final_accuracy: float
    wall_time_ms: dict[str, float]
    incomplete: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trace"] = d.pop("per_task_accuracy_trace")
        return d


@dataclass(frozen=True)
class RunSummary:
    method: str
    dataset: str
    count: int
    mean_accuracy: float
    std_accuracy: float

    def format_mean_std(self) -> str:
        """Percent form, e.g. '95.90 ± 0.68'."""
        return f"{100 * self.mean_accuracy:.2f} ± {100 * self.std_accuracy:.2f}"


# --- learners driven by run_cil ---------------------------------------------


class _NcmLearner:
    def __init__(self, config: MethodConfig):
        self.means: dict[int, np.ndarray] = {}

    def update(self, batch: FeatureBatch, class_id: int) -> None:
        self.means[class_id] = batch.values.mean(axis=0)

    def prepare(self) -> None:
        pass

    def predict(self, features: FeatureBatch) -> np.ndarray:
        return ncm_predict(NcmModel(class_means=dict(self.means)), features)


class _LdaLearner:
    def __init__(self, config: MethodConfig, width: int):
        self.acc = GaussianAccumulator(width)
        self.ridge = config.ridge
        self._model = None

    def update(self, batch: FeatureBatch, class_id: int) -> None:
        self.acc.update_class(batch, class_id)
        self._model = None

    def prepare(self) -> None:
        if self._model is None and self.acc.num_classes >= 2:
            self._model = solve_lda(self.acc, self.ridge)

    def predict(self, features: FeatureBatch) -> np.ndarray:
        if self.acc.num_classes == 1:
            # degenerate stream head: only one class exists, nothing to solve
            only = self.acc.class_ids()[0]
            return np.full(features.n_rows, only, dtype=np.int64)
        self.prepare()
        return lda_predict(self._model, features)


class _KldaLearner(_LdaLearner):
    def __init__(self, config: MethodConfig, width: int, seed_offset: int = 0):
        super().__init__(config, config.transform_dim)
        rff_config = RffConfig(
            width, config.transform_dim, config.sigma, (config.rff_seed + seed_offset) % 2**64
        )
        self.projector = build_projector(rff_config)
        self.normalize = config.normalize

    def _kernelize(self, batch: FeatureBatch) -> FeatureBatch:
        values = batch.values
        if self.normalize:
            norms = np.linalg.norm(values, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            values = values / norms
        return FeatureBatch(transform_array(self.projector, values), batch.labels)

    def update(self, batch: FeatureBatch, class_id: int) -> None:
        super().update(self._kernelize(batch), class_id)

    def predict(self, features: FeatureBatch) -> np.ndarray:
        return super().predict(self._kernelize(features))


class _KldaEnsembleLearner:
    def __init__(self, config: MethodConfig, width: int):
        self.members = [
            _KldaLearner(config, width, seed_offset=e) for e in range(config.ensemble_size)
        ]

    def update(self, batch: FeatureBatch, class_id: int) -> None:
        for member in self.members:
            member.update(batch, class_id)

    def prepare(self) -> None:
        for member in self.members:
            member.prepare()

    def predict(self, features: FeatureBatch) -> np.ndarray:
        first = self.members[0]
        if first.acc.num_classes == 1:
            only = first.acc.class_ids()[0]
            return np.full(features.n_rows, only, dtype=np.int64)
        ids = np.asarray(first.acc.class_ids())
        avg = np.zeros((features.n_rows, ids.size))
        for member in self.members:
            member.prepare()
            z = member._kernelize(features)
            avg += softmax(z.values @ member._model.weights + member._model.biases)
        avg /= len(self.members)
        return ids[np.argmax(avg, axis=1)]


def _make_learner(config: MethodConfig, width: int):
    if config.method == "ncm":
        return _NcmLearner(config)
    if config.method == "lda":
        return _LdaLearner(config, width)
    if config.method == "klda":
        return _KldaLearner(config, width)
    return _KldaEnsembleLearner(config, width)


# --- stream construction -----------------------------------------------------


def partition_classes(class_ids: list[int], num_tasks: int, shuffle_seed: int) -> list[list[int]]:
    """Shuffle then split into near-equal ordered groups; earlier groups take the extras."""
    if num_tasks < 1:
        raise ConfigError(f"task count must be >= 1, got {num_tasks}")
    if num_tasks > len(class_ids):
        raise ConfigError(f"cannot split {len(class_ids)} classes into {num_tasks} tasks")
    rng = np.random.default_rng(shuffle_seed)
    order = [class_ids[i] for i in rng.permutation(len(class_ids))]
    base, extra = divmod(len(order), num_tasks)
    groups, at = [], 0
    for t in range(num_tasks):
        size = base + (1 if t < extra else 0)
        groups.append(order[at : at + size])
        at += size
    return groups


def stream_from_class_batches(
    per_class: dict[int, FeatureBatch],
    test_set: FeatureBatch,
    num_tasks: int,
    shuffle_seed: int = 0,
) -> TaskStream:
    groups = partition_classes(sorted(per_class), num_tasks, shuffle_seed)
    tasks = [
        Task(class_ids=tuple(g), batches={cid: per_class[cid] for cid in g}) for g in groups
    ]
    return TaskStream(tasks=tasks, test_set=test_set, shuffle_seed=shuffle_seed)


def build_stream(manifest_path, num_tasks: int, shuffle_seed: int = 0) -> TaskStream:
    """Load a dataset manifest and arrange its training classes into tasks."""
    from .featstore import load_split

    train = load_split(manifest_path, "train")
    test = load_split(manifest_path, "test")
    return stream_from_class_batches(split_by_class(train), test, num_tasks, shuffle_seed)


# --- evaluation ---------------------------------------------------------------


def _accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    if truth.size == 0:
        return float("nan")
    return float(np.mean(pred == truth))


def run_cil(stream: TaskStream, config: MethodConfig, dataset: str = "") -> RunReport:
    """Replay the stream, updating after each class and evaluating after each task."""
    t_start = time.perf_counter()
    learner = _make_learner(config, stream.raw_width)
    trace: list[float] = []
    seen: list[int] = []
    train_ms = solve_ms = eval_ms = 0.0
    incomplete = False
    error = None
    for task in stream.tasks:
        try:
            t0 = time.perf_counter()
            for cid in task.class_ids:
                learner.update(task.batches[cid], cid)
            train_ms += 1e3 * (time.perf_counter() - t0)
            seen.extend(task.class_ids)
            t0 = time.perf_counter()
            learner.prepare()
            solve_ms += 1e3 * (time.perf_counter() - t0)
            t0 = time.perf_counter()
            subset = stream.test_set.select_labels(np.asarray(seen))
            trace.append(_accuracy(learner.predict(subset), subset.labels))
            eval_ms += 1e3 * (time.perf_counter() - t0)
        except KldaError as exc:
            incomplete = True
            error = f"{type(exc).__name__}: {exc}"
            break
    final = trace[-1] if trace else float("nan")
    return RunReport(
        method=config.method,
        dataset=dataset,
        seeds={"shuffle": stream.shuffle_seed, "rff": config.rff_seed},
        hyperparameters={
            "transform_dim": config.transform_dim,
            "sigma": config.sigma,
            "ridge": config.ridge,
            "ensemble_size": config.ensemble_size if config.method == "klda-e" else 1,
            "num_tasks": stream.num_tasks,
            "normalize": config.normalize,
        },
        per_task_accuracy_trace=trace,
        final_accuracy=final,
        wall_time_ms={
            "train": train_ms,
            "solve": solve_ms,
            "eval": eval_ms,
            "total": 1e3 * (time.perf_counter() - t_start),
        },
        incomplete=incomplete,
        error=error,
    )


def average_runs(reports: list[RunReport]) -> RunSummary:
    """Mean and population standard deviation of final accuracies."""
    if not reports:
        raise AggregationError("no reports to aggregate")
    methods = {r.method for r in reports}
    datasets = {r.dataset for r in reports}
    if len(methods) > 1 or len(datasets) > 1:
        raise AggregationError(
            f"cannot aggregate heterogeneous reports: methods={sorted(methods)}, datasets={sorted(datasets)}"
        )
    accs = np.array([r.final_accuracy for r in reports])
    return RunSummary(
        method=reports[0].method,
        dataset=reports[0].dataset,
        count=len(reports),
        mean_accuracy=float(accs.mean()),
        std_accuracy=float(accs.std()),
    )


# --- synthetic datasets --------------------------------------------------------


def synth_gaussians(
    num_classes: int,
    dim: int,
    separation: float,
    noise: float,
    train_per_class: int,
    test_per_class: int,
    seed: int = 0,
) -> tuple[dict[int, FeatureBatch], FeatureBatch]:
    """Isotropic Gaussian classes with equal pairwise mean distances.

    Means sit at orthonormal directions scaled by separation/sqrt(2), so
    every pair of means is exactly `separation` apart (requires
    dim >= num_classes; fewer dims fall back to random unit directions).
    Shared covariance is noise^2 * I, so the two-class Bayes accuracy has
    the closed form Phi(separation / (2*noise)).
    """
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    if num_classes < 1:
        raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
    if train_per_class < 1 or test_per_class < 1:
        raise ConfigError("per-class counts must be >= 1")
    if noise < 0 or separation < 0:
        raise ConfigError("noise and separation must be non-negative")
    rng = np.random.default_rng(seed)
    if dim >= num_classes:
        q, _ = np.linalg.qr(rng.standard_normal((dim, num_classes)))
        directions = q
    else:
        directions = rng.standard_normal((dim, num_classes))
        directions /= np.linalg.norm(directions, axis=0)
    means = (separation / math.sqrt(2.0)) * directions
    train = {}
    test_rows, test_labels = [], []
    for cid in range(num_classes):
        rows = means[:, cid] + noise * rng.standard_normal((train_per_class, dim))
        train[cid] = FeatureBatch(rows, np.full(train_per_class, cid))
        rows = means[:, cid] + noise * rng.standard_normal((test_per_class, dim))
        test_rows.append(rows)
        test_labels.append(np.full(test_per_class, cid))
    return train, FeatureBatch(np.vstack(test_rows), np.concatenate(test_labels))


def synth_rings(
    radii: list[float],
    noise: float,
    train_per_class: int,
    test_per_class: int,
    seed: int = 0,
) -> tuple[dict[int, FeatureBatch], FeatureBatch]:
    """Concentric 2-D rings: rotation-symmetric classes no linear rule can separate."""
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise ConfigError("radii must be positive")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError(f"radii must be strictly increasing, got {radii}")
    if train_per_class < 1 or test_per_class < 1:
        raise ConfigError("per-class counts must be >= 1")
    rng = np.random.default_rng(seed)

    def ring(radius: float, count: int) -> np.ndarray:
        theta = 2.0 * np.pi * rng.random(count)
        pts = radius * np.column_stack((np.cos(theta), np.sin(theta)))
        return pts + noise * rng.standard_normal((count, 2))

    train = {}
    test_rows, test_labels = [], []
    for cid, radius in enumerate(radii):
        train[cid] = FeatureBatch(ring(radius, train_per_class), np.full(train_per_class, cid))
        test_rows.append(ring(radius, test_per_class))
        test_labels.append(np.full(test_per_class, cid))
    return train, FeatureBatch(np.vstack(test_rows), np.concatenate(test_labels))


def bayes_accuracy_two_class(separation: float, noise: float) -> float:
    """Closed-form Bayes accuracy for two equal-prior isotropic Gaussians `separation` apart."""
    if noise == 0:
        return 1.0
    x = separation / (2.0 * noise)
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# --- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    transform_dim: int
    sigma: float
    seed: int
    final_accuracy: float
    error: str | None = None


@dataclass(frozen=True)
class SweepTable:
    cells: list[SweepCell]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["D", "sigma", "seed", "final_accuracy"])
            for cell in self.cells:
                writer.writerow(
                    [cell.transform_dim, repr(cell.sigma), cell.seed, repr(cell.final_accuracy)]
                )

    def mean_accuracy(self, transform_dim: int, sigma: float) -> float:
        accs = [
            c.final_accuracy
            for c in self.cells
            if c.transform_dim == transform_dim and c.sigma == sigma and c.error is None
        ]
        return float(np.mean(accs)) if accs else float("nan")


def sweep(
    stream: TaskStream,
    dims: list[int],
    sigmas: list[float],
    repeats: int = 1,
    ridge: float = 1e-4,
    base_seed: int = 0,
    method: str = "klda",
    jobs: int = 1,
) -> SweepTable:
    """Grid of run_cil calls over transform dimension and bandwidth.

    Each cell runs `repeats` times with feature seeds base_seed..base_seed+repeats-1
    on the same stream. A failing cell is recorded with nan accuracy and its
    error message; the sweep continues.
    """
    if not dims or not sigmas:
        raise ConfigError("sweep grid must be non-empty")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    grid = [
        (d, s, base_seed + rep) for d in dims for s in sigmas for rep in range(repeats)
    ]

    def run_cell(cell) -> SweepCell:
        d, s, seed = cell
        try:
            config = MethodConfig(method=method, transform_dim=d, sigma=s, ridge=ridge, rff_seed=seed)
            report = run_cil(stream, config)
            if report.incomplete:
                return SweepCell(d, s, seed, float("nan"), report.error)
            return SweepCell(d, s, seed, report.final_accuracy)
        except KldaError as exc:
            return SweepCell(d, s, seed, float("nan"), f"{type(exc).__name__}: {exc}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(run_cell, grid))
    else:
        cells = [run_cell(c) for c in grid]
    return SweepTable(cells=cells)
