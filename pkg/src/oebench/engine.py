"""Training (Adam, milestone schedule, balanced batches), exact AUC, aggregation."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import objectives as obj
from . import tensor as T
from .data import AugmentSpec, BenchmarkTask, OeSampler, augment, make_rng
from .nn import ClassifierHead, Network
from .objectives import Method, ObjectiveSpec, SaturationCounter

log = logging.getLogger(__name__)

EVAL_CHUNK = 500


class NumericError(RuntimeError):
    """Non-finite loss or gradient during training."""


# -- optimisation ------------------------------------------------------------------------
@dataclass
class Schedule:
    epochs: int
    milestones: tuple[int, ...] = ()
    lr: float = 1e-3
    decay: float = 0.1

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing: {self.milestones}")
        if self.milestones and self.milestones[-1] >= self.epochs:
            raise ValueError(f"milestones {self.milestones} must be < epochs {self.epochs}")

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.milestones if epoch >= m)
        return self.lr * self.decay**passed


PROFILES = {
    "desk": {None: (20, (10, 15))},
    "paper": {
        "mnist": (150, (50, 100)),
        "cifar10": (200, (100, 150)),
        None: (150, (50, 100)),
    },
}


def schedule_for(profile: str, dataset: str, lr: float = 1e-3) -> Schedule:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    table = PROFILES[profile]
    epochs, ms = table.get(dataset, table[None])
    return Schedule(epochs, ms, lr)


class Adam:
    def __init__(self, params: Sequence[T.Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> None:
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient at Adam step {self.t + 1}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: Sequence[T.Tensor], state: Adam, lr: float) -> None:
    state.step(lr)


# -- training ---------------------------------------------------------------------------
@dataclass
class TrainOutput:
    net: Network
    head: ClassifierHead | None
    objective: ObjectiveSpec
    loss_trace: list[float]
    saturation: SaturationCounter
    steps: int
    batch_counts: list[tuple[int, int]] = field(default_factory=list)


def _features(net: Network, images: np.ndarray) -> np.ndarray:
    with T.no_grad():
        return np.concatenate([net(images[i : i + EVAL_CHUNK]).data for i in range(0, len(images), EVAL_CHUNK)])


def compute_center(net: Network, images: np.ndarray) -> np.ndarray:
    """Mean eval-mode feature of ``images`` under ``net`` with the collapse guard."""
    mode = net.training
    net.eval()
    try:
        return obj.init_center(_features(net, images))
    finally:
        net.training = mode


def train(task: BenchmarkTask, objective: ObjectiveSpec, net: Network, schedule: Schedule,
          batch_sizes: tuple[int, int] = (128, 128), augment_spec: AugmentSpec = AugmentSpec(),
          seed: int = 0, head: ClassifierHead | None = None, record_batches: bool = False) -> TrainOutput:
    """Train ``net`` (and ``head`` for classifier objectives) on a one-vs-rest task.

    Each step concatenates ``B_nom`` nominal images (permuted once per epoch)
    with ``B_oe`` OE images from :class:`OeSampler`. Steps per epoch are
    ``floor(|nominal| / B_nom)``, at least one.
    """
    n_nom = len(task.nominal_train)
    if n_nom == 0:
        raise ValueError("empty nominal training set")
    b_nom, b_oe = batch_sizes
    b_nom = min(b_nom, n_nom)
    if objective.uses_head and head is None:
        head = ClassifierHead(net.output_dim, seed)
    if objective.method in obj.CENTER_METHODS and objective.center is None:
        objective.center = compute_center(net, task.nominal_train.images)

    oe_images = task.oe_train.images
    if not objective.uses_oe or len(oe_images) == 0:
        oe_images = task.nominal_train.images[:0]  # shape-compatible empty OE
    rng_nom = make_rng(seed, "nominal-shuffle")
    rng_aug = make_rng(seed, "augment")
    sampler = OeSampler(len(oe_images), max(b_oe, 1), make_rng(seed, "oe-sampler"))

    params = net.parameters() + (head.parameters() if head is not None else [])
    opt = Adam(params)
    counter = SaturationCounter()
    steps_per_epoch = max(1, n_nom // b_nom)
    trace: list[float] = []
    counts: list[tuple[int, int]] = []
    net.train()
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        perm = rng_nom.permutation(n_nom)
        losses = []
        for s in range(steps_per_epoch):
            x_nom = task.nominal_train.images[perm[s * b_nom : (s + 1) * b_nom]]
            x_oe = oe_images[sampler.draw()] if b_oe > 0 else oe_images[:0]
            x = augment(np.concatenate([x_nom, x_oe]), augment_spec, rng_aug)
            y = np.concatenate([np.ones(len(x_nom)), np.zeros(len(x_oe))])
            if record_batches:
                counts.append((len(x_nom), len(x_oe)))
            feats = net(x)
            probs = head(feats) if head is not None else None
            loss = obj.objective_loss(objective, feats, probs, y, counter)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch} step {s}")
            for p in params:
                p.grad = None
            loss.backward()
            opt.step(lr)
            losses.append(value)
        trace.append(float(np.mean(losses)))
        log.debug("epoch %d lr %.1e loss %.6f", epoch, lr, trace[-1])
    net.eval()
    return TrainOutput(net, head, objective, trace, counter, opt.t, counts)


# -- evaluation -------------------------------------------------------------------------
def auc(scores_nominal: Iterable[float], scores_anomalous: Iterable[float]) -> float:
    """Exact ROC AUC via the Mann-Whitney statistic with midranks.

    Anomalies are the positive (high-score) class; ties count one half.
    """
    nom = np.asarray(list(scores_nominal), dtype=np.float64)
    ano = np.asarray(list(scores_anomalous), dtype=np.float64)
    n, m = len(nom), len(ano)
    if n == 0 or m == 0:
        raise ValueError("auc needs at least one nominal and one anomalous score")
    ranks = rankdata(np.concatenate([ano, nom]), method="average")
    u = ranks[:m].sum() - m * (m + 1) / 2.0
    return float(u / (m * n))


def score_images(net: Network, objective: ObjectiveSpec, images: np.ndarray,
                 head: ClassifierHead | None = None) -> np.ndarray:
    net.eval()
    feats = _features(net, images)
    if objective.uses_head:
        if head is None:
            raise ValueError(f"{objective.method.value} needs a classifier head")
        with T.no_grad():
            probs = head(feats).data
        return obj.anomaly_score(objective, probs=probs)
    return obj.anomaly_score(objective, features=feats)


def evaluate(task: BenchmarkTask, net: Network, objective: ObjectiveSpec,
             head: ClassifierHead | None = None) -> float:
    scores = score_images(net, objective, task.test.images, head)
    y = task.test_targets
    return auc(scores[y == 1], scores[y == 0])


# -- results ------------------------------------------------------------------------------
RESULT_FIELDS = ("dataset", "method", "radial", "nominal_class", "oe_size", "diversity_k", "blur_sigma",
                 "gamma", "seed", "auc", "epochs", "wall_clock_s", "config_digest")


@dataclass
class RunResult:
    dataset: str
    method: str
    nominal_class: int
    seed: int
    auc: float
    config_digest: str
    radial: str | None = None
    oe_size: int | str | None = None
    diversity_k: int | None = None
    blur_sigma: float = 0.0
    gamma: float | None = None
    epochs: int = 0
    wall_clock_s: float = 0.0
    axis: str = "none"
    loss_trace: list[float] = field(default_factory=list)
    saturation: int = 0

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"auc {self.auc} outside [0, 1]")

    @property
    def label(self) -> str:
        if self.method == "hsc" and self.radial not in (None, "pseudo_huber"):
            return f"hsc[{self.radial}]"
        return self.method

    def axis_value(self):
        return None if self.axis == "none" else getattr(self, self.axis)

    def to_json(self) -> str:
        d = asdict(self)
        ordered = {k: d[k] for k in RESULT_FIELDS}
        ordered.update(axis=self.axis, saturation=self.saturation, loss_trace=self.loss_trace)
        return json.dumps(ordered)

    @classmethod
    def from_json(cls, line: str) -> RunResult:
        d = json.loads(line)
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


# -- aggregation ---------------------------------------------------------------------------
@dataclass
class CellStat:
    mean: float
    std: float
    n: int


def _mean_std(values: Sequence[float]) -> CellStat:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return CellStat(float(arr.mean()), std, len(arr))


@dataclass
class AggregateTable:
    """Per (axis value, method, class) seed statistics plus class-averaged means."""

    axis: str
    cells: dict[tuple, dict[int, CellStat]]

    @property
    def xs(self) -> list:
        return sorted({x for x, _ in self.cells}, key=_sort_key)

    @property
    def methods(self) -> list[str]:
        seen: list[str] = []
        for _, m in self.cells:
            if m not in seen:
                seen.append(m)
        return seen

    @property
    def classes(self) -> list[int]:
        return sorted({c for per in self.cells.values() for c in per})

    def grand(self, x, method: str) -> CellStat:
        """Mean over classes of per-class means; std pools per-class seed variances."""
        per = self.cells[(x, method)]
        means = [s.mean for s in per.values()]
        pooled = math.sqrt(float(np.mean([s.std**2 for s in per.values()])))
        return CellStat(float(np.mean(means)), pooled, len(means))


def _sort_key(x):
    if x is None:
        return (0, 0.0)
    if isinstance(x, str):
        return (2, 0.0)
    return (1, float(x))


def aggregate(results: Sequence[RunResult]) -> AggregateTable:
    if not results:
        raise ValueError("no results to aggregate")
    axes = {r.axis for r in results}
    if len(axes) > 1:
        raise ValueError(f"results mix sweep axes {sorted(axes)}")
    groups: dict[tuple, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in results:
        groups[(r.axis_value(), r.label)][r.nominal_class].append(r.auc)
    cells = {k: {c: _mean_std(v) for c, v in sorted(per.items())} for k, per in groups.items()}
    return AggregateTable(axes.pop(), cells)
