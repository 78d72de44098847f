"""Execute an ExperimentConfig: one training run per (class, seed, axis value, method)."""

from __future__ import annotations

import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

from . import data as D
from . import engine as E
from . import nn
from .config import ConfigError, ExperimentConfig, parse_method
from .objectives import Method, ObjectiveSpec, SaturationCounter

log = logging.getLogger(__name__)

DATA_ROOT_ENV = "OEBENCH_DATA_ROOT"

NET_BUILDERS = {
    "mnist": nn.build_mnist_net,
    "emnist-letters": nn.build_mnist_net,
    "cifar10": nn.build_cifar_net,
    "cifar100": nn.build_cifar_net,
    "multiscale": nn.build_multiscale_net,
}


def resolve_data_root(flag: str | None) -> str | None:
    return flag or os.environ.get(DATA_ROOT_ENV) or None


@dataclass(frozen=True)
class RunKey:
    nominal_class: int
    seed: int
    value: object
    method: str


def build_objective(cfg: ExperimentConfig, token: str, value=None) -> ObjectiveSpec:
    method, radial = parse_method(token, cfg.radial)
    if method is Method.HSC:
        return ObjectiveSpec(method, radial=radial)
    if method is Method.FOCAL:
        gamma = float(value) if cfg.axis == "gamma" and value is not None else cfg.gamma
        return ObjectiveSpec(method, gamma=gamma, alpha=cfg.alpha)
    if method is Method.DSAD:
        return ObjectiveSpec(method, eta=cfg.eta, eps=cfg.dsad_eps)
    return ObjectiveSpec(method)


def oe_spec_for(cfg: ExperimentConfig, seed: int, value=None) -> D.OeSpec:
    size, k, sigma = cfg.oe_size, cfg.diversity_k, cfg.blur_sigma
    if cfg.axis == "oe_size":
        size = value
    elif cfg.axis == "diversity_k":
        k = value
    elif cfg.axis == "blur_sigma":
        sigma = value
    return D.OeSpec(size=None if size in ("all", None) else int(size), diversity_k=k,
                    blur_sigma=float(sigma), seed=seed)


def load_splits(cfg: ExperimentConfig, data_root: str | None):
    """Load train/test/OE pool; fails before any training on missing files or shape mismatch."""
    kinds = tuple(cfg.test_kinds)
    train = D.load_dataset(cfg.dataset, "train", data_root, kinds)
    test = D.load_dataset(cfg.dataset, "test", data_root, kinds)
    pool = None
    if cfg.oe_dataset != "none":
        pool = D.load_dataset(cfg.oe_dataset, "train", data_root, kinds)
        if pool.image_shape != train.image_shape:
            raise ConfigError(f"OE images {pool.image_shape} do not match {cfg.dataset} images "
                              f"{train.image_shape}", "oe_dataset")
    return train, test, pool


def check_config(cfg: ExperimentConfig, data_root: str | None) -> None:
    """Validate against the data: dataset files, OE sizes and k fit the pool."""
    cfg.validate()
    train, test, pool = load_splits(cfg, data_root)
    n_pool = 0 if pool is None else len(pool)
    k_pool = 0 if pool is None else len(pool.classes())
    sizes = cfg.values if cfg.axis == "oe_size" else [cfg.oe_size]
    for s in sizes:
        if isinstance(s, int) and s > n_pool:
            raise ConfigError(f"OE size {s} exceeds the {n_pool}-image pool of {cfg.oe_dataset}", "oe_size")
    ks = cfg.values if cfg.axis == "diversity_k" else [cfg.diversity_k]
    for k in ks:
        if k is not None and k > k_pool:
            raise ConfigError(f"diversity_k {k} exceeds the {k_pool} classes of {cfg.oe_dataset}", "diversity_k")
    present = set(train.classes())
    for c in cfg.classes:
        if c not in present:
            raise ConfigError(f"class {c} has no training images in {cfg.dataset}", "class")


def schedule_for(cfg: ExperimentConfig) -> E.Schedule:
    s = E.schedule_for(cfg.profile, cfg.dataset)
    if cfg.epochs is None:
        return s
    return E.Schedule(cfg.epochs, tuple(m for m in s.milestones if m < cfg.epochs), s.lr, s.decay)


def run_one(cfg: ExperimentConfig, key: RunKey, data_root: str | None = None) -> E.RunResult:
    train_ds, test_ds, pool = load_splits(cfg, data_root)
    oe_spec = oe_spec_for(cfg, key.seed, key.value)
    task = D.make_one_vs_rest(train_ds, test_ds, pool, key.nominal_class, oe_spec)
    objective = build_objective(cfg, key.method, key.value)
    net = NET_BUILDERS[cfg.dataset](train_ds.image_shape, bias=objective.uses_bias, seed=key.seed)
    schedule = schedule_for(cfg)
    aug = D.AugmentSpec.preset(cfg.dataset if cfg.augment == "auto" else cfg.augment)

    t0 = time.perf_counter()
    head = nn.ClassifierHead(net.output_dim, key.seed) if objective.uses_head else None
    if cfg.untrained:
        if objective.method in (Method.DSVDD, Method.DSAD):
            objective.center = E.compute_center(net, task.nominal_train.images)
        out = E.TrainOutput(net, head, objective, [], SaturationCounter(), 0)
        epochs = 0
    else:
        out = E.train(task, objective, net, schedule, (cfg.batch_nominal, cfg.batch_oe), aug,
                      seed=key.seed, head=head)
        epochs = schedule.epochs
    score = E.evaluate(task, out.net, objective, out.head)
    elapsed = time.perf_counter() - t0

    size = oe_spec.size if oe_spec.size is not None else "all"
    return E.RunResult(
        dataset=cfg.dataset, method=objective.method.value, nominal_class=key.nominal_class, seed=key.seed,
        auc=score, config_digest=cfg.digest(),
        radial=objective.radial.value if objective.method is Method.HSC else None,
        oe_size=size, diversity_k=oe_spec.diversity_k,
        blur_sigma=oe_spec.blur_sigma,
        gamma=objective.gamma if objective.method is Method.FOCAL else (key.value if cfg.axis == "gamma" else None),
        epochs=epochs, wall_clock_s=round(elapsed, 3), axis=cfg.axis, loss_trace=out.loss_trace,
        saturation=out.saturation.total,
    )


def _run_packed(args):
    cfg, key, root = args
    return run_one(cfg, key, root)


def execute(cfg: ExperimentConfig, data_root: str | None = None, jobs: int = 1, out: str | Path | None = None,
            progress=None) -> list[E.RunResult]:
    """Run every (class, seed, value, method) and append one JSON line per result.

    Workers share nothing; the calling process is the single writer.
    """
    check_config(cfg, data_root)
    keys = [RunKey(*k) for k in cfg.runs()]
    path = Path(out or cfg.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    say = progress or (lambda msg: print(msg, file=sys.stderr, flush=True))
    slots: list[E.RunResult | None] = [None] * len(keys)
    done = 0
    with path.open("a") as fh:
        def record(i: int, r: E.RunResult):
            nonlocal done
            fh.write(r.to_json() + "\n")
            fh.flush()
            slots[i] = r
            done += 1
            say(f"[{done}/{len(keys)}] class {r.nominal_class} seed {r.seed} {r.label} "
                f"{cfg.axis}={r.axis_value()} auc {r.auc:.4f} ({r.wall_clock_s:.1f}s)")

        if jobs <= 1 or len(keys) == 1:
            for i, k in enumerate(keys):
                record(i, run_one(cfg, k, data_root))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(_run_packed, (cfg, k, data_root)): i for i, k in enumerate(keys)}
                for f in as_completed(futures):
                    record(futures[f], f.result())
    return [r for r in slots if r is not None]


def with_seed_base(cfg: ExperimentConfig, base: int) -> ExperimentConfig:
    return replace(cfg, seeds=[s + base for s in cfg.seeds]) if base else cfg
