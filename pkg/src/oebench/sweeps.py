"""Canned sweeps (OE size, blur, diversity, focal gamma) and their plot series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig
from .data import BLUR_SIGMAS
from .engine import AggregateTable, RunResult, aggregate

FOCAL_GAMMAS = (0.0, 0.5, 1.0, 2.0, 5.0)
SERIES_COLUMNS = ("x", "method", "mean_auc", "std_auc")


@dataclass
class PlotSeries:
    """One line per method: class-averaged mean AUC and pooled std, both in percent."""

    axis: str
    x: list
    mean: dict[str, list[float]] = field(default_factory=dict)
    std: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        for m in self.mean:
            if len(self.mean[m]) != len(self.x) or len(self.std[m]) != len(self.x):
                raise ValueError(f"series {m!r} length does not match {len(self.x)} x values")
            if any(not 0.0 <= y <= 100.0 for y in self.mean[m]):
                raise ValueError(f"series {m!r} has mean AUC outside [0, 100]")

    @property
    def methods(self) -> list[str]:
        return list(self.mean)

    def rows(self):
        for m in self.mean:
            for x, mu, sd in zip(self.x, self.mean[m], self.std[m]):
                yield x, m, mu, sd

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for x, m, mu, sd in self.rows():
                w.writerow([x, m, f"{mu:.4f}", f"{sd:.4f}"])

    @classmethod
    def read_csv(cls, path) -> PlotSeries:
        with Path(path).open() as fh:
            rows = list(csv.DictReader(fh))
        xs: list = []
        mean: dict[str, list[float]] = {}
        std: dict[str, list[float]] = {}
        for r in rows:
            x = _parse_x(r["x"])
            if x not in xs:
                xs.append(x)
            mean.setdefault(r["method"], []).append(float(r["mean_auc"]))
            std.setdefault(r["method"], []).append(float(r["std_auc"]))
        return cls("x", xs, mean, std)


def _parse_x(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def series_from_table(table: AggregateTable) -> PlotSeries:
    xs = table.xs
    s = PlotSeries(table.axis, xs)
    for m in table.methods:
        stats = [table.grand(x, m) for x in xs if (x, m) in table.cells]
        if len(stats) != len(xs):
            raise ValueError(f"method {m!r} is missing some {table.axis} values")
        s.mean[m] = [100.0 * c.mean for c in stats]
        s.std[m] = [100.0 * c.std for c in stats]
    s.__post_init__()
    return s


def series_from_results(results: Sequence[RunResult]) -> PlotSeries:
    return series_from_table(aggregate(results))


# -- canned sweep configurations -----------------------------------------------------------
def power_of_two_sizes(pool_size: int, max_size: int | None = None) -> list:
    """1, 2, 4, ... up to the pool (or ``max_size``); ``all`` appended when the pool is larger."""
    top = pool_size if max_size is None else min(max_size, pool_size)
    sizes: list = [2**i for i in range(int(math.log2(top)) + 1)] if top >= 1 else []
    if max_size is None and sizes and sizes[-1] < pool_size:
        sizes.append("all")
    return sizes


def oe_size_sweep(base: ExperimentConfig, sizes: Sequence) -> ExperimentConfig:
    return base.with_axis("oe_size", list(sizes))


def blur_sweep(base: ExperimentConfig, sigmas: Sequence[float] = BLUR_SIGMAS) -> ExperimentConfig:
    return base.with_axis("blur_sigma", [float(s) for s in sigmas])


def diversity_sweep(base: ExperimentConfig, n_classes: int, ks: Sequence[int] | None = None) -> ExperimentConfig:
    return base.with_axis("diversity_k", list(ks) if ks else list(range(1, n_classes + 1)))


def focal_gamma_sweep(base: ExperimentConfig, gammas: Sequence[float] = FOCAL_GAMMAS) -> ExperimentConfig:
    methods = [m for m in base.methods if m.startswith("focal")] or ["focal"]
    return replace(base, methods=methods).with_axis("gamma", [float(g) for g in gammas])
