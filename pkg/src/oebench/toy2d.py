"""2-D toy study: BCE vs HSC decision regions with ideally placed and one-sided OE.

Nominal points are N(0, 0.5^2 I), 500 of them. The ideal OE set is 200 points
on the circle of radius 3; the skewed set is 200 points from N((3, 0), 0.5^2 I).
A small MLP is trained with each objective and its anomaly score is written
on a 200 x 200 grid over [-5, 5]^2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import objectives as obj
from . import tensor as T
from .data import make_rng
from .engine import Adam, Schedule
from .nn import ClassifierHead, build_toy_mlp
from .objectives import Method, ObjectiveSpec

N_NOMINAL = 500
N_OE = 200
NOMINAL_STD = 0.5
RING_RADIUS = 3.0
SKEW_CENTER = (3.0, 0.0)
EXTENT = 5.0
RESOLUTION = 200
SETTINGS = ("ideal", "skewed")
# Features wider than the input: an affine piece of a ReLU map R^2 -> R^8
# generically never reaches the centre, so far-away cells cannot score low.
TOY_FEATURE_DIM = 8
TOY_SCHEDULE = Schedule(epochs=400, milestones=(300,), lr=1e-3)
GRID_COLUMNS = ("x", "y", "score_bce", "score_hsc")


def make_points(setting: str, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(nominal, oe) point clouds for one setting."""
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}")
    rng = make_rng(seed, f"toy2d/{setting}")
    nominal = rng.normal(0.0, NOMINAL_STD, size=(N_NOMINAL, 2))
    if setting == "ideal":
        angle = rng.uniform(0, 2 * math.pi, size=N_OE)
        oe = RING_RADIUS * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    else:
        oe = rng.normal(SKEW_CENTER, NOMINAL_STD, size=(N_OE, 2))
    return nominal, oe


def grid_points(extent: float = EXTENT, resolution: int = RESOLUTION) -> tuple[np.ndarray, np.ndarray]:
    ticks = np.linspace(-extent, extent, resolution)
    xx, yy = np.meshgrid(ticks, ticks)  # row index = y, column index = x
    return xx, yy


@dataclass
class ToyModel:
    spec: ObjectiveSpec
    net: object
    head: ClassifierHead | None

    def score(self, points: np.ndarray) -> np.ndarray:
        with T.no_grad():
            feats = self.net(points).data
            if self.head is not None:
                return obj.anomaly_score(self.spec, probs=self.head(feats).data)
        return obj.anomaly_score(self.spec, features=feats)


def train_toy(nominal: np.ndarray, oe: np.ndarray, method: str, seed: int = 0,
              schedule: Schedule = TOY_SCHEDULE, batch: int = 128) -> ToyModel:
    spec = ObjectiveSpec(Method(method))
    net = build_toy_mlp(out_dim=TOY_FEATURE_DIM, seed=seed)
    head = ClassifierHead(net.output_dim, seed) if spec.uses_head else None
    params = net.parameters() + (head.parameters() if head else [])
    opt = Adam(params)
    rng = make_rng(seed, f"toy2d/train/{method}")
    steps = max(1, len(nominal) // batch)
    net.train()
    for epoch in range(schedule.epochs):
        lr = schedule.lr_at(epoch)
        perm = rng.permutation(len(nominal))
        for s in range(steps):
            xb = np.concatenate([nominal[perm[s * batch : (s + 1) * batch]], oe[rng.integers(0, len(oe), batch)]])
            yb = np.concatenate([np.ones(batch), np.zeros(batch)])
            feats = net(xb)
            loss = obj.objective_loss(spec, feats, head(feats) if head else None, yb)
            for p in params:
                p.grad = None
            loss.backward()
            opt.step(lr)
    net.eval()
    return ToyModel(spec, net, head)


@dataclass
class ToyResult:
    setting: str
    nominal: np.ndarray
    oe: np.ndarray
    scores: dict[str, np.ndarray]  # method -> (resolution, resolution) grid
    thresholds: dict[str, float]  # 95th percentile of nominal training scores


def run_setting(setting: str, seed: int = 0, resolution: int = RESOLUTION) -> ToyResult:
    nominal, oe = make_points(setting, seed)
    xx, yy = grid_points(EXTENT, resolution)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    scores, taus = {}, {}
    for method in ("bce", "hsc"):
        model = train_toy(nominal, oe, method, seed)
        scores[method] = model.score(pts).reshape(xx.shape)
        taus[method] = float(np.percentile(model.score(nominal), 95))
    return ToyResult(setting, nominal, oe, scores, taus)


def sublevel_mask(scores: np.ndarray, tau: float) -> np.ndarray:
    return scores <= tau


def boundary_cells(mask: np.ndarray) -> dict[str, int]:
    """Count of sublevel cells on each grid edge (left = x min, bottom = y min)."""
    return {"left": int(mask[:, 0].sum()), "right": int(mask[:, -1].sum()),
            "bottom": int(mask[0, :].sum()), "top": int(mask[-1, :].sum())}


def write_grid_csv(result: ToyResult, path) -> None:
    xx, yy = grid_points(EXTENT, result.scores["bce"].shape[0])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_COLUMNS)
        for x, y, b, h in zip(xx.ravel(), yy.ravel(), result.scores["bce"].ravel(), result.scores["hsc"].ravel()):
            w.writerow([f"{x:.6f}", f"{y:.6f}", f"{b:.8g}", f"{h:.8g}"])


def read_grid_csv(path) -> dict[str, np.ndarray]:
    arr = np.loadtxt(path, delimiter=",", skiprows=1)
    n = int(round(math.sqrt(len(arr))))
    return {c: arr[:, i].reshape(n, n) for i, c in enumerate(GRID_COLUMNS)}


def run_toy2d(output_dir, seed: int = 0, resolution: int = RESOLUTION, figure: bool = True) -> dict[str, ToyResult]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {s: run_setting(s, seed, resolution) for s in SETTINGS}
    for s, r in results.items():
        write_grid_csv(r, out / f"toy2d_{s}.csv")
        np.savetxt(out / f"toy2d_{s}_nominal.csv", r.nominal, delimiter=",", header="x,y", comments="")
        np.savetxt(out / f"toy2d_{s}_oe.csv", r.oe, delimiter=",", header="x,y", comments="")
    with (out / "toy2d_thresholds.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["setting", "method", "tau", "left", "right", "bottom", "top"])
        for s, r in results.items():
            for m in ("bce", "hsc"):
                b = boundary_cells(sublevel_mask(r.scores[m], r.thresholds[m]))
                w.writerow([s, m, f"{r.thresholds[m]:.8g}", b["left"], b["right"], b["bottom"], b["top"]])
    if figure:
        from .plotting import plot_toy_grid

        plot_toy_grid({s: r.scores for s, r in results.items()}, EXTENT, out / "toy2d.png",
                      data={s: (r.nominal, r.oe) for s, r in results.items()},
                      thresholds={s: r.thresholds for s, r in results.items()})
    return results
