"""Anomaly-detection objectives and the anomaly scores they induce.

Label convention throughout: ``y = 1`` nominal, ``y = 0`` anomalous (outlier
exposure). Every score is oriented so that larger means more anomalous.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOG_FLOOR = 1e-12


class Radial(str, Enum):
    L1 = "l1"
    L2 = "l2"
    L2SQ = "l2sq"
    PSEUDO_HUBER = "pseudo_huber"


class Method(str, Enum):
    DSVDD = "dsvdd"
    DSAD = "dsad"
    HSC = "hsc"
    BCE = "bce"
    FOCAL = "focal"


CLASSIFIER_METHODS = (Method.BCE, Method.FOCAL)
CENTER_METHODS = (Method.DSVDD, Method.DSAD)


@dataclass
class SaturationCounter:
    """Counts loss terms whose log argument had to be floored."""

    hsc: int = 0
    bce: int = 0

    @property
    def total(self) -> int:
        return self.hsc + self.bce


@dataclass
class ObjectiveSpec:
    method: Method
    radial: Radial | None = None
    gamma: float | None = None
    alpha: float | None = None
    eta: float | None = None
    eps: float | None = None
    center: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        self.method = Method(self.method)
        if self.radial is not None:
            self.radial = Radial(self.radial)
        m = self.method
        if m is Method.HSC and self.radial is None:
            self.radial = Radial.PSEUDO_HUBER
        if m is Method.FOCAL:
            self.gamma = 2.0 if self.gamma is None else float(self.gamma)
            self.alpha = 0.5 if self.alpha is None else float(self.alpha)
        if m is Method.DSAD:
            self.eta = 1.0 if self.eta is None else float(self.eta)
            self.eps = 1e-6 if self.eps is None else float(self.eps)
        self.validate()

    def validate(self) -> None:
        m = self.method
        if (self.radial is not None) != (m is Method.HSC):
            raise ValueError("radial is required for hsc and only for hsc")
        if (self.gamma is not None or self.alpha is not None) and m is not Method.FOCAL:
            raise ValueError("gamma/alpha apply only to focal")
        if m is Method.FOCAL and (self.gamma < 0 or not 0 < self.alpha < 1):
            raise ValueError("focal needs gamma >= 0 and alpha in (0, 1)")
        if (self.eta is not None or self.eps is not None) and m is not Method.DSAD:
            raise ValueError("eta/eps apply only to dsad")
        if m is Method.DSAD and (self.eta <= 0 or self.eps <= 0):
            raise ValueError("dsad needs eta > 0 and eps > 0")
        if self.center is not None and m not in CENTER_METHODS:
            raise ValueError("center applies only to dsvdd/dsad")

    @property
    def uses_head(self) -> bool:
        return self.method in CLASSIFIER_METHODS

    @property
    def uses_oe(self) -> bool:
        return self.method is not Method.DSVDD

    @property
    def uses_bias(self) -> bool:
        return self.method not in CENTER_METHODS

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("center")
        d["method"] = self.method.value
        d["radial"] = self.radial.value if self.radial else None
        return {k: v for k, v in d.items() if v is not None}


def _check_labels(labels, n: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.size != n:
        raise T.ShapeError("labels", (n,), y.shape)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 (anomalous) or 1 (nominal)")
    return y


def radial_h(kind: Radial | str, z) -> Tensor:
    """Radial penalty per row of ``z`` (B, r) -> (B,)."""
    z = T.as_tensor(z)
    if z.ndim == 1:
        z = T.reshape(z, (1, -1))
    if not np.all(np.isfinite(z.data)):
        raise ValueError("radial_h: non-finite input")
    kind = Radial(kind)
    if kind is Radial.L1:
        return T.l1_norm(z)
    if kind is Radial.L2:
        return T.l2_norm(z)
    sq = T.sq_norm(z)
    if kind is Radial.L2SQ:
        return sq
    return T.sqrt(sq + 1.0) - 1.0


def hsc_loss(spec: ObjectiveSpec | Radial | str, features, labels, counter: SaturationCounter | None = None) -> Tensor:
    """Hypersphere-classifier cross-entropy with ``l(z) = exp(-h(z))``."""
    kind = spec.radial if isinstance(spec, ObjectiveSpec) else Radial(spec)
    features = T.as_tensor(features)
    y = _check_labels(labels, features.shape[0])
    h = radial_h(kind, features)
    anom, saturated = T.log1mexp(h, LOG_FLOOR)
    if counter is not None:
        counter.hsc += int(np.count_nonzero(saturated & (y == 0.0)))
    per_sample = y * h - (1.0 - y) * anom
    return T.mean(per_sample)


def bce_loss(probs, labels, counter: SaturationCounter | None = None) -> Tensor:
    probs = T.as_tensor(probs)
    y = _check_labels(labels, probs.shape[0])
    p = _clamped(probs, counter)
    per_sample = y * T.log(p) + (1.0 - y) * T.log(1.0 - p)
    return -T.mean(per_sample)


def focal_loss(probs, labels, gamma: float = 2.0, alpha: float = 0.5,
               counter: SaturationCounter | None = None) -> Tensor:
    if gamma < 0 or not 0 < alpha < 1:
        raise ValueError("focal needs gamma >= 0 and alpha in (0, 1)")
    probs = T.as_tensor(probs)
    y = _check_labels(labels, probs.shape[0])
    p = _clamped(probs, counter)
    pt = y * p + (1.0 - y) * (1.0 - p)
    at = np.where(y == 1.0, alpha, 1.0 - alpha)
    term = at * T.log(pt)
    if gamma != 0:
        term = T.power(1.0 - pt, gamma) * term
    return -T.mean(term)


def _clamped(probs: Tensor, counter: SaturationCounter | None) -> Tensor:
    if counter is not None:
        d = probs.data
        counter.bce += int(np.count_nonzero((d < LOG_FLOOR) | (d > 1.0 - LOG_FLOOR)))
    return T.clamp(probs, LOG_FLOOR, 1.0 - LOG_FLOOR)


def dsvdd_loss(features, center) -> Tensor:
    features = T.as_tensor(features)
    return T.mean(T.sq_norm(features - np.asarray(center, dtype=np.float64)))


def dsad_loss(features, labels, center, eta: float = 1.0, eps: float = 1e-6) -> Tensor:
    features = T.as_tensor(features)
    y = _check_labels(labels, features.shape[0])
    d = T.sq_norm(features - np.asarray(center, dtype=np.float64))
    per_sample = y * d + (1.0 - y) * eta * T.power(d + eps, -1.0)
    return T.mean(per_sample)


def objective_loss(spec: ObjectiveSpec, features, probs, labels, counter=None) -> Tensor:
    m = spec.method
    if m is Method.HSC:
        return hsc_loss(spec, features, labels, counter)
    if m is Method.BCE:
        return bce_loss(probs, labels, counter)
    if m is Method.FOCAL:
        return focal_loss(probs, labels, spec.gamma, spec.alpha, counter)
    if spec.center is None:
        raise ValueError(f"{m.value} requires a center")
    if m is Method.DSVDD:
        return dsvdd_loss(features, spec.center)
    return dsad_loss(features, labels, spec.center, spec.eta, spec.eps)


def anomaly_score(spec: ObjectiveSpec, features=None, probs=None) -> np.ndarray:
    """Per-sample anomaly scores from model outputs (higher = more anomalous)."""
    m = spec.method
    if m in CLASSIFIER_METHODS:
        p = T.as_tensor(probs).data.reshape(-1)
        return 1.0 - p
    z = T.as_tensor(features).data
    if z.ndim == 1:
        z = z[None, :]
    if m is Method.HSC:
        with T.no_grad():
            return radial_h(spec.radial, z).data
    if spec.center is None:
        raise ValueError(f"{m.value} requires a center")
    diff = z - spec.center
    return np.einsum("ij,ij->i", diff, diff)


def init_center(features: np.ndarray, min_abs: float = 0.1) -> np.ndarray:
    """Center = mean feature, with near-zero coordinates pushed to +-min_abs."""
    c = np.asarray(features, dtype=np.float64).mean(axis=0)
    small = np.abs(c) < min_abs
    c[small & (c < 0)] = -min_abs
    c[small & (c >= 0)] = min_abs
    return c
