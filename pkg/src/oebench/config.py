"""Experiment configuration: flat ``key = value`` text, repeated keys form lists.

Example::

    dataset = multiscale
    oe_dataset = multiscale-outlier
    method = hsc
    method = bce
    axis = oe_size
    value = 1
    value = 8
    class = 0
    seed = 0
    seed = 1

A key given with an empty value (``value =``) denotes an empty list.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import BLUR_SIGMAS, DATASETS
from .objectives import Method, Radial

AXES = ("none", "oe_size", "diversity_k", "blur_sigma", "gamma")
PROFILES = ("desk", "paper")
CLASS_COUNTS = {"mnist": 10, "cifar10": 10, "multiscale": 1, "emnist-letters": 26, "cifar100": 100}


class ConfigError(ValueError):
    """Invalid configuration; carries the offending line and field when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _opt_int(text: str):
    low = text.lower()
    if low in ("none", ""):
        return None
    if low == "all":
        return "all"
    return int(text)


def _opt_kint(text: str):
    return None if text.lower() in ("none", "all", "") else int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _axis_value(axis: str, text: str):
    if axis == "oe_size":
        v = _opt_int(text)
        return "all" if v is None else v
    if axis == "diversity_k":
        return int(text)
    return float(text)


# key in file -> (attribute, parser, is_list)
_KEYS = {
    "dataset": ("dataset", str, False),
    "oe_dataset": ("oe_dataset", str, False),
    "method": ("methods", str, True),
    "radial": ("radial", str, False),
    "gamma": ("gamma", float, False),
    "alpha": ("alpha", float, False),
    "eta": ("eta", float, False),
    "dsad_eps": ("dsad_eps", float, False),
    "axis": ("axis", str, False),
    "value": ("values", None, True),
    "class": ("classes", int, True),
    "seed": ("seeds", int, True),
    "profile": ("profile", str, False),
    "epochs": ("epochs", _opt_kint, False),
    "oe_size": ("oe_size", _opt_int, False),
    "diversity_k": ("diversity_k", _opt_kint, False),
    "blur_sigma": ("blur_sigma", float, False),
    "augment": ("augment", str, False),
    "batch_nominal": ("batch_nominal", int, False),
    "batch_oe": ("batch_oe", int, False),
    "test_kind": ("test_kinds", str, True),
    "untrained": ("untrained", _bool, False),
    "out": ("out", str, False),
}


@dataclass
class ExperimentConfig:
    dataset: str = "multiscale"
    oe_dataset: str = "multiscale-outlier"
    methods: list[str] = field(default_factory=lambda: ["hsc", "bce"])
    radial: str = "pseudo_huber"
    gamma: float = 2.0
    alpha: float = 0.5
    eta: float = 1.0
    dsad_eps: float = 1e-6
    axis: str = "none"
    values: list = field(default_factory=list)
    classes: list[int] = field(default_factory=lambda: [0])
    seeds: list[int] = field(default_factory=lambda: [0])
    profile: str = "desk"
    epochs: int | None = None  # overrides the profile's epoch count; later milestones are dropped
    oe_size: int | str | None = "all"
    diversity_k: int | None = None
    blur_sigma: float = 0.0
    augment: str = "auto"
    batch_nominal: int = 128
    batch_oe: int = 128
    test_kinds: list[str] = field(default_factory=lambda: ["coarse-anomaly", "fine-anomaly"])
    untrained: bool = False
    out: str = "results.jsonl"

    # -- validation ---------------------------------------------------------------
    def validate(self) -> ExperimentConfig:
        if self.dataset not in DATASETS or self.dataset == "multiscale-outlier":
            raise ConfigError(f"unknown dataset {self.dataset!r}", "dataset")
        if self.oe_dataset != "none" and self.oe_dataset not in DATASETS:
            raise ConfigError(f"unknown OE dataset {self.oe_dataset!r}", "oe_dataset")
        try:
            Radial(self.radial)
        except ValueError:
            raise ConfigError(f"unknown radial {self.radial!r}", "radial") from None
        if not self.methods:
            raise ConfigError("at least one method is required", "method")
        for m in self.methods:
            try:
                parse_method(m, self.radial)
            except ValueError as e:
                raise ConfigError(str(e), "method") from None
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}", "axis")
        if self.axis == "none" and self.values:
            raise ConfigError("values given but axis is none", "value")
        if self.axis != "none" and not self.values:
            raise ConfigError(f"axis {self.axis} needs at least one value", "value")
        for v in self.values:
            self._check_axis_value(v)
        n_classes = CLASS_COUNTS.get(self.dataset)
        if not self.classes:
            raise ConfigError("at least one class is required", "class")
        for c in self.classes:
            if c < 0 or (n_classes is not None and c >= n_classes):
                raise ConfigError(f"class {c} outside dataset {self.dataset}", "class")
        if not self.seeds:
            raise ConfigError("at least one seed is required", "seed")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}", "profile")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1", "epochs")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0", "gamma")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)", "alpha")
        if self.eta <= 0 or self.dsad_eps <= 0:
            raise ConfigError("eta and dsad_eps must be > 0", "eta")
        if self.blur_sigma < 0:
            raise ConfigError("blur_sigma must be >= 0", "blur_sigma")
        if isinstance(self.oe_size, int) and self.oe_size < 0:
            raise ConfigError("oe_size must be >= 0", "oe_size")
        if self.batch_nominal < 1 or self.batch_oe < 0:
            raise ConfigError("batch sizes must be positive", "batch_nominal")
        if self.augment not in ("auto", "none", "mnist", "cifar10", "multiscale"):
            raise ConfigError(f"unknown augment preset {self.augment!r}", "augment")
        return self

    def _check_axis_value(self, v) -> None:
        a = self.axis
        ok = True
        if a == "oe_size":
            ok = v == "all" or (isinstance(v, int) and v >= 0)
        elif a == "diversity_k":
            ok = isinstance(v, int) and v >= 1
        elif a in ("blur_sigma", "gamma"):
            ok = isinstance(v, float) and v >= 0
        if not ok:
            raise ConfigError(f"invalid {a} value {v!r}", "value")

    # -- text round-trip ---------------------------------------------------------
    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        values: dict = {}
        lists: dict[str, list] = {}
        raw_values: list[tuple[int, str]] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in _KEYS:
                raise ConfigError(f"unknown key {key!r}", key, lineno)
            attr, parse, is_list = _KEYS[key]
            if is_list:
                items = lists.setdefault(attr, [])
                if val == "":
                    continue
                if attr == "values":
                    raw_values.append((lineno, val))
                    continue
                try:
                    items.append(parse(val))
                except ValueError as e:
                    raise ConfigError(str(e), key, lineno) from None
            else:
                try:
                    values[attr] = parse(val)
                except ValueError as e:
                    raise ConfigError(str(e), key, lineno) from None
        cfg = cls(**values, **lists)
        for lineno, val in raw_values:
            try:
                cfg.values.append(_axis_value(cfg.axis, val))
            except ValueError as e:
                raise ConfigError(str(e), "value", lineno) from None
        return cfg

    def to_text(self) -> str:
        out = []
        for key, (attr, _, is_list) in _KEYS.items():
            v = getattr(self, attr)
            if is_list:
                if not v:
                    out.append(f"{key} =")
                out.extend(f"{key} = {_fmt(item)}" for item in v)
            else:
                out.append(f"{key} = {_fmt(v)}")
        return "\n".join(out) + "\n"

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_text(p.read_text()).validate()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    # -- identity ------------------------------------------------------------------
    def digest(self) -> str:
        """Hash of the protocol: everything except methods, classes, seeds and the axis."""
        skip = {"methods", "classes", "seeds", "values", "out", "radial", "gamma"}
        if self.axis != "none":
            skip.add(self.axis)
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def runs(self):
        """Enumerate (nominal_class, seed, axis value, method) in a fixed order."""
        vals = self.values if self.axis != "none" else [None]
        for c in self.classes:
            for s in self.seeds:
                for v in vals:
                    for m in self.methods:
                        yield c, s, v, m

    def with_axis(self, axis: str, values: list) -> ExperimentConfig:
        return replace(self, axis=axis, values=list(values))


def parse_method(token: str, default_radial: str = "pseudo_huber") -> tuple[Method, str | None]:
    """``hsc``, ``hsc:l1`` etc. -> (method, radial); radial is None for non-HSC methods."""
    name, _, radial = token.partition(":")
    try:
        method = Method(name)
    except ValueError:
        raise ValueError(f"unknown method {token!r}; expected one of {[m.value for m in Method]}") from None
    if radial and method is not Method.HSC:
        raise ValueError(f"only hsc takes a radial suffix, got {token!r}")
    if method is Method.HSC:
        return method, Radial(radial or default_radial).value
    return method, None


DEFAULT_BLUR_GRID = list(BLUR_SIGMAS)
