"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tolerance: float
    nonfinite: list[int] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max()) if self.rel_error.size else 0.0

    @property
    def worst_index(self) -> int:
        return int(self.rel_error.argmax()) if self.rel_error.size else -1

    @property
    def passed(self) -> bool:
        return not self.nonfinite and self.max_rel_error <= self.tolerance

    def __str__(self) -> str:
        if self.nonfinite:
            return f"non-finite values at coordinates {self.nonfinite}"
        status = "pass" if self.passed else "FAIL"
        return f"{status}: max rel err {self.max_rel_error:.3e} at {self.worst_index} (tol {self.tolerance:g})"


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    point,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    floor: float = 1e-3,
) -> GradCheckReport:
    """Compare autodiff and central-difference gradients of scalar ``f`` at ``point``.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps near-zero partials from turning round-off into failures.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = np.array(point, dtype=np.float64)
    x = Tensor(x0.copy(), requires_grad=True)
    out = f(x)
    out.backward()
    analytic = np.zeros_like(x0) if x.grad is None else x.grad.copy()

    flat = x0.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += step
        xm = flat.copy()
        xm[i] -= step
        fp = f(Tensor(xp.reshape(x0.shape))).item()
        fm = f(Tensor(xm.reshape(x0.shape))).item()
        numeric[i] = (fp - fm) / (2.0 * step)

    a = analytic.reshape(-1)
    bad = [i for i in range(a.size) if not (np.isfinite(a[i]) and np.isfinite(numeric[i]))]
    with np.errstate(invalid="ignore"):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        rel = np.abs(a - numeric) / denom
    rel = np.where(np.isfinite(rel), rel, np.inf)
    return GradCheckReport(analytic.reshape(x0.shape), numeric.reshape(x0.shape), rel, tolerance, bad)
