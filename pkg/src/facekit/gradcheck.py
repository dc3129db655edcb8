"""Finite-difference verification of analytic gradients.

The checker evaluates a scalar loss twice per probed coordinate
(central differences) and compares against the analytic gradient the
loss function reports. A failing check is a passing operation with a
failing report; nothing raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from facekit.rng import Stream, derive

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|), 0 where both are below the floor."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(n))
    err = np.zeros_like(denom)
    live = denom > floor
    err[live] = np.abs(a - n)[live] / denom[live]
    return err


def numerical_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    step: float = DEFAULT_STEP,
    coords: Sequence[tuple] | None = None,
) -> np.ndarray:
    """Central-difference gradient of f at x.

    When `coords` is given only those multi-indices are probed; the rest
    of the returned array is NaN (callers compare probed entries only).
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.full(x.shape, np.nan, dtype=np.float64)
    if coords is None:
        coords = list(np.ndindex(x.shape)) if x.shape else [()]
    work = x.copy()
    for idx in coords:
        orig = work[idx]
        work[idx] = orig + step
        up = f(work)
        work[idx] = orig - step
        down = f(work)
        work[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


@dataclass
class GradCheckReport:
    """Max relative error per parameter block, plus the pass verdict."""

    tolerance: float
    block_errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err <= self.tolerance for err in self.block_errors.values())

    @property
    def failing_blocks(self) -> list[str]:
        return [n for n, e in self.block_errors.items() if e > self.tolerance]

    @property
    def max_error(self) -> float:
        return max(self.block_errors.values(), default=0.0)

    def summary(self) -> str:
        lines = [f"gradient check (tolerance {self.tolerance:g}):"]
        for name, err in self.block_errors.items():
            mark = "ok " if err <= self.tolerance else "FAIL"
            lines.append(f"  [{mark}] {name}: max rel err {err:.3e}")
        lines.append("PASSED" if self.passed else "FAILED")
        return "\n".join(lines)


def check_gradients(
    loss_and_grads: Callable[[Mapping[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    blocks: Mapping[str, np.ndarray],
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    max_coords_per_block: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central differences per block.

    `loss_and_grads` maps a full block dict to (loss, grads dict). When a
    block has more coordinates than `max_coords_per_block`, a seeded
    subset is probed (deterministic per block name).
    """
    blocks = {name: np.asarray(v, dtype=np.float64) for name, v in blocks.items()}
    _, analytic = loss_and_grads(blocks)
    report = GradCheckReport(tolerance=tolerance)

    for name, value in blocks.items():
        coords = list(np.ndindex(value.shape)) if value.shape else [()]
        if max_coords_per_block is not None and len(coords) > max_coords_per_block:
            stream = Stream(derive(seed, "gradcheck", name))
            coords = stream.sample(coords, max_coords_per_block)

        def scalar_loss(x, _name=name):
            probe = dict(blocks)
            probe[_name] = x
            return loss_and_grads(probe)[0]

        numeric = numerical_gradient(scalar_loss, value, step=step, coords=coords)
        ana = np.asarray(analytic[name], dtype=np.float64)
        errs = [relative_error(ana[idx], numeric[idx]) for idx in coords]
        report.block_errors[name] = float(np.max(errs)) if errs else 0.0
    return report
