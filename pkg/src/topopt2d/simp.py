"""Optimality-criteria density update, convergence loop, and threshold filter.

The OC step multiplies each density by B_i^eta with B_i = (-dc/dx_i) / Lambda
and clamps to the move limits and the [x_min, 1] box; Lambda is found by
bisection so that the updated volume hits the target exactly. Sensitivities
enter only through B_i, so any positive rescaling of the sensitivity field
produces the same update (Lambda absorbs the scale).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSensitivityError, InputError, NumericalError
from .fem import analyze
from .fields import DensityField, density_array
from .mesh import FemProblem

#: Updated volume must match the target to this tolerance (times n_elements).
VOLUME_TOL = 1e-4


@dataclass(frozen=True)
class OcParams:
    """Knobs of the OC update and its convergence loop."""

    volume_fraction: float
    move_limit: float = 0.2
    eta: float = 0.5
    max_iters: int = 40
    convergence_tol: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.volume_fraction < 1.0:
            raise InputError(f"volume_fraction must lie in (0, 1), got {self.volume_fraction}")
        if not 0.0 < self.move_limit <= 1.0:
            raise InputError(f"move_limit must lie in (0, 1], got {self.move_limit}")
        if not 0.0 < self.eta <= 1.0:
            raise InputError(f"eta must lie in (0, 1], got {self.eta}")
        if self.max_iters < 0:
            raise InputError("max_iters must be >= 0")
        if not self.convergence_tol > 0:
            raise InputError("convergence_tol must be positive")


def _validated_update_inputs(density, sens, x_min: float):
    x = density_array(density)
    s = np.asarray(sens, dtype=np.float64)
    if s.shape != x.shape:
        raise InputError(f"sensitivity shape {s.shape} does not match density {x.shape}")
    if not np.all(np.isfinite(s)):
        raise InputError("sensitivity field contains non-finite values")
    if np.any(s > 0.0):
        raise InputError("compliance sensitivities must be <= 0")
    if np.any(x < x_min - 1e-12) or np.any(x > 1.0 + 1e-12):
        raise InputError("density values outside [x_min, 1]")
    return x, s


def _clamped_update(x, s, lam, params: OcParams, x_min: float) -> np.ndarray:
    candidate = x * np.power(-s / lam, params.eta)
    lower = np.maximum(x_min, x - params.move_limit)
    upper = np.minimum(1.0, x + params.move_limit)
    return np.clip(candidate, lower, upper)


def bisect_lambda(density, sens, params: OcParams, x_min: float) -> float:
    """Find Lambda > 0 so the clamped update meets the volume target.

    The updated volume is non-increasing in Lambda. Brackets start at
    [1e-10, 1e10] and expand if the target lies outside; bisection then runs
    to relative bracket collapse (capped at 200 steps) so that the result is
    insensitive to positive rescaling of the sensitivities. If the move
    limits make the target unreachable, raises :class:`NumericalError`.
    """
    x, s = _validated_update_inputs(density, sens, x_min)
    if not np.any(s < 0.0):
        raise DegenerateSensitivityError("sensitivity field is identically zero")
    target = params.volume_fraction * x.size

    def volume_at(lam: float) -> float:
        return float(_clamped_update(x, s, lam, params, x_min).sum())

    lo, hi = 1e-10, 1e10
    for _ in range(10):
        if volume_at(lo) >= target:
            break
        lo *= 1e-2
    for _ in range(10):
        if volume_at(hi) <= target:
            break
        hi *= 1e2
    if volume_at(lo) < target or volume_at(hi) > target:
        raise NumericalError(
            "volume target unreachable under the move limits "
            f"(target {target:.6g}, reachable [{volume_at(hi):.6g}, {volume_at(lo):.6g}])"
        )
    for _ in range(200):
        if hi - lo <= 1e-14 * hi:
            break
        mid = 0.5 * (lo + hi)
        if volume_at(mid) > target:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    if abs(volume_at(lam) - target) > VOLUME_TOL * x.size:
        raise NumericalError(
            "bisection finished away from the volume target; "
            "volume_fraction is inconsistent with the move limits"
        )
    return lam


def oc_update(density, sens, params: OcParams, x_min: float) -> np.ndarray:
    """One OC density update; output volume equals the target within tolerance."""
    x, s = _validated_update_inputs(density, sens, x_min)
    lam = bisect_lambda(density, sens, params, x_min)
    return _clamped_update(x, s, lam, params, x_min)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    compliance: float
    volume: float
    linf_change: float


@dataclass
class OptimizationTrace:
    """Per-iteration compliance/volume history plus requested density snapshots."""

    records: list[TraceRecord] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    def append(self, iteration: int, compliance: float, volume: float,
               linf_change: float) -> None:
        self.records.append(TraceRecord(iteration, compliance, volume, linf_change))

    def compliances(self) -> np.ndarray:
        return np.array([r.compliance for r in self.records])

    def volumes(self) -> np.ndarray:
        return np.array([r.volume for r in self.records])

    @property
    def n_updates(self) -> int:
        return self.records[-1].iteration if self.records else 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "compliance", "volume", "linf_change"])
            for r in self.records:
                writer.writerow([r.iteration, repr(r.compliance), repr(r.volume),
                                 repr(r.linf_change)])


def run_simp(problem: FemProblem, params: OcParams, initial: DensityField,
             snapshot_iters: tuple[int, ...] = ()) -> tuple[DensityField, OptimizationTrace]:
    """Iterate {FEM solve -> sensitivity -> OC update} from ``initial``.

    Stops when the L-inf density change drops below ``convergence_tol`` or
    after ``max_iters`` updates. Returns the final continuous field and the
    full trace; compliance is evaluated at every iterate, including the
    initial one.
    """
    x = density_array(initial)
    if x.shape != (problem.mesh.nely, problem.mesh.nelx):
        raise InputError("initial field shape does not match the problem mesh")
    n = x.size
    target = params.volume_fraction * n
    if abs(x.sum() - target) > VOLUME_TOL * n:
        raise InputError(
            f"initial volume {x.sum():.6g} does not meet the target {target:.6g}"
        )
    x_min = problem.material.x_min
    trace = OptimizationTrace()
    if 0 in snapshot_iters:
        trace.snapshots[0] = x.copy()

    try:
        result = analyze(x, problem, with_sensitivity=params.max_iters > 0)
    except NumericalError as exc:
        raise NumericalError(f"FEM failure at iteration 0: {exc}") from exc
    trace.append(0, result.compliance, float(x.sum()), 0.0)

    for it in range(1, params.max_iters + 1):
        try:
            x_new = oc_update(x, result.sensitivity, params, x_min)
        except NumericalError as exc:
            raise type(exc)(f"OC update failure at iteration {it}: {exc}") from exc
        change = float(np.max(np.abs(x_new - x)))
        x = x_new
        try:
            result = analyze(x, problem, with_sensitivity=True)
        except NumericalError as exc:
            raise NumericalError(f"FEM failure at iteration {it}: {exc}") from exc
        trace.append(it, result.compliance, float(x.sum()), change)
        if it in snapshot_iters:
            trace.snapshots[it] = x.copy()
        if change < params.convergence_tol:
            break
    return DensityField(x), trace


def threshold_binarize(density, threshold: float) -> DensityField:
    """Material where x_i >= threshold, void elsewhere."""
    if not 0.0 < threshold <= 1.0:
        raise InputError(f"threshold must lie in (0, 1], got {threshold}")
    x = density_array(density)
    return DensityField(np.where(x >= threshold, 1.0, 0.0), binary=True)


def choose_threshold(density, target_volume: float) -> float:
    """Threshold whose binarized volume is closest to ``target_volume``.

    Scans the distinct density values (the only points where the binarized
    volume changes); ties break toward the smaller threshold, i.e. the
    larger structure.
    """
    x = density_array(density)
    if not 0.0 < target_volume <= x.size:
        raise InputError(f"target_volume must lie in (0, N], got {target_volume}")
    values = np.unique(x.ravel())            # ascending
    counts = x.size - np.searchsorted(np.sort(x.ravel()), values, side="left")
    best = np.argmin(np.abs(counts - target_volume))   # first (= smallest L) wins ties
    return float(values[best])
