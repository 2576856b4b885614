"""Morphological post-filtering of binary density fields.

Three cleanup stages for structures produced by the surrogate-driven
optimizer: remove material components that reach no support/load anchor
("floating islands"), fill small enclosed voids, and erode weakly connected
material elements ("peninsulas"). The full pipeline runs islands -> holes ->
peninsulas -> islands; the final sweep removes anything the erosion
disconnected.

Material components are labeled with 8-connectivity, void components with
4-connectivity (the topological dual on a square grid). Peninsula counts use
the 8-neighborhood with out-of-domain cells counted as void.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import InputError
from .fields import DensityField, require_binary

_STRUCTURE = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class FilterConfig:
    """Settings of the post-filter pipeline.

    ``anchor_mask`` marks the elements that tie a structure to its boundary
    conditions; components that miss it are islands, and anchored elements
    are exempt from peninsula removal so filtering cannot sever the load
    path. ``peninsula_passes=None`` iterates the erosion to a fixpoint.
    """

    anchor_mask: np.ndarray
    connectivity: int = 8
    max_hole_area: int = 4
    peninsula_neighbor_threshold: int = 2
    peninsula_passes: int | None = 1

    def __post_init__(self):
        mask = np.asarray(self.anchor_mask, dtype=bool)
        if mask.ndim != 2:
            raise InputError("anchor_mask must be a 2-D boolean mask")
        if not mask.any():
            raise InputError("anchor_mask must mark at least one element")
        if self.connectivity not in (4, 8):
            raise InputError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.max_hole_area < 0:
            raise InputError("max_hole_area must be >= 0")
        if self.peninsula_neighbor_threshold < 0:
            raise InputError("peninsula_neighbor_threshold must be >= 0")
        if self.peninsula_passes is not None and self.peninsula_passes < 0:
            raise InputError("peninsula_passes must be >= 0 or None")
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "anchor_mask", mask)

    @property
    def void_connectivity(self) -> int:
        return 12 - self.connectivity


@dataclass(frozen=True)
class LabeledComponents:
    """Connected components of one phase: label grid plus per-component facts."""

    labels: np.ndarray            # 0 = background, components numbered from 1
    areas: np.ndarray             # areas[k] = area of component k+1
    touches_anchor: np.ndarray    # per component
    touches_boundary: np.ndarray  # per component

    @property
    def n_components(self) -> int:
        return self.areas.size


def _relabel_first_seen(labels: np.ndarray, n: int) -> np.ndarray:
    """Renumber components by row-major first occurrence, 1-based."""
    if n == 0:
        return labels
    flat = labels.ravel()
    first = np.full(n + 1, flat.size, dtype=np.int64)
    hits = np.flatnonzero(flat)
    np.minimum.at(first, flat[hits], hits)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=labels.dtype)
    remap[order + 1] = np.arange(1, n + 1)
    return remap[labels]


def label_components(field, foreground: str = "material",
                     connectivity: int = 8,
                     anchor_mask: np.ndarray | None = None) -> LabeledComponents:
    """Label connected components of the material or void phase.

    Labels are assigned in row-major first-seen order, so the numbering is
    deterministic and stable across runs.
    """
    values = require_binary(field)
    if foreground == "material":
        mask = values == 1.0
    elif foreground == "void":
        mask = values == 0.0
    else:
        raise InputError(f"foreground must be 'material' or 'void', got {foreground!r}")
    if connectivity not in (4, 8):
        raise InputError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(mask, structure=_STRUCTURE[connectivity])
    labels = _relabel_first_seen(labels, n)
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    touches_anchor = np.zeros(n, dtype=bool)
    if anchor_mask is not None:
        hit = np.unique(labels[np.asarray(anchor_mask, dtype=bool)])
        touches_anchor[hit[hit > 0] - 1] = True
    border = np.unique(np.concatenate([
        labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]
    ]))
    touches_boundary = np.zeros(n, dtype=bool)
    touches_boundary[border[border > 0] - 1] = True
    return LabeledComponents(labels, areas, touches_anchor, touches_boundary)


def remove_floating_islands(field, config: FilterConfig) -> DensityField:
    """Void every material component that contains no anchor element."""
    values = require_binary(field)
    if values.shape != config.anchor_mask.shape:
        raise InputError("field shape does not match anchor_mask")
    comps = label_components(values, "material", config.connectivity, config.anchor_mask)
    keep = np.concatenate([[False], comps.touches_anchor])
    return DensityField(np.where(keep[comps.labels], 1.0, 0.0), binary=True)


def fill_small_holes(field, config: FilterConfig) -> DensityField:
    """Fill void components of area <= max_hole_area that avoid the domain boundary."""
    values = require_binary(field)
    comps = label_components(values, "void", config.void_connectivity)
    fill = np.concatenate([[False],
                           (comps.areas <= config.max_hole_area) & ~comps.touches_boundary])
    return DensityField(np.where(fill[comps.labels], 1.0, values), binary=True)


def _material_neighbor_counts(values: np.ndarray) -> np.ndarray:
    padded = np.pad(values, 1)  # out-of-domain counts as void
    counts = np.zeros_like(values)
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            if di == dj == 1:
                continue
            counts += padded[di:di + values.shape[0], dj:dj + values.shape[1]]
    return counts


def remove_peninsulas(field, config: FilterConfig) -> DensityField:
    """Erode material elements with too few material neighbors.

    Each pass evaluates all 8-neighbor counts against the pre-pass field and
    clears every qualifying non-anchor element simultaneously, so the result
    does not depend on traversal order. Runs ``peninsula_passes`` times, or
    to a fixpoint when that is None.
    """
    values = require_binary(field).copy()
    if values.shape != config.anchor_mask.shape:
        raise InputError("field shape does not match anchor_mask")
    passes = config.peninsula_passes
    i = 0
    while passes is None or i < passes:
        counts = _material_neighbor_counts(values)
        marked = ((values == 1.0)
                  & (counts <= config.peninsula_neighbor_threshold)
                  & ~config.anchor_mask)
        if not marked.any():
            break
        values[marked] = 0.0
        i += 1
    return DensityField(values, binary=True)


@dataclass
class StageReport:
    name: str
    added: int
    removed: int


@dataclass
class FilterReport:
    """Material added/removed per stage; documents how filtering moved the volume."""

    stages: list[StageReport] = field(default_factory=list)
    volume_before: float = 0.0
    volume_after: float = 0.0

    @property
    def volume_delta(self) -> float:
        return self.volume_after - self.volume_before

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"name": s.name, "added": s.added, "removed": s.removed}
                for s in self.stages
            ],
            "volume_before": self.volume_before,
            "volume_after": self.volume_after,
            "volume_delta": self.volume_delta,
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _record(report: FilterReport, name: str, before: np.ndarray, after: np.ndarray) -> None:
    diff = after - before
    report.stages.append(StageReport(name, int((diff > 0).sum()), int((diff < 0).sum())))


def apply_filter_pipeline(field, config: FilterConfig) -> tuple[DensityField, FilterReport]:
    """Run islands -> holes -> peninsulas -> islands and report the changes.

    Filling and erosion change the material volume, so the report carries
    the per-stage deltas; callers should check the final volume against
    their mass constraint.
    """
    current = require_binary(field)
    report = FilterReport(volume_before=float(current.sum()))
    stage_ops = [
        ("remove_floating_islands", remove_floating_islands),
        ("fill_small_holes", fill_small_holes),
        ("remove_peninsulas", remove_peninsulas),
        ("remove_floating_islands_final", remove_floating_islands),
    ]
    for name, op in stage_ops:
        after = op(current, config).values
        _record(report, name, current, after)
        current = after
    report.volume_after = float(current.sum())
    return DensityField(current, binary=True), report


def pipeline_config_fixpoint(config: FilterConfig) -> FilterConfig:
    """Same configuration with peninsula erosion run to fixpoint."""
    return replace(config, peninsula_passes=None)
