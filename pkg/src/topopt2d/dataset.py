"""Supervised training data: bar-system densities labeled with FEM sensitivities.

Each sample pairs a binary density field with the adjoint compliance
sensitivity of that field (voids lifted to the material x_min for the
solve). Samples are a pure function of (seed, index): every index owns its
own RNG stream, so generation parallelizes without changing the output.

Dataset file layout (little-endian, any language can read it):

* line 1 - a single-line JSON header: format tag, version, count, mesh,
  material, BC preset, generator config, seed, record layout.
* then ``count`` fixed-width records, each ``N`` uint8 density bytes
  followed by ``N`` float64 sensitivity values, row-major, N = nelx * nely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import __version__
from .bars import BarSystem, rasterize, sample_bar_system
from .errors import InputError, NumericalError
from .fem import analyze
from .fields import DensityField
from .mesh import (FemProblem, load_anchor_point, load_element_mask,
                   support_anchor_point, support_element_mask)

DATASET_FORMAT = "topopt2d-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class GenConfig:
    """Bar-system generator settings tied to one FEM problem."""

    problem: FemProblem
    n_bars_range: tuple[int, int] = (2, 6)
    width_range: tuple[float, float] = (0.75, 1.75)
    rng_seed: int = 0
    label_floor: float | None = None   # density used for voids when labeling; None -> x_min
    max_resamples: int = 100

    def __post_init__(self):
        if self.label_floor is not None and not 0.0 < self.label_floor < 1.0:
            raise InputError("label_floor must lie in (0, 1)")

    @property
    def floor(self) -> float:
        return self.label_floor if self.label_floor is not None else self.problem.material.x_min


@dataclass(frozen=True)
class TrainingSample:
    density: DensityField          # binary
    sensitivity: np.ndarray        # same shape, entries <= 0


def grid_connected(density, problem: FemProblem) -> bool:
    """True if 8-connected material joins the support elements to the load element."""
    values = density.values if isinstance(density, DensityField) else np.asarray(density)
    material = values == 1.0
    labels, _ = ndimage.label(material, structure=np.ones((3, 3), dtype=bool))
    support_labels = set(np.unique(labels[support_element_mask(problem) & material]))
    load_labels = set(np.unique(labels[load_element_mask(problem) & material]))
    return bool((support_labels & load_labels) - {0})


def sample_density(config: GenConfig, index: int) -> tuple[DensityField, BarSystem]:
    """Generate sample ``index``: a connected rasterized bar system.

    Rasterizations that come out all-void or lose grid connectivity are
    resampled from the same per-index stream, so the result stays a pure
    function of (seed, index).
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.rng_seed, index)))
    mesh = config.problem.mesh
    support = support_anchor_point(config.problem)
    load = load_anchor_point(config.problem)
    for _ in range(config.max_resamples):
        system = sample_bar_system(rng, mesh, support, load,
                                   config.n_bars_range, config.width_range)
        density = rasterize(system, mesh)
        if density.volume() > 0 and grid_connected(density, config.problem):
            return density, system
    raise NumericalError(
        f"sample {index}: no connected rasterization after {config.max_resamples} draws"
    )


def label_sample(density: DensityField, problem: FemProblem,
                 floor: float | None = None) -> TrainingSample:
    """FEM-label a binary density: sensitivity of the void-lifted field."""
    if not density.binary:
        raise InputError("label_sample expects a binary density field")
    if floor is None:
        floor = problem.material.x_min
    lifted = np.maximum(density.values, floor)
    result = analyze(lifted, problem, with_sensitivity=True)
    return TrainingSample(density, result.sensitivity)


def generate_sample(config: GenConfig, index: int) -> TrainingSample:
    density, _ = sample_density(config, index)
    return label_sample(density, config.problem, config.floor)


def _header_dict(config: GenConfig, count: int) -> dict:
    problem = config.problem
    return {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "toolkit_version": __version__,
        "count": count,
        "nelx": problem.mesh.nelx,
        "nely": problem.mesh.nely,
        "seed": config.rng_seed,
        "bc_preset": problem.bc_preset,
        "bc": problem.bc.to_dict(),
        "material": {
            "e0": problem.material.e0,
            "nu": problem.material.nu,
            "penal": problem.material.penal,
            "x_min": problem.material.x_min,
        },
        "gen": {
            "n_bars_range": list(config.n_bars_range),
            "width_range": list(config.width_range),
            "label_floor": config.floor,
        },
        "record": {
            "density": "uint8[nely*nelx] row-major",
            "sensitivity": "float64-le[nely*nelx] row-major",
        },
    }


def generate_dataset(config: GenConfig, count: int, path) -> dict:
    """Write ``count`` samples to ``path``; returns the header dict.

    The file is bitwise-deterministic for a fixed (config, count).
    """
    if count < 1:
        raise InputError("count must be >= 1")
    header = _header_dict(config, count)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        for index in range(count):
            sample = generate_sample(config, index)
            fh.write(sample.density.values.astype(np.uint8).tobytes())
            fh.write(sample.sensitivity.astype("<f8").tobytes())
    return header


def load_dataset(path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Read a dataset file: (header, densities (n, nely, nelx), sensitivities)."""
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline().decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path} is not a dataset file: {exc}") from exc
        if header.get("format") != DATASET_FORMAT:
            raise InputError(f"{path} is not a {DATASET_FORMAT} file")
        if header.get("version") != DATASET_VERSION:
            raise InputError(f"unsupported dataset version {header.get('version')}")
        count, nelx, nely = header["count"], header["nelx"], header["nely"]
        n = nelx * nely
        densities = np.empty((count, nely, nelx), dtype=np.uint8)
        sensitivities = np.empty((count, nely, nelx), dtype=np.float64)
        for i in range(count):
            dens = fh.read(n)
            sens = fh.read(8 * n)
            if len(dens) != n or len(sens) != 8 * n:
                raise InputError(f"{path} truncated at record {i}")
            densities[i] = np.frombuffer(dens, dtype=np.uint8).reshape(nely, nelx)
            sensitivities[i] = np.frombuffer(sens, dtype="<f8").reshape(nely, nelx)
        if fh.read(1):
            raise InputError(f"{path} has trailing bytes after {count} records")
    return header, densities, sensitivities
