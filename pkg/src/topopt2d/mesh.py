"""Regular-grid mesh, material parameters, and boundary conditions.

Numbering scheme (fixed across the whole toolkit)
--------------------------------------------------
The design domain is a ``nelx`` x ``nely`` grid of unit square elements,
x to the right and y downward. Nodes are numbered column-major from the
top-left corner::

    node_id(ix, iy) = (nely + 1) * ix + iy      ix in 0..nelx, iy in 0..nely

Each node carries two DOFs, interleaved ``(ux, uy) = (2n, 2n + 1)``.
Elements are numbered row-major over the ``(nely, nelx)`` density array,
``element_id = row * nelx + col``, and their 8 local DOFs are ordered
top-left, top-right, bottom-right, bottom-left with ``(ux, uy)`` pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class GridMesh:
    """Rectangular grid of unit square elements."""

    nelx: int
    nely: int

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise InputError(f"mesh needs nelx, nely >= 1, got {self.nelx}x{self.nely}")

    @property
    def n_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def n_nodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    def node_id(self, ix: int, iy: int) -> int:
        return (self.nely + 1) * ix + iy

    def element_dofs(self) -> np.ndarray:
        """Map element -> its 8 global DOFs, shape (n_elements, 8).

        Rows follow the row-major element numbering; columns follow the
        local node order TL, TR, BR, BL with (ux, uy) interleaved.
        """
        cols, rows = np.meshgrid(np.arange(self.nelx), np.arange(self.nely))
        n1 = (self.nely + 1) * cols + rows        # top-left node
        n2 = n1 + (self.nely + 1)                 # top-right node
        edof = np.stack(
            [2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1,
             2 * n2 + 2, 2 * n2 + 3, 2 * n1 + 2, 2 * n1 + 3],
            axis=-1,
        )
        return edof.reshape(self.n_elements, 8).astype(np.int64)

    def element_centroids(self) -> tuple[np.ndarray, np.ndarray]:
        """Centroid coordinates (x, y) of every element, each (nely, nelx)."""
        xs = np.arange(self.nelx) + 0.5
        ys = np.arange(self.nely) + 0.5
        cx, cy = np.meshgrid(xs, ys)
        return cx, cy


@dataclass(frozen=True)
class MaterialParams:
    """SIMP material model: element Young's modulus is x_i^penal * e0."""

    e0: float = 1.0
    nu: float = 0.3
    penal: float = 3.0
    x_min: float = 1e-3

    def __post_init__(self):
        if not self.e0 > 0:
            raise InputError(f"e0 must be positive, got {self.e0}")
        if not 0.0 <= self.nu < 0.5:
            raise InputError(f"plane stress needs 0 <= nu < 0.5, got {self.nu}")
        if not self.penal >= 1.0:
            raise InputError(f"penal must be >= 1, got {self.penal}")
        if not 0.0 < self.x_min < 1.0:
            raise InputError(f"x_min must lie in (0, 1), got {self.x_min}")


@dataclass(frozen=True)
class BoundaryConditions:
    """Zero-displacement DOFs plus a sparse nodal load vector."""

    fixed_dofs: np.ndarray
    load_dofs: np.ndarray
    load_values: np.ndarray

    def __post_init__(self):
        fixed = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        load_d = np.asarray(self.load_dofs, dtype=np.int64)
        load_v = np.asarray(self.load_values, dtype=np.float64)
        if fixed.size == 0:
            raise InputError("at least one fixed DOF is required")
        if load_d.size == 0:
            raise InputError("at least one load is required")
        if load_d.size != load_v.size:
            raise InputError("load_dofs and load_values lengths differ")
        if np.unique(load_d).size != load_d.size:
            raise InputError("duplicate load DOF")
        if np.intersect1d(fixed, load_d).size:
            raise InputError("a load is applied on a fixed DOF")
        fixed.flags.writeable = False
        load_d.flags.writeable = False
        load_v.flags.writeable = False
        object.__setattr__(self, "fixed_dofs", fixed)
        object.__setattr__(self, "load_dofs", load_d)
        object.__setattr__(self, "load_values", load_v)

    def validate_against(self, mesh: GridMesh) -> None:
        ndof = mesh.n_dofs
        for name, arr in (("fixed", self.fixed_dofs), ("load", self.load_dofs)):
            if arr.min() < 0 or arr.max() >= ndof:
                raise InputError(f"{name} DOF out of range for mesh with {ndof} DOFs")

    def force_vector(self, mesh: GridMesh) -> np.ndarray:
        self.validate_against(mesh)
        f = np.zeros(mesh.n_dofs)
        f[self.load_dofs] = self.load_values
        return f

    def to_dict(self) -> dict:
        return {
            "fixed_dofs": [int(d) for d in self.fixed_dofs],
            "loads": [
                {"dof": int(d), "value": float(v)}
                for d, v in zip(self.load_dofs, self.load_values)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoundaryConditions":
        try:
            fixed = data["fixed_dofs"]
            loads = data["loads"]
            dofs = [entry["dof"] for entry in loads]
            vals = [entry["value"] for entry in loads]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed boundary-condition dict: {exc}") from exc
        return cls(np.asarray(fixed), np.asarray(dofs), np.asarray(vals))

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "BoundaryConditions":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def cantilever_left_clamp_tip_load(mesh: GridMesh) -> BoundaryConditions:
    """Left edge fully clamped, unit downward load at the bottom-right corner node."""
    left_nodes = np.array([mesh.node_id(0, iy) for iy in range(mesh.nely + 1)])
    fixed = np.sort(np.concatenate([2 * left_nodes, 2 * left_nodes + 1]))
    tip = mesh.node_id(mesh.nelx, mesh.nely)
    return BoundaryConditions(fixed, np.array([2 * tip + 1]), np.array([-1.0]))


BC_PRESETS = {
    "cantilever-left-clamp-tip-load": cantilever_left_clamp_tip_load,
}


def bc_from_preset(name: str, mesh: GridMesh) -> BoundaryConditions:
    try:
        builder = BC_PRESETS[name]
    except KeyError:
        raise InputError(
            f"unknown BC preset {name!r}; available: {sorted(BC_PRESETS)}"
        ) from None
    return builder(mesh)


@dataclass(frozen=True)
class FemProblem:
    """Mesh + material + boundary conditions: everything a solve needs."""

    mesh: GridMesh
    material: MaterialParams
    bc: BoundaryConditions
    bc_preset: str | None = field(default=None, compare=False)

    def __post_init__(self):
        self.bc.validate_against(self.mesh)


def _elements_touching_nodes(mesh: GridMesh, node_ids: np.ndarray) -> np.ndarray:
    """Boolean (nely, nelx) mask of elements with a corner in ``node_ids``."""
    mask = np.zeros((mesh.nely, mesh.nelx), dtype=bool)
    per_col = mesh.nely + 1
    for n in np.asarray(node_ids, dtype=np.int64):
        ix, iy = divmod(int(n), per_col)
        for ex in (ix - 1, ix):
            for ey in (iy - 1, iy):
                if 0 <= ex < mesh.nelx and 0 <= ey < mesh.nely:
                    mask[ey, ex] = True
    return mask


def support_element_mask(problem: FemProblem) -> np.ndarray:
    """Elements adjacent to any fixed node."""
    return _elements_touching_nodes(problem.mesh, problem.bc.fixed_dofs // 2)


def load_element_mask(problem: FemProblem) -> np.ndarray:
    """Elements adjacent to any loaded node."""
    return _elements_touching_nodes(problem.mesh, problem.bc.load_dofs // 2)


def anchor_element_mask(problem: FemProblem) -> np.ndarray:
    """Elements adjacent to a fixed or loaded node; the filter keep-set."""
    return support_element_mask(problem) | load_element_mask(problem)


def support_anchor_point(problem: FemProblem) -> tuple[float, float]:
    """Mean centroid of the support-adjacent elements, in domain coordinates."""
    mask = support_element_mask(problem)
    cx, cy = problem.mesh.element_centroids()
    return float(cx[mask].mean()), float(cy[mask].mean())


def load_anchor_point(problem: FemProblem) -> tuple[float, float]:
    """Centroid of the element containing the first loaded node."""
    mesh = problem.mesh
    node = int(problem.bc.load_dofs[0]) // 2
    ix, iy = divmod(node, mesh.nely + 1)
    ex = min(ix, mesh.nelx - 1)
    ey = min(iy, mesh.nely - 1)
    return ex + 0.5, ey + 0.5
