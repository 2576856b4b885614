"""Density fields: the per-element design variable on the (nely, nelx) grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mesh import GridMesh


@dataclass(frozen=True, eq=False)
class DensityField:
    """Per-element densities, row-major over (nely, nelx).

    ``binary`` records which regime the field is in: continuous fields hold
    values in [x_min, 1], binarized fields hold exactly {0, 1}. Values are
    frozen after construction and safe to share across threads.
    """

    values: np.ndarray
    binary: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if v.ndim != 2:
            raise InputError(f"density field must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("density field contains non-finite values")
        if self.binary and not np.all((v == 0.0) | (v == 1.0)):
            raise InputError("field flagged binary has values outside {0, 1}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def nely(self) -> int:
        return self.values.shape[0]

    @property
    def nelx(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def volume(self) -> float:
        """Total material volume (unit elements, so the plain sum)."""
        return float(self.values.sum())

    @classmethod
    def uniform(cls, mesh: GridMesh, value: float) -> "DensityField":
        return cls(np.full((mesh.nely, mesh.nelx), float(value)))


def density_array(field) -> np.ndarray:
    """Accept a DensityField or a bare 2-D array; return the ndarray view."""
    if isinstance(field, DensityField):
        return field.values
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"density array must be 2-D, got shape {arr.shape}")
    return arr


def require_binary(field) -> np.ndarray:
    """Return the values of a binary field; reject anything outside {0, 1}."""
    if isinstance(field, DensityField) and not field.binary:
        raise InputError("operation requires a binary density field")
    arr = density_array(field)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise InputError("field has values outside {0, 1}")
    return arr
