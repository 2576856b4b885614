"""topopt2d: 2D compliance-minimization topology optimization.

A plane-stress FEM core, the classical OC/SIMP density optimizer, a
convolutional surrogate that replaces the adjoint sensitivity inside the
OC loop, bar-system training-data generation, and morphological
post-filtering of binary designs.
"""

__version__ = "0.1.0"

from .errors import (DegenerateSensitivityError, InputError, NumericalError,
                     SingularSystemError, TopoptError)
from .fields import DensityField
from .mesh import (BC_PRESETS, BoundaryConditions, FemProblem, GridMesh,
                   MaterialParams, anchor_element_mask, bc_from_preset,
                   cantilever_left_clamp_tip_load)

__all__ = [
    "__version__",
    "TopoptError", "InputError", "NumericalError", "SingularSystemError",
    "DegenerateSensitivityError",
    "DensityField",
    "GridMesh", "MaterialParams", "BoundaryConditions", "FemProblem",
    "BC_PRESETS", "bc_from_preset", "cantilever_left_clamp_tip_load",
    "anchor_element_mask",
]
