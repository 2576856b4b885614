"""Plane-stress FEM on the unit-square Q4 grid.

Stiffness assembly under the power-law material interpolation, direct
sparse solve of the equilibrium system, compliance, and the adjoint
compliance sensitivity. All functions are pure; assembly order is fixed,
so results are bitwise-reproducible for identical inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import MatrixRankWarning, splu

from .errors import InputError, NumericalError, SingularSystemError
from .fields import density_array
from .mesh import FemProblem, GridMesh, MaterialParams

#: Relative residual above which a direct solve is reported as failed.
SOLVE_RESIDUAL_TOL = 1e-8


def element_stiffness(material: MaterialParams) -> np.ndarray:
    """Unit-modulus stiffness of a unit square bilinear quad, plane stress.

    Returns the closed-form 8x8 matrix k0 (Young's modulus 1, thickness 1);
    the assembled matrix scales it by x_i^penal * e0 per element. Local DOF
    order matches :meth:`GridMesh.element_dofs`.
    """
    nu = material.nu
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return (1.0 / (1.0 - nu**2)) * k[idx]


def _check_shape(density: np.ndarray, mesh: GridMesh) -> None:
    if density.shape != (mesh.nely, mesh.nelx):
        raise InputError(
            f"density shape {density.shape} does not match mesh "
            f"({mesh.nely}, {mesh.nelx})"
        )


def assemble_stiffness(density, mesh: GridMesh, material: MaterialParams) -> csc_matrix:
    """Assemble the global stiffness matrix K = sum_i x_i^p e0 * k0.

    The result is exactly symmetric by construction: k0 is symmetric and
    mirrored entries accumulate the same contributions in the same order.
    """
    x = density_array(density)
    _check_shape(x, mesh)
    k0 = element_stiffness(material)
    edof = mesh.element_dofs()
    scale = material.e0 * np.power(x.ravel(), material.penal)
    vals = (scale[:, None, None] * k0[None, :, :]).ravel()
    ii = np.repeat(edof, 8, axis=1).ravel()
    jj = np.tile(edof, (1, 8)).ravel()
    K = coo_matrix((vals, (ii, jj)), shape=(mesh.n_dofs, mesh.n_dofs))
    return K.tocsc()


def solve_displacement(K: csc_matrix, bc, mesh: GridMesh) -> np.ndarray:
    """Solve K u = f on the free DOFs; fixed DOFs are exactly zero.

    Uses a direct sparse factorization. A singular reduced system (the mesh
    is under-constrained) raises :class:`SingularSystemError`; a factorization
    that succeeds but leaves a residual above ``SOLVE_RESIDUAL_TOL`` raises
    :class:`NumericalError`.
    """
    f = bc.force_vector(mesh)
    free = np.setdiff1d(np.arange(mesh.n_dofs), bc.fixed_dofs)
    K_ff = K[free][:, free].tocsc()
    f_f = f[free]
    u = np.zeros(mesh.n_dofs)
    if not np.any(f_f):
        return u

    # the x^p contrast can reach 1/x_min^p; equilibrate symmetrically so the
    # factorization sees a moderately conditioned system
    diag = K_ff.diagonal()
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise SingularSystemError("reduced stiffness system has a non-positive diagonal")
    d = 1.0 / np.sqrt(diag)
    K_s = (K_ff.multiply(d[:, None])).multiply(d[None, :]).tocsc()
    f_s = d * f_f
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            lu = splu(K_s)
            y = lu.solve(f_s)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise SingularSystemError(f"reduced stiffness system is singular: {exc}") from exc
    # SuperLU does not flag near-zero pivots; on the equilibrated system they
    # are an unambiguous rank signal
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 1e-13 * pivots.max():
        raise SingularSystemError(
            "reduced stiffness system is singular (pivot ratio "
            f"{pivots.min() / pivots.max():.2e}); check the fixed DOFs"
        )
    if not np.all(np.isfinite(y)):
        raise SingularSystemError("reduced stiffness system is singular (non-finite solution)")
    for _ in range(3):
        r_s = f_s - K_s @ y
        if np.linalg.norm(r_s) <= 1e-12 * np.linalg.norm(f_s):
            break
        y = y + lu.solve(r_s)
    u_f = d * y

    # accept when the residual meets the contract or sits at the precision
    # floor of evaluating K @ u itself (rounding scales with |K| |u|)
    residual = np.linalg.norm(f_f - K_ff @ u_f)
    floor = 64.0 * np.finfo(float).eps * np.linalg.norm(abs(K_ff) @ np.abs(u_f))
    if residual > max(SOLVE_RESIDUAL_TOL * np.linalg.norm(f_f), floor):
        raise NumericalError(
            f"direct solve failed to converge: relative residual "
            f"{residual / np.linalg.norm(f_f):.3e}"
        )
    u[free] = u_f
    return u


def compliance(u: np.ndarray, bc) -> float:
    """Compliance c = f . u, summed over the loaded DOFs."""
    u = np.asarray(u, dtype=np.float64)
    if bc.load_dofs.max() >= u.size:
        raise InputError("displacement vector shorter than the loaded DOF range")
    return float(np.dot(bc.load_values, u[bc.load_dofs]))


def compliance_sensitivity(density, u: np.ndarray, mesh: GridMesh,
                           material: MaterialParams) -> np.ndarray:
    """Adjoint sensitivity dc/dx_i = -p x_i^(p-1) e0 (u_e^T k0 u_e).

    Self-adjoint for compliance, so only the equilibrium displacement is
    needed. Entries are <= 0: adding material never increases compliance.
    """
    x = density_array(density)
    _check_shape(x, mesh)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_dofs,):
        raise InputError(f"displacement length {u.shape} does not match mesh DOFs {mesh.n_dofs}")
    k0 = element_stiffness(material)
    ue = u[mesh.element_dofs()]
    energy = np.einsum("ei,ij,ej->e", ue, k0, ue)
    # the quadratic form is PSD; tiny negative values are cancellation noise
    energy = np.maximum(energy, 0.0)
    dc = -material.penal * material.e0 * np.power(x.ravel(), material.penal - 1.0) * energy
    return dc.reshape(mesh.nely, mesh.nelx)


@dataclass(frozen=True)
class FemResult:
    """One equilibrium analysis: displacement, compliance, and (optionally) sensitivity."""

    displacement: np.ndarray
    compliance: float
    sensitivity: np.ndarray | None


def analyze(density, problem: FemProblem, with_sensitivity: bool = True) -> FemResult:
    """Assemble, solve, and evaluate compliance (and sensitivity) in one call."""
    K = assemble_stiffness(density, problem.mesh, problem.material)
    u = solve_displacement(K, problem.bc, problem.mesh)
    c = compliance(u, problem.bc)
    sens = None
    if with_sensitivity:
        sens = compliance_sensitivity(density, u, problem.mesh, problem.material)
    return FemResult(u, c, sens)
