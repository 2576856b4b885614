"""Shared oracles and fixtures for the test suite.

Each oracle is an independent route to the quantity under test: quadrature
for the closed-form stiffness, finite differences for adjoint and network
gradients, dense assembly and BFS re-implementations for the sparse and
labeled paths.
"""

import numpy as np

from topopt2d.fem import analyze, element_stiffness
from topopt2d.mesh import (BoundaryConditions, FemProblem, GridMesh,
                           MaterialParams, cantilever_left_clamp_tip_load)


def small_cantilever(nelx=8, nely=4, **material_kwargs) -> FemProblem:
    mesh = GridMesh(nelx, nely)
    material = MaterialParams(**material_kwargs)
    return FemProblem(mesh, material, cantilever_left_clamp_tip_load(mesh),
                      bc_preset="cantilever-left-clamp-tip-load")


def q4_stiffness_quadrature(nu: float) -> np.ndarray:
    """2x2 Gauss quadrature of the Q4 plane-stress element on the unit square."""
    D = 1.0 / (1.0 - nu**2) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])
    gp = [0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]
    ke = np.zeros((8, 8))
    for xi in gp:
        for eta in gp:
            dn_dx = np.array([-(1 - eta), (1 - eta), eta, -eta])
            dn_dy = np.array([-(1 - xi), -xi, xi, (1 - xi)])
            b = np.zeros((3, 8))
            for a in range(4):
                b[0, 2 * a] = dn_dx[a]
                b[1, 2 * a + 1] = dn_dy[a]
                b[2, 2 * a] = dn_dy[a]
                b[2, 2 * a + 1] = dn_dx[a]
            ke += 0.25 * b.T @ D @ b
    return ke


def dense_assembly_oracle(x: np.ndarray, mesh: GridMesh,
                          material: MaterialParams) -> np.ndarray:
    """Brute-force dense assembly: explicit loops over elements and DOF pairs."""
    k0 = element_stiffness(material)
    K = np.zeros((mesh.n_dofs, mesh.n_dofs))
    edof = mesh.element_dofs()
    flat = x.ravel()
    for el in range(mesh.n_elements):
        scale = material.e0 * flat[el] ** material.penal
        dofs = edof[el]
        for a in range(8):
            for b in range(8):
                K[dofs[a], dofs[b]] += scale * k0[a, b]
    return K


def fd_sensitivity_oracle(x: np.ndarray, problem: FemProblem,
                          eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of compliance, re-solving per perturbation."""
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        cp = analyze(xp, problem, with_sensitivity=False).compliance
        cm = analyze(xm, problem, with_sensitivity=False).compliance
        out[idx] = (cp - cm) / (2.0 * eps)
    return out


def bfs_reachable_oracle(material: np.ndarray, seeds: np.ndarray,
                         connectivity: int = 8) -> np.ndarray:
    """Hand-rolled BFS over material cells from the seed mask."""
    material = material.astype(bool)
    seen = np.zeros_like(material)
    stack = [tuple(idx) for idx in np.argwhere(seeds & material)]
    for cell in stack:
        seen[cell] = True
    if connectivity == 8:
        moves = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    else:
        moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    while stack:
        i, j = stack.pop()
        for di, dj in moves:
            ni, nj = i + di, j + dj
            if (0 <= ni < material.shape[0] and 0 <= nj < material.shape[1]
                    and material[ni, nj] and not seen[ni, nj]):
                seen[ni, nj] = True
                stack.append((ni, nj))
    return seen


def flood_components_oracle(mask: np.ndarray, connectivity: int) -> list[set]:
    """All connected components of a boolean mask as sets of (i, j)."""
    remaining = {tuple(idx) for idx in np.argwhere(mask)}
    if connectivity == 8:
        moves = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    else:
        moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    components = []
    while remaining:
        start = next(iter(remaining))
        comp = {start}
        remaining.discard(start)
        stack = [start]
        while stack:
            i, j = stack.pop()
            for di, dj in moves:
                cell = (i + di, j + dj)
                if cell in remaining:
                    remaining.discard(cell)
                    comp.add(cell)
                    stack.append(cell)
        components.append(comp)
    return components


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def relu_preactivations(spec, params, x):
    """Pre-activation tensors of every relu layer plus the cached layer inputs.

    Finite differences through relu are only trustworthy when no
    pre-activation sits within the step of the kink; callers assert a margin
    on these before relying on an FD sweep.
    """
    from topopt2d.cnn import ops

    acts = [np.asarray(x, dtype=np.float64)]
    pres = []
    cur = acts[0]
    for layer, (w, b) in zip(spec.layers, params):
        if layer.kind == "fully_connected":
            pre = ops.fc_forward(cur.reshape(cur.shape[0], -1), w, b)
        elif layer.kind == "up":
            pre, _ = ops.upconv2d_forward(cur, w, b, layer.stride, layer.pad)
        else:
            pre, _ = ops.conv2d_forward(cur, w, b, layer.stride, layer.pad)
        pres.append(pre)
        cur = ops.relu_forward(pre) if layer.activation == "relu" else pre
        acts.append(cur)
    return acts, pres


def min_relu_margin(spec, params, x) -> float:
    _, pres = relu_preactivations(spec, params, x)
    margins = [np.abs(pre).min()
               for layer, pre in zip(spec.layers, pres) if layer.activation == "relu"]
    return float(min(margins)) if margins else np.inf
