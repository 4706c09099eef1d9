"""P1 finite elements on the interval domain.

The base domain is an interval (a, b) partitioned into cells.  All operators
act on the interior nodal values (homogeneous Dirichlet conditions), so a
function on the domain is a vector of length ``cell_count - 1``.  The
reaction coefficient lives in the box-constrained set of piecewise-constant
functions on the same cells.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

__all__ = [
    "OmegaMesh",
    "Coefficient",
    "assemble_omega_forms",
    "cell_cross_blocks",
    "prolong_nodal",
]


@dataclass(frozen=True)
class OmegaMesh:
    """Partition of the interval with a per-cell diffusion coefficient.

    ``breakpoints`` must be strictly increasing; ``diffusion`` holds one
    positive value per cell (uniform ellipticity).
    """

    breakpoints: np.ndarray
    diffusion: np.ndarray

    def __post_init__(self):
        bp = np.ascontiguousarray(np.asarray(self.breakpoints, dtype=float))
        a = np.ascontiguousarray(np.asarray(self.diffusion, dtype=float))
        if a.ndim == 0:
            a = np.full(bp.size - 1, float(a))
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "diffusion", a)
        if bp.ndim != 1 or bp.size < 2:
            raise ConfigurationError("mesh needs at least two breakpoints")
        if not np.all(np.diff(bp) > 0):
            raise ConfigurationError("breakpoints must be strictly increasing")
        if a.shape != (bp.size - 1,):
            raise ConfigurationError(
                f"diffusion has {a.size} entries for {bp.size - 1} cells"
            )
        if np.any(a <= 0):
            raise ConfigurationError("diffusion must be positive on every cell")

    @classmethod
    def uniform(cls, a, b, cells, diffusion=1.0):
        return cls(np.linspace(a, b, cells + 1), np.full(cells, float(diffusion)))

    @property
    def cell_count(self):
        return self.breakpoints.size - 1

    @property
    def cell_widths(self):
        return np.diff(self.breakpoints)

    @property
    def meshwidth(self):
        return float(self.cell_widths.max())

    @property
    def interior_nodes(self):
        return self.breakpoints[1:-1]

    @property
    def interior_count(self):
        return self.breakpoints.size - 2

    @property
    def length(self):
        return float(self.breakpoints[-1] - self.breakpoints[0])

    def content_hash(self):
        """Stable 64-bit hash of the mesh geometry and diffusion."""
        digest = hashlib.sha256()
        digest.update(self.breakpoints.tobytes())
        digest.update(self.diffusion.tobytes())
        return int.from_bytes(digest.digest()[:8], "little")

    def interpolate(self, func):
        """Interior nodal values of a callable (P1 interpolant, zero trace)."""
        return np.asarray([func(x) for x in self.interior_nodes], dtype=float)

    def cell_means(self, func, order=8):
        """Exact-to-quadrature cell averages of a callable."""
        x, w = np.polynomial.legendre.leggauss(order)
        left = self.breakpoints[:-1]
        h = self.cell_widths
        pts = left[:, None] + (x[None, :] + 1.0) * (h[:, None] / 2.0)
        vals = np.vectorize(func)(pts)
        return (vals @ w) / 2.0


@dataclass(frozen=True)
class Coefficient:
    """Piecewise-constant reaction coefficient in the admissible box [0, bound]."""

    values: np.ndarray
    bound: float = field(default=1.0)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bound", float(self.bound))
        if self.bound <= 0:
            raise ConfigurationError("coefficient bound must be positive")
        if v.ndim != 1:
            raise ConfigurationError("coefficient values must be a 1-D array")
        if np.any(v < 0) or np.any(v > self.bound):
            raise ConfigurationError(
                "coefficient violates the box constraints [0, bound]"
            )

    @classmethod
    def constant(cls, value, cells, bound=1.0):
        return cls(np.full(cells, float(value)), bound)

    def __len__(self):
        return self.values.size


def _check_cells(mesh, q):
    if len(q) != mesh.cell_count:
        raise ConfigurationError(
            f"coefficient has {len(q)} cells, mesh has {mesh.cell_count}"
        )


def mass_matrix(mesh, weights=None):
    """Consistent P1 mass matrix on interior dofs.

    ``weights`` is an optional per-cell factor (used for the q-weighted mass).
    """
    h = mesh.cell_widths
    w = np.ones_like(h) if weights is None else np.asarray(weights, dtype=float)
    n = mesh.interior_count
    diag = (w[:-1] * h[:-1] + w[1:] * h[1:]) / 3.0
    off = w[1:-1] * h[1:-1] / 6.0
    return sp.diags([off, diag, off], [-1, 0, 1], shape=(n, n), format="csr")


def stiffness_matrix(mesh):
    """A-weighted P1 stiffness matrix on interior dofs."""
    c = mesh.diffusion / mesh.cell_widths
    n = mesh.interior_count
    diag = c[:-1] + c[1:]
    off = -c[1:-1]
    return sp.diags([off, diag, off], [-1, 0, 1], shape=(n, n), format="csr")


def assemble_omega_forms(mesh: OmegaMesh, q: Coefficient):
    """Reaction-diffusion stiffness and mass forms on the interior P1 dofs.

    Returns ``(reaction_stiffness, mass)`` where the first represents
    ``integral(A u' v' + q u v)`` and the second the L2 pairing.  Both are
    symmetric positive definite sparse matrices.
    """
    _check_cells(mesh, q)
    K = stiffness_matrix(mesh) + mass_matrix(mesh, q.values)
    M = mass_matrix(mesh)
    return K.tocsr(), M.tocsr()


def weighted_mass(mesh, cell_values):
    """Mass matrix weighted by a piecewise-constant factor (may be signed)."""
    return mass_matrix(mesh, np.asarray(cell_values, dtype=float)).tocsr()


def cell_cross_blocks(mesh):
    """Per-cell elemental mass data restricted to interior dofs.

    For every cell k returns ``(idx, block)`` with the global interior dof
    indices touching the cell and the matching slice of the elemental mass
    ``h/6 * [[2, 1], [1, 2]]``.  Cells adjacent to the boundary contribute a
    1x1 block.  Used for cellwise gradients and diagnostic fields.
    """
    n = mesh.interior_count
    h = mesh.cell_widths
    blocks = []
    for k in range(mesh.cell_count):
        dofs = [d for d in (k - 1, k) if 0 <= d < n]
        local = np.array(dofs) - (k - 1)
        full = h[k] / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        blocks.append((np.asarray(dofs, dtype=int), full[np.ix_(local, local)]))
    return blocks


def l2_inner(mesh, u, v):
    """L2 inner product of two interior-dof P1 functions."""
    return float(u @ (mass_matrix(mesh) @ v))


def l2_norm(mesh, u):
    return float(np.sqrt(max(l2_inner(mesh, u, u), 0.0)))


def pc_inner(mesh, a, b):
    """L2 inner product of two piecewise-constant cell vectors."""
    return float(np.sum(mesh.cell_widths * np.asarray(a) * np.asarray(b)))


def pc_norm(mesh, a):
    return float(np.sqrt(max(pc_inner(mesh, a, a), 0.0)))


def prolong_nodal(coarse: OmegaMesh, fine: OmegaMesh, u):
    """Exact P1 prolongation of interior values onto a nested refinement.

    Every coarse breakpoint must be (floating-point) present in the fine
    mesh; dyadic refinements of the same interval satisfy this.
    """
    full = np.concatenate(([0.0], np.asarray(u, dtype=float), [0.0]))
    vals = np.interp(fine.interior_nodes, coarse.breakpoints, full)
    return vals
