"""hp discretization of the extended direction.

The extended interval [0, Y] carries a geometric mesh graded toward y = 0
(where the extension is singular) with a linear per-element degree vector.
Shape functions are nodal Lagrange polynomials on Gauss-Lobatto points, so
C0 continuity is a shared-endpoint identification and the trace at y = 0 is
a single nodal indicator.

All elemental integrals carry the Muckenhoupt weight y^alpha.  The element
touching y = 0 is integrated with a Gauss-Jacobi rule matched to the weight
(the weight is exactly a Jacobi weight there); on every other element the
weight is smooth and a generously-sized Gauss-Legendre rule reaches the
1e-12 entry tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

from .errors import ConfigurationError

__all__ = [
    "GradedExtensionMesh",
    "geometric_mesh",
    "weighted_elemental_forms",
    "assemble_y_forms",
    "save_ymesh",
    "load_ymesh",
]

# extra Gauss-Legendre points on elements where y^alpha is smooth; the
# integrand is analytic there and this margin reaches 1e-12 down to sigma~0.2
_SMOOTH_EXTRA = 20


@dataclass(frozen=True)
class GradedExtensionMesh:
    """Geometric mesh on [0, Y] with grading factor sigma and degree slope."""

    height: float
    sigma: float
    slope: float
    breakpoints: np.ndarray
    degrees: np.ndarray

    @property
    def element_count(self):
        return self.degrees.size

    @property
    def node_count(self):
        """C0 nodes including both interval endpoints."""
        return 1 + int(self.degrees.sum())

    def elements(self):
        for m in range(self.element_count):
            yield self.breakpoints[m], self.breakpoints[m + 1], int(self.degrees[m])

    def content_bytes(self):
        return (
            np.asarray([self.height, self.sigma, self.slope]).tobytes()
            + self.breakpoints.tobytes()
            + self.degrees.tobytes()
        )


def linear_degree_vector(count, slope):
    """Degrees r_i = 1 + ceil(slope * (i - 1)), i = 1..count."""
    idx = np.arange(count, dtype=float)
    # guard against ties like 0.5 * 2 landing a hair above an integer
    return 1 + np.ceil(slope * idx - 1e-9).astype(int)


def geometric_mesh(height, element_count, sigma, slope=1.0) -> GradedExtensionMesh:
    """Build the graded mesh; breakpoints are Y * sigma^k in power form."""
    if height <= 0:
        raise ConfigurationError(f"truncation height {height} must be positive")
    if element_count < 1:
        raise ConfigurationError("mesh needs at least one element")
    if not 0.0 < sigma < 1.0:
        raise ConfigurationError(f"grading factor sigma={sigma} must lie in (0,1)")
    if slope <= 0:
        raise ConfigurationError(f"degree slope {slope} must be positive")
    M = int(element_count)
    powers = np.arange(M - 1, -1, -1, dtype=float)
    breakpoints = np.concatenate(([0.0], height * sigma**powers))
    return GradedExtensionMesh(
        float(height), float(sigma), float(slope), breakpoints, linear_degree_vector(M, slope)
    )


def gauss_lobatto_nodes(p):
    """Gauss-Lobatto points on [-1, 1] for degree-p nodal shape functions."""
    if p == 0:
        return np.zeros(1)
    if p == 1:
        return np.array([-1.0, 1.0])
    interior, _ = roots_jacobi(p - 1, 1.0, 1.0)
    return np.concatenate(([-1.0], interior, [1.0]))


_BASIS_CACHE = {}


def _basis_coefficients(p):
    """Legendre-series coefficients of the nodal basis (and derivatives)."""
    if p not in _BASIS_CACHE:
        nodes = gauss_lobatto_nodes(p)
        V = npleg.legvander(nodes, p)
        C = np.linalg.solve(V, np.eye(p + 1))
        dC = npleg.legder(C, axis=0) if p > 0 else np.zeros((1, 1))
        _BASIS_CACHE[p] = (nodes, C, dC)
    return _BASIS_CACHE[p]


def shape_values(p, x):
    """Values and reference derivatives of the degree-p nodal basis at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if p == 0:
        return np.ones((x.size, 1)), np.zeros((x.size, 1))
    _, C, dC = _basis_coefficients(p)
    vals = npleg.legvander(x, p) @ C
    derivs = npleg.legvander(x, max(p - 1, 0)) @ dC
    return vals, derivs


def weighted_elemental_forms(element, degree, alpha):
    """Weighted elemental matrices on one interval of the graded mesh.

    Returns ``(mass, stiffness, trace_values)`` for the degree-p nodal basis
    on ``element = (c, d)``: entries of ``integral y^alpha N_i N_j`` and
    ``integral y^alpha N_i' N_j'``, plus the nodal values at y = 0 when the
    element touches the axis (``None`` otherwise).
    """
    c, d = float(element[0]), float(element[1])
    if not d > c >= 0.0:
        raise ConfigurationError(f"invalid element ({c}, {d})")
    p = int(degree)
    h = d - c
    if c == 0.0:
        if alpha <= -1.0:
            raise ConfigurationError(
                f"weight exponent alpha={alpha} is not integrable at y=0"
            )
        xq, wq = roots_jacobi(p + 2, 0.0, alpha)
        wq = wq * (h / 2.0) ** (alpha + 1.0)
    else:
        xq, wq = npleg.leggauss(p + _SMOOTH_EXTRA)
        yq = c + (xq + 1.0) * h / 2.0
        wq = wq * (h / 2.0) * yq**alpha
    vals, derivs = shape_values(p, xq)
    mass = (vals * wq[:, None]).T @ vals
    stiff = (derivs * wq[:, None]).T @ derivs * (2.0 / h) ** 2
    mass = 0.5 * (mass + mass.T)
    stiff = 0.5 * (stiff + stiff.T)
    trace = None
    if c == 0.0:
        trace = shape_values(p, np.array([-1.0]))[0][0]
    return mass, stiff, trace


def assemble_y_forms(y_mesh: GradedExtensionMesh, alpha):
    """Global weighted mass/stiffness over the hp nodes with the node at
    y = Y removed, plus the trace vector (indicator of the y = 0 node)."""
    n_nodes = y_mesh.node_count
    M = sp.lil_matrix((n_nodes, n_nodes))
    S = sp.lil_matrix((n_nodes, n_nodes))
    offset = 0
    for c, d, p in y_mesh.elements():
        mass, stiff, _ = weighted_elemental_forms((c, d), p, alpha)
        sl = slice(offset, offset + p + 1)
        M[sl, sl] += mass
        S[sl, sl] += stiff
        offset += p
    keep = slice(0, n_nodes - 1)
    M_y = M[keep, keep].tocsr()
    S_y = S[keep, keep].tocsr()
    t_y = np.zeros(n_nodes - 1)
    t_y[0] = 1.0
    return M_y, S_y, t_y


def save_ymesh(path, mesh: GradedExtensionMesh):
    """Text format: header `Y M sigma slope`, then breakpoints, then degrees."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{mesh.height!r} {mesh.element_count} {mesh.sigma!r} {mesh.slope!r}\n")
        fh.write(" ".join(repr(b) for b in mesh.breakpoints) + "\n")
        fh.write(" ".join(str(int(r)) for r in mesh.degrees) + "\n")


def load_ymesh(path) -> GradedExtensionMesh:
    """Read the text format and verify it against the power-form rebuild."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) != 3:
        raise ConfigurationError(f"{path}: expected 3 lines, got {len(lines)}")
    try:
        height_s, count_s, sigma_s, slope_s = lines[0].split()
        mesh = geometric_mesh(float(height_s), int(count_s), float(sigma_s), float(slope_s))
        breakpoints = np.asarray([float(v) for v in lines[1].split()])
        degrees = np.asarray([int(v) for v in lines[2].split()])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed mesh file: {exc}") from exc
    if breakpoints.shape != mesh.breakpoints.shape or not np.allclose(
        breakpoints, mesh.breakpoints, rtol=1e-12, atol=0.0
    ):
        raise ConfigurationError(f"{path}: breakpoints do not match the power form")
    if not np.array_equal(degrees, mesh.degrees):
        raise ConfigurationError(f"{path}: degrees do not match the linear degree vector")
    return mesh


def reference_height(height, factor=3.0):
    """Truncation height of the fine reference used by decay studies."""
    return float(math.ceil(factor * height))
