"""Discrete truncated extension problem: assembly, solves, traces, norms.

The stiffness operator has the Kronecker-sum form

    K(q) = M_y x (S_x + M_x^(q)) + S_y x M_x

(interval index fastest), which is assembled sparse for the direct
factorization and also exposed matrix-free.  The load for data f is
supported on the trace slice only, since the right-hand side pairs f with
the trace of the test function.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import omega as om
from .errors import ConfigurationError, NumericalError
from .omega import Coefficient, OmegaMesh
from .spectral import FractionalParams, eigenpairs
from .tensor import TensorSpace, build_tensor_space
from .ymesh import geometric_mesh, weighted_elemental_forms

__all__ = [
    "TensorState",
    "AssembledSystem",
    "assemble_system",
    "solve_state",
    "trace",
    "energy_norm",
    "smallest_eigenvalue",
    "choose_truncation",
    "default_y_mesh",
    "save_state",
    "load_state",
]

SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class TensorState:
    """Coefficient vector of a function in the tensor-product space."""

    space: TensorSpace
    coefficients: np.ndarray
    params: FractionalParams

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", v)
        if v.shape != (self.space.dof_count,):
            raise ConfigurationError(
                f"state has {v.size} coefficients, space has {self.space.dof_count} dofs"
            )

    def matrix(self):
        return self.space.as_matrix(self.coefficients)


class AssembledSystem:
    """Assembled extension operator for one coefficient; immutable after
    construction, factorization is computed on first solve and shared."""

    def __init__(self, space: TensorSpace, q: Coefficient, params: FractionalParams):
        if len(q) != space.omega_mesh.cell_count:
            raise ConfigurationError(
                f"coefficient has {len(q)} cells, mesh has {space.omega_mesh.cell_count}"
            )
        self.space = space
        self.q = q
        self.params = params
        mesh = space.omega_mesh
        self.S_x, self.M_x = space.omega_forms()
        self.M_xq = om.weighted_mass(mesh, q.values)
        self.M_y, self.S_y, self.t_y = space.y_forms(params.alpha)
        self.matrix = space.base_operator(params.alpha) + sp.kron(
            self.M_y, self.M_xq, format="csc"
        )
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            # the operator is SPD with symmetric sparsity; symmetric-mode
            # minimum-degree ordering roughly halves the fill of the default
            self._lu = spla.splu(
                self.matrix, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True}
            )
        return self._lu

    def apply(self, vec):
        """Matrix-free Kronecker application (agrees with the sparse form)."""
        X = self.space.as_matrix(vec)
        AX = (self.S_x + self.M_xq) @ X
        BX = self.M_x @ X
        out = (self.M_y @ AX.T).T + (self.S_y @ BX.T).T
        return self.space.as_vector(out)

    def rhs_from_data(self, f):
        """Load vector d_s * (M_x f) placed on the trace slice."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.space.nx,):
            raise ConfigurationError(
                f"data vector has shape {f.shape}, expected ({self.space.nx},)"
            )
        B = np.outer(self.M_x @ f, self.t_y)
        return self.params.d_s * self.space.as_vector(B)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        norm_b = np.linalg.norm(rhs)
        if norm_b == 0.0:
            return np.zeros_like(rhs)
        v = self.lu.solve(rhs)
        resid = np.linalg.norm(self.matrix @ v - rhs) / norm_b
        if resid > SOLVE_RTOL:
            v = v + self.lu.solve(rhs - self.matrix @ v)
            resid = np.linalg.norm(self.matrix @ v - rhs) / norm_b
        if not np.isfinite(resid) or resid > SOLVE_RTOL:
            raise NumericalError("extension solve above residual tolerance", resid)
        return v


def assemble_system(space: TensorSpace, q: Coefficient, params: FractionalParams):
    return AssembledSystem(space, q, params)


def solve_state(system: AssembledSystem, f) -> TensorState:
    """Galerkin solution of the truncated extension problem with data f."""
    v = system.solve(system.rhs_from_data(f))
    return TensorState(system.space, v, system.params)


def trace(state: TensorState):
    """P1 function on the interval carried by the trace slice."""
    t_y = state.space.y_forms(state.params.alpha)[2]
    return state.matrix() @ t_y


def energy_norm(system: AssembledSystem, state) -> float:
    """Energy norm sqrt(v^T K v) of a state (or raw coefficient vector)."""
    v = state.coefficients if isinstance(state, TensorState) else np.asarray(state)
    return float(np.sqrt(max(v @ (system.matrix @ v), 0.0)))


def smallest_eigenvalue(mesh: OmegaMesh, q: Coefficient) -> float:
    """First eigenvalue of the reaction-diffusion operator on the interval."""
    eig = eigenpairs(om.assemble_omega_forms(mesh, q), K=1)
    return float(eig.eigenvalues[0])


def choose_truncation(h, lam1, safety=2.0) -> float:
    """Truncation height Y = max(1, safety * (4/sqrt(lam1)) * |log h|).

    Makes the exponential truncation error exp(-sqrt(lam1) Y / 4) at most
    h^safety, strictly higher order than the linear-in-h FEM error.
    """
    if not 0.0 < h < 1.0:
        raise ConfigurationError(f"meshwidth h={h} must lie in (0,1)")
    if lam1 <= 0.0:
        raise ConfigurationError(f"first eigenvalue {lam1} must be positive")
    if safety < 1.0:
        raise ConfigurationError(f"truncation safety factor {safety} must be >= 1")
    return max(1.0, safety * (4.0 / math.sqrt(lam1)) * abs(math.log(h)))


def default_y_mesh(height, sigma=0.5, slope=1.0, elements=None):
    """Geometric mesh with M = ceil(Y) elements (so M ~ Y with constant 1)."""
    M = int(math.ceil(height)) if elements is None else int(elements)
    return geometric_mesh(height, max(M, 1), sigma, slope)


def _y_basis_at(y_mesh, pts):
    """Global y-basis values/derivatives at points (top node dropped).

    Points above the mesh height evaluate to zero (zero extension).
    Returns arrays of shape (len(pts), node_count - 1).
    """
    pts = np.atleast_1d(np.asarray(pts, dtype=float))
    n = y_mesh.node_count
    vals = np.zeros((pts.size, n))
    ders = np.zeros((pts.size, n))
    bp = y_mesh.breakpoints
    offsets = np.concatenate(([0], np.cumsum(y_mesh.degrees)))
    from .ymesh import shape_values

    elem = np.clip(np.searchsorted(bp, pts, side="right") - 1, 0, y_mesh.element_count - 1)
    inside = pts <= bp[-1]
    for m in np.unique(elem[inside]):
        mask = inside & (elem == m)
        c, d, p = bp[m], bp[m + 1], int(y_mesh.degrees[m])
        xref = 2.0 * (pts[mask] - c) / (d - c) - 1.0
        v, dv = shape_values(p, xref)
        sl = slice(offsets[m], offsets[m] + p + 1)
        vals[mask, sl] = v
        ders[mask, sl] = dv * (2.0 / (d - c))
    return vals[:, :-1], ders[:, :-1]


def energy_norm_difference(state_a: TensorState, state_b: TensorState, q: Coefficient):
    """Energy norm of the difference of two states sharing the interval mesh
    but living on different y meshes (e.g. different truncation heights).

    The shorter state is extended by zero; the difference is integrated with
    the assembly-grade weighted quadrature on the union of the breakpoints.
    """
    sa, sb = state_a.space, state_b.space
    if sa.omega_mesh is not sb.omega_mesh and not (
        np.array_equal(sa.omega_mesh.breakpoints, sb.omega_mesh.breakpoints)
        and np.array_equal(sa.omega_mesh.diffusion, sb.omega_mesh.diffusion)
    ):
        raise ConfigurationError("states must share the interval mesh")
    if state_a.params.s != state_b.params.s:
        raise ConfigurationError("states must share the fractional order")
    alpha = state_a.params.alpha
    mesh = sa.omega_mesh
    S_x = om.stiffness_matrix(mesh)
    M_x = om.mass_matrix(mesh)
    M_xq = om.weighted_mass(mesh, q.values)
    Xa, Xb = state_a.matrix(), state_b.matrix()

    cuts = np.unique(np.concatenate((sa.y_mesh.breakpoints, sb.y_mesh.breakpoints)))
    pmax = int(max(sa.y_mesh.degrees.max(), sb.y_mesh.degrees.max()))
    total = 0.0
    for c, d in zip(cuts[:-1], cuts[1:]):
        if c == 0.0:
            from scipy.special import roots_jacobi

            xq, wq = roots_jacobi(pmax + 2, 0.0, alpha)
            wq = wq * ((d - c) / 2.0) ** (alpha + 1.0)
        else:
            xq, wq = np.polynomial.legendre.leggauss(pmax + 20)
            yq = c + (xq + 1.0) * (d - c) / 2.0
            wq = wq * ((d - c) / 2.0) * yq**alpha
        pts = c + (xq + 1.0) * (d - c) / 2.0
        va, da = _y_basis_at(sa.y_mesh, pts)
        vb, db = _y_basis_at(sb.y_mesh, pts)
        U = Xa @ va.T - Xb @ vb.T  # (nx, nq) values of the difference
        dU = Xa @ da.T - Xb @ db.T
        xpart = np.einsum("iq,iq->q", U, (S_x + M_xq) @ U)
        ypart = np.einsum("iq,iq->q", dU, M_x @ dU)
        total += float(wq @ (xpart + ypart))
    return math.sqrt(max(total, 0.0))


_STATE_MAGIC = b"FIDSTA1\x00"


def save_state(path, state: TensorState):
    """Binary snapshot: header (space hash, s), then the coefficient vector."""
    with open(path, "wb") as fh:
        fh.write(_STATE_MAGIC)
        fh.write(struct.pack("<Qd", state.space.content_hash(), state.params.s))
        fh.write(state.coefficients.astype("<f8").tobytes())


def load_state(path, space: TensorSpace) -> TensorState:
    with open(path, "rb") as fh:
        if fh.read(len(_STATE_MAGIC)) != _STATE_MAGIC:
            raise ConfigurationError(f"{path}: not a state snapshot")
        space_hash, s = struct.unpack("<Qd", fh.read(16))
        if space_hash != space.content_hash():
            raise ConfigurationError(f"{path}: snapshot was built for a different space")
        coeffs = np.frombuffer(fh.read(8 * space.dof_count), dtype="<f8").copy()
    return TensorState(space, coeffs, FractionalParams(s))
