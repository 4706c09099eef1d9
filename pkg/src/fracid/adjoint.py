"""Adjoint solves, reduced functional, exact discrete gradients and
Hessian-vector products.

Everything here follows discretize-then-optimize: the gradient is the exact
derivative of the assembled discrete functional, so central finite
differences of the functional reproduce it to the optimal-step floor.  The
misfit-gradient field on a cell K is

    -(1/d_s) v^T B_K p / |K|,      B_K = M_y x M_x^(K),

the y-weighted state/adjoint cross term evaluated with the same elemental
mass blocks the assembly uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import omega as om
from .errors import ConfigurationError
from .forward import AssembledSystem, TensorState, assemble_system, solve_state, trace
from .omega import Coefficient
from .spectral import FractionalParams
from .tensor import TensorSpace

__all__ = [
    "ReducedEvaluation",
    "solve_adjoint",
    "sensitivity_solve",
    "reduced_gradient_field",
    "evaluate",
    "hessian_vector",
    "diagnostic_fields",
    "gradient_check_rows",
]


def _right_mul(X, A):
    # X @ A for symmetric sparse A
    return (A @ X.T).T


def cell_cross_terms(system: AssembledSystem, u_vec, w_vec):
    """Per-cell values u^T B_K w of the weighted cross mass term."""
    space = system.space
    Xu = space.as_matrix(u_vec)
    Yw = _right_mul(space.as_matrix(w_vec), system.M_y)
    out = np.empty(space.omega_mesh.cell_count)
    for k, (idx, block) in enumerate(om.cell_cross_blocks(space.omega_mesh)):
        acc = 0.0
        for a, ia in enumerate(idx):
            for b, ib in enumerate(idx):
                acc += block[a, b] * float(Xu[ia] @ Yw[ib])
        out[k] = acc
    return out


def solve_adjoint(system: AssembledSystem, state: TensorState, z) -> TensorState:
    """Adjoint state: same (self-adjoint) operator, load paired with the
    misfit tr(V) - z on the trace slice."""
    g = trace(state) - np.asarray(z, dtype=float)
    p = system.solve(system.rhs_from_data(g))
    return TensorState(system.space, p, system.params)


def sensitivity_solve(system: AssembledSystem, state: TensorState, h) -> TensorState:
    """Directional state derivative: K psi = -B_h v for a cellwise direction h."""
    space = system.space
    h = np.asarray(h, dtype=float)
    M_xh = om.weighted_mass(space.omega_mesh, h)
    load = -space.as_vector(_right_mul(M_xh @ state.matrix(), system.M_y))
    return TensorState(space, system.solve(load), system.params)


def reduced_gradient_field(system: AssembledSystem, state: TensorState, adjoint: TensorState):
    """Cellwise misfit gradient -(1/d_s) v^T B_K p / |K| (penalty excluded)."""
    if state.space is not adjoint.space:
        raise ConfigurationError("state and adjoint live on different spaces")
    widths = system.space.omega_mesh.cell_widths
    return -cell_cross_terms(system, state.coefficients, adjoint.coefficients) / (
        system.params.d_s * widths
    )


@dataclass(frozen=True)
class ReducedEvaluation:
    """Value, split and exact gradient of the reduced functional at Q."""

    value: float
    misfit: float
    penalty: float
    gradient: np.ndarray          # misfit field + rho (Q - q*), cellwise
    misfit_gradient: np.ndarray   # the field r_h alone
    state: TensorState
    adjoint: TensorState
    system: AssembledSystem


def evaluation_from_state(
    system: AssembledSystem, V: TensorState, Q: Coefficient, z, rho, q_star: Coefficient
) -> ReducedEvaluation:
    """Complete a state solve into a full evaluation (adds the adjoint solve)."""
    mesh = system.space.omega_mesh
    residual = trace(V) - np.asarray(z, dtype=float)
    misfit = 0.5 * om.l2_inner(mesh, residual, residual)
    dq = Q.values - q_star.values
    penalty = 0.5 * rho * om.pc_inner(mesh, dq, dq)
    P = solve_adjoint(system, V, z)
    r_field = reduced_gradient_field(system, V, P)
    return ReducedEvaluation(
        value=misfit + penalty,
        misfit=misfit,
        penalty=penalty,
        gradient=r_field + rho * dq,
        misfit_gradient=r_field,
        state=V,
        adjoint=P,
        system=system,
    )


def evaluate(
    space: TensorSpace,
    Q: Coefficient,
    f,
    z,
    rho,
    q_star: Coefficient,
    params: FractionalParams,
) -> ReducedEvaluation:
    """Assemble, solve state and adjoint, and return value plus gradient."""
    system = assemble_system(space, Q, params)
    V = solve_state(system, f)
    return evaluation_from_state(system, V, Q, z, rho, q_star)


def functional_value(space, Q, f, z, rho, q_star, params):
    """Value only (one state solve); used by line searches and FD probes."""
    mesh = space.omega_mesh
    system = assemble_system(space, Q, params)
    residual = trace(solve_state(system, f)) - np.asarray(z, dtype=float)
    dq = Q.values - q_star.values
    return 0.5 * om.l2_inner(mesh, residual, residual) + 0.5 * rho * om.pc_inner(
        mesh, dq, dq
    )


def hessian_vector(ev: ReducedEvaluation, h, rho):
    """Action of the exact reduced Hessian on a cellwise direction h.

    One linearized-state solve and one second-adjoint solve against the
    already-factored operator:

        psi = -K^-1 B_h v
        lam = K^-1 (T' M_x T psi - (1/d_s) B_h p)
        (Hh)_K = -[lam^T B_K v + (1/d_s) p^T B_K psi] / |K| + rho h_K
    """
    system = ev.system
    space = system.space
    h = np.asarray(h, dtype=float)
    d_s = system.params.d_s
    psi = sensitivity_solve(system, ev.state, h)
    M_xh = om.weighted_mass(space.omega_mesh, h)
    b = system.rhs_from_data(trace(psi)) * (1.0 / d_s)  # = T' M_x tr(psi) on the slice
    b -= (1.0 / d_s) * space.as_vector(_right_mul(M_xh @ ev.adjoint.matrix(), system.M_y))
    lam = system.solve(b)
    widths = space.omega_mesh.cell_widths
    field = -(
        cell_cross_terms(system, lam, ev.state.coefficients)
        + cell_cross_terms(system, ev.adjoint.coefficients, psi.coefficients) / d_s
    ) / widths
    return field + rho * h


def diagnostic_fields(system: AssembledSystem, state: TensorState, adjoint: TensorState):
    """Cell averages of the y-integrated squared state and adjoint.

    These are the weighted fields that appear in every error-bound constant;
    their sup norms make the acceptance tolerances interpretable.
    """
    widths = system.space.omega_mesh.cell_widths
    e = cell_cross_terms(system, state.coefficients, state.coefficients) / widths
    p = cell_cross_terms(system, adjoint.coefficients, adjoint.coefficients) / widths
    return {"state_field": e, "adjoint_field": p}


def gradient_check_rows(
    space,
    Q,
    f,
    z,
    rho,
    q_star,
    params,
    n_directions=10,
    steps=(1e-3, 3.16e-4, 1e-4, 3.16e-5, 1e-5, 3.16e-6, 1e-6),
    seed=0,
):
    """Central-difference sweep against the adjoint gradient.

    Returns (rows, best) where rows are CSV records
    (direction_id, step, fd_value, adjoint_value, rel_error) and best maps
    direction_id to its smallest relative error over the step sweep.
    """
    mesh = space.omega_mesh
    rng = np.random.default_rng(seed)
    ev = evaluate(space, Q, f, z, rho, q_star, params)
    rows, best = [], {}
    room = min(float(np.min(Q.values)), float(Q.bound - np.max(Q.values)))
    for d in range(n_directions):
        h = rng.standard_normal(mesh.cell_count)
        h /= max(np.abs(h).max(), 1e-30)
        adj = om.pc_inner(mesh, ev.gradient, h)
        best_err = np.inf
        for eps in steps:
            if eps > room:
                continue
            plus = Coefficient(Q.values + eps * h, Q.bound)
            minus = Coefficient(Q.values - eps * h, Q.bound)
            fd = (
                functional_value(space, plus, f, z, rho, q_star, params)
                - functional_value(space, minus, f, z, rho, q_star, params)
            ) / (2.0 * eps)
            rel = abs(fd - adj) / max(abs(adj), 1e-30)
            rows.append((d, eps, fd, adj, rel))
            best_err = min(best_err, rel)
        best[d] = best_err
    return rows, best
