"""Identification of the reaction coefficient in spectral fractional
diffusion, via the degenerate-weight extension on a truncated cylinder.

Layers, bottom to top:

- :mod:`fracid.omega` / :mod:`fracid.spectral` -- P1 interval FEM and the
  dense eigen-oracle for fractional solves and fractional norms.
- :mod:`fracid.ymesh` / :mod:`fracid.tensor` -- geometric hp mesh in the
  extended direction and the tensor-product space.
- :mod:`fracid.forward` -- Kronecker-sum assembly and solves of the
  truncated extension problem.
- :mod:`fracid.adjoint` -- exact discrete gradients and Hessian actions of
  the regularized misfit.
- :mod:`fracid.inverse` -- projected-gradient identification with
  stationarity certificates.
- :mod:`fracid.experiments` / :mod:`fracid.cli` -- reproducible studies and
  the command-line harness.
"""

from .errors import ConfigurationError, NumericalError, OptimizerFailure
from .omega import Coefficient, OmegaMesh, assemble_omega_forms
from .spectral import (
    EigenDecomposition,
    FractionalParams,
    apply_Ls,
    eigenpairs,
    fractional_solve,
    hs_norm,
    solve_oracle,
)
from .ymesh import GradedExtensionMesh, geometric_mesh, weighted_elemental_forms
from .tensor import TensorSpace, build_tensor_space
from .forward import (
    AssembledSystem,
    TensorState,
    assemble_system,
    choose_truncation,
    default_y_mesh,
    energy_norm,
    smallest_eigenvalue,
    solve_state,
    trace,
)
from .adjoint import ReducedEvaluation, evaluate, hessian_vector, sensitivity_solve, solve_adjoint
from .inverse import (
    IdentificationConfig,
    IdentificationResult,
    identify,
    make_noisy_data,
    parameter_schedule,
    project_box,
    project_piecewise_constant,
)

__version__ = "0.1.0"
