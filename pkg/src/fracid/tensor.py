"""Tensor-product space: P1 on the interval times the hp space in y.

Degrees of freedom are ordered with the interval index fastest: the global
index of (i, j) is ``j * N_x + i`` and a coefficient vector reshapes to the
(N_x, N_y) matrix with ``order='F'``.  Functions vanish on the lateral
boundary (interval endpoints) and on the top cap y = Y; the dofs whose
y-basis value at y = 0 is 1 form the trace slice.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import omega as om
from .omega import OmegaMesh
from .ymesh import GradedExtensionMesh, assemble_y_forms

__all__ = ["TensorSpace", "build_tensor_space"]


@dataclass(frozen=True)
class TensorSpace:
    omega_mesh: OmegaMesh
    y_mesh: GradedExtensionMesh
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def nx(self):
        return self.omega_mesh.interior_count

    @property
    def ny(self):
        return self.y_mesh.node_count - 1  # node at y = Y removed

    @property
    def dof_count(self):
        return self.nx * self.ny

    def y_forms(self, alpha):
        """Weighted y-side matrices (M_y, S_y, t_y), cached per alpha."""
        key = ("y", float(alpha))
        if key not in self._cache:
            self._cache[key] = assemble_y_forms(self.y_mesh, key[1])
        return self._cache[key]

    def omega_forms(self):
        """Interval-side stiffness/mass (q-independent), cached."""
        if "omega" not in self._cache:
            self._cache["omega"] = (
                om.stiffness_matrix(self.omega_mesh),
                om.mass_matrix(self.omega_mesh),
            )
        return self._cache["omega"]

    def base_operator(self, alpha):
        """q-independent part M_y x S_x + S_y x M_x of the operator, cached."""
        import scipy.sparse as sp

        key = ("base", float(alpha))
        if key not in self._cache:
            S_x, M_x = self.omega_forms()
            M_y, S_y, _ = self.y_forms(alpha)
            self._cache[key] = (
                sp.kron(M_y, S_x, format="csc") + sp.kron(S_y, M_x, format="csc")
            )
        return self._cache[key]

    def trace_dof(self, alpha=0.0):
        """Index of the y dof carrying the value at y = 0."""
        t_y = self.y_forms(alpha)[2]
        (nz,) = np.nonzero(t_y)
        return int(nz[0])

    @property
    def trace_slice(self):
        """Global indices of the trace-slice dofs (y-basis value 1 at y=0)."""
        j = 0  # nodal hp basis: the y=0 node is the first global y node
        return np.arange(j * self.nx, j * self.nx + self.nx)

    def as_matrix(self, vec):
        return np.asarray(vec, dtype=float).reshape((self.nx, self.ny), order="F")

    def as_vector(self, mat):
        return np.asarray(mat, dtype=float).flatten(order="F")

    def content_hash(self):
        digest = hashlib.sha256()
        digest.update(self.omega_mesh.breakpoints.tobytes())
        digest.update(self.omega_mesh.diffusion.tobytes())
        digest.update(self.y_mesh.content_bytes())
        return int.from_bytes(digest.digest()[:8], "little")


def build_tensor_space(omega_mesh: OmegaMesh, y_mesh: GradedExtensionMesh) -> TensorSpace:
    if omega_mesh.interior_count < 1:
        raise om.ConfigurationError("interval mesh has no interior dofs")
    return TensorSpace(omega_mesh, y_mesh)
