"""Spectral reference solver for fractional powers of the reaction-diffusion
operator.

The operator is diagonalized once per coefficient (dense generalized
eigensolve against the consistent mass matrix); fractional solves, fractional
norms of any order in [-1, 1], and forward applications are then diagonal
multiplier sweeps in the eigenbasis.  This is the ground-truth oracle the
extension solver is measured against.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, NumericalError
from .omega import Coefficient, OmegaMesh, assemble_omega_forms

__all__ = [
    "FractionalParams",
    "EigenDecomposition",
    "eigenpairs",
    "fractional_solve",
    "hs_norm",
    "apply_Ls",
    "save_eigendecomposition",
    "load_eigendecomposition",
]

DENSE_EIGEN_CELL_LIMIT = 2048
SERIES_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class FractionalParams:
    """Fractional order s with its derived extension parameters.

    ``alpha = 1 - 2s`` is the exponent of the degenerate weight and
    ``d_s = 2^(1-2s) Gamma(1-s) / Gamma(s)`` the flux normalization; both are
    always derived from s, never set independently.
    """

    s: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ConfigurationError(f"fractional order s={self.s} must lie in (0,1)")

    @property
    def alpha(self):
        return 1.0 - 2.0 * self.s

    @property
    def d_s(self):
        s = self.s
        return 2.0 ** (1.0 - 2.0 * s) * math.gamma(1.0 - s) / math.gamma(s)


@dataclass(frozen=True)
class EigenDecomposition:
    """Mass-orthonormal eigenpairs of (reaction_stiffness, mass).

    ``vectors[:, k]`` holds the interior P1 coefficients of the k-th
    eigenfunction; eigenvalues are ascending.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    mass: object  # sparse interior mass matrix, kept for inner products

    @property
    def count(self):
        return self.eigenvalues.size

    def coefficients(self, w):
        """Eigen-expansion coefficients <w, phi_k>_L2 of an interior-dof vector."""
        return self.vectors.T @ (self.mass @ np.asarray(w, dtype=float))

    def synthesize(self, coeffs):
        return self.vectors @ np.asarray(coeffs, dtype=float)


def eigenpairs(forms, K=None) -> EigenDecomposition:
    """Generalized symmetric eigensolve of the assembled interval forms.

    ``forms`` is the (reaction_stiffness, mass) pair from
    :func:`fracid.omega.assemble_omega_forms`.  Dense LAPACK solve with
    Cholesky reduction of the mass matrix; deterministic ascending order.
    """
    K_mat, M_mat = forms
    n = K_mat.shape[0]
    k = n if K is None else int(K)
    if not 1 <= k <= n:
        raise ConfigurationError(f"requested {k} eigenpairs, mesh has {n} dofs")
    try:
        vals, vecs = scipy.linalg.eigh(
            K_mat.toarray(), M_mat.toarray(), subset_by_index=(0, k - 1)
        )
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"generalized eigensolve failed: {exc}") from exc
    resid = np.linalg.norm(K_mat @ vecs - (M_mat @ vecs) * vals[None, :], ord=np.inf)
    scale = max(1.0, float(vals[-1]))
    if not np.isfinite(resid) or resid > 1e-7 * scale:
        raise NumericalError("eigensolver residual above tolerance", resid / scale)
    return EigenDecomposition(np.ascontiguousarray(vals), np.ascontiguousarray(vecs), M_mat)


def solve_oracle(mesh: OmegaMesh, q: Coefficient, K=None) -> EigenDecomposition:
    """Assemble and diagonalize in one step (desk-scale meshes)."""
    if mesh.cell_count > DENSE_EIGEN_CELL_LIMIT:
        raise ConfigurationError(
            f"dense oracle limited to {DENSE_EIGEN_CELL_LIMIT} cells, got {mesh.cell_count}"
        )
    return eigenpairs(assemble_omega_forms(mesh, q), K)


def _as_vector(eig, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (eig.vectors.shape[0],):
        raise ConfigurationError(
            f"data vector has shape {f.shape}, expected ({eig.vectors.shape[0]},)"
        )
    return f


def fractional_solve(eig: EigenDecomposition, f, params: FractionalParams):
    """Solve the fractional problem by the eigen-series u = sum lam_k^-s f_k phi_k.

    Warns when the last retained mode still carries weight above the series
    tail tolerance, reporting the achieved bound.
    """
    f = _as_vector(eig, f)
    fk = eig.coefficients(f)
    lam = eig.eigenvalues
    tail = abs(fk[-1]) * lam[-1] ** (-params.s)
    if tail > SERIES_TAIL_TOL:
        warnings.warn(
            f"eigen-series tail estimate {tail:.3e} above {SERIES_TAIL_TOL:.1e}",
            stacklevel=2,
        )
    return eig.synthesize(lam ** (-params.s) * fk)


def apply_Ls(eig: EigenDecomposition, w, params: FractionalParams):
    """Forward application: diagonal multiplier lam_k^{+s} in the eigenbasis."""
    w = _as_vector(eig, w)
    return eig.synthesize(eig.eigenvalues ** params.s * eig.coefficients(w))


def hs_norm(eig: EigenDecomposition, w, s):
    """Fractional Sobolev norm (sum lam_k^s w_k^2)^(1/2); s may be negative."""
    if not -1.0 <= s <= 1.0:
        raise ConfigurationError(f"norm order s={s} must lie in [-1, 1]")
    wk = eig.coefficients(_as_vector(eig, w))
    return float(np.sqrt(np.sum(eig.eigenvalues ** s * wk**2)))


_SNAPSHOT_MAGIC = b"FIDEIG1\x00"


def save_eigendecomposition(path, eig: EigenDecomposition, mesh: OmegaMesh, s=0.0):
    """Binary snapshot: header (mesh hash, K, s), then eigenvalues and the
    eigenvector matrix column by column, little-endian float64."""
    n, k = eig.vectors.shape
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<QQQd", mesh.content_hash(), k, n, float(s)))
        fh.write(eig.eigenvalues.astype("<f8").tobytes())
        fh.write(np.asfortranarray(eig.vectors, dtype="<f8").tobytes(order="F"))


def load_eigendecomposition(path, mesh: OmegaMesh, q: Coefficient = None):
    """Load a snapshot written by :func:`save_eigendecomposition`.

    The stored mesh hash must match ``mesh``.  Returns ``(eig, s)``; the
    mass matrix is reassembled from the mesh.
    """
    with open(path, "rb") as fh:
        if fh.read(len(_SNAPSHOT_MAGIC)) != _SNAPSHOT_MAGIC:
            raise ConfigurationError(f"{path}: not an eigen snapshot")
        mesh_hash, k, n, s = struct.unpack("<QQQd", fh.read(32))
        if mesh_hash != mesh.content_hash():
            raise ConfigurationError(f"{path}: snapshot was built for a different mesh")
        lam = np.frombuffer(fh.read(8 * k), dtype="<f8").copy()
        vecs = np.frombuffer(fh.read(8 * k * n), dtype="<f8").reshape((n, k), order="F").copy()
    from .omega import mass_matrix

    return EigenDecomposition(lam, vecs, mass_matrix(mesh)), s
