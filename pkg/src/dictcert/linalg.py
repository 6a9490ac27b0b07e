"""Unit-column dictionaries and the column-wise operators built on them.

A dictionary here is an m x n real matrix whose columns (atoms) have unit
Euclidean norm.  Everything downstream leans on three small operators:

* ``atom_scale(A, z)``     -> A diag(z), the matrix whose i-th column is z_i A_i
* ``atom_inner(A, U)``     -> the vector of per-column inner products <A_i, U_i>
  (the adjoint of ``atom_scale``)
* ``atom_perp_project(A, M)`` -> per column, the projection of M_i onto the
  orthogonal complement of A_i

and on spectral reports for restricted Grams A_L* A_L, which control every
coherence-based bound used elsewhere.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularGramError, ValidationError

# Unit-column tolerances: inputs may deviate by 1e-9 relative; after the
# constructor renormalizes, stored columns are unit to 1e-12 relative.
UNIT_TOL_INPUT = 1e-9
UNIT_TOL_STORED = 1e-12

_GRAM_SINGULAR_RTOL = 1e-12


def _as_matrix(arr, where):
    mat = np.asarray(arr, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ValidationError("%s: expected a nonempty 2-D array, got shape %r"
                              % (where, np.shape(arr)))
    if not np.all(np.isfinite(mat)):
        raise ValidationError("%s: matrix contains non-finite entries" % where)
    return mat


def _check_unit_columns(mat, tol, where):
    norms = np.linalg.norm(mat, axis=0)
    dev = np.abs(norms - 1.0)
    bad = np.nonzero(dev > tol)[0]
    if bad.size:
        i = int(bad[np.argmax(dev[bad])])
        raise ValidationError(
            "%s: column %d has norm %.17g, violating the unit-column "
            "precondition (relative tolerance %g)" % (where, i, norms[i], tol)
        )
    return norms


def mutual_coherence(arr):
    """Largest absolute inner product between two distinct unit columns.

    A single-column matrix has coherence 0 by convention.
    """
    mat = _as_matrix(arr, "linalg.mutual_coherence")
    _check_unit_columns(mat, UNIT_TOL_INPUT, "linalg.mutual_coherence")
    n = mat.shape[1]
    if n == 1:
        return 0.0
    gram = np.abs(mat.T @ mat)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


@dataclass(frozen=True)
class Dictionary:
    """An m x n matrix with exactly unit-norm columns plus cached spectra.

    ``mu`` is the mutual coherence and ``op_norm`` the spectral norm; both
    are computed once at construction.  ``op_norm**2 <= 1 + n * mu`` always
    holds (a Gram diagonal-dominance consequence) and is asserted by tests,
    not enforced here.
    """

    entries: np.ndarray
    m: int
    n: int
    mu: float
    op_norm: float

    @classmethod
    def from_array(cls, arr):
        mat = _as_matrix(arr, "linalg.Dictionary")
        norms = _check_unit_columns(mat, UNIT_TOL_INPUT, "linalg.Dictionary")
        mat = mat / norms
        mat.flags.writeable = False
        m, n = mat.shape
        if n == 1:
            mu = 0.0
        else:
            gram = np.abs(mat.T @ mat)
            np.fill_diagonal(gram, 0.0)
            mu = float(gram.max())
        op = float(np.linalg.norm(mat, 2))
        return cls(entries=mat, m=m, n=n, mu=mu, op_norm=op)

    def column_subset(self, idx):
        return self.entries[:, np.asarray(idx, dtype=int)]


def _entries(A, where):
    if isinstance(A, Dictionary):
        return A.entries
    raise ValidationError("%s: expected a Dictionary, got %r" % (where, type(A)))


def atom_scale(A, z):
    """A diag(z): scale atom i by z_i."""
    ent = _entries(A, "linalg.atom_scale")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (ent.shape[1],):
        raise ValidationError("linalg.atom_scale: z must have shape (n,), got %r"
                              % (z.shape,))
    return ent * z[None, :]


def atom_inner(A, U):
    """Adjoint of atom_scale: the vector of <A_i, U_i>."""
    ent = _entries(A, "linalg.atom_inner")
    U = np.asarray(U, dtype=np.float64)
    if U.shape != ent.shape:
        raise ValidationError("linalg.atom_inner: U must have shape %r, got %r"
                              % (ent.shape, U.shape))
    return np.einsum("ij,ij->j", ent, U)


def atom_perp_project(A, M):
    """Project each column of M onto the orthocomplement of the matching atom.

    Idempotent and self-adjoint; annihilates A itself and anything of the
    form atom_scale(A, z).
    """
    ent = _entries(A, "linalg.atom_perp_project")
    M = np.asarray(M, dtype=np.float64)
    if M.shape != ent.shape:
        raise ValidationError("linalg.atom_perp_project: M must have shape %r, got %r"
                              % (ent.shape, M.shape))
    return M - ent * np.einsum("ij,ij->j", ent, M)[None, :]


@dataclass(frozen=True)
class GramSubsetReport:
    """Spectral summary of a restricted Gram G = A_L* A_L.

    ``smax_sq``  largest eigenvalue of G, i.e. the squared spectral norm
                 of the selected columns
    ``smin``     smallest eigenvalue of G
    ``inv_norm`` spectral norm of G^{-1}
    ``neumann_dev``  Frobenius distance of G^{-1} from the identity
    ``kmu``      |L| times the dictionary coherence
    ``bounds``   booleans recording the coherence consequences that are
                 guaranteed whenever kmu < 1/2:
                 smax_sq <= 1 + kmu, smin >= 1 - kmu,
                 inv_norm <= 2, neumann_dev < 2 kmu
    """

    subset: tuple
    smax_sq: float
    smin: float
    inv_norm: float
    neumann_dev: float
    kmu: float
    bounds: dict


def gram_subset_report(A, subset):
    """Eigen-analysis of the Gram of a column subset.

    Raises SingularGramError when the restricted Gram is singular, which
    certifies that the selected atoms are linearly dependent.
    """
    ent = _entries(A, "linalg.gram_subset_report")
    idx = np.asarray(subset, dtype=int)
    if idx.ndim != 1 or idx.size < 1:
        raise ValidationError("linalg.gram_subset_report: subset must be a "
                              "nonempty 1-D index list")
    if idx.min() < 0 or idx.max() >= ent.shape[1]:
        raise ValidationError("linalg.gram_subset_report: subset indices out of "
                              "range [0, %d)" % ent.shape[1])
    if np.unique(idx).size != idx.size:
        raise ValidationError("linalg.gram_subset_report: subset has repeated "
                              "indices")
    sub = ent[:, idx]
    gram = sub.T @ sub
    evals = np.linalg.eigvalsh(gram)
    smax = float(evals[-1])
    smin = float(evals[0])
    if smin <= _GRAM_SINGULAR_RTOL * max(smax, 1.0):
        raise SingularGramError(
            "linalg.gram_subset_report: restricted Gram over columns %s is "
            "singular (min eigenvalue %.3g); the atoms are linearly dependent"
            % (list(map(int, idx)), smin)
        )
    inv_evals = 1.0 / evals
    inv_norm = float(inv_evals.max())
    # G^{-1} - I has eigenvalues 1/ev - 1 in the same orthogonal frame, so
    # the Frobenius norm is just the 2-norm of that vector.
    neumann_dev = float(np.linalg.norm(inv_evals - 1.0))
    k = idx.size
    kmu = float(k * A.mu)
    bounds = {
        "kmu_below_half": kmu < 0.5,
        "smax_sq_le_1_plus_kmu": smax <= 1.0 + kmu + 1e-12,
        "smin_ge_1_minus_kmu": smin >= 1.0 - kmu - 1e-12,
        "inv_norm_le_2": inv_norm <= 2.0 + 1e-12,
        "neumann_dev_lt_2kmu": neumann_dev < 2.0 * kmu + 1e-12,
    }
    return GramSubsetReport(
        subset=tuple(int(i) for i in idx),
        smax_sq=smax,
        smin=smin,
        inv_norm=inv_norm,
        neumann_dev=neumann_dev,
        kmu=kmu,
        bounds=bounds,
    )
