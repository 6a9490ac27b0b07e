"""Balancedness of a sparse coefficient pattern under a dictionary.

Feasible first-order perturbations of the factorization Y = A X satisfy,
after eliminating the dictionary perturbation, a homogeneous linear system
M vec[Delta_X] = 0.  This module works with T = M*M and quantifies how far
the support pattern Omega is from hosting a nullspace vector of T: the
restricted smallest singular value

    xi = min ||P_Omega T P_Omega z|| / ||z||   over z supported on Omega,

and the balancedness constant

    alpha = 1 / (sqrt(2) ||A|| (1 + ||P_Omega T P_Omega^c|| / xi)),

which converts off-support coefficient mass into a lower bound on how much
any feasible perturbation must move the dictionary.  alpha feeds the
residual threshold of the dual-certificate test.

T splits as T = (I (x) A*A) - R + (T - T_hat) with R positive
semidefinite and T_hat the simplification obtained by replacing X X* with
its expectation I.  The report carries each term of that decomposition so
the chain

    xi >= min_j lambda_min(A_{Omega_j}* A_{Omega_j}) - ||P_Omega R P_Omega||
          - ||P_Omega (T - T_hat) P_Omega||

can be checked numerically.  R itself decomposes over rows of X into the
positive semidefinite pieces Psi_i handled by ``psi_term``.

Vectors of length n*p use column-stacking order: entry (r, j) of the
matrix sits at flat index j*n + r (``reshape(..., order="F")``).

All operators are applied matrix-free.  Nothing here forms an np x np
matrix; the only dense object is the kp x kp compression of T onto the
support coordinates, and only below the crossover size.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import ConditioningError, ValidationError
from .linalg import Dictionary, atom_inner, atom_perp_project
from .model import SparseCoeffs

_XXT_MIN_EIG = 1e-10
DENSE_COMPRESSION_LIMIT = 4000
POWER_REL_TOL = 1e-6
_POWER_MAX_ITER = 10000
_POWER_SEED = 20260822


def _power_rng(salt):
    return np.random.default_rng((_POWER_SEED, int(salt)))


class BalanceOperators:
    """Matrix-free applications of T, T_hat, R and friends for one instance.

    Caches the Gram matrix of A and a Cholesky factorization of X X*.
    Instances are read-only after construction, so concurrent applications
    are safe.
    """

    def __init__(self, A, X):
        if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
            raise ValidationError("balancedness: expected (Dictionary, SparseCoeffs)")
        if A.n != X.n:
            raise ValidationError("balancedness: A and X disagree on n")
        self.A = A
        self.X = X
        self.ata = A.entries.T @ A.entries
        vals = X.values
        xxt = vals @ vals.T
        eig_min = float(scipy.linalg.eigvalsh(xxt)[0])
        if eig_min <= _XXT_MIN_EIG:
            raise ConditioningError(
                "balancedness: X X* is numerically singular (min eigenvalue "
                "%.3g <= %.3g); the coefficient rows are linearly dependent"
                % (eig_min, _XXT_MIN_EIG)
            )
        self._cho = scipy.linalg.cho_factor(xxt)
        # projector_rows = (X X*)^{-1} X, the (n, p) matrix whose transpose
        # is X*(X X*)^{-1}; both P_X and the elimination weights reduce to it
        self.projector_rows = scipy.linalg.cho_solve(self._cho, vals)
        self.mask = X.support.mask()
        self.support_flat = np.flatnonzero(self.mask.ravel(order="F"))

    # -- vec helpers ---------------------------------------------------

    def _unvec(self, z):
        z = np.asarray(z, dtype=np.float64)
        n, p = self.X.n, self.X.p
        if z.shape != (n * p,):
            raise ValidationError(
                "balancedness: vector must have length n*p = %d" % (n * p)
            )
        return z.reshape((n, p), order="F")

    @staticmethod
    def _vec(mat):
        return mat.ravel(order="F")

    # -- operators -----------------------------------------------------

    def t_apply(self, z):
        zmat = self._unvec(z)
        vals = self.X.values
        ent = self.A.entries
        off_px = zmat - (zmat @ vals.T) @ self.projector_rows
        gamma = atom_inner(self.A, ent @ (zmat @ self.projector_rows.T))
        out = self.ata @ (off_px + gamma[:, None] * self.projector_rows)
        return self._vec(out)

    def t_hat_apply(self, z):
        zmat = self._unvec(z)
        vals = self.X.values
        ent = self.A.entries
        off = zmat - (zmat @ vals.T) @ vals
        gamma = atom_inner(self.A, ent @ (zmat @ vals.T))
        out = self.ata @ (off + gamma[:, None] * vals)
        return self._vec(out)

    def r_apply(self, z):
        zmat = self._unvec(z)
        vals = self.X.values
        ent = self.A.entries
        mid = atom_perp_project(self.A, ent @ (zmat @ vals.T))
        return self._vec((ent.T @ mid) @ vals)

    def t_diff_apply(self, z):
        return self.t_apply(z) - self.t_hat_apply(z)

    def psi_apply(self, i, z):
        zmat = self._unvec(z) * self.mask
        row = self.X.values[i]
        g = self.ata[:, i]
        v = zmat @ row
        bv = self.ata @ v - g * (g @ v)
        return self._vec((bv[:, None] * row[None, :]) * self.mask)

    # -- projections ---------------------------------------------------

    def on_support(self, z):
        out = np.zeros_like(z)
        out[self.support_flat] = z[self.support_flat]
        return out

    def off_support(self, z):
        out = np.array(z, dtype=np.float64, copy=True)
        out[self.support_flat] = 0.0
        return out

    # -- compression ---------------------------------------------------

    def dense_compression(self):
        """The kp x kp matrix of P_Omega T P_Omega on support coordinates.

        Coordinates are ordered by ascending flat index, i.e. column-major
        over (row, column) support pairs.  Uses the splitting
        T = ((I - P_X) (x) A*A) + M2* M2 where M2 is the n x np matrix of
        the eliminated diagonal constraint.
        """
        n, p = self.X.n, self.X.p
        supports = self.X.support.col_supports
        k = self.X.k
        rows = supports.ravel()
        cols = np.repeat(np.arange(p), k)
        vals = self.X.values
        ipx = -vals.T @ self.projector_rows
        ipx[np.diag_indices(p)] += 1.0
        comp = ipx[np.ix_(cols, cols)] * self.ata[np.ix_(rows, rows)]
        m2 = self.ata[:, rows] * self.projector_rows[:, cols]
        comp += m2.T @ m2
        return (comp + comp.T) / 2.0


def apply_T(A, X, z):
    """T z for T = M*M, M the eliminated feasibility operator, matrix-free."""
    return BalanceOperators(A, X).t_apply(z)


def apply_T_hat(A, X, z):
    """T z in the simplified model where X X* is replaced by its mean I."""
    return BalanceOperators(A, X).t_hat_apply(z)


def apply_R(A, X, z):
    """The positive semidefinite nuisance term with T_hat + R = I (x) A*A."""
    return BalanceOperators(A, X).r_apply(z)


def _operator_norm(apply_fn, dim, rng, rel_tol=POWER_REL_TOL,
                   max_iter=_POWER_MAX_ITER):
    """Power iteration for a symmetric operator's norm (largest |eigenvalue|).

    The iteration is run on the operator itself; for symmetric maps the norm
    estimate ||B v_t|| converges to max |lambda| whether or not the extreme
    eigenvalue is positive.
    """
    v = rng.standard_normal(dim)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return 0.0
    v /= nrm
    est = 0.0
    for _ in range(max_iter):
        w = apply_fn(v)
        new_est = float(np.linalg.norm(w))
        if new_est <= 1e-300:
            return 0.0
        if abs(new_est - est) <= rel_tol * new_est:
            return new_est
        est = new_est
        v = w / new_est
    return est


def _coupling_norm(ops, rng, rel_tol=POWER_REL_TOL):
    """||P_Omega T P_Omega^c|| via power iteration on the normal map."""
    def normal_apply(z):
        fwd = ops.on_support(ops.t_apply(ops.off_support(z)))
        return ops.off_support(ops.t_apply(fwd))

    sq = _operator_norm(normal_apply, ops.X.n * ops.X.p, rng, rel_tol=rel_tol)
    return math.sqrt(max(sq, 0.0))


@dataclass(frozen=True)
class PsiTerm:
    """Matrix-free handle for one row's contribution to P_Omega R P_Omega."""

    row: int
    apply: object
    norm: float


def psi_term(A, X, i):
    """Handle and operator norm for Psi_i, the row-i piece of the nuisance.

    Psi_i acts on support-restricted vectors as
    P_Omega [ (A* P_i A) Z_Omega x^i* x^i ] with P_i = I - A_i A_i*.
    Rows are indexed 0..n-1.  The norm comes from power iteration at
    relative tolerance 1e-6 (Psi_i is positive semidefinite, so the norm is
    its largest eigenvalue).
    """
    ops = BalanceOperators(A, X)
    if not (0 <= int(i) < X.n):
        raise ValidationError("balancedness.psi_term: row index out of range")
    i = int(i)

    def apply(z, _ops=ops, _i=i):
        return _ops.psi_apply(_i, z)

    norm = _operator_norm(apply, X.n * X.p, _power_rng(i))
    return PsiTerm(row=i, apply=apply, norm=float(norm))


def restricted_min_sv(A, X):
    """The restricted smallest singular value xi of P_Omega T P_Omega.

    Dense path (kp <= 4000 support coordinates): assemble the compression
    and take its full spectrum; the compression is symmetric positive
    semidefinite, so eigenvalues and singular values coincide.  Beyond the
    crossover, Lanczos on the compressed operator (tolerance 1e-8).
    """
    ops = BalanceOperators(A, X)
    return _restricted_min_sv(ops)


def _restricted_min_sv(ops):
    dim = ops.support_flat.size
    if dim <= DENSE_COMPRESSION_LIMIT:
        comp = ops.dense_compression()
        return float(scipy.linalg.eigvalsh(comp)[0])

    idx = ops.support_flat
    full = ops.X.n * ops.X.p

    def compressed(zeta):
        z = np.zeros(full)
        z[idx] = zeta
        return ops.t_apply(z)[idx]

    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=compressed)
    v0 = _power_rng(3).standard_normal(dim)
    vals = scipy.sparse.linalg.eigsh(op, k=1, which="SA", tol=1e-8,
                                     v0=v0, return_eigenvectors=False)
    return float(vals[0])


@dataclass(frozen=True)
class BalancednessReport:
    """Balancedness quantities for one instance.

    ``xi``            restricted smallest singular value on the support
    ``alpha``         balancedness constant; 0 when degenerate
    ``coupling``      measured ||P_Omega T P_Omega^c||
    ``term_identity`` min_j lambda_min(A_{Omega_j}* A_{Omega_j})
    ``term_R``        ||P_Omega R P_Omega||
    ``term_Tdiff``    ||P_Omega (T - T_hat) P_Omega||
    ``eig_gap``       ||X X* - I||
    ``psi_norms``     per-row ||Psi_i||
    ``psi_bound``     4k/n + 24 k mu(A), the healthy-regime ceiling
    ``degenerate``    xi was not positive; alpha forced to 0
    """

    xi: float
    alpha: float
    coupling: float
    term_identity: float
    term_R: float
    term_Tdiff: float
    eig_gap: float
    psi_norms: tuple
    psi_bound: float
    degenerate: bool


def alpha_bound(A, X):
    """Full balancedness report, including alpha from measured quantities.

    The coupling norm ||P_Omega T P_Omega^c|| is measured by power
    iteration rather than bounded by a generic constant times ||A||, which
    gives a sharper instance-specific alpha.
    """
    ops = BalanceOperators(A, X)
    xi = _restricted_min_sv(ops)
    coupling = _coupling_norm(ops, _power_rng(1))

    supports = X.support.col_supports
    if X.k == 1:
        term_identity = 1.0
    else:
        term_identity = math.inf
        for j in range(X.p):
            sub = A.entries[:, supports[j]]
            lam_min = float(scipy.linalg.eigvalsh(sub.T @ sub)[0])
            term_identity = min(term_identity, lam_min)

    def r_compressed(z, _ops=ops):
        return _ops.on_support(_ops.r_apply(_ops.on_support(z)))

    def tdiff_compressed(z, _ops=ops):
        return _ops.on_support(_ops.t_diff_apply(_ops.on_support(z)))

    dim = X.n * X.p
    term_r = _operator_norm(r_compressed, dim, _power_rng(2))
    term_tdiff = _operator_norm(tdiff_compressed, dim, _power_rng(4))

    vals = X.values
    gap_mat = vals @ vals.T
    gap_mat[np.diag_indices(X.n)] -= 1.0
    eig_gap = float(np.abs(scipy.linalg.eigvalsh(gap_mat)).max())

    psi_norms = tuple(
        _operator_norm(lambda z, _i=i: ops.psi_apply(_i, z), dim, _power_rng(i))
        for i in range(X.n)
    )
    psi_bound = 4.0 * X.k / X.n + 24.0 * X.k * A.mu

    degenerate = not (xi > 0.0)
    if degenerate:
        alpha = 0.0
    else:
        alpha = 1.0 / (math.sqrt(2.0) * A.op_norm * (1.0 + coupling / xi))
    return BalancednessReport(
        xi=float(xi), alpha=float(alpha), coupling=float(coupling),
        term_identity=float(term_identity), term_R=float(term_r),
        term_Tdiff=float(term_tdiff), eig_gap=float(eig_gap),
        psi_norms=psi_norms, psi_bound=float(psi_bound),
        degenerate=degenerate,
    )
