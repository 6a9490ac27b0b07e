"""Dual certificates by sequential least squares with deflation.

For a dictionary A and sparse coefficients X, a dual certificate is a
matrix Lambda whose columns lambda_j satisfy, for every column j,

    A_{Omega_j}* lambda_j = sign(x_j) on the support          (interpolation)
    ||A_{Omega_j^c}* lambda_j||_inf <= 1/2 off the support    (strict slack)

while keeping the projected residual Q = Phi[Lambda X*] small, where Phi
projects each column onto the orthocomplement of the matching atom.

Columns are processed sequentially.  Each lambda_j is the least-squares
interpolator plus a deflation term: a fixed-norm step against the running
residual Q, projected so the interpolation constraint is untouched.  The
pass keeps the prefix of columns up to the trajectory argmin t* (taken over
the second half of the pass), then restarts on the remaining columns with
their coefficients rescaled so they again match the sparse model at the
reduced column count.  Each pass certifies at least half of what is left,
so the number of passes is logarithmic in p.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SingularGramError, ValidationError
from .linalg import Dictionary, atom_perp_project
from .model import SparseCoeffs

DEFLATION_SCALE = 0.25
_DEFLATION_ZERO_RTOL = 1e-12


def _gram_chol(sub, where):
    gram = sub.T @ sub
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise SingularGramError(
            "%s: restricted Gram is singular; the selected atoms are linearly "
            "dependent" % where
        ) from None


def _chol_solve(chol, rhs):
    return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


def least_squares_cert(A, omega, sigma_signs):
    """Least-squares dual lambda = A_Omega (A_Omega* A_Omega)^{-1} sigma.

    This is the minimum-norm vector matching the given signs on the
    selected atoms.  Off the selection, |A_i* lambda| <= 2 k mu whenever
    k mu < 1/2.
    """
    if not isinstance(A, Dictionary):
        raise ValidationError("certificate.least_squares_cert: A must be a Dictionary")
    omega = np.asarray(omega, dtype=int)
    sigma_signs = np.asarray(sigma_signs, dtype=np.float64)
    if omega.ndim != 1 or omega.size < 1 or sigma_signs.shape != omega.shape:
        raise ValidationError("certificate.least_squares_cert: omega and "
                              "sigma_signs must be matching nonempty 1-D arrays")
    sub = A.entries[:, omega]
    chol = _gram_chol(sub, "certificate.least_squares_cert")
    return sub @ _chol_solve(chol, sigma_signs)


def deflation_direction(A, omega, q_prev, x, scale=DEFLATION_SCALE):
    """Fixed-norm deflation step against the running residual.

    Returns scale * Theta q_prev x / ||Theta q_prev x|| where Theta projects
    out span(A_Omega), or the zero vector when the projected direction is
    negligible (below 1e-12 * ||q_prev||_F * ||x||).  The returned vector is
    orthogonal to every selected atom, so subtracting it from a dual vector
    never perturbs the interpolation constraint.
    """
    if not isinstance(A, Dictionary):
        raise ValidationError("certificate.deflation_direction: A must be a Dictionary")
    omega = np.asarray(omega, dtype=int)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValidationError("certificate.deflation_direction: x must have "
                              "shape (n,)")
    off = np.ones(A.n, dtype=bool)
    off[omega] = False
    if np.any(x[off] != 0.0):
        raise ValidationError("certificate.deflation_direction: x has nonzeros "
                              "outside omega")
    q_prev = np.asarray(q_prev, dtype=np.float64)
    if q_prev.shape != (A.m, A.n):
        raise ValidationError("certificate.deflation_direction: q_prev must have "
                              "shape (m, n)")
    sub = A.entries[:, omega]
    chol = _gram_chol(sub, "certificate.deflation_direction")
    qx = q_prev[:, omega] @ x[omega]
    direction = qx - sub @ _chol_solve(chol, sub.T @ qx)
    nrm = np.linalg.norm(direction)
    cutoff = _DEFLATION_ZERO_RTOL * np.linalg.norm(q_prev) * np.linalg.norm(x)
    if nrm <= cutoff:
        return np.zeros(A.m), True
    return (scale / nrm) * direction, False


@dataclass(frozen=True)
class PassResult:
    """One sequential pass over a list of columns.

    ``lambdas``      (m, t_star) duals for the kept prefix of ``cols``
    ``q_trajectory`` ||Q_t||_F after each of the len(cols) steps, at the
                     scale the pass ran at
    ``t_star``       argmin of the trajectory over the window
                     [max(1, ceil((L-1)/2)), L]
    ``offsup_inf``   per-step sup-norm of A* lambda off the column support
    ``zeta_zero``    per-step flag: the deflation direction degenerated
    ``step_sq``      per-step squared Frobenius norm of the Phi-projected
                     rank-one increment
    """

    cols: np.ndarray
    lambdas: np.ndarray
    q_trajectory: np.ndarray
    t_star: int
    offsup_inf: np.ndarray
    zeta_zero: np.ndarray
    step_sq: np.ndarray


def golfing_pass(A, X, cols, scale=1.0, zeta_scale=DEFLATION_SCALE):
    """Run one certificate pass over ``cols`` with coefficients times ``scale``.

    The residual starts at zero and is maintained incrementally: each step
    touches only the k support columns of Q plus O(m n) bookkeeping.
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("certificate.golfing_pass: expected (Dictionary, "
                              "SparseCoeffs)")
    if A.n != X.n:
        raise ValidationError("certificate.golfing_pass: A and X disagree on n")
    cols = np.asarray(cols, dtype=int)
    if cols.ndim != 1 or cols.size < 1:
        raise ValidationError("certificate.golfing_pass: cols must be a nonempty "
                              "1-D index array")
    if scale <= 0:
        raise ValidationError("certificate.golfing_pass: scale must be positive")
    ent = A.entries
    m, n = A.m, A.n
    num = cols.size
    q_mat = np.zeros((m, n))
    lambdas = np.empty((m, num))
    q_traj = np.empty(num)
    offsup = np.empty(num)
    zeta_zero = np.zeros(num, dtype=bool)
    step_sq = np.empty(num)
    supports = X.support.col_supports
    values = X.values
    sign_mat = X.signs

    for t, j in enumerate(cols):
        omega = supports[j]
        x_om = scale * values[omega, j]
        sgn = sign_mat[omega, j]
        sub = ent[:, omega]
        chol = _gram_chol(sub, "certificate.golfing_pass (column %d)" % j)
        lam = sub @ _chol_solve(chol, sgn)

        qx = q_mat[:, omega] @ x_om
        direction = qx - sub @ _chol_solve(chol, sub.T @ qx)
        nrm = np.linalg.norm(direction)
        cutoff = _DEFLATION_ZERO_RTOL * np.linalg.norm(q_mat) * np.linalg.norm(x_om)
        if nrm <= cutoff:
            zeta_zero[t] = True
        else:
            lam = lam - (zeta_scale / nrm) * direction

        w = sub.T @ lam
        update = lam[:, None] * x_om[None, :] - sub * (w * x_om)[None, :]
        q_mat[:, omega] += update
        step_sq[t] = float(np.einsum("ij,ij->", update, update))

        corr = ent.T @ lam
        corr[omega] = 0.0
        offsup[t] = float(np.abs(corr).max()) if n > omega.size else 0.0
        q_traj[t] = float(np.linalg.norm(q_mat))
        lambdas[:, t] = lam

    lo = max(1, math.ceil((num - 1) / 2))
    window = q_traj[lo - 1:num]
    t_star = lo + int(np.argmin(window))
    return PassResult(cols=cols, lambdas=lambdas[:, :t_star], q_trajectory=q_traj,
                      t_star=t_star, offsup_inf=offsup, zeta_zero=zeta_zero,
                      step_sq=step_sq)


@dataclass(frozen=True)
class CertificateState:
    """Full dual certificate for an instance.

    ``lam``       (m, p) dual matrix, one column per coefficient column
    ``residual``  Q = Phi[lam X*], an (m, n) matrix in range(Phi)
    ``per_step``  dict of per-column diagnostics, each an array of length p
                  indexed by the original column: q_norm (within-pass
                  residual after the column's step, in original coefficient
                  units), offsup_inf, zeta_zero, pass_index
    ``restart_boundaries``  number of already-certified columns at the start
                  of each pass (first entry 0)
    ``passes``    number of passes run; always <= ceil(log_{4/3} p) + 2
    """

    lam: np.ndarray
    residual: np.ndarray
    per_step: dict
    restart_boundaries: tuple
    passes: int
    kmu: float
    zeta_scale: float


def max_passes(p):
    return max(1, math.ceil(math.log(p) / math.log(4.0 / 3.0))) + 2


def build_certificate(A, X, zeta_scale=DEFLATION_SCALE):
    """Certify every column via repeated passes with rescaled restarts.

    A pass over the R remaining columns keeps its first t* columns; the
    survivors are re-run with coefficients scaled by sqrt(p / R'), which
    restores the model normalization at the reduced column count.  At most
    max((3/4)^r p, 2) columns remain uncertified after pass r.

    The interpolation property holds for every column by construction.  The
    off-support sup-norm is guaranteed below 1/2 when k mu < 1/8; outside
    that regime a warning is emitted and the certificate is still built.
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("certificate.build_certificate: expected "
                              "(Dictionary, SparseCoeffs)")
    if A.n != X.n:
        raise ValidationError("certificate.build_certificate: A and X disagree on n")
    p = X.p
    kmu = X.k * A.mu
    if kmu >= 0.125:
        warnings.warn(
            "certificate.build_certificate: k * mu = %.3g >= 1/8; the 1/2 "
            "off-support bound is no longer guaranteed" % kmu,
            RuntimeWarning,
        )
    lam = np.empty((A.m, p))
    q_norm = np.empty(p)
    offsup = np.empty(p)
    zeta_zero = np.zeros(p, dtype=bool)
    pass_index = np.zeros(p, dtype=int)

    remaining = np.arange(p)
    boundaries = [0]
    passes = 0
    limit = max_passes(p)
    while remaining.size:
        if passes >= limit:
            raise AssertionError(
                "certificate.build_certificate: pass budget %d exhausted with "
                "%d columns left" % (limit, remaining.size)
            )
        scale = math.sqrt(p / remaining.size)
        result = golfing_pass(A, X, remaining, scale=scale, zeta_scale=zeta_scale)
        t_star = result.t_star
        kept = remaining[:t_star]
        lam[:, kept] = result.lambdas
        q_norm[kept] = result.q_trajectory[:t_star] / scale
        offsup[kept] = result.offsup_inf[:t_star]
        zeta_zero[kept] = result.zeta_zero[:t_star]
        pass_index[kept] = passes
        remaining = remaining[t_star:]
        passes += 1
        if remaining.size:
            boundaries.append(p - remaining.size)

    residual = atom_perp_project(A, lam @ X.values.T)
    per_step = {
        "q_norm": q_norm,
        "offsup_inf": offsup,
        "zeta_zero": zeta_zero,
        "pass_index": pass_index,
    }
    return CertificateState(lam=lam, residual=residual, per_step=per_step,
                            restart_boundaries=tuple(boundaries), passes=passes,
                            kmu=float(kmu), zeta_scale=float(zeta_scale))


@dataclass(frozen=True)
class CertificateCheck:
    """Outcome of the three certificate conditions for a given alpha."""

    interp_dev: float
    interp_ok: bool
    offsup_max: float
    offsup_ok: bool
    phi_residual: float
    phi_ok: bool
    alpha: float
    all_ok: bool


def verify_certificate(A, X, lam, alpha, interp_tol=1e-9):
    """Measure the certificate conditions.

    interpolation:  max over the support of |A* lam - sign(X)| <= interp_tol
    slack:          max off the support of |A* lam| <= 1/2
    residual:       ||Phi[lam X*]||_F < alpha / 2
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("certificate.verify_certificate: expected "
                              "(Dictionary, SparseCoeffs)")
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (A.m, X.p):
        raise ValidationError("certificate.verify_certificate: lam must have "
                              "shape (m, p)")
    if not (alpha > 0.0):
        raise ValidationError("certificate.verify_certificate: alpha must be "
                              "positive")
    corr = A.entries.T @ lam
    mask = X.support.mask()
    interp_dev = float(np.abs((corr - X.signs)[mask]).max())
    off = ~mask
    offsup_max = float(np.abs(corr[off]).max()) if off.any() else 0.0
    phi_residual = float(np.linalg.norm(atom_perp_project(A, lam @ X.values.T)))
    interp_ok = interp_dev <= interp_tol
    offsup_ok = offsup_max <= 0.5
    phi_ok = phi_residual < alpha / 2.0
    return CertificateCheck(
        interp_dev=interp_dev, interp_ok=interp_ok,
        offsup_max=offsup_max, offsup_ok=offsup_ok,
        phi_residual=phi_residual, phi_ok=phi_ok,
        alpha=float(alpha), all_ok=bool(interp_ok and offsup_ok and phi_ok),
    )
