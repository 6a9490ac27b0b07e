"""Tangent-space perturbations and the linearized l1 subproblem.

A perturbation (Delta_A, Delta_X) of a factorization Y = A X is feasible
to first order when

    Delta_A X + A Delta_X = 0     and     <A_i, Delta_A e_i> = 0 per atom.

Local optimality of (A, X) for the l1 objective reduces to the convex
subproblem

    minimize ||X + Delta_X||_1  over feasible perturbations,

whose optimum is ||X||_1 exactly when no first-order improvement exists.
When X X* is well conditioned, Delta_A is eliminated through
Delta_A = -A Delta_X X* (X X*)^{-1}, leaving constraints on Delta_X only:
A Z N = 0 for an orthonormal null basis N of X, and a per-atom linear
condition fixing the diagonal inner products, with Z = X + Delta_X.

Two interchangeable backends solve the subproblem: an exact LP for tiny
sizes (positive/negative splitting, HiGHS) and a first-order splitting
method for medium sizes whose affine projection is closed-form because the
two constraint blocks are mutually orthogonal.  Both produce dual vectors
from which interpolation and off-support margins are measured.

The verdict logic is deliberately tri-state.  A yes needs either a dual
certificate passing the residual test against the balancedness constant
alpha, or an exact solve landing on ||X||_1 with strict dual slack.  A no
needs an independently re-verified improving direction.  Anything else is
undecided; in particular a coefficient matrix with a zero row defeats the
balancedness premise and can never be certified yes.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .balancedness import alpha_bound
from .certificate import DEFLATION_SCALE, build_certificate, verify_certificate
from .errors import ConditioningError, NumericalError, ValidationError
from .linalg import Dictionary, atom_inner, atom_perp_project
from .model import SparseCoeffs

LP_VARIABLE_LIMIT = 50_000
_LP_ENTRY_LIMIT = 50_000_000


@dataclass(frozen=True)
class TangentPerturbation:
    """A candidate tangent direction (Delta_A, Delta_X); not assumed feasible."""

    delta_a: np.ndarray
    delta_x: np.ndarray


def tangent_residual(A, X, pert):
    """Measure how far a perturbation is from the tangent space.

    Returns {"bilinear_norm": ||Delta_A X + A Delta_X||_F,
             "diag_inf": max_i |<A_i, Delta_A e_i>|}.

    The bilinear form is evaluated as a single stacked product
    [Delta_A, A] [X; Delta_X] so that algebraically cancelling terms meet
    inside one accumulation.
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("tangent.tangent_residual: expected (Dictionary, "
                              "SparseCoeffs)")
    da = np.asarray(pert.delta_a, dtype=np.float64)
    dx = np.asarray(pert.delta_x, dtype=np.float64)
    if da.shape != (A.m, A.n) or dx.shape != (X.n, X.p):
        raise ValidationError("tangent.tangent_residual: perturbation shapes "
                              "must be (m, n) and (n, p)")
    stacked = np.hstack([da, A.entries]) @ np.vstack([X.values, dx])
    return {
        "bilinear_norm": float(np.linalg.norm(stacked)),
        "diag_inf": float(np.abs(atom_inner(A, da)).max()),
    }


@dataclass(frozen=True)
class WitnessReport:
    pert: TangentPerturbation
    bilinear_norm: float
    diag_inf: float
    column_support_sizes_match: bool


def rip_failure_witness(A, X, perm):
    """The permutation direction defeating any restricted isometry.

    For a fixed-point-free permutation pi, Delta_A = -A Pi and
    Delta_X = Pi X satisfy the bilinear constraint identically (term by
    term), while Delta_X is as large as X itself.  The per-atom inner
    products are bounded by the coherence and vanish for orthonormal A.
    Both matrices are pure reindexings of A and X, so no arithmetic error
    enters the construction; the reported residuals are measured, and for
    exactly representable dictionaries they are exactly zero.
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("tangent.rip_failure_witness: expected "
                              "(Dictionary, SparseCoeffs)")
    perm = np.asarray(perm, dtype=int)
    n = A.n
    if perm.shape != (n,) or np.any(np.sort(perm) != np.arange(n)):
        raise ValidationError("tangent.rip_failure_witness: perm must be a "
                              "permutation of range(n)")
    if np.any(perm == np.arange(n)):
        raise ValidationError("tangent.rip_failure_witness: perm must have no "
                              "fixed point")
    inv = np.argsort(perm)
    delta_a = -A.entries[:, perm]
    delta_x = X.values[inv]
    pert = TangentPerturbation(delta_a=delta_a, delta_x=delta_x)
    res = tangent_residual(A, X, pert)
    sizes_match = bool(
        np.array_equal(np.count_nonzero(delta_x, axis=0),
                       np.count_nonzero(X.values, axis=0))
    )
    return WitnessReport(pert=pert, bilinear_norm=res["bilinear_norm"],
                         diag_inf=res["diag_inf"],
                         column_support_sizes_match=sizes_match)


@dataclass(frozen=True)
class SolverParams:
    """Configuration for solve_linearized.

    ``backend``    "pd" (first-order splitting) or "lp" (exact, tiny scale)
    ``tol``        relative duality-gap target, gap <= tol * max(1, ||X||_1)
    ``max_iter``   iteration cap for the splitting method
    ``rho``        splitting penalty; None picks k p / n, making the
                   shrinkage threshold the squared coefficient scale
                   (one decade below typical nonzero magnitudes)
    ``cond_limit`` condition-number gate on X X* for the eliminated form
    ``check_every``how often the splitting method extracts a dual bound
    """

    backend: str = "pd"
    tol: float = 1e-9
    max_iter: int = 200_000
    rho: float | None = None
    cond_limit: float = 1e6
    check_every: int = 25


@dataclass(frozen=True)
class SolveResult:
    pert: TangentPerturbation
    objective: float
    status: str
    gap: float
    iterations: int
    backend: str
    form: str
    dual: dict | None


class _EliminatedForm:
    """Constraint machinery for the Delta_A-free parametrization.

    Variables are full n x p matrices Z = X + Delta_X subject to
    K1 Z = A Z N = 0 and K2 Z = atom_inner(A, A Z W) = 1, where N is an
    orthonormal basis of the null space of X (as a map R^p -> R^n) and
    W = X*(X X*)^{-1}.  The two blocks satisfy K1 K2* = 0 because
    W* N = 0, so K K* is block diagonal and the affine projection needs
    only two prefactored Cholesky solves.
    """

    def __init__(self, A, X):
        self.A = A
        self.X = X
        vals = X.values
        n, p = X.n, X.p
        u_mat, svals, vt = scipy.linalg.svd(vals, full_matrices=True)
        if svals[-1] <= 0.0:
            raise ConditioningError(
                "tangent: X has linearly dependent rows; the eliminated "
                "parametrization needs X X* invertible"
            )
        self.null_basis = vt[n:].T
        self.w_mat = (vt[:n].T / svals) @ u_mat.T
        self.ata = A.entries.T @ A.entries
        ent = A.entries
        aat = ent @ ent.T
        try:
            self._aat_cho = scipy.linalg.cho_factor(aat)
        except scipy.linalg.LinAlgError:
            raise NumericalError(
                "tangent: A A* is singular (dictionary does not span the "
                "signal space); cannot project onto the bilinear constraint"
            ) from None
        e_mat = (self.ata @ self.ata) * (self.w_mat.T @ self.w_mat)
        try:
            self._diag_cho = scipy.linalg.cho_factor(e_mat)
        except scipy.linalg.LinAlgError:
            raise NumericalError(
                "tangent: the eliminated diagonal-constraint Gram is "
                "singular; atoms and coefficient rows are too degenerate"
            ) from None

    def constraint_gap(self, z_mat, b2):
        ent = self.A.entries
        r1 = ent @ (z_mat @ self.null_basis)
        r2 = atom_inner(self.A, ent @ (z_mat @ self.w_mat)) - b2
        return float(np.linalg.norm(r1)), float(np.abs(r2).max())

    def _solve_normal(self, z_mat, b2):
        ent = self.A.entries
        r1 = ent @ (z_mat @ self.null_basis)
        r2 = atom_inner(self.A, ent @ (z_mat @ self.w_mat)) - b2
        y1 = scipy.linalg.cho_solve(self._aat_cho, r1)
        y2 = scipy.linalg.cho_solve(self._diag_cho, r2)
        return y1, y2

    def project(self, z_mat, b2):
        """Orthogonal projection onto {K1 Z = 0, K2 Z = b2}."""
        y1, y2 = self._solve_normal(z_mat, b2)
        return (z_mat - self.A.entries.T @ (y1 @ self.null_basis.T)
                - self.ata @ (y2[:, None] * self.w_mat.T))

    def dual_vectors(self, grad_mat):
        """Range-space dual (y1, y2) with K* y the projection of the input.

        Also returns the reconstructed constraint dual Lambda = Y1 N* +
        A diag(y2) W*, which satisfies A* Lambda = K* y exactly and
        Lambda X* = A diag(y2) up to roundoff, so the per-atom projection
        of Lambda X* vanishes by construction.
        """
        y1, y2 = self._solve_normal(grad_mat, 0.0)
        kstar = (self.A.entries.T @ (y1 @ self.null_basis.T)
                 + self.ata @ (y2[:, None] * self.w_mat.T))
        lam = y1 @ self.null_basis.T + self.A.entries @ (y2[:, None] * self.w_mat.T)
        return y1, y2, kstar, lam

    def delta_a_from(self, delta_x):
        return -self.A.entries @ (delta_x @ self.w_mat)


def _dual_margins(A, X, lam, lower_bound=None):
    corr = A.entries.T @ lam
    mask = X.support.mask()
    interp_dev = float(np.abs((corr - X.signs)[mask]).max())
    off = ~mask
    offsup = float(np.abs(corr[off]).max()) if off.any() else 0.0
    phi = float(np.linalg.norm(atom_perp_project(A, lam @ X.values.T)))
    out = {"interp_dev": interp_dev, "offsup_inf": offsup, "phi_residual": phi}
    if lower_bound is not None:
        out["lower_bound"] = float(lower_bound)
    return out


def _solve_pd(A, X, ef, params):
    """Splitting method on min ||Z||_1 s.t. Z in the eliminated affine set.

    Iterates x = project(z - u), z = shrink(x + u), u += x - z.  The x
    iterate is always exactly feasible, so ||x||_1 upper-bounds the
    optimum; a lower bound comes from scaling the range-space dual of the
    running subgradient rho*u into the dual-feasible set.
    """
    vals = X.values
    n, p = X.n, X.p
    rho = params.rho if params.rho is not None else X.k * p / n
    thresh = 1.0 / rho
    b2 = np.ones(n)
    scale = max(1.0, float(np.abs(vals).sum()))

    z = vals.copy()
    u = np.zeros_like(z)
    x = ef.project(z - u, b2)
    best_gap = math.inf
    status = "max_iter"
    iterations = params.max_iter
    ub = float(np.abs(x).sum())
    dual_info = None

    for it in range(1, params.max_iter + 1):
        x = ef.project(z - u, b2)
        xu = x + u
        z = np.sign(xu) * np.maximum(np.abs(xu) - thresh, 0.0)
        u = xu - z
        if it % params.check_every == 0 or it == params.max_iter:
            ub = float(np.abs(x).sum())
            y1, y2, kstar, lam = ef.dual_vectors(rho * u)
            feas = max(1.0, float(np.abs(kstar).max()))
            lb = float(y2.sum()) / feas
            gap = ub - lb
            best_gap = min(best_gap, gap)
            if gap <= params.tol * scale:
                status = "optimal"
                iterations = it
                dual_info = _dual_margins(A, X, lam / feas, lower_bound=lb)
                break
    if dual_info is None:
        y1, y2, kstar, lam = ef.dual_vectors(rho * u)
        feas = max(1.0, float(np.abs(kstar).max()))
        dual_info = _dual_margins(A, X, lam / feas,
                                  lower_bound=float(y2.sum()) / feas)
        ub = float(np.abs(x).sum())
    delta_x = x - vals
    pert = TangentPerturbation(delta_a=ef.delta_a_from(delta_x), delta_x=delta_x)
    return SolveResult(pert=pert, objective=ub, status=status,
                       gap=float(best_gap), iterations=iterations,
                       backend="pd", form="eliminated", dual=dual_info)


def _lp_status(res):
    if res.status == 0:
        return "optimal"
    if res.status == 1:
        return "max_iter"
    return "infeasible_numerics"


def _solve_lp_eliminated(A, X, ef, params):
    n, p = X.n, X.p
    m = A.m
    ent = A.entries
    nvar = n * p
    rows = m * (p - n) + n
    if 2 * nvar > LP_VARIABLE_LIMIT:
        raise ValidationError(
            "tangent.solve_linearized: LP backend limited to np + mn <= %d "
            "variables; use the pd backend" % LP_VARIABLE_LIMIT
        )
    if rows * 2 * nvar > _LP_ENTRY_LIMIT:
        raise ValidationError(
            "tangent.solve_linearized: dense LP would need %d x %d entries; "
            "use the pd backend" % (rows, 2 * nvar)
        )
    k1 = np.kron(ef.null_basis.T, ent)
    k2 = (ef.ata[:, :, None] * ef.w_mat.T[:, None, :]).transpose(0, 2, 1)
    k2 = k2.reshape(n, nvar)
    k_mat = np.vstack([k1, k2])
    b_eq = np.concatenate([np.zeros(m * (p - n)), np.ones(n)])
    c = np.ones(2 * nvar)
    res = linprog(c, A_eq=np.hstack([k_mat, -k_mat]), b_eq=b_eq,
                  bounds=(0, None), method="highs")
    status = _lp_status(res)
    if res.x is None:
        raise NumericalError(
            "tangent.solve_linearized: LP backend failed (%s)" % res.message
        )
    z = (res.x[:nvar] - res.x[nvar:]).reshape((n, p), order="F")
    dual_info = None
    if res.eqlin is not None and res.eqlin.marginals is not None:
        y = np.asarray(res.eqlin.marginals, dtype=np.float64)
        y1 = y[:m * (p - n)].reshape((m, p - n), order="F")
        y2 = y[m * (p - n):]
        lam = y1 @ ef.null_basis.T + ent @ (y2[:, None] * ef.w_mat.T)
        dual_info = _dual_margins(A, X, lam, lower_bound=float(b_eq @ y))
    delta_x = z - X.values
    pert = TangentPerturbation(delta_a=ef.delta_a_from(delta_x), delta_x=delta_x)
    gap = float(res.fun - (b_eq @ y)) if dual_info else math.nan
    return SolveResult(pert=pert, objective=float(res.fun), status=status,
                       gap=gap, iterations=int(getattr(res, "nit", 0)),
                       backend="lp", form="eliminated", dual=dual_info)


def _solve_lp_full(A, X, params):
    """Full (Delta_A, Delta_X) formulation; only escape for singular X X*."""
    n, p = X.n, X.p
    m = A.m
    ent = A.entries
    vals = X.values
    n_da = m * n
    n_v = n * p
    if 2 * (n_da + n_v) > LP_VARIABLE_LIMIT:
        raise ValidationError(
            "tangent.solve_linearized: full LP limited to np + mn <= %d "
            "variables" % LP_VARIABLE_LIMIT
        )
    rows = m * p + n
    if rows * 2 * (n_da + n_v) > _LP_ENTRY_LIMIT:
        raise ValidationError(
            "tangent.solve_linearized: full dense LP too large; reduce the "
            "instance or use a better-conditioned X"
        )
    diag_block = np.zeros((n, n_da))
    for i in range(n):
        diag_block[i, i * m:(i + 1) * m] = ent[:, i]
    k_da = np.vstack([np.kron(vals.T, np.eye(m)), diag_block])
    k_v = np.vstack([np.kron(np.eye(p), ent), np.zeros((n, n_v))])
    b_eq = np.concatenate([(ent @ vals).ravel(order="F"), np.zeros(n)])
    c = np.concatenate([np.zeros(2 * n_da), np.ones(2 * n_v)])
    res = linprog(c, A_eq=np.hstack([k_da, -k_da, k_v, -k_v]), b_eq=b_eq,
                  bounds=(0, None), method="highs")
    status = _lp_status(res)
    if res.x is None:
        raise NumericalError(
            "tangent.solve_linearized: full LP failed (%s)" % res.message
        )
    split = res.x[:2 * n_da]
    da = (split[:n_da] - split[n_da:]).reshape((m, n), order="F")
    vsplit = res.x[2 * n_da:]
    v = (vsplit[:n_v] - vsplit[n_v:]).reshape((n, p), order="F")
    dual_info = None
    gap = math.nan
    if res.eqlin is not None and res.eqlin.marginals is not None:
        y = np.asarray(res.eqlin.marginals, dtype=np.float64)
        lam = y[:m * p].reshape((m, p), order="F")
        dual_info = _dual_margins(A, X, lam, lower_bound=float(b_eq @ y))
        gap = float(res.fun - b_eq @ y)
    pert = TangentPerturbation(delta_a=da, delta_x=v - vals)
    return SolveResult(pert=pert, objective=float(res.fun), status=status,
                       gap=gap, iterations=int(getattr(res, "nit", 0)),
                       backend="lp", form="full", dual=dual_info)


def xxt_condition(X):
    vals = X.values
    eigs = scipy.linalg.eigvalsh(vals @ vals.T)
    if eigs[-1] <= 0.0:
        return math.inf
    if eigs[0] <= 0.0:
        return math.inf
    return float(eigs[-1] / eigs[0])


def solve_linearized(A, X, solver_params=None):
    """Minimize ||X + Delta_X||_1 over the tangent space at (A, X).

    Dispatch: when cond(X X*) is below ``cond_limit`` the Delta_A-free
    eliminated form is used with the configured backend; otherwise the full
    (Delta_A, Delta_X) LP is the only sound path and is used regardless of
    backend (tiny scale only).
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("tangent.solve_linearized: expected (Dictionary, "
                              "SparseCoeffs)")
    if A.n != X.n:
        raise ValidationError("tangent.solve_linearized: A and X disagree on n")
    params = solver_params if solver_params is not None else SolverParams()
    if params.backend not in ("pd", "lp"):
        raise ValidationError("tangent.solve_linearized: backend must be 'pd' "
                              "or 'lp'")
    if params.backend == "lp" and 2 * (X.n * X.p) + 2 * (A.m * A.n) > 2 * LP_VARIABLE_LIMIT:
        raise ValidationError(
            "tangent.solve_linearized: problem too large for the LP backend"
        )
    if xxt_condition(X) < params.cond_limit:
        ef = _EliminatedForm(A, X)
        if params.backend == "pd":
            return _solve_pd(A, X, ef, params)
        return _solve_lp_eliminated(A, X, ef, params)
    return _solve_lp_full(A, X, params)


@dataclass(frozen=True)
class KktReport:
    interp_dev: float
    interp_ok: bool
    offsup_max: float
    offsup_ok: bool
    gamma_residual: float
    gamma_ok: bool
    phi_residual: float
    all_ok: bool


def kkt_check(A, X, lam, gamma=None, tol=1e-8):
    """First-order stationarity of (0, 0) against a candidate dual Lambda.

    Checks sign interpolation on the support, sub-unit correlation off it,
    and that Lambda X* is a per-atom multiple of A.  When gamma is omitted
    it is taken as the per-column projection <A_i, (Lambda X*)_i>, which
    minimizes the third residual; with that choice the residual equals
    ||Phi[Lambda X*]||_F.
    """
    if not isinstance(A, Dictionary) or not isinstance(X, SparseCoeffs):
        raise ValidationError("tangent.kkt_check: expected (Dictionary, "
                              "SparseCoeffs)")
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (A.m, X.p):
        raise ValidationError("tangent.kkt_check: lam must have shape (m, p)")
    prod = lam @ X.values.T
    if gamma is None:
        gamma = atom_inner(A, prod)
    else:
        gamma = np.asarray(gamma, dtype=np.float64)
        if gamma.shape != (A.n,):
            raise ValidationError("tangent.kkt_check: gamma must have shape (n,)")
    corr = A.entries.T @ lam
    mask = X.support.mask()
    interp_dev = float(np.abs((corr - X.signs)[mask]).max())
    off = ~mask
    offsup_max = float(np.abs(corr[off]).max()) if off.any() else 0.0
    gamma_residual = float(np.linalg.norm(prod - A.entries * gamma))
    phi_residual = float(np.linalg.norm(atom_perp_project(A, prod)))
    interp_ok = interp_dev <= tol
    offsup_ok = offsup_max <= 1.0 + tol
    gamma_ok = gamma_residual <= tol
    return KktReport(interp_dev=interp_dev, interp_ok=interp_ok,
                     offsup_max=offsup_max, offsup_ok=offsup_ok,
                     gamma_residual=gamma_residual, gamma_ok=gamma_ok,
                     phi_residual=phi_residual,
                     all_ok=bool(interp_ok and offsup_ok and gamma_ok))


def sample_tangent(A, X, count, seed):
    """Random feasible tangent perturbations via homogeneous projection.

    Gaussians are projected onto {A Z N = 0, atom_inner(A, A Z W) = 0};
    the dictionary part follows from the elimination identity.  Requires
    X X* invertible.
    """
    from .seeding import DOMAIN_SOLVER, rng_from

    ef = _EliminatedForm(A, X)
    rng = rng_from(seed, DOMAIN_SOLVER)
    out = []
    zero_b2 = np.zeros(X.n)
    for _ in range(int(count)):
        draw = rng.standard_normal((X.n, X.p))
        dx = ef.project(draw, zero_b2)
        out.append(TangentPerturbation(delta_a=ef.delta_a_from(dx), delta_x=dx))
    return out


def uniqueness_margin(A, X, count=100, seed=0):
    """Smallest directional l1 growth over random unit tangent directions.

    For each sampled feasible direction scaled to unit combined Frobenius
    norm, evaluates ||X + Delta_X||_1 - ||X||_1.  A strictly positive
    minimum witnesses strong uniqueness of the zero perturbation at that
    sampling resolution.
    """
    base = float(np.abs(X.values).sum())
    worst = math.inf
    for pert in sample_tangent(A, X, count, seed):
        nrm = math.sqrt(float(np.linalg.norm(pert.delta_a)) ** 2
                        + float(np.linalg.norm(pert.delta_x)) ** 2)
        if nrm <= 1e-14:
            continue
        grown = float(np.abs(X.values + pert.delta_x / nrm).sum())
        worst = min(worst, grown - base)
    return worst


@dataclass(frozen=True)
class OptimalityConfig:
    zeta_scale: float = DEFLATION_SCALE
    solver: SolverParams = field(default_factory=SolverParams)
    objective_rtol: float = 1e-9
    offsup_margin: float = 1e-3
    interp_tol: float = 1e-6
    improvement_tol: float = 1e-8
    try_certificate: bool = True
    try_solve: bool = True


@dataclass(frozen=True)
class OptimalityVerdict:
    """Tri-state local-optimality decision with its supporting evidence.

    ``verdict``    "certified_yes" | "certified_no" | "undecided"
    ``route``      "certificate" | "direct_solve" | "balancedness_failure"
    ``evidence``   scalar measurements backing the verdict
    ``improving``  for certified_no, the re-verified descent direction
    """

    verdict: str
    route: str
    evidence: dict
    improving: TangentPerturbation | None = None


def _certificate_evidence(chk):
    return {
        "interp_dev": chk.interp_dev, "interp_ok": chk.interp_ok,
        "offsup_max": chk.offsup_max, "offsup_ok": chk.offsup_ok,
        "phi_residual": chk.phi_residual, "phi_ok": chk.phi_ok,
        "alpha": chk.alpha,
    }


def is_local_min(A, X, config=None):
    """Decide local optimality of (A, X) for the l1 objective.

    Fast route: balancedness alpha plus a constructed dual certificate.
    Fallback: solve the linearized subproblem directly; an optimum matching
    ||X||_1 with strict dual slack certifies yes, a re-verified improving
    direction certifies no, anything else stays undecided.
    """
    cfg = config if config is not None else OptimalityConfig()
    l1x = float(np.abs(X.values).sum())
    evidence = {"l1_x": l1x}
    degenerate = True
    xi = None
    alpha = 0.0
    try:
        rep = alpha_bound(A, X)
        degenerate = rep.degenerate
        xi = rep.xi
        alpha = rep.alpha
        evidence["alpha"] = rep.alpha
        evidence["xi"] = rep.xi
        evidence["coupling"] = rep.coupling
    except (ConditioningError, NumericalError) as exc:
        evidence["balancedness_error"] = str(exc)

    if cfg.try_certificate and not degenerate and alpha > 0.0:
        cert = build_certificate(A, X, zeta_scale=cfg.zeta_scale)
        chk = verify_certificate(A, X, cert.lam, alpha)
        evidence["certificate"] = _certificate_evidence(chk)
        if chk.all_ok:
            return OptimalityVerdict(verdict="certified_yes",
                                     route="certificate", evidence=evidence)

    fallback_route = "balancedness_failure" if degenerate else "direct_solve"
    if not cfg.try_solve:
        return OptimalityVerdict(verdict="undecided", route=fallback_route,
                                 evidence=evidence)
    try:
        sol = solve_linearized(A, X, cfg.solver)
    except (ValidationError, NumericalError) as exc:
        evidence["solver_error"] = str(exc)
        return OptimalityVerdict(verdict="undecided", route=fallback_route,
                                 evidence=evidence)

    evidence["objective"] = sol.objective
    evidence["solver_status"] = sol.status
    evidence["solver_gap"] = sol.gap
    evidence["solver_form"] = sol.form
    if sol.dual is not None:
        evidence["margins"] = dict(sol.dual)

    if sol.objective < l1x - cfg.improvement_tol:
        direct = float(np.abs(X.values + sol.pert.delta_x).sum())
        res = tangent_residual(A, X, sol.pert)
        pert_scale = (np.linalg.norm(sol.pert.delta_a) * np.linalg.norm(X.values)
                      + A.op_norm * np.linalg.norm(sol.pert.delta_x))
        feasible = (res["bilinear_norm"] <= 1e-6 * max(1.0, pert_scale)
                    and res["diag_inf"] <= 1e-6)
        evidence["improvement"] = l1x - direct
        evidence["feasibility"] = res
        if direct < l1x - cfg.improvement_tol and feasible:
            return OptimalityVerdict(verdict="certified_no",
                                     route="direct_solve", evidence=evidence,
                                     improving=sol.pert)
        return OptimalityVerdict(verdict="undecided", route=fallback_route,
                                 evidence=evidence)

    if (sol.status == "optimal" and not degenerate and xi is not None
            and xi > 0.0 and sol.dual is not None):
        objective_close = abs(sol.objective - l1x) <= cfg.objective_rtol * max(1.0, l1x)
        strict_slack = sol.dual["offsup_inf"] <= 1.0 - cfg.offsup_margin
        interp_close = sol.dual["interp_dev"] <= cfg.interp_tol
        evidence["objective_close"] = bool(objective_close)
        evidence["strict_slack"] = bool(strict_slack)
        evidence["interp_close"] = bool(interp_close)
        if objective_close and strict_slack and interp_close:
            return OptimalityVerdict(verdict="certified_yes",
                                     route="direct_solve", evidence=evidence)
    return OptimalityVerdict(verdict="undecided", route=fallback_route,
                             evidence=evidence)
