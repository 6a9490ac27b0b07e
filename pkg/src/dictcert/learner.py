"""Local solver for the constrained sparse factorization.

Given Y = A X with unit-column A and column-sparse X, the program

    minimize ||X||_1  subject to  Y = A X,  ||A_i||_2 = 1

is attacked through its reduced objective f(A) = min{||X||_1 : AX = Y},
evaluated by a batch minimum-l1 coding step with the dictionary frozen.
Each outer iteration proposes a new unit-column dictionary, re-codes,
and accepts only a strict decrease of f, so accepted iterations are
monotone.  Two proposal families are tried in order:

  * support refit: threshold the current codes at a few relative levels,
    least-squares refit the kept entries per column, then fit the
    dictionary to the supported codes and renormalize.  Near the true
    factorization this identifies the true supports and jumps (almost)
    straight to the minimizer, where f has a sharp kink that plain
    descent directions crawl into.
  * projected dual gradient: the coding duals N give
    d f / d A = -N X* wherever the coding is unique; walk the tangent
    projection of N X* with a persistent backtracking step.

The true factorization is a fixed point (no proposal can strictly
decrease f there), so runs initialized near it probe exactly the local
question the certificate machinery answers.  The scheme is a documented
substitute for a published solver we do not have; phase grids built on
it are read qualitatively (where the monotone transition sits), not as
pixel-level reproductions.
"""

import functools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.optimize
import scipy.sparse

from . import seeding
from .errors import InfeasibleError, NumericalError, ValidationError
from .linalg import Dictionary
from .model import draw_coefficients, draw_dictionary
from .parallel import map_trials, resolve_jobs

SUCCESS_THRESHOLD = 1e-5
_UNIT_COLUMN_TOL = 1e-10
_STALL_LIMIT = 10
_REFIT_RHOS = (0.5, 0.3, 0.2, 0.1, 0.05)
_REFIT_BLENDS = (1.0, 0.5, 0.25)


@dataclass(frozen=True)
class StepPolicy:
    """Backtracking schedule for the gradient fallback step.

    The working step persists across outer iterations: an accepted
    gradient step grows by ``grow`` (capped at ``step_init``), a
    rejected line search leaves it at the smallest value tried.  Once it
    falls below ``min_step`` the gradient direction cannot move the
    iterate and only refit proposals remain.
    """

    step_init: float = 0.1
    shrink: float = 0.5
    grow: float = 2.0
    max_backtracks: int = 12
    min_step: float = 1e-13

    def __post_init__(self):
        if not (self.step_init > 0.0):
            raise ValidationError("learner.StepPolicy: step_init must be "
                                  "positive, got %r" % (self.step_init,))
        if not (0.0 < self.shrink < 1.0):
            raise ValidationError("learner.StepPolicy: shrink must lie in "
                                  "(0, 1), got %r" % (self.shrink,))
        if not (self.grow >= 1.0):
            raise ValidationError("learner.StepPolicy: grow must be >= 1, "
                                  "got %r" % (self.grow,))
        if self.max_backtracks < 1:
            raise ValidationError("learner.StepPolicy: max_backtracks must be "
                                  ">= 1, got %r" % (self.max_backtracks,))
        if not (0.0 < self.min_step < self.step_init):
            raise ValidationError("learner.StepPolicy: min_step must lie in "
                                  "(0, step_init), got %r" % (self.min_step,))


@dataclass(frozen=True)
class SolveParams:
    """Knobs for local_solve and the phase experiments.

    init_radius is the relative size of the random perturbation applied
    to the true dictionary when the phase driver builds its starting
    point; local_solve itself starts wherever A0 says.
    """

    init_radius: float = 0.01
    max_outer: int = 150
    inner_tol: float = 1e-10
    step_policy: StepPolicy = field(default_factory=StepPolicy)

    def __post_init__(self):
        if not (self.init_radius >= 0.0):
            raise ValidationError("learner.SolveParams: init_radius must be "
                                  ">= 0, got %r" % (self.init_radius,))
        if self.max_outer < 1:
            raise ValidationError("learner.SolveParams: max_outer must be "
                                  ">= 1, got %r" % (self.max_outer,))
        if not (self.inner_tol > 0.0):
            raise ValidationError("learner.SolveParams: inner_tol must be "
                                  "positive, got %r" % (self.inner_tol,))


@dataclass(frozen=True)
class LearnResult:
    a_hat: Dictionary
    x_hat: np.ndarray
    trace: tuple
    status: str
    outer: int


def _batch_code_lp(entries, obs):
    """Minimum-l1 coding of every column plus the equality duals.

    One sparse LP over all columns (variables split into positive and
    negative parts, equality blocks kron(I_p, [A, -A])).  The duals come
    back as an m x p matrix N with sum_j <y_j, nu_j> equal to the
    objective; they drive the dictionary step.
    """
    m, n = entries.shape
    p = obs.shape[1]
    block = scipy.sparse.csc_matrix(np.hstack([entries, -entries]))
    a_eq = scipy.sparse.kron(scipy.sparse.identity(p, format="csc"), block,
                             format="csc")
    b_eq = obs.ravel(order="F")
    cost = np.ones(2 * n * p)
    res = scipy.optimize.linprog(
        cost, A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10,
                 "dual_feasibility_tolerance": 1e-9})
    if res.status == 2:
        raise InfeasibleError("learner.sparse_code: some column of Y is not "
                              "in the range of A")
    if not res.success:
        raise NumericalError("learner.sparse_code: LP solver failed with "
                             "status %d (%s)" % (res.status, res.message))
    halves = res.x.reshape((p, 2 * n)).T
    duals = np.asarray(res.eqlin.marginals).reshape((m, p), order="F")
    return halves[:n] - halves[n:], duals


def _code(entries, obs):
    """Dispatch coding: closed form for a square dictionary, LP otherwise.

    A square unit-column dictionary is generically a basis, so the
    constraint A x = y pins x down and the minimum-l1 problem is just a
    linear solve; the dual is then A^-T s for any subgradient s of the
    l1 norm at x (we take sign(x), the minimum-norm choice).  A singular
    square dictionary falls through to the LP, which either finds codes
    or proves a column infeasible.
    """
    m, n = entries.shape
    if m == n:
        try:
            codes = np.linalg.solve(entries, obs)
            duals = np.linalg.solve(entries.T, np.sign(codes))
            return codes, duals
        except np.linalg.LinAlgError:
            pass
    return _batch_code_lp(entries, obs)


def sparse_code(A, Y):
    """Batch minimum-l1 coding: argmin sum_j ||x_j||_1 s.t. A x_j = y_j.

    Raises InfeasibleError when some column lies outside range(A).
    """
    if not isinstance(A, Dictionary):
        raise ValidationError("learner.sparse_code: expected a Dictionary")
    obs = np.asarray(Y, dtype=float)
    if obs.ndim != 2 or obs.shape[0] != A.m:
        raise ValidationError("learner.sparse_code: Y must be m x p with "
                              "m=%d, got shape %r" % (A.m, obs.shape))
    if not np.all(np.isfinite(obs)):
        raise ValidationError("learner.sparse_code: Y must be finite")
    codes, _ = _code(A.entries, obs)
    return codes


def _unit_columns(mat):
    norms = np.linalg.norm(mat, axis=0)
    if np.any(norms == 0.0):
        raise NumericalError("learner: a dictionary column collapsed to zero "
                             "during the line search")
    return mat / norms


def _support_refit(entries, codes, obs, rho):
    """Dictionary proposal from a thresholded support estimate.

    Per column, keep the code entries within a factor rho of the
    column's largest magnitude and least-squares refit the kept entries.
    The dictionary is then least-squares fitted to the supported codes,
    using only the columns whose refit residual is small compared to the
    crowd (within 5x the median relative residual, capped at 0.25): a
    column whose support estimate is wrong has an outlying residual and
    would otherwise drag the atoms it was misassigned to, while a fit
    from correctly supported columns alone reproduces the exact
    factorization even when some columns stay ambiguous.  An atom that
    no clean column keeps has no say in the fit and stays as it is.
    Returns a unit-column proposal.
    """
    n, p = codes.shape
    mags = np.abs(codes)
    cuts = rho * mags.max(axis=0)
    supported = np.zeros_like(codes)
    resid = np.zeros(p)
    for j in range(p):
        keep = np.flatnonzero(mags[:, j] > cuts[j])
        if keep.size == 0:
            resid[j] = np.inf
            continue
        sol, *_ = np.linalg.lstsq(entries[:, keep], obs[:, j], rcond=None)
        supported[keep, j] = sol
        gap = obs[:, j] - entries[:, keep] @ sol
        scale = np.linalg.norm(obs[:, j])
        resid[j] = np.linalg.norm(gap) / scale if scale > 0.0 else 0.0
    finite = resid[np.isfinite(resid)]
    if finite.size == 0:
        return _unit_columns(entries.copy())
    cut = min(0.25, max(5.0 * float(np.median(finite)), 1e-12))
    ok = resid <= cut
    if not np.any(ok):
        return _unit_columns(entries.copy())
    fit_t, *_ = np.linalg.lstsq(supported[:, ok].T, obs[:, ok].T, rcond=None)
    proposal = fit_t.T
    dead = np.linalg.norm(proposal, axis=0) < 1e-12
    proposal[:, dead] = entries[:, dead]
    return _unit_columns(proposal)


def local_solve(Y, A0, params=None):
    """Monotone descent on the coded objective, started from A0.

    Each outer iteration re-codes and accepts the first proposal that
    strictly decreases ||X||_1: support refits at the thresholds in
    _REFIT_RHOS (full jump, then blends toward the current point), then
    a backtracked walk along the tangent projection of N X*, where the
    coding duals N give d/dA min{||X||_1 : AX = Y} = -N X* wherever the
    coding is unique.  The trace records the objective once per outer
    iteration and is nonincreasing.  A vanishing tangent gradient or a
    negligible accepted gain ends the run with status converged; ten
    consecutive rejected iterations end it with converged_to_stationary
    (the expected exit at a sharp local minimizer, where no proposal can
    improve); otherwise the cap gives status max_outer.
    """
    if params is None:
        params = SolveParams()
    if not isinstance(A0, Dictionary):
        raise ValidationError("learner.local_solve: A0 must be a Dictionary")
    if not isinstance(params, SolveParams):
        raise ValidationError("learner.local_solve: params must be SolveParams")
    obs = np.asarray(Y, dtype=float)
    if obs.ndim != 2 or obs.shape[0] != A0.m:
        raise ValidationError("learner.local_solve: Y must be m x p with "
                              "m=%d, got shape %r" % (A0.m, obs.shape))
    if not np.all(np.isfinite(obs)):
        raise ValidationError("learner.local_solve: Y must be finite")
    scale = np.abs(np.linalg.norm(A0.entries, axis=0) - 1.0).max()
    if scale > _UNIT_COLUMN_TOL:
        raise ValidationError("learner.local_solve: A0 must have unit "
                              "columns, worst deviation %.3e" % scale)

    if np.linalg.norm(obs) == 0.0:
        x_hat = np.zeros((A0.n, obs.shape[1]))
        return LearnResult(a_hat=A0, x_hat=x_hat, trace=(0.0,),
                           status="converged", outer=0)

    policy = params.step_policy
    a_cur = A0.entries.copy()
    x_cur, duals = _code(a_cur, obs)
    obj = float(np.abs(x_cur).sum())
    trace = [obj]
    status = "max_outer"
    stall = 0
    outer = 0
    step = policy.step_init

    def try_accept(cand):
        x_cand, duals_cand = _code(cand, obs)
        cand_obj = float(np.abs(x_cand).sum())
        if cand_obj < obj - 1e-12 * max(1.0, obj):
            return cand, x_cand, duals_cand, cand_obj
        return None

    for outer in range(1, params.max_outer + 1):
        grad = duals @ x_cur.T
        dots = np.einsum("ij,ij->j", a_cur, grad)
        tangent = grad - a_cur * dots[None, :]
        norm = float(np.linalg.norm(tangent))
        if norm <= params.inner_tol * max(1.0, obj):
            status = "converged"
            break
        tangent /= norm

        hit = None
        for rho in _REFIT_RHOS:
            proposal = _support_refit(a_cur, x_cur, obs, rho)
            jump = proposal - a_cur
            length = float(np.linalg.norm(jump))
            if length < 1e-15:
                continue
            # movement is capped by the working step so a sloppy refit
            # cannot fling the iterate out of the basin it started in
            t_cap = min(1.0, step / length)
            for t in _REFIT_BLENDS:
                cand = _unit_columns(a_cur + (t * t_cap) * jump)
                hit = try_accept(cand)
                if hit is not None:
                    break
            if hit is not None:
                break
        if hit is None:
            for _ in range(policy.max_backtracks):
                if step <= policy.min_step:
                    break
                try:
                    cand = _unit_columns(a_cur + step * tangent)
                    hit = try_accept(cand)
                except NumericalError:
                    hit = None
                if hit is not None:
                    break
                step *= policy.shrink
        if hit is not None:
            step = min(policy.step_init, step * policy.grow)

        if hit is not None:
            gain = obj - hit[3]
            a_cur, x_cur, duals, obj = hit
            trace.append(obj)
            stall = 0
            if gain <= params.inner_tol * max(1.0, trace[-2]):
                status = "converged"
                break
        else:
            trace.append(obj)
            stall += 1
            if stall >= _STALL_LIMIT:
                status = "converged_to_stationary"
                break
    return LearnResult(a_hat=Dictionary.from_array(a_cur), x_hat=x_cur,
                       trace=tuple(trace), status=status, outer=outer)


@dataclass(frozen=True)
class AlignmentReport:
    perm: np.ndarray
    signs: np.ndarray
    rel_error: float
    raw_error: float


def align_sign_permutation(A_hat, A_true):
    """Best signed permutation of A_hat's atoms onto A_true's.

    Assignment on the absolute Gram matrix maximizes the total matched
    inner product; rel_error is the relative Frobenius distance after
    applying that permutation and the matched signs, raw_error before.
    """
    if not isinstance(A_hat, Dictionary) or not isinstance(A_true, Dictionary):
        raise ValidationError("learner.align_sign_permutation: expected two "
                              "Dictionary arguments")
    if A_hat.entries.shape != A_true.entries.shape:
        raise ValidationError("learner.align_sign_permutation: shape mismatch "
                              "%r vs %r" % (A_hat.entries.shape,
                                            A_true.entries.shape))
    gram = A_hat.entries.T @ A_true.entries
    rows, cols = scipy.optimize.linear_sum_assignment(-np.abs(gram))
    perm = np.empty(A_true.n, dtype=int)
    perm[cols] = rows
    matched = gram[perm, np.arange(A_true.n)]
    signs = np.where(matched >= 0.0, 1.0, -1.0)
    aligned = A_hat.entries[:, perm] * signs[None, :]
    denom = np.linalg.norm(A_true.entries)
    rel = float(np.linalg.norm(aligned - A_true.entries) / denom)
    raw = float(np.linalg.norm(A_hat.entries - A_true.entries) / denom)
    return AlignmentReport(perm=perm, signs=signs, rel_error=rel,
                           raw_error=raw)


def default_sample_count(n):
    """Columns per instance when not overridden: round(5 n log n)."""
    return max(1, int(round(5.0 * n * math.log(n))) if n > 1 else 5)


@dataclass(frozen=True)
class PhaseConfig:
    """Grid description for the phase experiment.

    m = round(ratio * n) per cell; p = round(5 n log n) unless p_override
    is set.  init_radius and max_outer feed SolveParams.
    """

    n_list: tuple
    ratio_list: tuple
    k_list: tuple
    trials: int
    seed: int
    p_override: int = None
    init_radius: float = 0.01
    max_outer: int = 150

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValidationError("learner.PhaseConfig: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError("learner.PhaseConfig: unknown keys %s "
                                  "(allowed: %s)" % (", ".join(unknown),
                                                     ", ".join(sorted(known))))
        for key in ("n_list", "ratio_list", "k_list", "trials", "seed"):
            if key not in data:
                raise ValidationError("learner.PhaseConfig: missing required "
                                      "key %s" % key)
        data = dict(data)
        for key in ("n_list", "k_list"):
            data[key] = tuple(int(v) for v in data[key])
        data["ratio_list"] = tuple(float(v) for v in data["ratio_list"])
        return cls(**data)

    def __post_init__(self):
        for name in ("n_list", "ratio_list", "k_list"):
            seq = getattr(self, name)
            if not isinstance(seq, tuple) or len(seq) == 0:
                raise ValidationError("learner.PhaseConfig: %s must be a "
                                      "nonempty tuple" % name)
        if self.trials < 1:
            raise ValidationError("learner.PhaseConfig: trials must be >= 1")
        seeding.check_seed(self.seed)
        if self.p_override is not None and self.p_override < 1:
            raise ValidationError("learner.PhaseConfig: p_override must be "
                                  ">= 1 when given")


@dataclass(frozen=True)
class PhaseCell:
    n: int
    m: int
    k: int
    p: int
    trials: int
    success_frac: float
    mean_aligned_err: float
    mean_raw_err: float
    error_trials: int


def _phase_trial(n, m, k, p, init_radius, max_outer, seed, idx):
    rng = seeding.rng_from(seed, seeding.DOMAIN_LEARNER, n, m, k, idx)
    a_true = draw_dictionary(m, n, "gaussian_unit", rng)
    coeffs = draw_coefficients(n, p, k, rng)
    obs = a_true.entries @ coeffs.values
    bump = rng.standard_normal((m, n))
    bump = bump / np.linalg.norm(bump, axis=0)
    start = _unit_columns(a_true.entries + init_radius * bump)
    params = SolveParams(init_radius=init_radius, max_outer=max_outer)
    try:
        result = local_solve(obs, Dictionary.from_array(start), params)
        rep = align_sign_permutation(result.a_hat, a_true)
    except NumericalError:
        return (0.0, np.nan, np.nan, 1.0)
    success = 1.0 if rep.rel_error < SUCCESS_THRESHOLD else 0.0
    return (success, rep.rel_error, rep.raw_error, 0.0)


def phase_transition_grid(config, jobs=None):
    """Success fractions over the (n, ratio, k) grid; cells in list order.

    Parameter combinations that cannot be drawn (k > n, or m outside
    [1, n]) come back as fully flagged cells with nan statistics; trial
    errors inside a valid cell count as failures and are tallied in
    error_trials.
    """
    if not isinstance(config, PhaseConfig):
        raise ValidationError("learner.phase_transition_grid: expected a "
                              "PhaseConfig")
    jobs = resolve_jobs(jobs)
    cells = []
    for n in config.n_list:
        p = config.p_override if config.p_override is not None \
            else default_sample_count(n)
        for ratio in config.ratio_list:
            m = int(round(ratio * n))
            for k in config.k_list:
                if not (1 <= k <= n and 1 <= m <= n):
                    cells.append(PhaseCell(
                        n=n, m=m, k=k, p=p, trials=config.trials,
                        success_frac=float("nan"),
                        mean_aligned_err=float("nan"),
                        mean_raw_err=float("nan"),
                        error_trials=config.trials))
                    continue
                fn = functools.partial(_phase_trial, n, m, k, p,
                                       config.init_radius, config.max_outer,
                                       config.seed)
                rows = np.array(map_trials(fn, config.trials, jobs))
                errors = int(rows[:, 3].sum())
                good = rows[rows[:, 3] == 0.0]
                cells.append(PhaseCell(
                    n=n, m=m, k=k, p=p, trials=config.trials,
                    success_frac=float(rows[:, 0].sum() / config.trials),
                    mean_aligned_err=float(good[:, 1].mean())
                    if good.size else float("nan"),
                    mean_raw_err=float(good[:, 2].mean())
                    if good.size else float("nan"),
                    error_trials=errors))
    return cells


def pav_nonincreasing(values):
    """Pool-adjacent-violators fit under a nonincreasing constraint."""
    vals = [float(v) for v in values]
    if len(vals) == 0:
        raise ValidationError("learner.pav_nonincreasing: empty input")
    blocks = [[v, 1] for v in vals]
    merged = []
    for blk in blocks:
        merged.append(blk)
        while len(merged) > 1 and merged[-2][0] < merged[-1][0]:
            hi = merged.pop()
            lo = merged.pop()
            total = lo[1] + hi[1]
            merged.append([(lo[0] * lo[1] + hi[0] * hi[1]) / total, total])
    out = []
    for mean, count in merged:
        out.extend([mean] * count)
    return np.array(out)


PHASE_CSV_HEADER = ("n", "m", "k", "p", "trials", "success_frac",
                    "mean_aligned_err", "mean_raw_err")


def phase_csv_rows(cells):
    return [(c.n, c.m, c.k, c.p, c.trials, c.success_frac,
             c.mean_aligned_err, c.mean_raw_err) for c in cells]


def render_phase_svg(cells):
    """Grayscale success map: white = always recovered, black = never.

    Columns are the (n, m) pairs in grid order, rows the k values; cells
    whose parameters were invalid are hatched red.
    """
    pairs = []
    for cell in cells:
        if (cell.n, cell.m) not in pairs:
            pairs.append((cell.n, cell.m))
    ks = []
    for cell in cells:
        if cell.k not in ks:
            ks.append(cell.k)
    side = 26
    left = 46
    top = 30
    width = left + side * len(pairs) + 10
    height = top + side * len(ks) + 10
    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">'
             % (width, height)]
    parts.append('<rect width="%d" height="%d" fill="#ffffff"/>' % (width, height))
    for ci, (n, m) in enumerate(pairs):
        parts.append('<text x="%d" y="%d" font-size="9" text-anchor="middle">'
                     '%dx%d</text>' % (left + side * ci + side // 2, top - 8,
                                       m, n))
    for ri, k in enumerate(ks):
        parts.append('<text x="%d" y="%d" font-size="9" text-anchor="end">'
                     'k=%d</text>' % (left - 6, top + side * ri + side // 2 + 3,
                                      k))
    lookup = {(c.n, c.m, c.k): c for c in cells}
    for ci, (n, m) in enumerate(pairs):
        for ri, k in enumerate(ks):
            cell = lookup.get((n, m, k))
            if cell is None:
                continue
            x, y = left + side * ci, top + side * ri
            if math.isnan(cell.success_frac):
                fill = "#cc3333"
            else:
                level = int(round(255 * min(1.0, max(0.0, cell.success_frac))))
                fill = "#%02x%02x%02x" % (level, level, level)
            parts.append('<rect x="%d" y="%d" width="%d" height="%d" '
                         'fill="%s" stroke="#888888"/>' % (x, y, side, side,
                                                           fill))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
