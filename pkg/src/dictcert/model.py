"""Random sparse coefficient model and instance generation.

Columns of the coefficient matrix X are k-sparse: column j picks a uniform
k-subset Omega_j of the n rows, and the nonzero values are iid Gaussian
with standard deviation sigma = sqrt(n / (k p)).  That normalization makes
E[X X*] the identity, so the row covariance of a healthy draw concentrates
around I at the rate sqrt(n/p).

Supports are drawn by partial Fisher-Yates over [n], vectorized across
columns, with all randomness taken from a single Philox substream per
(seed, purpose) pair in a fixed consumption order.  Instances are therefore
bit-reproducible from their integer seed.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import io, seeding
from .errors import ValidationError
from .linalg import Dictionary

DICTIONARY_KINDS = ("gaussian_unit", "orthonormal")


@dataclass(frozen=True)
class SupportPattern:
    """Column supports of an n x p matrix with exactly k entries per column.

    ``col_supports`` is a (p, k) int array, each row sorted ascending.
    ``row_supports`` is the transpose view: a tuple of p-index arrays, entry
    i listing the columns whose support contains row i.
    """

    n: int
    p: int
    k: int
    col_supports: np.ndarray
    row_supports: tuple

    @classmethod
    def from_columns(cls, n, col_supports):
        cols = np.asarray(col_supports, dtype=int)
        if cols.ndim != 2:
            raise ValidationError("model.SupportPattern: col_supports must be "
                                  "(p, k), got shape %r" % (cols.shape,))
        p, k = cols.shape
        if not (1 <= k <= n):
            raise ValidationError("model.SupportPattern: need 1 <= k <= n, got "
                                  "k=%d n=%d" % (k, n))
        if cols.min() < 0 or cols.max() >= n:
            raise ValidationError("model.SupportPattern: support indices out of "
                                  "range [0, %d)" % n)
        cols = np.sort(cols, axis=1)
        if np.any(cols[:, 1:] == cols[:, :-1]):
            j = int(np.nonzero(np.any(cols[:, 1:] == cols[:, :-1], axis=1))[0][0])
            raise ValidationError("model.SupportPattern: column %d has repeated "
                                  "indices" % j)
        cols.flags.writeable = False
        rows = []
        flat_rows = cols.ravel()
        flat_cols = np.repeat(np.arange(p), k)
        order = np.argsort(flat_rows, kind="stable")
        flat_rows = flat_rows[order]
        flat_cols = flat_cols[order]
        starts = np.searchsorted(flat_rows, np.arange(n + 1))
        for i in range(n):
            seg = flat_cols[starts[i]:starts[i + 1]]
            seg = np.sort(seg)
            seg.flags.writeable = False
            rows.append(seg)
        return cls(n=int(n), p=int(p), k=int(k), col_supports=cols,
                   row_supports=tuple(rows))

    def mask(self):
        """Boolean (n, p) mask of the support."""
        out = np.zeros((self.n, self.p), dtype=bool)
        out[self.col_supports.ravel(), np.repeat(np.arange(self.p), self.k)] = True
        return out


@dataclass(frozen=True)
class SparseCoeffs:
    """A realized coefficient matrix: support plus dense values.

    ``values`` is the dense n x p matrix with exact zeros off the support.
    ``sigma`` is the per-entry standard deviation sqrt(n/(k p)) and
    ``signs`` the dense sign matrix (0 off support).  On-support values are
    never exactly zero: the generator redraws until all are nonzero.
    """

    support: SupportPattern
    values: np.ndarray
    sigma: float
    signs: np.ndarray

    @property
    def n(self):
        return self.support.n

    @property
    def p(self):
        return self.support.p

    @property
    def k(self):
        return self.support.k

    def l1(self):
        return float(np.abs(self.values).sum())


@dataclass(frozen=True)
class Instance:
    """A dictionary, a coefficient draw, and the observations Y = A X."""

    dictionary: Dictionary
    coeffs: SparseCoeffs
    obs: np.ndarray
    meta: dict


def draw_dictionary(m, n, kind, rng):
    """Like gen_dictionary, but drawing from a caller-supplied Generator.

    Monte Carlo loops that hand each trial its own substream go through
    this entry point; gen_dictionary wraps it with the canonical stream
    derivation.
    """
    if kind not in DICTIONARY_KINDS:
        raise ValidationError("model.draw_dictionary: kind must be one of %s, got %r"
                              % (DICTIONARY_KINDS, kind))
    if kind == "gaussian_unit" and not (1 <= m <= n):
        raise ValidationError("model.draw_dictionary: gaussian_unit requires "
                              "1 <= m <= n, got m=%d n=%d" % (m, n))
    if kind == "orthonormal" and m != n:
        raise ValidationError("model.draw_dictionary: orthonormal requires m == n, "
                              "got m=%d n=%d" % (m, n))
    if kind == "gaussian_unit":
        mat = rng.standard_normal((m, n))
        norms = np.linalg.norm(mat, axis=0)
        while np.any(norms == 0.0):
            bad = np.nonzero(norms == 0.0)[0]
            mat[:, bad] = rng.standard_normal((m, bad.size))
            norms = np.linalg.norm(mat, axis=0)
        mat = mat / norms
    else:
        g = rng.standard_normal((n, n))
        q, r = np.linalg.qr(g)
        mat = q * np.sign(np.diag(r))[None, :]
    return Dictionary.from_array(mat)


def gen_dictionary(m, n, kind, seed):
    """Draw a random unit-column dictionary.

    gaussian_unit: iid Gaussian columns, normalized (requires 1 <= m <= n).
    orthonormal:   Q factor of a square Gaussian matrix (requires m == n);
                   the sign convention (positive R diagonal) is fixed so the
                   draw is deterministic in the seed.
    """
    if kind not in DICTIONARY_KINDS:
        raise ValidationError("model.gen_dictionary: kind must be one of %s, got %r"
                              % (DICTIONARY_KINDS, kind))
    rng = seeding.rng_from(seed, seeding.DOMAIN_DICTIONARY,
                           0 if kind == "gaussian_unit" else 1, m, n)
    return draw_dictionary(m, n, kind, rng)


def draw_coefficients(n, p, k, rng):
    """Like gen_coefficients, but drawing from a caller-supplied Generator."""
    if not (isinstance(n, (int, np.integer)) and isinstance(p, (int, np.integer))
            and isinstance(k, (int, np.integer))):
        raise ValidationError("model.draw_coefficients: n, p, k must be integers")
    if n < 1 or p < 1:
        raise ValidationError("model.draw_coefficients: need n >= 1 and p >= 1, "
                              "got n=%d p=%d" % (n, p))
    if not (1 <= k <= n):
        raise ValidationError("model.draw_coefficients: need 1 <= k <= n, got "
                              "k=%d n=%d" % (k, n))

    # Partial Fisher-Yates, vectorized over columns: after step t, slot t of
    # each column's permutation buffer holds a uniform draw without
    # replacement.  Uniforms are consumed in step-major order.
    perm = np.tile(np.arange(n), (p, 1))
    rows = np.arange(p)
    for t in range(k):
        u = rng.random(p)
        j = t + np.floor(u * (n - t)).astype(int)
        j = np.minimum(j, n - 1)  # guard u == 1.0 rounding
        at_t = perm[rows, t].copy()
        perm[rows, t] = perm[rows, j]
        perm[rows, j] = at_t
    supports = np.sort(perm[:, :k], axis=1)

    sigma = float(np.sqrt(n / (k * p)))
    vals = rng.normal(0.0, sigma, size=(p, k))
    while np.any(vals == 0.0):
        zero_at = np.nonzero(vals == 0.0)
        vals[zero_at] = rng.normal(0.0, sigma, size=zero_at[0].size)

    pattern = SupportPattern.from_columns(n, supports)
    dense = np.zeros((n, p))
    dense[pattern.col_supports.ravel(), np.repeat(np.arange(p), k)] = vals.ravel()
    dense.flags.writeable = False
    signs = np.sign(dense)
    signs.flags.writeable = False
    return SparseCoeffs(support=pattern, values=dense, sigma=sigma, signs=signs)


def gen_coefficients(n, p, k, seed):
    """Draw a SparseCoeffs instance of the k-sparse Gaussian model.

    Per column: a uniform k-subset by partial Fisher-Yates, then iid
    N(0, sigma^2) values with sigma = sqrt(n/(k p)).  Exact zeros (measure
    zero, but possible in floating point) are redrawn.
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(p, (int, np.integer))
            and isinstance(k, (int, np.integer))):
        raise ValidationError("model.gen_coefficients: n, p, k must be integers")
    rng = seeding.rng_from(seed, seeding.DOMAIN_COEFFS, n, p, k)
    return draw_coefficients(n, p, k, rng)


def observe(A, X, seed=None, meta=None):
    """Form the instance with observations Y = A X."""
    if not isinstance(A, Dictionary):
        raise ValidationError("model.observe: A must be a Dictionary")
    if not isinstance(X, SparseCoeffs):
        raise ValidationError("model.observe: X must be a SparseCoeffs")
    if A.n != X.n:
        raise ValidationError("model.observe: dictionary has n=%d atoms but "
                              "coefficients have n=%d rows" % (A.n, X.n))
    obs = A.entries @ X.values
    meta = dict(meta or {})
    if seed is not None:
        meta["seed"] = int(seed)
    return Instance(dictionary=A, coeffs=X, obs=obs, meta=meta)


def gen_instance(m, n, p, k, seed, kind="gaussian_unit"):
    A = gen_dictionary(m, n, kind, seed)
    X = gen_coefficients(n, p, k, seed)
    return observe(A, X, seed=seed, meta={"kind": kind})


@dataclass(frozen=True)
class RegularityReport:
    """Row-degree and pairwise-overlap summary of a support pattern.

    ``regular`` is True when every row appears in at most 3pk/(2n) columns
    and every pair of rows co-occurs in at most 3pk^2/(2n^2) columns; both
    comparisons are done in exact integer arithmetic.
    """

    max_row_size: int
    max_pair_overlap: int
    regular: bool


def support_regularity(pattern):
    if not isinstance(pattern, SupportPattern):
        raise ValidationError("model.support_regularity: expected a SupportPattern")
    n, p, k = pattern.n, pattern.p, pattern.k
    mask = pattern.mask()
    row_sizes = mask.sum(axis=1)
    max_row = int(row_sizes.max())
    if n == 1:
        max_pair = 0
    else:
        overlaps = mask.astype(np.int64) @ mask.T.astype(np.int64)
        np.fill_diagonal(overlaps, -1)
        max_pair = int(overlaps.max())
    row_ok = 2 * n * max_row <= 3 * p * k
    pair_ok = 2 * n * n * max_pair <= 3 * p * k * k
    return RegularityReport(max_row_size=max_row, max_pair_overlap=max_pair,
                            regular=bool(row_ok and pair_ok))


def save_instance(inst, dirpath):
    """Write A.mat / X.mat / Y.mat plus a JSON sidecar to a directory."""
    if not isinstance(inst, Instance):
        raise ValidationError("model.save_instance: expected an Instance")
    os.makedirs(dirpath, exist_ok=True)
    io.write_matrix(os.path.join(dirpath, "A.mat"), inst.dictionary.entries)
    io.write_matrix(os.path.join(dirpath, "X.mat"), inst.coeffs.values)
    io.write_matrix(os.path.join(dirpath, "Y.mat"), inst.obs)
    sidecar = {
        "n": inst.dictionary.n,
        "m": inst.dictionary.m,
        "p": inst.coeffs.p,
        "k": inst.coeffs.k,
        "seed": inst.meta.get("seed"),
        "sigma": inst.coeffs.sigma,
        "mu": inst.dictionary.mu,
    }
    io.dump_json(sidecar, os.path.join(dirpath, "instance.json"))


def load_instance(dirpath):
    """Read an instance directory written by save_instance."""
    side_path = os.path.join(dirpath, "instance.json")
    if not os.path.isfile(side_path):
        raise ValidationError("model.load_instance: %s has no instance.json" % dirpath)
    with open(side_path, "r", encoding="ascii") as fh:
        side = json.load(fh)
    for key in ("n", "m", "p", "k"):
        if key not in side:
            raise ValidationError("model.load_instance: sidecar missing %r" % key)
    a_mat = io.read_matrix(os.path.join(dirpath, "A.mat"))
    x_mat = io.read_matrix(os.path.join(dirpath, "X.mat"))
    y_mat = io.read_matrix(os.path.join(dirpath, "Y.mat"))
    n, m, p, k = side["n"], side["m"], side["p"], side["k"]
    if a_mat.shape != (m, n):
        raise ValidationError("model.load_instance: A.mat has shape %r, sidecar "
                              "promises %r" % (a_mat.shape, (m, n)))
    if x_mat.shape != (n, p):
        raise ValidationError("model.load_instance: X.mat has shape %r, sidecar "
                              "promises %r" % (x_mat.shape, (n, p)))
    if y_mat.shape != (m, p):
        raise ValidationError("model.load_instance: Y.mat has shape %r, sidecar "
                              "promises %r" % (y_mat.shape, (m, p)))
    A = Dictionary.from_array(a_mat)
    X = coeffs_from_dense(x_mat, k)
    rel = np.linalg.norm(A.entries @ X.values - y_mat) / max(np.linalg.norm(y_mat), 1e-300)
    if rel > 1e-9:
        raise ValidationError("model.load_instance: Y.mat deviates from A X by "
                              "relative %.3g" % rel)
    meta = {"kind": side.get("kind", "unknown")}
    seed = side.get("seed")
    return observe(A, X, seed=seed, meta=meta)


def coeffs_from_dense(dense, k):
    """Rebuild a SparseCoeffs from a dense matrix with exactly k nonzeros
    per column."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2:
        raise ValidationError("model.coeffs_from_dense: expected a 2-D array")
    n, p = dense.shape
    nnz = (dense != 0.0).sum(axis=0)
    if np.any(nnz != k):
        j = int(np.nonzero(nnz != k)[0][0])
        raise ValidationError("model.coeffs_from_dense: column %d has %d nonzeros, "
                              "expected k=%d" % (j, int(nnz[j]), k))
    supports = np.argsort(dense == 0.0, axis=0, kind="stable")[:k, :].T
    pattern = SupportPattern.from_columns(n, np.sort(supports, axis=1))
    sigma = float(np.sqrt(n / (k * p)))
    dense = dense.copy()
    dense.flags.writeable = False
    signs = np.sign(dense)
    signs.flags.writeable = False
    return SparseCoeffs(support=pattern, values=dense, sigma=sigma, signs=signs)
