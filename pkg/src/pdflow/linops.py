"""Finite-dimensional linear operators with explicit adjoints.

Everything downstream (prox subproblems, metric schedules, certificates)
manipulates operators only through `apply`/`adjoint_apply`, so maps can be
dense matrices, scaled identities, or lazy compositions/sums without the
callers caring.  Dense materialization is available for small dimensions
where an exact eigensolve is cheaper than iteration.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import CertificationError, PowerIterationWarning

__all__ = [
    "LinearMap",
    "SelfAdjointPSD",
    "block_diag",
    "operator_norm",
    "psd_floor",
    "load_dense",
    "save_dense",
]

# dense eigensolve below this size, shifted power iteration above
_DENSE_EIG_LIMIT = 64


def _as_vec(x, dim, name="x"):
    v = np.asarray(x, dtype=float)
    if v.shape != (dim,):
        raise ValueError(f"{name} must have shape ({dim},), got {v.shape}")
    return v


class LinearMap:
    """A linear operator R^in_dim -> R^out_dim with a known adjoint.

    Parameters
    ----------
    in_dim, out_dim : int
        Domain and codomain dimensions.
    apply, adjoint : callable
        Raw ndarray -> ndarray closures. `adjoint` must satisfy
        <A x, y> = <x, A* y> for all x, y; tests probe this on random pairs.
    representation : str
        One of "dense", "identity-scaled", "composition", "sum", "custom".
    """

    __slots__ = ("in_dim", "out_dim", "representation",
                 "_raw_apply", "_raw_adjoint", "mat", "scale")

    def __init__(self, in_dim, out_dim, apply, adjoint, representation="custom"):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.representation = representation
        self._raw_apply = apply
        self._raw_adjoint = adjoint
        self.mat = None
        self.scale = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_dense(cls, mat) -> "LinearMap":
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2:
            raise ValueError("dense map needs a 2-d array")
        matT = mat.T.copy()
        op = cls(mat.shape[1], mat.shape[0], mat.dot, matT.dot, "dense")
        op.mat = mat
        return op

    @classmethod
    def identity(cls, dim, scale=1.0) -> "LinearMap":
        s = float(scale)
        if s == 1.0:
            fwd = lambda x: x.copy()
        else:
            fwd = lambda x: s * x
        op = cls(dim, dim, fwd, fwd, "identity-scaled")
        op.scale = s
        return op

    @classmethod
    def zero(cls, in_dim, out_dim=None) -> "LinearMap":
        out_dim = in_dim if out_dim is None else out_dim
        op = cls(in_dim, out_dim,
                 lambda x: np.zeros(out_dim),
                 lambda y: np.zeros(in_dim),
                 "identity-scaled" if in_dim == out_dim else "custom")
        if in_dim == out_dim:
            op.scale = 0.0
        return op

    # -- evaluation --------------------------------------------------------

    def apply(self, x) -> np.ndarray:
        return self._raw_apply(_as_vec(x, self.in_dim))

    def adjoint_apply(self, y) -> np.ndarray:
        return self._raw_adjoint(_as_vec(y, self.out_dim, "y"))

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    # -- algebra -----------------------------------------------------------

    def __matmul__(self, other) -> "LinearMap":
        if not isinstance(other, LinearMap):
            return NotImplemented
        if other.out_dim != self.in_dim:
            raise ValueError(
                f"composition dimension mismatch: {self.in_dim} vs {other.out_dim}")
        f, g = self._raw_apply, other._raw_apply
        fa, ga = self._raw_adjoint, other._raw_adjoint
        return LinearMap(other.in_dim, self.out_dim,
                         lambda x: f(g(x)),
                         lambda y: ga(fa(y)),
                         "composition")

    def __add__(self, other) -> "LinearMap":
        if not isinstance(other, LinearMap):
            return NotImplemented
        if (other.in_dim, other.out_dim) != (self.in_dim, self.out_dim):
            raise ValueError("sum of maps with different shapes")
        f, g = self._raw_apply, other._raw_apply
        fa, ga = self._raw_adjoint, other._raw_adjoint
        return LinearMap(self.in_dim, self.out_dim,
                         lambda x: f(x) + g(x),
                         lambda y: fa(y) + ga(y),
                         "sum")

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, alpha) -> "LinearMap":
        a = float(alpha)
        f, fa = self._raw_apply, self._raw_adjoint
        return LinearMap(self.in_dim, self.out_dim,
                         lambda x: a * f(x),
                         lambda y: a * fa(y),
                         self.representation if self.representation == "identity-scaled" else "sum")

    __rmul__ = __mul__

    @property
    def T(self) -> "LinearMap":
        return LinearMap(self.out_dim, self.in_dim,
                         self._raw_adjoint, self._raw_apply,
                         self.representation)

    def gram(self) -> "LinearMap":
        """A* A as a lazy composition (always square, self-adjoint, PSD)."""
        return self.T @ self

    def to_dense(self) -> np.ndarray:
        if self.mat is not None:
            return self.mat.copy()
        cols = np.empty((self.out_dim, self.in_dim))
        e = np.zeros(self.in_dim)
        for j in range(self.in_dim):
            e[j] = 1.0
            cols[:, j] = self._raw_apply(e)
            e[j] = 0.0
        return cols


class SelfAdjointPSD:
    """A self-adjoint operator claimed positive semidefinite.

    `alpha_floor` is a certified lower bound on the spectrum (0 when only
    semidefiniteness is claimed).  The claim is checked by `psd_floor`, not
    at construction.
    """

    __slots__ = ("dim", "base", "alpha_floor", "_norm_hint")

    def __init__(self, base: LinearMap, alpha_floor=0.0, norm_hint=None):
        if base.in_dim != base.out_dim:
            raise ValueError("self-adjoint operator must be square")
        self.dim = base.in_dim
        self.base = base
        self.alpha_floor = float(alpha_floor)
        self._norm_hint = norm_hint

    @classmethod
    def identity(cls, dim, scale=1.0) -> "SelfAdjointPSD":
        s = float(scale)
        if s < 0:
            raise ValueError("identity scale must be nonnegative")
        return cls(LinearMap.identity(dim, s), alpha_floor=s, norm_hint=s)

    @classmethod
    def zero(cls, dim) -> "SelfAdjointPSD":
        return cls(LinearMap.zero(dim), alpha_floor=0.0, norm_hint=0.0)

    @classmethod
    def from_dense(cls, mat, alpha_floor=0.0) -> "SelfAdjointPSD":
        mat = np.asarray(mat, dtype=float)
        if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T, atol=1e-12):
            raise ValueError("expected a symmetric square matrix")
        return cls(LinearMap.from_dense(0.5 * (mat + mat.T)), alpha_floor)

    def apply(self, x) -> np.ndarray:
        return self.base.apply(x)

    def seminorm_sq(self, x) -> float:
        """<x, U x>; tiny negatives from roundoff are clamped to zero."""
        x = _as_vec(x, self.dim)
        v = float(x @ self.base._raw_apply(x))
        if v < 0.0 and v >= -1e-12 * float(x @ x):
            return 0.0
        return v

    def norm(self) -> float:
        if self._norm_hint is None:
            self._norm_hint = operator_norm(self.base)
        return self._norm_hint

    def __add__(self, other) -> "SelfAdjointPSD":
        if not isinstance(other, SelfAdjointPSD):
            return NotImplemented
        hint = None
        if self._norm_hint is not None and other._norm_hint is not None:
            hint = None  # sum norm is not additive; recompute lazily
        return SelfAdjointPSD(self.base + other.base,
                              self.alpha_floor + other.alpha_floor, hint)

    def __mul__(self, alpha) -> "SelfAdjointPSD":
        a = float(alpha)
        if a < 0:
            raise ValueError("scaling a PSD operator by a negative factor")
        hint = None if self._norm_hint is None else a * self._norm_hint
        return SelfAdjointPSD(a * self.base, a * self.alpha_floor, hint)

    __rmul__ = __mul__


def block_diag(blocks) -> SelfAdjointPSD:
    """Stack self-adjoint blocks along the diagonal of one operator."""
    blocks = list(blocks)
    dims = [b.dim for b in blocks]
    offsets = np.cumsum([0] + dims)
    total = int(offsets[-1])

    def apply(x):
        out = np.empty(total)
        for b, lo, hi in zip(blocks, offsets[:-1], offsets[1:]):
            out[lo:hi] = b.base._raw_apply(x[lo:hi])
        return out

    base = LinearMap(total, total, apply, apply, "sum")
    floor = min(b.alpha_floor for b in blocks)
    hints = [b._norm_hint for b in blocks]
    hint = max(hints) if all(h is not None for h in hints) else None
    return SelfAdjointPSD(base, floor, hint)


def operator_norm(op: LinearMap, tol=1e-10, max_iters=500, seed=0) -> float:
    """Largest singular value via power iteration on A* A.

    Deterministic for a fixed seed.  Warns (and returns the best estimate)
    if the Rayleigh quotient has not stabilized within the budget.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_dim)
    nv = np.linalg.norm(v)
    if nv == 0.0 or op.in_dim == 0:
        return 0.0
    v /= nv
    lam = 0.0
    for _ in range(max_iters):
        w = op._raw_adjoint(op._raw_apply(v))
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    warnings.warn(
        f"operator_norm: power iteration did not stabilize to {tol:g} "
        f"in {max_iters} iterations; returning last estimate",
        PowerIterationWarning,
    )
    return float(np.sqrt(max(lam, 0.0)))


def _smallest_eig(u: SelfAdjointPSD, tol=1e-10) -> float:
    """Raw smallest-eigenvalue estimate (may be negative)."""
    if u.dim <= _DENSE_EIG_LIMIT:
        h = u.base.to_dense()
        h = 0.5 * (h + h.T)
        return float(np.linalg.eigvalsh(h)[0])
    # spectrum of s I - U is s - eig(U), nonnegative for s >= lambda_max,
    # so the largest singular value of the shift recovers lambda_min
    s = operator_norm(u.base, tol=tol) * 1.01 + 1e-12
    shifted = LinearMap.identity(u.dim, s) - u.base
    return s - operator_norm(shifted, tol=tol)


def psd_floor(u: SelfAdjointPSD, tol=1e-8, strict=True) -> float:
    """Smallest eigenvalue of `u`; certifies the PSD claim.

    With `strict` (default), an estimate below -tol raises
    CertificationError.  Pass strict=False to obtain the raw value for
    operators whose definiteness is the question being decided.
    """
    lam = _smallest_eig(u, tol=min(tol, 1e-10))
    if strict and lam < -tol:
        raise CertificationError(
            f"operator is not positive semidefinite: smallest eigenvalue {lam:.3e}")
    return lam


def load_dense(path) -> LinearMap:
    """Read a dense map from text: first line "rows cols", then row-major rows."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed 'rows cols' header") from exc
    data = tokens[2:]
    if len(data) != rows * cols:
        raise ValueError(
            f"{path}: expected {rows * cols} entries for a {rows}x{cols} map, "
            f"got {len(data)}")
    mat = np.array([float(t) for t in data]).reshape(rows, cols)
    return LinearMap.from_dense(mat)


def save_dense(path, op: LinearMap) -> None:
    mat = op.to_dense()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
