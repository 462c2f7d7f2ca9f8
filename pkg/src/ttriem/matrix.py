"""Fixed-rank matrix manifold: tangent parametrization, projection, and the
AD-driven Riemannian gradient / approximate Hessian-by-vector product.

A point is stored in factored form X = U S V^T with orthonormal U, V.  A
tangent vector is parametrized by (dU, dV) under the gauge V^T dV = 0 and
materializes to dU V^T + U dV^T.  The differentiation routines never form
the m x n Euclidean gradient and never invert S, so they remain valid when
the rank is overestimated and S carries zero singular values.
"""

import numpy as np

from . import ad
from .dense import as_tensor, frozen, svd_thin
from .errors import DimensionError, InvalidPairError, InvalidTangentError

__all__ = [
    "FixedRankPoint",
    "MatrixTangent",
    "tangent_materialize",
    "project_matrix",
    "riemannian_grad_matrix",
    "hess_vec_matrix",
    "tangent_dot_matrix",
]

GAUGE_REJECT = 1e-8
GAUGE_REGAUGE = 1e-10


class FixedRankPoint:
    """Factored point X = U S V^T with orthonormal U and V columns."""

    def __init__(self, u, s, v):
        u = as_tensor(u)
        v = as_tensor(v)
        s = as_tensor(s)
        if s.ndim == 1:
            s = np.diag(s)
        if u.ndim != 2 or v.ndim != 2 or s.ndim != 2:
            raise DimensionError("U, S, V must be matrices")
        r = u.shape[1]
        if r < 1:
            raise DimensionError("rank must be at least 1")
        if s.shape != (r, r) or v.shape[1] != r:
            raise DimensionError(
                f"inconsistent factor shapes: U {u.shape}, S {s.shape}, V {v.shape}"
            )
        if u.shape[0] < r or v.shape[0] < r:
            raise DimensionError("rank exceeds matrix dimensions")
        for name, q in (("U", u), ("V", v)):
            res = np.abs(q.T @ q - np.eye(r)).max()
            if res > 1e-11:
                raise DimensionError(f"{name} columns are not orthonormal (residual {res:.2e})")
        self.u = frozen(u)
        self.s = frozen(s)
        self.v = frozen(v)

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self):
        return self.u.shape[1]

    @classmethod
    def from_dense(cls, m, r):
        """Best rank-r point from a dense matrix via thin SVD."""
        m = as_tensor(m)
        if m.ndim != 2:
            raise DimensionError("expected a matrix")
        u, s, v = svd_thin(m)
        return cls(u[:, :r], np.diag(s[:r]), v[:, :r])

    def to_dense(self):
        return self.u @ self.s @ self.v.T

    def matches(self, other):
        return self is other or (
            np.array_equal(self.u, other.u)
            and np.array_equal(self.s, other.s)
            and np.array_equal(self.v, other.v)
        )


def _gauge_residual(v, dv):
    return float(np.linalg.norm(v.T @ dv) / max(1.0, np.linalg.norm(dv)))


def _into_gauge(v, dv):
    # projected twice: one pass leaves an eps * ||input|| residue that can
    # dwarf a heavily cancelling tangential remainder
    dv = dv - v @ (v.T @ dv)
    return dv - v @ (v.T @ dv)


class MatrixTangent:
    """Tangent vector at a fixed-rank point, parametrized by (dU, dV).

    Inputs nearly in gauge (residual below 1e-8) are re-gauged on
    construction; anything worse is rejected.
    """

    def __init__(self, base, du, dv):
        du = as_tensor(du)
        dv = as_tensor(dv)
        m, n = base.shape
        r = base.rank
        if du.shape != (m, r) or dv.shape != (n, r):
            raise DimensionError(
                f"delta shapes {du.shape}, {dv.shape} do not match point ({m}x{n}, rank {r})"
            )
        res = _gauge_residual(base.v, dv)
        if res > GAUGE_REJECT:
            raise InvalidTangentError(f"gauge violation {res:.2e} exceeds {GAUGE_REJECT:.0e}")
        if res > GAUGE_REGAUGE:
            dv = dv - base.v @ (base.v.T @ dv)
        self.base = base
        self.du = frozen(du)
        self.dv = frozen(dv)

    @classmethod
    def _trusted(cls, base, du, dv):
        """Internal constructor for deltas already in gauge (skips the
        relative-residual check, which misfires on cancellation results)."""
        t = object.__new__(cls)
        t.base = base
        t.du = frozen(du)
        t.dv = frozen(dv)
        return t

    def gauge_residual(self):
        return _gauge_residual(self.base.v, self.dv)

    def norm(self):
        return float(np.sqrt(max(tangent_dot_matrix(self, self), 0.0)))


def tangent_materialize(t: MatrixTangent):
    """Low-rank factors (L, R) with L @ R.T = dU V^T + U dV^T."""
    L = np.concatenate([t.base.u, t.du], axis=1)
    R = np.concatenate([t.dv, t.base.v], axis=1)
    return L, R


def project_matrix(x: FixedRankPoint, z) -> MatrixTangent:
    """Orthogonal projection of a dense matrix onto the tangent space at x."""
    z = as_tensor(z)
    if z.shape != x.shape:
        raise DimensionError(f"shape {z.shape} does not match point shape {x.shape}")
    du = z @ x.v
    dv = _into_gauge(x.v, z.T @ x.u)
    return MatrixTangent._trusted(x, du, dv)


def riemannian_grad_matrix(p, x: FixedRankPoint) -> MatrixTangent:
    """Riemannian gradient of a program evaluating f at L @ R.T.

    The program is run on the width-2r factors L = [U A], R = [B V] and
    differentiated with respect to the injected blocks A = U S and B = 0;
    the gauge is then enforced on the dV block.
    """
    tape = ad.Tape()
    a = tape.input(x.u @ x.s)
    b = tape.input(np.zeros(x.v.shape))
    uc = tape.const(x.u)
    vc = tape.const(x.v)
    out = p(ad.concat([uc, a], 1), ad.concat([b, vc], 1))
    du, dv_raw = ad.grad(tape, out, [a, b])
    return MatrixTangent._trusted(x, du, _into_gauge(x.v, dv_raw))


def hess_vec_matrix(p, x: FixedRankPoint, z: MatrixTangent) -> MatrixTangent:
    """Approximate Riemannian Hessian applied to a tangent vector.

    Differentiates w(A, B) = <dU_Z, dU(A, B)> + <dV_Z, dV(A, B)>, where
    (dU, dV) is the gauged AD gradient of the factor program; the inner
    reverse sweep stays on the tape, so the outer sweep differentiates
    through it.  The curvature term of the exact Hessian is omitted.
    """
    if not z.base.matches(x):
        raise InvalidTangentError("tangent vector is anchored at a different point")
    res = z.gauge_residual()
    if res > GAUGE_REJECT:
        raise InvalidTangentError(f"gauge violation {res:.2e} exceeds {GAUGE_REJECT:.0e}")
    tape = ad.Tape()
    a = tape.input(x.u @ x.s)
    b = tape.input(np.zeros(x.v.shape))
    uc = tape.const(x.u)
    vc = tape.const(x.v)
    out = p(ad.concat([uc, a], 1), ad.concat([b, vc], 1))
    du, dv_raw = ad.grad(tape, out, [a, b], as_vars=True)
    dv = ad.sub(dv_raw, ad.contract(vc, ad.contract(vc, dv_raw, [(0, 0)]), [(1, 0)]))
    w = ad.add(
        ad.contract(tape.const(z.du), du, [(0, 0), (1, 1)]),
        ad.contract(tape.const(z.dv), dv, [(0, 0), (1, 1)]),
    )
    hu, hv_raw = ad.grad(tape, w, [a, b])
    return MatrixTangent._trusted(x, hu, _into_gauge(x.v, hv_raw))


def tangent_dot_matrix(a: MatrixTangent, b: MatrixTangent) -> float:
    """Euclidean inner product of two tangent vectors at the same point."""
    if not a.base.matches(b.base):
        raise InvalidPairError("tangent vectors live at different base points")
    return float(np.vdot(a.du, b.du) + np.vdot(a.dv, b.dv))
