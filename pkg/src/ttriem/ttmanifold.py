"""Fixed-TT-rank manifold: tangent vectors in delta parametrization, the
tangent-space projection, and AD-driven Riemannian gradients and approximate
Hessian-by-vector products.

A tangent vector at X (given through its shared mu-orthogonal core families
U, V, S) is a list of delta cores, one per mode, under the gauge condition
sum_i U_k[i]^T S^delta_k[i] = 0 for all modes but the last.  The block-core
construction turns deltas into an ordinary TT tensor of rank 2r.
"""

import numpy as np

from . import ad, coreops
from .dense import frozen
from .errors import DimensionError, InvalidPairError, InvalidTangentError
from .tt import MuOrthogonal, TtMatrix, TtTensor, orthogonalize, ttmat_apply

__all__ = [
    "TtTangent",
    "deltas_to_cores",
    "project_tt",
    "riemannian_grad_tt",
    "hess_vec_tt",
    "tangent_dot_tt",
    "tangent_axpy",
    "tangent_scale",
    "zero_tangent",
    "point_as_tangent",
    "preconditioned_residual",
]

GAUGE_REJECT = 1e-8
GAUGE_REGAUGE = 1e-10


def _as_ortho(x) -> MuOrthogonal:
    return x if isinstance(x, MuOrthogonal) else orthogonalize(x)


def _gauge_residuals(base, deltas):
    """Per-mode relative norms of sum_i U_k[i]^T S^delta_k[i]."""
    out = []
    for k in range(base.ndim - 1):
        g = np.einsum("aib,aic->bc", base.U[k], deltas[k])
        out.append(float(np.linalg.norm(g) / max(1.0, np.linalg.norm(deltas[k]))))
    return out


def _apply_gauge(base, deltas):
    """Project delta cores onto the gauge complement (all modes but last).

    The projection is applied twice: when a delta is dominated by its
    U-range component, one pass leaves a cancellation residue of order
    eps * ||input|| which can dwarf the tangential remainder.
    """
    out = list(deltas)
    for k in range(base.ndim - 1):
        u = base.U[k]
        rl, n, rr = u.shape
        ul = u.reshape(rl * n, rr)
        dk = out[k].reshape(rl * n, rr)
        dk = dk - ul @ (ul.T @ dk)
        dk = dk - ul @ (ul.T @ dk)
        out[k] = dk.reshape(rl, n, rr)
    return out


class TtTangent:
    """Tangent vector at a TT point, stored as per-mode delta cores.

    Construction validates the gauge: residuals up to 1e-8 are re-gauged
    (projection onto the gauge complement), anything larger is rejected.
    """

    def __init__(self, base: MuOrthogonal, deltas):
        deltas = [np.asarray(d, dtype=np.float64) for d in deltas]
        if len(deltas) != base.ndim:
            raise DimensionError(f"need {base.ndim} delta cores, got {len(deltas)}")
        for k, (d, s) in enumerate(zip(deltas, base.S)):
            if d.shape != s.shape:
                raise DimensionError(
                    f"delta core {k} has shape {d.shape}, expected {s.shape}"
                )
        res = _gauge_residuals(base, deltas)
        worst = max(res, default=0.0)
        if worst > GAUGE_REJECT:
            raise InvalidTangentError(
                f"gauge violation {worst:.2e} exceeds {GAUGE_REJECT:.0e}"
            )
        if worst > GAUGE_REGAUGE:
            deltas = _apply_gauge(base, deltas)
        self.base = base
        self.deltas = tuple(frozen(d) for d in deltas)

    @property
    def ndim(self):
        return len(self.deltas)

    @classmethod
    def _trusted(cls, base, deltas):
        """Internal constructor for deltas already projected onto the gauge.

        Skips the relative-residual check: for results of exact cancellation
        (e.g. the difference of two nearly equal tangents) that check would
        compare roundoff against a collapsed norm and misfire.
        """
        t = object.__new__(cls)
        t.base = base
        t.deltas = tuple(frozen(d) for d in deltas)
        return t

    def gauge_residuals(self):
        return _gauge_residuals(self.base, self.deltas)

    def materialize(self) -> TtTensor:
        return deltas_to_cores(self.base, self.deltas)

    def norm(self):
        return float(np.sqrt(max(tangent_dot_tt(self, self), 0.0)))


def _block_cores(base, deltas):
    """Block construction of tangent TT-cores; works on arrays and Vars."""
    d = base.ndim
    if d == 1:
        return [deltas[0]]
    cores = [ad.concat([deltas[0], base.U[0]], 2)]
    for k in range(1, d - 1):
        u, v = base.U[k], base.V[k]
        top = ad.concat([v, np.zeros(v.shape)], 2)
        bot = ad.concat([deltas[k], u], 2)
        cores.append(ad.concat([top, bot], 0))
    cores.append(ad.concat([base.V[d - 1], deltas[d - 1]], 0))
    return cores


def deltas_to_cores(base: MuOrthogonal, deltas) -> TtTensor:
    """Convert delta cores into a plain TT tensor of rank at most 2r."""
    deltas = [np.asarray(x, dtype=np.float64) for x in deltas]
    for k, (dc, sc) in enumerate(zip(deltas, base.S)):
        if dc.shape != sc.shape:
            raise DimensionError(f"delta core {k} has shape {dc.shape}, expected {sc.shape}")
    return TtTensor(_block_cores(base, deltas))


def project_tt(x, z: TtTensor) -> TtTangent:
    """Orthogonal projection of a TT tensor onto the tangent space at x.

    Works entirely through partial contractions of the cores of z against
    the left (U) and right (V) orthogonal chains of the base point; the
    dense tensor is never formed.
    """
    base = _as_ortho(x)
    if base.mode_sizes != z.mode_sizes:
        raise DimensionError(
            f"mode sizes differ: {base.mode_sizes} vs {z.mode_sizes}"
        )
    d = base.ndim
    if d == 1:
        return TtTangent(base, [z.cores[0].copy()])

    # Left chains: P[k] maps z-rank to tangent-rank after modes 0..k-1.
    p = [np.ones((1, 1))]
    for k in range(d - 1):
        p.append(np.einsum("ab,aic,bid->cd", p[k], z.cores[k], base.U[k]))
    # Right chains: Q[k] covers modes k..d-1.
    q = [None] * (d + 1)
    q[d] = np.ones((1, 1))
    for k in range(d - 1, 0, -1):
        q[k] = np.einsum("aic,bid,cd->ab", z.cores[k], base.V[k], q[k + 1])

    deltas = []
    for k in range(d - 1):
        dk = np.einsum("ab,aic,cd->bid", p[k], z.cores[k], q[k + 1])
        deltas.append(dk)
    deltas.append(np.einsum("ab,aic->bic", p[d - 1], z.cores[d - 1]))
    return TtTangent._trusted(base, _apply_gauge(base, deltas))


def _tape_gauge(base, dvars, tape):
    """Gauge enforcement as tape operations (used inside nested sweeps).

    Projects twice, mirroring :func:`_apply_gauge`.
    """
    out = list(dvars)
    for k in range(base.ndim - 1):
        u = base.U[k]
        rl, n, rr = u.shape
        ul = tape.const(u.reshape(rl * n, rr))
        dk = ad.reshape(out[k], (rl * n, rr))
        dk = ad.sub(dk, ad.contract(ul, ad.contract(ul, dk, [(0, 0)]), [(1, 0)]))
        dk = ad.sub(dk, ad.contract(ul, ad.contract(ul, dk, [(0, 0)]), [(1, 0)]))
        out[k] = ad.reshape(dk, (rl, n, rr))
    return out


def _delta_seed(base):
    """Delta values parametrizing the point itself: (S_1, 0, ..., 0)."""
    seed = [np.zeros(s.shape) for s in base.S]
    seed[0] = base.S[0].copy()
    return seed


def riemannian_grad_tt(p, x) -> TtTangent:
    """Riemannian gradient of a TT-core program via one reverse sweep.

    The program receives the block cores of a rank-2r tangent
    parametrization whose delta blocks are the differentiation variables,
    seeded at the values representing the point itself.
    """
    base = _as_ortho(x)
    tape = ad.Tape()
    rvars = [tape.input(v) for v in _delta_seed(base)]
    out = p(_block_cores(base, rvars))
    raw = ad.grad(tape, out, rvars)
    return TtTangent._trusted(base, _apply_gauge(base, raw))


def hess_vec_tt(p, x, z: TtTangent) -> TtTangent:
    """Approximate Riemannian Hessian of a TT-core program times a tangent.

    Records w = sum_k <S_k^delta(R), S_k^{Z,delta}> where the gauged deltas
    S_k^delta(R) come from an inner reverse sweep left on the tape, then
    differentiates w by a second sweep.  The base factors enter as
    constants, so the projection operator itself is frozen (the curvature
    term is dropped by construction).
    """
    base = _as_ortho(x)
    if not z.base.matches(base):
        raise InvalidTangentError("tangent vector is anchored at a different point")
    worst = max(z.gauge_residuals(), default=0.0)
    if worst > GAUGE_REJECT:
        raise InvalidTangentError(f"gauge violation {worst:.2e} exceeds {GAUGE_REJECT:.0e}")
    tape = ad.Tape()
    rvars = [tape.input(v) for v in _delta_seed(base)]
    out = p(_block_cores(base, rvars))
    inner = ad.grad(tape, out, rvars, as_vars=True)
    inner = _tape_gauge(base, inner, tape)
    terms = [
        ad.contract(g, tape.const(dz), [(0, 0), (1, 1), (2, 2)])
        for g, dz in zip(inner, z.deltas)
    ]
    w = terms[0]
    for t in terms[1:]:
        w = ad.add(w, t)
    raw = ad.grad(tape, w, rvars)
    return TtTangent._trusted(base, _apply_gauge(base, raw))


def tangent_dot_tt(a: TtTangent, b: TtTangent) -> float:
    """Inner product of two tangent vectors: sum of delta-core dots."""
    if not a.base.matches(b.base):
        raise InvalidPairError("tangent vectors live at different base points")
    return float(sum(np.vdot(da, db) for da, db in zip(a.deltas, b.deltas)))


def tangent_axpy(alpha: float, a: TtTangent, b: TtTangent) -> TtTangent:
    if not a.base.matches(b.base):
        raise InvalidPairError("tangent vectors live at different base points")
    combo = [float(alpha) * da + db for da, db in zip(a.deltas, b.deltas)]
    return TtTangent._trusted(a.base, _apply_gauge(a.base, combo))


def tangent_scale(alpha: float, a: TtTangent) -> TtTangent:
    return TtTangent._trusted(a.base, [float(alpha) * d for d in a.deltas])


def zero_tangent(base) -> TtTangent:
    base = _as_ortho(base)
    return TtTangent._trusted(base, [np.zeros(s.shape) for s in base.S])


def point_as_tangent(base) -> TtTangent:
    """The point X itself as an element of its own tangent space (P_X X = X)."""
    base = _as_ortho(base)
    deltas = [np.zeros(s.shape) for s in base.S]
    deltas[-1] = base.S[-1].copy()
    return TtTangent._trusted(base, deltas)


def preconditioned_residual(a: TtMatrix, b: TtMatrix, f: TtTensor, x) -> TtTangent:
    """Tangent-space projection of the preconditioned residual B (A X - F).

    Implemented as the Riemannian AD gradient of
    h(X) = <A c(X), B^T X> - <B F, X>, where c is the stop-gradient
    operator; the first term is evaluated in the rearranged form to avoid
    ever multiplying the operators B A together.
    """
    base = _as_ortho(x)
    modes = base.mode_sizes
    if a.col_sizes != modes or b.row_sizes != modes:
        raise DimensionError("operator mode sizes do not match the point")
    if f.mode_sizes != a.row_sizes or b.col_sizes != a.row_sizes:
        raise DimensionError("right-hand side mode sizes do not match the operators")
    bt_cores = [np.transpose(c, (0, 2, 1, 3)) for c in b.cores]
    bf = ttmat_apply(b, f)

    def program(cores):
        frozen = [ad.stop_gradient(c) for c in cores]
        acx = coreops.matvec_cores(list(a.cores), frozen)
        btx = coreops.matvec_cores(bt_cores, cores)
        lhs = coreops.dot_cores(acx, btx)
        rhs = coreops.dot_cores([c for c in bf.cores], cores)
        return ad.sub(lhs, rhs)

    return riemannian_grad_tt(program, base)
