"""The three comparison pipelines (naive / optimized / AD) plus a small
Riemannian gradient-descent demo.

naive: build the Euclidean derivative in TT form and project it.
optimized: fuse operator application or per-term projection with the
tangent projection, mode by mode, without forming intermediate high-rank
TT cores.
ad: differentiate the objective program directly (the library's own path).
"""

import warnings

import numpy as np

from . import ad, coreops
from .errors import UnavailableMethodError
from .objectives import Objective
from .tt import TtMatrix, TtTensor, orthogonalize, tt_axpy, tt_entries, tt_round
from .ttmanifold import (
    TtTangent,
    _apply_gauge,
    hess_vec_tt,
    point_as_tangent,
    project_tt,
    riemannian_grad_tt,
    tangent_axpy,
    tangent_dot_tt,
    tangent_scale,
)

__all__ = [
    "ad_grad",
    "ad_hvp",
    "naive_grad",
    "naive_hvp",
    "optimized_grad",
    "optimized_hvp",
    "compute_method",
    "project_matvec",
    "project_sparse",
    "project_rank1_sum",
    "riemannian_gd_demo",
    "demo_solve",
    "demo_eigen",
    "demo_complete",
]


def _as_base(x):
    from .tt import MuOrthogonal

    return x if isinstance(x, MuOrthogonal) else orthogonalize(x)


# ---------------------------------------------------------------------------
# AD method (thin wrappers over the manifold module)


def ad_grad(obj: Objective, x) -> TtTangent:
    return riemannian_grad_tt(obj.evaluate, _as_base(x))


def ad_hvp(obj: Objective, x, z: TtTangent) -> TtTangent:
    return hess_vec_tt(obj.evaluate, _as_base(x), z)


# ---------------------------------------------------------------------------
# naive method: TT Euclidean derivative, then projection


def naive_grad(obj: Objective, x) -> TtTangent:
    base = _as_base(x)
    if obj.euclid_grad_tt is None:
        raise UnavailableMethodError(f"{obj.name}: no analytic TT gradient available")
    return project_tt(base, obj.euclid_grad_tt(base.to_tt()))


def naive_hvp(obj: Objective, x, z: TtTangent) -> TtTangent:
    base = _as_base(x)
    if obj.euclid_hess_vec_tt is None:
        raise UnavailableMethodError(f"{obj.name}: no analytic TT Hessian map available")
    return project_tt(base, obj.euclid_hess_vec_tt(base.to_tt(), z.materialize()))


# ---------------------------------------------------------------------------
# optimized method: fused projections


def project_matvec(a: TtMatrix, y: TtTensor, base) -> TtTangent:
    """P_X (A Y) by per-mode partial contractions.

    The three-index chains carry (rank of Y, rank of A, rank of X) jointly,
    so the rank-R*r cores of A Y are never materialized.
    """
    base = _as_base(base)
    d = base.ndim
    left = [np.ones((1, 1, 1))]
    for k in range(d - 1):
        left.append(
            np.einsum(
                "abc,ajd,bije,cif->def",
                left[k], y.cores[k], a.cores[k], base.U[k],
                optimize=True,
            )
        )
    right = [None] * (d + 1)
    right[d] = np.ones((1, 1, 1))
    for k in range(d - 1, 0, -1):
        right[k] = np.einsum(
            "ajd,bije,cif,def->abc",
            y.cores[k], a.cores[k], base.V[k], right[k + 1],
            optimize=True,
        )
    deltas = []
    for k in range(d):
        deltas.append(
            np.einsum(
                "abc,ajd,bije,def->cif",
                left[k], y.cores[k], a.cores[k], right[k + 1],
                optimize=True,
            )
        )
    return TtTangent._trusted(base, _apply_gauge(base, deltas))


def project_sparse(base, indices, weights) -> TtTangent:
    """P_X of a sparse tensor given by entry positions and weights.

    Each observation is a rank-1 basis tensor; its projection factors into
    a left chain through the U cores, a right chain through the V cores and
    a unit mode vector, so the whole batch reduces to gathers, stacked
    small matrix products and one scatter per mode.
    """
    base = _as_base(base)
    d = base.ndim
    idx = np.asarray(indices, dtype=np.intp)
    w = np.asarray(weights, dtype=np.float64)
    n_obs = len(w)
    left = [np.ones((n_obs, 1))]
    for k in range(d - 1):
        ug = np.transpose(base.U[k][:, idx[:, k], :], (1, 0, 2))
        left.append(np.einsum("na,nab->nb", left[k], ug))
    right = [None] * (d + 1)
    right[d] = np.ones((n_obs, 1))
    for k in range(d - 1, 0, -1):
        vg = np.transpose(base.V[k][:, idx[:, k], :], (1, 0, 2))
        right[k] = np.einsum("nab,nb->na", vg, right[k + 1])

    deltas = []
    for k in range(d):
        contrib = w[:, None, None] * left[k][:, :, None] * right[k + 1][:, None, :]
        n_k = base.S[k].shape[1]
        buf = np.zeros((n_k, base.S[k].shape[0], base.S[k].shape[2]))
        np.add.at(buf, idx[:, k], contrib)
        deltas.append(np.ascontiguousarray(np.transpose(buf, (1, 0, 2))))
    return TtTangent._trusted(base, _apply_gauge(base, deltas))


def project_rank1_sum(base, mode_vectors, coeffs) -> TtTangent:
    """P_X of sum_i c_i W_i for rank-1 tensors given by per-mode vectors."""
    base = _as_base(base)
    d = base.ndim
    c = np.asarray(coeffs, dtype=np.float64)
    left = [np.ones((len(c), 1))]
    for k in range(d - 1):
        uw = np.einsum("aib,ni->nab", base.U[k], mode_vectors[k])
        left.append(np.einsum("na,nab->nb", left[k], uw))
    right = [None] * (d + 1)
    right[d] = np.ones((len(c), 1))
    for k in range(d - 1, 0, -1):
        vw = np.einsum("aib,ni->nab", base.V[k], mode_vectors[k])
        right[k] = np.einsum("nab,nb->na", vw, right[k + 1])
    deltas = []
    for k in range(d):
        deltas.append(
            np.einsum("n,ni,na,nb->aib", c, mode_vectors[k], left[k], right[k + 1])
        )
    return TtTangent._trusted(base, _apply_gauge(base, deltas))


_OPTIMIZED = {"quadratic_form", "rayleigh_quotient", "completion",
              "regularized_completion", "expmachines"}


def _require_optimized(obj):
    if obj.name not in _OPTIMIZED:
        raise UnavailableMethodError(f"{obj.name}: no optimized implementation")


def optimized_grad(obj: Objective, x) -> TtTangent:
    _require_optimized(obj)
    base = _as_base(x)
    xt = base.to_tt()
    if obj.name == "quadratic_form":
        return tangent_scale(2.0, project_matvec(obj.operator, xt, base))
    if obj.name == "rayleigh_quotient":
        x_tan = point_as_tangent(base)
        ax_tan = project_matvec(obj.operator, xt, base)
        s = float(np.vdot(base.S[-1], base.S[-1]))
        f = tangent_dot_tt(ax_tan, x_tan) / s
        return tangent_axpy(2.0 / s, ax_tan, tangent_scale(-2.0 * f / s, x_tan))
    if obj.name in ("completion", "regularized_completion"):
        w = 2.0 * (tt_entries(xt, obj.omega.indices) - obj.omega.values)
        tan = project_sparse(base, obj.omega.indices, w)
        if obj.name == "regularized_completion" and obj.lam:
            tan = tangent_axpy(2.0 * obj.lam, point_as_tangent(base), tan)
        return tan
    # expmachines
    from .objectives import _sigmoid, _weight_mode_matrices
    from .tt import tt_dot

    ys = np.asarray(obj.labels)
    t = np.array([tt_dot(xt, w) for w in obj.weight_tensors])
    coeffs = -ys * _sigmoid(-ys * t)
    return project_rank1_sum(base, _weight_mode_matrices(obj.weight_tensors), coeffs)


def optimized_hvp(obj: Objective, x, z: TtTangent) -> TtTangent:
    _require_optimized(obj)
    base = _as_base(x)
    xt = base.to_tt()
    zt = z.materialize()
    if obj.name == "quadratic_form":
        return tangent_scale(2.0, project_matvec(obj.operator, zt, base))
    if obj.name == "rayleigh_quotient":
        x_tan = point_as_tangent(base)
        ax_tan = project_matvec(obj.operator, xt, base)
        az_tan = project_matvec(obj.operator, zt, base)
        s = float(np.vdot(base.S[-1], base.S[-1]))
        f = tangent_dot_tt(ax_tan, x_tan) / s
        saz = tangent_dot_tt(ax_tan, z)
        sxz = tangent_dot_tt(x_tan, z)
        out = tangent_axpy(2.0 / s, az_tan, tangent_scale(-2.0 * f / s, z))
        out = tangent_axpy(-4.0 * saz / s**2 + 8.0 * f * sxz / s**2, x_tan, out)
        return tangent_axpy(-4.0 * sxz / s**2, ax_tan, out)
    if obj.name in ("completion", "regularized_completion"):
        w = 2.0 * tt_entries(zt, obj.omega.indices)
        tan = project_sparse(base, obj.omega.indices, w)
        if obj.name == "regularized_completion" and obj.lam:
            tan = tangent_axpy(2.0 * obj.lam, z, tan)
        return tan
    # expmachines
    from .objectives import _sigmoid, _weight_mode_matrices
    from .tt import tt_dot

    ys = np.asarray(obj.labels)
    t = np.array([tt_dot(xt, w) for w in obj.weight_tensors])
    zw = np.array([tt_dot(zt, w) for w in obj.weight_tensors])
    h = _sigmoid(-ys * t) * _sigmoid(ys * t)
    return project_rank1_sum(base, _weight_mode_matrices(obj.weight_tensors), h * zw)


def compute_method(obj: Objective, method: str, op: str, x, z=None) -> TtTangent:
    """Dispatch one of the three pipelines for a gradient or HVP."""
    table = {
        ("ad", "grad"): lambda: ad_grad(obj, x),
        ("ad", "hvp"): lambda: ad_hvp(obj, x, z),
        ("naive", "grad"): lambda: naive_grad(obj, x),
        ("naive", "hvp"): lambda: naive_hvp(obj, x, z),
        ("optimized", "grad"): lambda: optimized_grad(obj, x),
        ("optimized", "hvp"): lambda: optimized_hvp(obj, x, z),
    }
    key = (method, op)
    if key not in table:
        raise UnavailableMethodError(f"unknown method/op combination {key}")
    return table[key]()


# ---------------------------------------------------------------------------
# demo optimizer


def riemannian_gd_demo(obj: Objective, x0: TtTensor, steps: int, step_size: float,
                       max_rank):
    """Fixed-step Riemannian gradient descent with TT-rounding retraction.

    Returns the final iterate and the history of objective values
    (steps + 1 entries).  A tenfold increase over the starting value
    triggers a divergence warning, not an error.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    x = x0
    history = [float(obj.evaluate([np.asarray(c) for c in x.cores]))]
    warned = False
    for _ in range(steps):
        base = orthogonalize(x)
        g = riemannian_grad_tt(obj.evaluate, base)
        x = tt_round(tt_axpy(-step_size, g.materialize(), base.to_tt()), max_rank)
        history.append(float(obj.evaluate([np.asarray(c) for c in x.cores])))
        if not warned and history[-1] > 10.0 * abs(history[0]) + 1e-12:
            warnings.warn("gradient descent demo appears to diverge", RuntimeWarning)
            warned = True
    return x, history


def _linear_system_objective(a: TtMatrix, rhs: TtTensor) -> Objective:
    """f(X) = 0.5 <A X, X> - <F, X>, the energy functional of A X = F."""

    def evaluate(cores):
        ax = coreops.matvec_cores(list(a.cores), cores)
        quad = ad.mul(coreops.dot_cores(ax, cores), 0.5)
        lin = coreops.dot_cores([c for c in rhs.cores], cores)
        return ad.sub(quad, lin)

    return Objective(name="linear_system", evaluate=evaluate, operator=a)


def demo_solve(steps=30, step_size=0.1, x0=None, seed=0):
    """Energy descent for A X = F with A = I, F = 0 (norm shrinks to zero)."""
    from .tt import random_tt, ttmat_identity

    rng = np.random.default_rng(seed)
    modes = (3, 4, 3)
    if x0 is None:
        x0 = random_tt(rng, modes, 2)
    obj = _linear_system_objective(
        ttmat_identity(x0.mode_sizes),
        TtTensor([np.zeros((1, n, 1)) for n in x0.mode_sizes]),
    )
    x, history = riemannian_gd_demo(obj, x0, steps, step_size, 2)
    return x, history


def demo_eigen(steps=600, step_size=0.4, x0=None, seed=0):
    """Rayleigh-quotient descent toward the smallest eigenvalue of a
    diagonal operator on a d=3, n=2 instance."""
    from .objectives import rayleigh_quotient
    from .tt import random_tt

    rng = np.random.default_rng(seed)
    modes = (2, 2, 2)
    diag = np.linspace(1.0, 2.0, int(np.prod(modes))).reshape(modes)
    # diag(v) as a TT-matrix: decompose v exactly, then place each core
    # slice on the operator diagonal.
    cores = []
    for c in _tt_from_dense(diag).cores:
        rl, n, rr = c.shape
        core = np.zeros((rl, n, n, rr))
        for i in range(n):
            core[:, i, i, :] = c[:, i, :]
        cores.append(core)
    obj = rayleigh_quotient(TtMatrix(cores))
    if x0 is None:
        x0 = random_tt(rng, modes, 2)
    x, history = riemannian_gd_demo(obj, x0, steps, step_size, 2)
    return x, history, float(diag.min())


def demo_complete(steps=200, step_size=0.4, x0=None, seed=0):
    """Recover a true rank-2 tensor from fully observed entries."""
    from .objectives import IndexSet, completion_loss
    from .tt import random_tt

    rng = np.random.default_rng(seed)
    modes = (3, 4, 3)
    truth = random_tt(rng, modes, 2)
    idx = np.indices(modes).reshape(len(modes), -1).T
    values = tt_entries(truth, idx)
    obj = completion_loss(IndexSet(idx, values))
    if x0 is None:
        x0 = random_tt(rng, modes, 2)
    x, history = riemannian_gd_demo(obj, x0, steps, step_size, 2)
    return x, history


def _tt_from_dense(a: np.ndarray) -> TtTensor:
    """Exact TT decomposition of a small dense tensor (full-rank sweep)."""
    shape = a.shape
    d = len(shape)
    cores = []
    work = a.reshape(1, -1)
    rl = 1
    for k in range(d - 1):
        m = work.reshape(rl * shape[k], -1)
        q, r = np.linalg.qr(m, mode="reduced")
        rr = q.shape[1]
        cores.append(q.reshape(rl, shape[k], rr))
        work = r
        rl = rr
    cores.append(work.reshape(rl, shape[d - 1], 1))
    return TtTensor(cores)
