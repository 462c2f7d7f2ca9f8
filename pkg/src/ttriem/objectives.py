"""Objective functions as recordable TT-core programs.

Each objective is a program over TT cores (usable on plain arrays and on
tape variables), optionally paired with analytic Euclidean gradient /
Hessian-by-vector constructions in TT form for the naive baseline.  The
factor-pair adapter reinterprets a 2-mode core program as a program over
low-rank matrix factors (L, R).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ad, coreops
from .errors import (
    DegeneratePointError,
    DimensionError,
    InvalidDataError,
    UnavailableMethodError,
)
from .tt import (
    TtMatrix,
    TtTensor,
    tt_axpy,
    tt_dot,
    tt_entries,
    tt_scale,
    tt_weighted_sum,
    ttmat_apply,
    ttmat_to_dense,
    ttmat_transpose,
)

__all__ = [
    "IndexSet",
    "Objective",
    "quadratic_form",
    "gram_quadratic_form",
    "rayleigh_quotient",
    "completion_loss",
    "expmachines_loss",
    "regularized_completion",
    "read_index_set",
    "write_index_set",
    "NAIVE_RANK_CAP",
]

# Largest TT rank the naive baseline may build for sparse/sum gradients;
# beyond it the method is reported unavailable (the out-of-memory analog).
NAIVE_RANK_CAP = 300

_SYM_CHECK_CAP = 4096


class IndexSet:
    """Observed entries for completion: (N, d) indices plus values."""

    def __init__(self, indices, values):
        indices = np.asarray(indices, dtype=np.intp)
        values = np.asarray(values, dtype=np.float64)
        if indices.ndim != 2:
            raise InvalidDataError("indices must form an (N, d) array")
        if values.shape != (indices.shape[0],):
            raise InvalidDataError("need exactly one value per index tuple")
        if indices.size and indices.min() < 0:
            raise IndexError("negative index in observation set")
        if len(np.unique(indices, axis=0)) != len(indices):
            raise InvalidDataError("duplicate index tuples in observation set")
        self.indices = indices
        self.values = values

    def __len__(self):
        return len(self.values)

    @property
    def ndim(self):
        return self.indices.shape[1]

    def check_modes(self, mode_sizes):
        if len(mode_sizes) != self.ndim:
            raise DimensionError(
                f"index tuples have {self.ndim} entries for a {len(mode_sizes)}-mode tensor"
            )
        for k, n in enumerate(mode_sizes):
            if len(self) and self.indices[:, k].max() >= n:
                raise IndexError(f"index out of range in mode {k}")


def read_index_set(path) -> IndexSet:
    """Parse the observation text format: d indices and a value per line."""
    rows = []
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) < 2:
                raise InvalidDataError(f"line {lineno}: need indices and a value")
            try:
                rows.append([int(p) for p in parts[:-1]])
                vals.append(float(parts[-1]))
            except ValueError as exc:
                raise InvalidDataError(f"line {lineno}: {exc}") from exc
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise InvalidDataError("observation lines disagree on dimensionality")
    return IndexSet(np.array(rows), np.array(vals))


def write_index_set(omega: IndexSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row, val in zip(omega.indices, omega.values):
            fh.write(" ".join(str(int(i)) for i in row) + f" {float(val)!r}\n")


@dataclass(frozen=True)
class Objective:
    """A differentiable objective plus optional analytic TT derivatives."""

    name: str
    evaluate: Callable
    euclid_grad_tt: Optional[Callable] = None
    euclid_hess_vec_tt: Optional[Callable] = None
    operator: Optional[TtMatrix] = None
    omega: Optional[IndexSet] = None
    weight_tensors: tuple = ()
    labels: tuple = ()
    lam: float = 0.0
    metadata: dict = field(default_factory=dict)

    def factor_program(self):
        """Adapter: evaluate the objective on matrix factors (L, R).

        Only meaningful for 2-mode data; the factors are reinterpreted as
        the two cores of a 2-mode TT chain.
        """

        def program(left, right):
            lshape = left.value.shape if isinstance(left, ad.Var) else left.shape
            rshape = right.value.shape if isinstance(right, ad.Var) else right.shape
            g1 = ad.reshape(left, (1, lshape[0], lshape[1]))
            g2 = ad.reshape(ad.transpose(right, (1, 0)), (rshape[1], rshape[0], 1))
            return self.evaluate([g1, g2])

        return program


def _core_shapes(cores):
    return [c.value.shape if isinstance(c, ad.Var) else np.shape(c) for c in cores]


def _maybe_check_symmetric(a: TtMatrix, name):
    if not __debug__:
        return
    size = float(np.prod(a.row_sizes)) * float(np.prod(a.col_sizes))
    if a.row_sizes != a.col_sizes or size > _SYM_CHECK_CAP:
        return
    dense = ttmat_to_dense(a)
    scale = max(np.abs(dense).max(), 1.0)
    if np.abs(dense - dense.T).max() > 1e-10 * scale:
        raise InvalidDataError(f"{name} requires a symmetric operator")


def quadratic_form(a: TtMatrix) -> Objective:
    """f(X) = <A X, X> for symmetric A; gradient 2 A X, Hessian map 2 A Z."""
    _maybe_check_symmetric(a, "quadratic_form")
    a_cores = list(a.cores)

    def evaluate(cores):
        return coreops.dot_cores(coreops.matvec_cores(a_cores, cores), cores)

    return Objective(
        name="quadratic_form",
        evaluate=evaluate,
        euclid_grad_tt=lambda x: tt_scale(2.0, ttmat_apply(a, x)),
        euclid_hess_vec_tt=lambda x, z: tt_scale(2.0, ttmat_apply(a, z)),
        operator=a,
    )


def gram_quadratic_form(a: TtMatrix) -> Objective:
    """f(X) = <A^T A X, X> = ||A X||^2 for arbitrary A."""
    a_cores = list(a.cores)
    at = ttmat_transpose(a)

    def evaluate(cores):
        ax = coreops.matvec_cores(a_cores, cores)
        return coreops.dot_cores(ax, ax)

    return Objective(
        name="gram_quadratic_form",
        evaluate=evaluate,
        euclid_grad_tt=lambda x: tt_scale(2.0, ttmat_apply(at, ttmat_apply(a, x))),
        euclid_hess_vec_tt=lambda x, z: tt_scale(2.0, ttmat_apply(at, ttmat_apply(a, z))),
        operator=a,
    )


def rayleigh_quotient(a: TtMatrix) -> Objective:
    """f(X) = <A X, X> / <X, X> for symmetric A."""
    _maybe_check_symmetric(a, "rayleigh_quotient")
    a_cores = list(a.cores)

    def evaluate(cores):
        sxx = coreops.dot_cores(cores, cores)
        norm_sq = float(sxx.value) if isinstance(sxx, ad.Var) else float(sxx)
        if norm_sq < 1e-28:
            raise DegeneratePointError("Rayleigh quotient evaluated too close to zero")
        sax = coreops.dot_cores(coreops.matvec_cores(a_cores, cores), cores)
        return ad.div(sax, sxx)

    def euclid_grad(x):
        s = tt_dot(x, x)
        if s < 1e-28:
            raise DegeneratePointError("Rayleigh quotient evaluated too close to zero")
        ax = ttmat_apply(a, x)
        f = tt_dot(ax, x) / s
        return tt_scale(2.0 / s, tt_axpy(-f, x, ax))

    def euclid_hess_vec(x, z):
        s = tt_dot(x, x)
        if s < 1e-28:
            raise DegeneratePointError("Rayleigh quotient evaluated too close to zero")
        ax = ttmat_apply(a, x)
        az = ttmat_apply(a, z)
        f = tt_dot(ax, x) / s
        saz = tt_dot(ax, z)
        sxz = tt_dot(x, z)
        return tt_weighted_sum(
            [2.0 / s, -2.0 * f / s, -4.0 * saz / s**2 + 8.0 * f * sxz / s**2, -4.0 * sxz / s**2],
            [az, z, x, ax],
        )

    return Objective(
        name="rayleigh_quotient",
        evaluate=evaluate,
        euclid_grad_tt=euclid_grad,
        euclid_hess_vec_tt=euclid_hess_vec,
        operator=a,
    )


def _sparse_tt(omega: IndexSet, weights, mode_sizes) -> TtTensor:
    """TT tensor carrying ``weights`` at the observed entries (rank = N)."""
    n_obs = len(omega)
    if n_obs > NAIVE_RANK_CAP:
        raise UnavailableMethodError(
            f"sparse TT rank {n_obs} exceeds the naive-method cap {NAIVE_RANK_CAP}"
        )
    if n_obs == 0:
        return TtTensor([np.zeros((1, n, 1)) for n in mode_sizes])
    d = len(mode_sizes)
    idx = omega.indices
    if d == 1:
        core = np.zeros((1, mode_sizes[0], 1))
        np.add.at(core[0, :, 0], idx[:, 0], weights)
        return TtTensor([core])
    cores = [np.zeros((1, mode_sizes[0], n_obs))]
    cores[0][0, idx[:, 0], np.arange(n_obs)] = weights
    for k in range(1, d - 1):
        core = np.zeros((n_obs, mode_sizes[k], n_obs))
        core[np.arange(n_obs), idx[:, k], np.arange(n_obs)] = 1.0
        cores.append(core)
    last = np.zeros((n_obs, mode_sizes[d - 1], 1))
    last[np.arange(n_obs), idx[:, d - 1], 0] = 1.0
    cores.append(last)
    return TtTensor(cores)


def _rank1_sum_tt(mode_vectors, coeffs) -> TtTensor:
    """Sum of N rank-1 tensors given as per-mode (N, n_k) vector stacks."""
    n_terms = len(coeffs)
    if n_terms > NAIVE_RANK_CAP:
        raise UnavailableMethodError(
            f"rank-1 sum rank {n_terms} exceeds the naive-method cap {NAIVE_RANK_CAP}"
        )
    d = len(mode_vectors)
    if d == 1:
        return TtTensor([(coeffs[:, None] * mode_vectors[0]).sum(axis=0)[None, :, None]])
    cores = [np.ascontiguousarray((coeffs[:, None] * mode_vectors[0]).T[None, :, :])]
    for k in range(1, d - 1):
        vk = mode_vectors[k]
        core = np.zeros((n_terms, vk.shape[1], n_terms))
        core[np.arange(n_terms), :, np.arange(n_terms)] = vk
        cores.append(core)
    cores.append(np.ascontiguousarray(mode_vectors[d - 1][:, :, None]))
    return TtTensor(cores)


def completion_loss(omega: IndexSet) -> Objective:
    """f(X) = sum over observed entries of (X_w - a_w)^2.

    Entries are evaluated by batched core-chain products, never building
    the masked tensor, so the program costs O(|Omega| d r^2).
    """

    def evaluate(cores):
        shapes = _core_shapes(cores)
        omega.check_modes(tuple(s[1] for s in shapes))
        vals = coreops.entries_cores(list(cores), omega.indices)
        diff = ad.sub(vals, omega.values)
        return ad.reduce_sum(ad.mul(diff, diff))

    def euclid_grad(x):
        omega.check_modes(x.mode_sizes)
        w = 2.0 * (tt_entries(x, omega.indices) - omega.values)
        return _sparse_tt(omega, w, x.mode_sizes)

    def euclid_hess_vec(x, z):
        omega.check_modes(x.mode_sizes)
        return _sparse_tt(omega, 2.0 * tt_entries(z, omega.indices), x.mode_sizes)

    return Objective(
        name="completion",
        evaluate=evaluate,
        euclid_grad_tt=euclid_grad,
        euclid_hess_vec_tt=euclid_hess_vec,
        omega=omega,
    )


def _weight_mode_matrices(ws):
    """Per-mode (N, n_k) stacks of the rank-1 weight tensors' core vectors."""
    d = ws[0].ndim
    return [np.stack([w.cores[k][0, :, 0] for w in ws]) for k in range(d)]


def expmachines_loss(ws, ys) -> Objective:
    """Logistic risk sum_i log(1 + exp(-y_i <X, W_i>)) with rank-1 W_i."""
    ws = list(ws)
    if not ws:
        raise InvalidDataError("need at least one weight tensor")
    for w in ws:
        if any(r != 1 for r in w.ranks):
            raise InvalidDataError("weight tensors must have TT-rank 1")
        if w.mode_sizes != ws[0].mode_sizes:
            raise DimensionError("weight tensors disagree on mode sizes")
    ys = np.asarray(ys, dtype=np.float64)
    if ys.shape != (len(ws),) or not np.all(np.isin(ys, (-1.0, 1.0))):
        raise InvalidDataError("labels must be +1/-1, one per weight tensor")
    wmats = _weight_mode_matrices(ws)

    def margins_program(cores):
        # <X, W_i> for all i at once: chain of per-sample rank transfers.
        e = None
        for core, wm in zip(cores, wmats):
            m = ad.transpose(ad.contract(core, wm, [(1, 1)]), (2, 0, 1))  # (N, rl, rr)
            e = m if e is None else ad.batch_matmul(e, m)
        return ad.reshape(e, (len(ws),))

    def evaluate(cores):
        shapes = _core_shapes(cores)
        if tuple(s[1] for s in shapes) != ws[0].mode_sizes:
            raise DimensionError("mode sizes do not match the weight tensors")
        t = margins_program(cores)
        return ad.reduce_sum(ad.softplus(ad.neg(ad.mul(t, ys))))

    def euclid_grad(x):
        t = np.array([tt_dot(x, w) for w in ws])
        coeffs = -ys * _sigmoid(-ys * t)
        return _rank1_sum_tt(wmats, coeffs)

    def euclid_hess_vec(x, z):
        t = np.array([tt_dot(x, w) for w in ws])
        h = _sigmoid(-ys * t) * _sigmoid(ys * t)
        zw = np.array([tt_dot(z, w) for w in ws])
        return _rank1_sum_tt(wmats, h * zw)

    return Objective(
        name="expmachines",
        evaluate=evaluate,
        euclid_grad_tt=euclid_grad,
        euclid_hess_vec_tt=euclid_hess_vec,
        weight_tensors=tuple(ws),
        labels=tuple(float(y) for y in ys),
    )


def _sigmoid(t):
    e = np.exp(-np.abs(t))
    return np.where(t >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def regularized_completion(omega: IndexSet, lam: float) -> Objective:
    """Completion loss plus Tikhonov term lam * <X, X>."""
    if lam < 0.0:
        raise InvalidDataError("lambda must be nonnegative")
    base = completion_loss(omega)

    def evaluate(cores):
        reg = ad.mul(coreops.dot_cores(list(cores), list(cores)), lam)
        return ad.add(base.evaluate(cores), reg)

    def euclid_grad(x):
        return tt_axpy(2.0 * lam, x, base.euclid_grad_tt(x))

    def euclid_hess_vec(x, z):
        return tt_axpy(2.0 * lam, z, base.euclid_hess_vec_tt(x, z))

    return Objective(
        name="regularized_completion",
        evaluate=evaluate,
        euclid_grad_tt=euclid_grad,
        euclid_hess_vec_tt=euclid_hess_vec,
        omega=omega,
        lam=float(lam),
    )
