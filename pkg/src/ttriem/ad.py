"""Reverse-mode automatic differentiation over dense tensor operations.

Every operation in this module accepts either plain ``numpy`` arrays (and
then simply computes) or :class:`Var` handles (and then records a node on
the tape the variables live on).  Backward rules are themselves written in
terms of these operations, so a reverse sweep emits recordable nodes and
the result of ``grad`` can be differentiated again (nested AD).

Constants never receive derivative flow: a node whose ancestors contain no
tape input is marked non-differentiable and the sweep skips it.  The
``stop_gradient`` operation produces exactly such a node, which freezes its
argument at every nesting level.
"""

import numpy as np

from .errors import (
    DimensionError,
    InvalidVariableError,
    UnsupportedOperationError,
)

__all__ = [
    "Tape",
    "Var",
    "record",
    "grad",
    "stop_gradient",
    "contract",
    "reshape",
    "transpose",
    "concat",
    "slice_along",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sin",
    "cos",
    "sigmoid",
    "softplus",
    "reduce_sum",
    "gather_mode",
    "scatter_mode",
    "batch_matmul",
]


class Var:
    """Handle to a tape node: cached primal value plus backward rule."""

    __slots__ = ("tape", "value", "op", "parents", "vjp", "diff", "index")

    # Keep numpy from consuming Vars in its own ufunc dispatch.
    __array_ufunc__ = None

    def __init__(self, tape, value, op, parents, vjp, diff):
        self.tape = tape
        self.value = value
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.diff = diff
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape}, index={self.index})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 1:
            raise UnsupportedOperationError(
                "only positive integer powers are supported on tape"
            )
        out = self
        for _ in range(n - 1):
            out = mul(out, self)
        return out

    def __matmul__(self, other):
        return contract(self, other, [(self.value.ndim - 1, 0)])

    def __abs__(self):
        raise UnsupportedOperationError("abs is not a differentiable tape operation")

    def sum(self, axes=None):
        return reduce_sum(self, axes)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, perm):
        return transpose(self, perm)


class Tape:
    """Recorded computation graph; nodes are stored in creation order.

    Creation order is a topological order (a node's parents always precede
    it), and the reverse sweep appends its own nodes at the end, so a tape
    that has been swept once can be swept again to differentiate through
    the first sweep.
    """

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def input(self, value) -> Var:
        """Register a differentiable input (a leaf of the graph)."""
        arr = np.asarray(value, dtype=np.float64)
        return Var(self, arr, "input", (), None, True)

    def const(self, value) -> Var:
        """Register a constant: derivative flow stops here."""
        arr = np.asarray(value, dtype=np.float64)
        return Var(self, arr, "const", (), None, False)


def record(inputs, program):
    """Run ``program`` on a fresh tape and return ``(tape, output)``.

    ``program`` receives one :class:`Var` per entry of ``inputs`` and must
    return a scalar (a 0-d :class:`Var`, or a plain number for constant
    programs).
    """
    tape = Tape()
    arg_vars = [tape.input(v) for v in inputs]
    out = program(*arg_vars)
    if not isinstance(out, Var):
        out = tape.const(out)
    if out.value.shape != ():
        raise UnsupportedOperationError(
            f"recorded program must return a scalar, got shape {out.value.shape}"
        )
    return tape, out


def grad(tape, output, wrt, as_vars=False):
    """Derivatives of a scalar ``output`` with respect to tape inputs.

    The sweep walks nodes in decreasing creation index and emits its own
    adjoint computations as new nodes on the same tape, so the returned
    gradients (``as_vars=True``) can be differentiated again.  With the
    default ``as_vars=False`` the plain ndarray values are returned.
    """
    if not isinstance(output, Var) or output.tape is not tape:
        raise InvalidVariableError("output does not belong to the given tape")
    if output.value.shape != ():
        raise InvalidVariableError("grad requires a scalar output")
    for w in wrt:
        if not isinstance(w, Var) or w.tape is not tape or w.op != "input":
            raise InvalidVariableError("wrt variables must be inputs of the tape")

    wanted = {w.index for w in wrt}
    results = {}
    contribs = {output.index: [tape.const(np.ones(()))]}
    for i in range(output.index, -1, -1):
        lst = contribs.pop(i, None)
        if lst is None:
            continue
        node = tape.nodes[i]
        adj = lst[0] if len(lst) == 1 else add_n(lst)
        if i in wanted:
            results[i] = adj
        if node.vjp is None or not node.diff:
            continue
        for parent, g in node.vjp(adj):
            contribs.setdefault(parent.index, []).append(g)

    out = []
    for w in wrt:
        g = results.get(w.index)
        if g is None:
            g = tape.const(np.zeros(w.value.shape))
        out.append(g if as_vars else g.value)
    return out


# ---------------------------------------------------------------------------
# operation plumbing


def _find_tape(args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise InvalidVariableError("operands live on different tapes")
    return tape


def _lift(tape, x):
    if isinstance(x, Var):
        return x
    return tape.const(x)


def _elementwise_shapes(sa, sb):
    if sa != sb and sa != () and sb != ():
        raise DimensionError(f"elementwise shapes differ: {sa} vs {sb}")


def _unbroadcast(g, shape):
    # Elementwise ops allow mixing a scalar with a tensor; fold the gradient
    # of the scalar operand back down.
    if isinstance(g, Var):
        if g.value.shape != shape and shape == ():
            return reduce_sum(g)
        return g
    if np.shape(g) != shape and shape == ():
        return np.sum(g)
    return g


def add_n(parts):
    """Sum of same-shaped terms (used for adjoint accumulation)."""
    tape = _find_tape(parts)
    if tape is None:
        return sum(np.asarray(p, dtype=np.float64) for p in parts)
    parts = [_lift(tape, p) for p in parts]
    val = parts[0].value.copy()
    for p in parts[1:]:
        val += p.value
    diff = any(p.diff for p in parts)

    def vjp(u):
        return [(p, u) for p in parts if p.diff]

    return Var(tape, val, "add_n", tuple(parts), vjp, diff)


def _binary(name, fwd, make_vjp):
    def op(a, b):
        tape = _find_tape((a, b))
        if tape is None:
            return fwd(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
        a = _lift(tape, a)
        b = _lift(tape, b)
        _elementwise_shapes(a.value.shape, b.value.shape)
        val = fwd(a.value, b.value)
        node = Var(tape, val, name, (a, b), None, a.diff or b.diff)
        node.vjp = make_vjp(a, b, node)
        return node

    op.__name__ = name
    return op


def _add_vjp(a, b, out):
    def vjp(u):
        res = []
        if a.diff:
            res.append((a, _unbroadcast(u, a.value.shape)))
        if b.diff:
            res.append((b, _unbroadcast(u, b.value.shape)))
        return res

    return vjp


def _sub_vjp(a, b, out):
    def vjp(u):
        res = []
        if a.diff:
            res.append((a, _unbroadcast(u, a.value.shape)))
        if b.diff:
            res.append((b, _unbroadcast(neg(u), b.value.shape)))
        return res

    return vjp


def _mul_vjp(a, b, out):
    def vjp(u):
        res = []
        if a.diff:
            res.append((a, _unbroadcast(mul(u, b), a.value.shape)))
        if b.diff:
            res.append((b, _unbroadcast(mul(u, a), b.value.shape)))
        return res

    return vjp


def _div_vjp(a, b, out):
    def vjp(u):
        ga = div(u, b)
        res = []
        if a.diff:
            res.append((a, _unbroadcast(ga, a.value.shape)))
        if b.diff:
            res.append((b, _unbroadcast(neg(mul(ga, out)), b.value.shape)))
        return res

    return vjp


add = _binary("add", np.add, _add_vjp)
sub = _binary("sub", np.subtract, _sub_vjp)
mul = _binary("mul", np.multiply, _mul_vjp)
div = _binary("div", np.divide, _div_vjp)


def _unary(name, fwd, make_vjp):
    def op(a):
        if not isinstance(a, Var):
            return fwd(np.asarray(a, dtype=np.float64))
        node = Var(a.tape, fwd(a.value), name, (a,), None, a.diff)
        node.vjp = make_vjp(a, node)
        return node

    op.__name__ = name
    return op


def _sigmoid_np(t):
    e = np.exp(-np.abs(t))
    return np.where(t >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


neg = _unary("neg", np.negative, lambda a, out: lambda u: [(a, neg(u))])
exp = _unary("exp", np.exp, lambda a, out: lambda u: [(a, mul(u, out))])
log = _unary("log", np.log, lambda a, out: lambda u: [(a, div(u, a))])
sin = _unary("sin", np.sin, lambda a, out: lambda u: [(a, mul(u, cos(a)))])
cos = _unary("cos", np.cos, lambda a, out: lambda u: [(a, neg(mul(u, sin(a))))])
sigmoid = _unary(
    "sigmoid",
    _sigmoid_np,
    lambda a, out: lambda u: [(a, mul(u, mul(out, sub(1.0, out))))],
)
softplus = _unary(
    "softplus",
    lambda t: np.logaddexp(0.0, t),
    lambda a, out: lambda u: [(a, mul(u, sigmoid(a)))],
)


def stop_gradient(a):
    """Identity in value; blocks derivative flow at every nesting level."""
    if not isinstance(a, Var):
        return np.asarray(a, dtype=np.float64)
    return Var(a.tape, a.value, "stop_gradient", (a,), None, False)


def reshape(a, shape):
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    else:
        shape = tuple(int(s) for s in shape)
    if not isinstance(a, Var):
        return np.reshape(np.asarray(a, dtype=np.float64), shape)
    old = a.value.shape
    val = a.value.reshape(shape)

    def vjp(u):
        return [(a, reshape(u, old))] if a.diff else []

    return Var(a.tape, val, "reshape", (a,), vjp, a.diff)


def transpose(a, perm):
    perm = tuple(perm)
    if not isinstance(a, Var):
        return np.transpose(np.asarray(a, dtype=np.float64), perm)
    inv = tuple(np.argsort(perm))
    val = np.transpose(a.value, perm)

    def vjp(u):
        return [(a, transpose(u, inv))] if a.diff else []

    return Var(a.tape, val, "transpose", (a,), vjp, a.diff)


def concat(parts, axis):
    tape = _find_tape(parts)
    if tape is None:
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=axis)
    parts = [_lift(tape, p) for p in parts]
    val = np.concatenate([p.value for p in parts], axis=axis)
    offsets = np.cumsum([0] + [p.value.shape[axis] for p in parts])

    def vjp(u):
        res = []
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.diff:
                res.append((p, slice_along(u, axis, int(lo), int(hi))))
        return res

    return Var(tape, val, "concat", tuple(parts), vjp, any(p.diff for p in parts))


def slice_along(a, axis, start, stop):
    """Contiguous slice ``a[..., start:stop, ...]`` along one axis."""
    idx = (slice(None),) * axis + (slice(start, stop),)
    if not isinstance(a, Var):
        return np.asarray(a, dtype=np.float64)[idx]
    extent = a.value.shape[axis]
    if not (0 <= start <= stop <= extent):
        raise DimensionError(f"slice [{start}:{stop}] out of range for extent {extent}")
    val = a.value[idx]

    def vjp(u):
        if not a.diff:
            return []
        before = list(a.value.shape)
        before[axis] = start
        after = list(a.value.shape)
        after[axis] = extent - stop
        parts = []
        if start > 0:
            parts.append(a.tape.const(np.zeros(before)))
        parts.append(u)
        if extent - stop > 0:
            parts.append(a.tape.const(np.zeros(after)))
        return [(a, concat(parts, axis) if len(parts) > 1 else u)]

    return Var(a.tape, val, "slice", (a,), vjp, a.diff)


def reduce_sum(a, axes=None):
    if not isinstance(a, Var):
        return np.sum(np.asarray(a, dtype=np.float64), axis=axes)
    if axes is None:
        val = np.sum(a.value)

        def vjp(u):
            if not a.diff:
                return []
            ones = a.tape.const(np.ones(a.value.shape))
            return [(a, mul(u, ones))]

        return Var(a.tape, val, "sum", (a,), vjp, a.diff)

    axes = tuple(sorted(ax % a.value.ndim for ax in axes))
    kept = tuple(i for i in range(a.value.ndim) if i not in axes)
    val = np.sum(a.value, axis=axes)

    def vjp(u):
        if not a.diff:
            return []
        ones = a.tape.const(np.ones(tuple(a.value.shape[ax] for ax in axes)))
        outer = contract(u, ones, [])  # kept axes then summed axes
        perm = [0] * a.value.ndim
        for pos, ax in enumerate(kept):
            perm[ax] = pos
        for pos, ax in enumerate(axes):
            perm[ax] = len(kept) + pos
        return [(a, transpose(outer, perm))]

    return Var(a.tape, val, "sum", (a,), vjp, a.diff)


def _contract_grad_a(u, a, b, axes):
    ca = [p for p, _ in axes]
    cb = [q for _, q in axes]
    fa = [i for i in range(a.value.ndim) if i not in ca]
    fb = [i for i in range(b.value.ndim) if i not in cb]
    g = contract(u, b, [(len(fa) + j, fb[j]) for j in range(len(fb))])
    # g axes: free-of-a, then contracted axes of b in increasing order.
    cb_sorted = sorted(cb)
    targets = list(fa) + [ca[cb.index(q)] for q in cb_sorted]
    perm = [0] * len(targets)
    for j, t in enumerate(targets):
        perm[t] = j
    return transpose(g, perm) if perm != list(range(len(perm))) else g


def _contract_grad_b(u, a, b, axes):
    ca = [p for p, _ in axes]
    cb = [q for _, q in axes]
    fa = [i for i in range(a.value.ndim) if i not in ca]
    fb = [i for i in range(b.value.ndim) if i not in cb]
    g = contract(a, u, [(fa[i], i) for i in range(len(fa))])
    # g axes: contracted axes of a in increasing order, then free-of-b.
    ca_sorted = sorted(ca)
    targets = [cb[ca.index(p)] for p in ca_sorted] + list(fb)
    perm = [0] * len(targets)
    for j, t in enumerate(targets):
        perm[t] = j
    return transpose(g, perm) if perm != list(range(len(perm))) else g


def contract(a, b, axes):
    """Tensor contraction over ``(axis_of_a, axis_of_b)`` pairs.

    Result axes are the free axes of ``a`` followed by the free axes of
    ``b``.  An empty ``axes`` list is the outer product.
    """
    axes = [(int(p), int(q)) for p, q in axes]
    tape = _find_tape((a, b))
    if tape is None:
        from .dense import contract as dense_contract

        return dense_contract(a, b, axes)
    a = _lift(tape, a)
    b = _lift(tape, b)
    for ax_a, ax_b in axes:
        if a.value.shape[ax_a] != b.value.shape[ax_b]:
            raise DimensionError(
                f"contracted extents differ: {a.value.shape[ax_a]} vs {b.value.shape[ax_b]}"
            )
    if axes:
        la, lb = map(list, zip(*axes))
    else:
        la, lb = [], []
    val = np.tensordot(a.value, b.value, axes=(la, lb))

    def vjp(u):
        res = []
        if a.diff:
            res.append((a, _contract_grad_a(u, a, b, axes)))
        if b.diff:
            res.append((b, _contract_grad_b(u, a, b, axes)))
        return res

    return Var(tape, val, "contract", (a, b), vjp, a.diff or b.diff)


def gather_mode(core, idx):
    """Collect per-sample mode slices of a TT core.

    ``core`` has shape (r_left, n, r_right) and ``idx`` is an int vector of
    length N; the result has shape (N, r_left, r_right).
    """
    idx = np.asarray(idx, dtype=np.intp)
    if not isinstance(core, Var):
        return np.ascontiguousarray(
            np.transpose(np.asarray(core, dtype=np.float64)[:, idx, :], (1, 0, 2))
        )
    n = core.value.shape[1]
    val = np.ascontiguousarray(np.transpose(core.value[:, idx, :], (1, 0, 2)))

    def vjp(u):
        return [(core, scatter_mode(u, idx, n))] if core.diff else []

    return Var(core.tape, val, "gather_mode", (core,), vjp, core.diff)


def scatter_mode(mat, idx, n):
    """Adjoint of :func:`gather_mode`: scatter-add (N, r_l, r_r) slices."""
    idx = np.asarray(idx, dtype=np.intp)

    def fwd(m):
        buf = np.zeros((n, m.shape[1], m.shape[2]))
        np.add.at(buf, idx, m)
        return np.ascontiguousarray(np.transpose(buf, (1, 0, 2)))

    if not isinstance(mat, Var):
        return fwd(np.asarray(mat, dtype=np.float64))
    val = fwd(mat.value)

    def vjp(u):
        return [(mat, gather_mode(u, idx))] if mat.diff else []

    return Var(mat.tape, val, "scatter_mode", (mat,), vjp, mat.diff)


def batch_matmul(a, b):
    """Stacked matrix product: (N, p, q) x (N, q, s) -> (N, p, s)."""
    tape = _find_tape((a, b))
    if tape is None:
        return np.matmul(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    a = _lift(tape, a)
    b = _lift(tape, b)
    if a.value.shape[0] != b.value.shape[0] or a.value.shape[2] != b.value.shape[1]:
        raise DimensionError(
            f"batch_matmul shapes incompatible: {a.value.shape} x {b.value.shape}"
        )
    val = np.matmul(a.value, b.value)

    def vjp(u):
        res = []
        if a.diff:
            res.append((a, batch_matmul(u, transpose(b, (0, 2, 1)))))
        if b.diff:
            res.append((b, batch_matmul(transpose(a, (0, 2, 1)), u)))
        return res

    return Var(tape, val, "batch_matmul", (a, b), vjp, a.diff or b.diff)
