"""Dense tensor values and the small linear-algebra kernel set.

Tensors are plain ``numpy.ndarray`` objects in C order (last index fastest)
with dtype float64.  ``as_tensor`` is the validating constructor used at
every external boundary; internal code passes arrays through unchecked.
"""

import numpy as np

from .errors import DimensionError

__all__ = ["as_tensor", "frozen", "contract", "qr_thin", "svd_thin"]


def as_tensor(data) -> np.ndarray:
    """Validate external input and return it as a C-ordered float64 array.

    Raises
    ------
    DimensionError
        If the input contains NaN or Inf entries.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DimensionError("tensor entries must be finite (no NaN/Inf)")
    return arr


def frozen(data) -> np.ndarray:
    """Validated, defensively copied, read-only array (container storage)."""
    arr = as_tensor(data).copy()
    arr.flags.writeable = False
    return arr


def contract(a: np.ndarray, b: np.ndarray, axes) -> np.ndarray:
    """Contract ``a`` and ``b`` over the given list of axis pairs.

    ``axes`` is a sequence of ``(axis_of_a, axis_of_b)`` pairs.  The result
    carries the free axes of ``a`` followed by the free axes of ``b``, in
    their original order.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    axes = list(axes)
    for ax_a, ax_b in axes:
        if a.shape[ax_a] != b.shape[ax_b]:
            raise DimensionError(
                f"contracted extents differ: a.shape[{ax_a}]={a.shape[ax_a]} "
                f"vs b.shape[{ax_b}]={b.shape[ax_b]}"
            )
    if axes:
        ax_a, ax_b = zip(*axes)
    else:
        ax_a, ax_b = (), ()
    return np.tensordot(a, b, axes=(list(ax_a), list(ax_b)))


def qr_thin(m: np.ndarray):
    """Thin QR of a p x q matrix with p >= q.

    The sign convention forces a nonnegative diagonal of R, which makes the
    factorization deterministic (bit-identical for identical inputs).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"qr_thin expects a matrix, got shape {m.shape}")
    p, q = m.shape
    if p < q:
        raise DimensionError(f"qr_thin requires p >= q, got {p} x {q}")
    qmat, rmat = np.linalg.qr(m, mode="reduced")
    # Flip rows of R / columns of Q where the diagonal went negative.
    signs = np.where(np.diagonal(rmat) < 0.0, -1.0, 1.0)
    return qmat * signs, rmat * signs[:, None]


def svd_thin(m: np.ndarray):
    """Thin SVD ``m = U @ diag(s) @ V.T`` with nonincreasing singular values."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"svd_thin expects a matrix, got shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt.T
