"""Dense third-order tensor kernels: unfoldings, mode products, structured products.

Conventions used throughout the package (all arrays are float64 ndarrays):

* a third-order tensor is an ndarray of shape ``(I, J, K)``;
* ``vec`` of a matrix is column-major (first index fastest), i.e.
  ``M.ravel(order="F")``, so that ``vec(P @ M @ Q.T) == kron(Q, P) @ vec(M)``;
* the three unfoldings place the mode index along columns with a fixed row
  order (first remaining index fastest within the slower one):

    - mode 1: ``(K*J, I)`` with ``X1[k*J + j, i] = X[i, j, k]``
    - mode 2: ``(K*I, J)`` with ``X2[k*I + i, j] = X[i, j, k]``
    - mode 3: ``(I*J, K)`` with ``X3[j*I + i, k] = X[i, j, k]``

  (0-based indices).  These row orders are exactly the ones that make the
  factorized forms ``X1 = pw_khatri_rao(C, B) @ A.T`` etc. hold for the
  block-term model in :mod:`btdfuse.model`.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import UsageError

__all__ = [
    "unfold",
    "fold",
    "mode_product",
    "kronecker",
    "khatri_rao",
    "pw_khatri_rao",
    "frob_norm",
    "vec",
    "unvec",
]


def _check_tensor3(t: np.ndarray, name: str = "tensor") -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise UsageError(f"{name} must be a third-order tensor, got ndim={t.ndim}")
    if min(t.shape) < 1:
        raise UsageError(f"all {name} dimensions must be >= 1, got {t.shape}")
    return t


def _check_matrix(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise UsageError(f"{name} must be 2-D, got ndim={m.ndim}")
    return m


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Matricize ``t`` along ``mode`` (1, 2 or 3).

    Parameters
    ----------
    t : ndarray, shape (I, J, K)
    mode : int
        Which index becomes the column index of the result.

    Returns
    -------
    ndarray
        Shape ``(K*J, I)``, ``(K*I, J)`` or ``(I*J, K)`` for modes 1, 2, 3,
        with the row orders documented in the module docstring.
    """
    t = _check_tensor3(t)
    i, j, k = t.shape
    if mode == 1:
        return np.transpose(t, (2, 1, 0)).reshape(k * j, i)
    if mode == 2:
        return np.transpose(t, (2, 0, 1)).reshape(k * i, j)
    if mode == 3:
        return np.transpose(t, (1, 0, 2)).reshape(j * i, k)
    raise UsageError(f"mode must be 1, 2 or 3, got {mode!r}")


def fold(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the ``(I, J, K)`` tensor from a mode-n unfolding."""
    m = _check_matrix(m)
    try:
        i, j, k = (int(d) for d in dims)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"dims must be three integers, got {dims!r}") from exc
    if min(i, j, k) < 1:
        raise UsageError(f"all dims must be >= 1, got {dims}")
    expected = {1: (k * j, i), 2: (k * i, j), 3: (i * j, k)}.get(mode)
    if expected is None:
        raise UsageError(f"mode must be 1, 2 or 3, got {mode!r}")
    if m.shape != expected:
        raise UsageError(
            f"mode-{mode} unfolding of a {i}x{j}x{k} tensor has shape {expected}, got {m.shape}"
        )
    if mode == 1:
        return np.transpose(m.reshape(k, j, i), (2, 1, 0))
    if mode == 2:
        return np.transpose(m.reshape(k, i, j), (1, 2, 0))
    return np.transpose(m.reshape(j, i, k), (1, 0, 2))


def mode_product(t: np.ndarray, p: np.ndarray, mode: int) -> np.ndarray:
    """Multiply every mode-``mode`` fiber of ``t`` by the matrix ``p``.

    The mode-th dimension ``t.shape[mode-1]`` must equal ``p.shape[1]`` and is
    replaced by ``p.shape[0]`` in the result.
    """
    t = _check_tensor3(t)
    p = _check_matrix(p, "operator")
    if mode not in (1, 2, 3):
        raise UsageError(f"mode must be 1, 2 or 3, got {mode!r}")
    if p.shape[1] != t.shape[mode - 1]:
        raise UsageError(
            f"operator has {p.shape[1]} columns but tensor mode-{mode} has size {t.shape[mode - 1]}"
        )
    out = np.tensordot(p, t, axes=(1, mode - 1))
    # tensordot puts the new axis first; move it back to its mode position
    return np.moveaxis(out, 0, mode - 1)


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product: block (i, j) of the result is ``a[i, j] * b``."""
    a = _check_matrix(a, "a")
    b = _check_matrix(b, "b")
    return np.kron(a, b)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product: column f is ``kron(a[:, f], b[:, f])``.

    Both inputs must have the same number of columns; the result has
    ``a.shape[0] * b.shape[0]`` rows.
    """
    a = _check_matrix(a, "a")
    b = _check_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise UsageError(
            f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}"
        )
    # (a ⊗ b) per column: outer product along rows, b's row index fastest
    out = a[:, None, :] * b[None, :, :]
    return out.reshape(a.shape[0] * b.shape[0], a.shape[1])


def pw_khatri_rao(c: np.ndarray, a: np.ndarray, block_widths: Sequence[int]) -> np.ndarray:
    """Partition-wise Khatri-Rao product ``[c_1 ⊗ A_1, ..., c_R ⊗ A_R]``.

    ``c`` has one column per block; ``a`` is partitioned column-wise into
    blocks ``A_r`` of ``block_widths[r]`` columns.  Block r of the result is
    the Kronecker product of column ``c[:, r]`` with ``A_r``.  With all block
    widths equal to 1 this reduces to :func:`khatri_rao`.
    """
    c = _check_matrix(c, "c")
    a = _check_matrix(a, "a")
    widths = [int(w) for w in block_widths]
    if any(w < 1 for w in widths):
        raise UsageError(f"block widths must be positive, got {widths}")
    if c.shape[1] != len(widths):
        raise UsageError(
            f"c has {c.shape[1]} columns but the partition has {len(widths)} blocks"
        )
    if a.shape[1] != sum(widths):
        raise UsageError(
            f"a has {a.shape[1]} columns but the partition sums to {sum(widths)}"
        )
    out = np.empty((c.shape[0] * a.shape[0], a.shape[1]))
    col = 0
    for r, w in enumerate(widths):
        block = a[:, col : col + w]
        # kron(c_r, A_r): rows indexed (k, i) with i fastest
        out[:, col : col + w] = (c[:, r, None, None] * block[None, :, :]).reshape(
            -1, w
        )
        col += w
    return out


def frob_norm(t: np.ndarray) -> float:
    """Frobenius norm (square root of the sum of squared entries, any shape)."""
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorization (row index fastest)."""
    return np.asarray(m, dtype=np.float64).ravel(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=np.float64)
    if v.size != rows * cols:
        raise UsageError(f"cannot reshape {v.size} entries to {rows}x{cols}")
    return v.reshape(rows, cols, order="F")
