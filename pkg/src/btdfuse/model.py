"""Block-term factor model: containers, reconstruction, and identifiability checks.

A rank-(L_r, L_r, 1) block-term model of an ``(I, J, K)`` tensor is

    X[i, j, k] = sum_r (A_r @ B_r.T)[i, j] * C[k, r]

with ``A = [A_1 ... A_R]`` (``I x sum(L)``), ``B`` alike, and ``C`` holding one
spectral column per block.  The special case of unit block widths is the
classic CP model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .tensor_ops import fold, pw_khatri_rao, unvec, vec

__all__ = [
    "RankSpec",
    "BtdFactors",
    "AbundanceSet",
    "CheckResult",
    "btd_reconstruct",
    "btd_unfold_direct",
    "spatial_map_matrix",
    "degrade_factors",
    "check_btd_identifiability",
    "check_coupled_identifiability",
    "abundances",
]


@dataclass(frozen=True)
class RankSpec:
    """Number of blocks ``R`` and per-block ranks ``L`` (length R).

    ``RankSpec(R, L=1)`` broadcasts a scalar L to all blocks; unit ranks give
    the CP model with R components.
    """

    R: int
    L: tuple[int, ...] = field(default=(1,))

    def __init__(self, R: int, L=1):
        object.__setattr__(self, "R", int(R))
        if np.isscalar(L):
            widths = (int(L),) * self.R
        else:
            widths = tuple(int(w) for w in L)
        object.__setattr__(self, "L", widths)
        if self.R < 1:
            raise UsageError(f"R must be >= 1, got {self.R}")
        if len(self.L) != self.R:
            raise UsageError(f"need {self.R} block ranks, got {len(self.L)}")
        if any(w < 1 for w in self.L):
            raise UsageError(f"all block ranks must be >= 1, got {self.L}")

    @property
    def total(self) -> int:
        """Total number of factor columns, sum of the block ranks."""
        return sum(self.L)

    @property
    def uniform_L(self) -> int | None:
        """The common block rank if all blocks share one, else None."""
        return self.L[0] if len(set(self.L)) == 1 else None

    def block_slice(self, r: int) -> slice:
        start = sum(self.L[:r])
        return slice(start, start + self.L[r])


@dataclass
class BtdFactors:
    """Factor container ``(A, B, C)`` for a block-term model.

    A : ndarray, (I, sum(L));  B : ndarray, (J, sum(L));  C : ndarray, (K, R).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    rank: RankSpec

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        for name, m in (("A", self.A), ("B", self.B), ("C", self.C)):
            if m.ndim != 2:
                raise UsageError(f"factor {name} must be 2-D, got ndim={m.ndim}")
        if self.A.shape[1] != self.rank.total or self.B.shape[1] != self.rank.total:
            raise UsageError(
                f"A and B need {self.rank.total} columns, got {self.A.shape[1]} and {self.B.shape[1]}"
            )
        if self.C.shape[1] != self.rank.R:
            raise UsageError(f"C needs {self.rank.R} columns, got {self.C.shape[1]}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    def block(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """The pair ``(A_r, B_r)`` for block r."""
        s = self.rank.block_slice(r)
        return self.A[:, s], self.B[:, s]

    def is_nonnegative(self) -> bool:
        return bool((self.A >= 0).all() and (self.B >= 0).all() and (self.C >= 0).all())

    def copy(self) -> "BtdFactors":
        return BtdFactors(self.A.copy(), self.B.copy(), self.C.copy(), self.rank)


@dataclass
class AbundanceSet:
    """Per-block spatial maps: column r of ``S`` is ``vec(A_r @ B_r.T)``."""

    S: np.ndarray
    spatial_dims: tuple[int, int]

    def map(self, r: int) -> np.ndarray:
        """Block r's spatial map as an (I, J) matrix."""
        i, j = self.spatial_dims
        return unvec(self.S[:, r], i, j)


class CheckResult:
    """Boolean-valued identifiability verdict with the clauses that failed."""

    def __init__(self, ok: bool, failed_clauses: list[str]):
        self.ok = ok
        self.failed_clauses = failed_clauses

    def __bool__(self) -> bool:
        return self.ok

    def __repr__(self) -> str:
        if self.ok:
            return "CheckResult(ok=True)"
        return f"CheckResult(ok=False, failed={self.failed_clauses!r})"


def btd_reconstruct(f: BtdFactors) -> np.ndarray:
    """Dense ``(I, J, K)`` tensor of the block-term model."""
    i, j, k = f.dims
    s = spatial_map_matrix(f)
    x3 = s @ f.C.T
    return fold(x3, 3, (i, j, k))


def spatial_map_matrix(f: BtdFactors) -> np.ndarray:
    """Matrix whose column r is ``vec(A_r @ B_r.T)``, shape (I*J, R)."""
    s = np.empty((f.A.shape[0] * f.B.shape[0], f.rank.R))
    for r in range(f.rank.R):
        a_r, b_r = f.block(r)
        s[:, r] = vec(a_r @ b_r.T)
    return s


def btd_unfold_direct(f: BtdFactors, mode: int) -> np.ndarray:
    """Mode-n unfolding computed directly from the factors.

    mode 1: ``pw_khatri_rao(C, B) @ A.T``; mode 2: ``pw_khatri_rao(C, A) @ B.T``;
    mode 3: ``[vec(A_r B_r^T)]_r @ C.T``.  Matches ``unfold(btd_reconstruct(f), mode)``.
    """
    if mode == 1:
        return pw_khatri_rao(f.C, f.B, f.rank.L) @ f.A.T
    if mode == 2:
        return pw_khatri_rao(f.C, f.A, f.rank.L) @ f.B.T
    if mode == 3:
        return spatial_map_matrix(f) @ f.C.T
    raise UsageError(f"mode must be 1, 2 or 3, got {mode!r}")


def degrade_factors(f: BtdFactors, ops) -> tuple[BtdFactors, BtdFactors]:
    """Factor forms of the degraded images.

    Returns ``(hsi_factors, msi_factors)`` where the HSI model is
    ``({P1 A_r}, {P2 B_r}, C)`` and the MSI model ``({A_r}, {B_r}, P3 C)``.
    Consistent with applying the degradation operators to the reconstruction.
    """
    p1, p2, p3 = ops.P1, ops.P2, ops.P3
    if p1.shape[1] != f.A.shape[0]:
        raise UsageError(f"P1 has {p1.shape[1]} columns, A has {f.A.shape[0]} rows")
    if p2.shape[1] != f.B.shape[0]:
        raise UsageError(f"P2 has {p2.shape[1]} columns, B has {f.B.shape[0]} rows")
    if p3.shape[1] != f.C.shape[0]:
        raise UsageError(f"P3 has {p3.shape[1]} columns, C has {f.C.shape[0]} rows")
    hsi_f = BtdFactors(p1 @ f.A, p2 @ f.B, f.C.copy(), f.rank)
    msi_f = BtdFactors(f.A.copy(), f.B.copy(), p3 @ f.C, f.rank)
    return hsi_f, msi_f


def _require_uniform(rank: RankSpec) -> int:
    l = rank.uniform_L
    if l is None:
        raise UsageError(
            f"identifiability conditions are stated for a uniform block rank, got L={rank.L}"
        )
    return l


def check_btd_identifiability(I: int, J: int, K: int, rank: RankSpec) -> CheckResult:
    """Sufficient condition for essential uniqueness of a single-tensor block-term model.

    Requires ``I*J >= L^2 R`` and
    ``min(floor(I/L), R) + min(floor(J/L), R) + min(K, R) >= 2R + 2``.
    The condition is sufficient, not necessary: a False verdict does not rule
    out recovery, so callers should treat it as advisory.
    """
    l = _require_uniform(rank)
    r = rank.R
    failed = []
    if I * J < l * l * r:
        failed.append(f"I*J = {I * J} < L^2*R = {l * l * r}")
    lhs = min(I // l, r) + min(J // l, r) + min(K, r)
    if lhs < 2 * r + 2:
        failed.append(f"min(I/L,R)+min(J/L,R)+min(K,R) = {lhs} < 2R+2 = {2 * r + 2}")
    return CheckResult(not failed, failed)


def check_coupled_identifiability(
    I_M: int, J_M: int, K_M: int, I_H: int, J_H: int, rank: RankSpec
) -> CheckResult:
    """Sufficient condition for recovering the fused image from an HSI/MSI pair.

    The MSI must satisfy the single-tensor condition (with its own dims and
    band count) and the HSI needs ``I_H*J_H >= R`` so the spectral factor is
    determined by least squares.  Advisory, as for
    :func:`check_btd_identifiability`.
    """
    l = _require_uniform(rank)
    r = rank.R
    failed = []
    if I_M * J_M < l * l * r:
        failed.append(f"I_M*J_M = {I_M * J_M} < L^2*R = {l * l * r}")
    if I_H * J_H < r:
        failed.append(f"I_H*J_H = {I_H * J_H} < R = {r}")
    lhs = min(I_M // l, r) + min(J_M // l, r) + min(K_M, r)
    if lhs < 2 * r + 2:
        failed.append(
            f"min(I_M/L,R)+min(J_M/L,R)+min(K_M,R) = {lhs} < 2R+2 = {2 * r + 2}"
        )
    return CheckResult(not failed, failed)


def abundances(f: BtdFactors) -> AbundanceSet:
    """Stack the per-block maps ``vec(A_r B_r^T)`` into an (I*J, R) matrix."""
    return AbundanceSet(spatial_map_matrix(f), (f.A.shape[0], f.B.shape[0]))
