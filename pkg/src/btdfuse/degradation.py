"""Construct the spatial/spectral degradation operators and simulate an HSI/MSI pair.

The observation model is

    hsi = sri ×_1 P1 ×_2 P2        (separable blur + downsampling per axis)
    msi = sri ×_3 P3               (band selection/averaging)

with known operators.  ``P1``/``P2`` are products of a row-stochastic
truncated Gaussian blur and a pixel-selection matrix; ``P3`` defaults to
uniform averaging over contiguous band groups but can be loaded from CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, UsageError
from .tensor_ops import frob_norm, mode_product

__all__ = [
    "DegradationOps",
    "NoiseSpec",
    "gaussian_blur_matrix",
    "downsample_matrix",
    "build_spatial_ops",
    "uniform_srf",
    "load_srf_csv",
    "make_degradation_ops",
    "apply_degradation",
    "add_noise",
]


@dataclass
class DegradationOps:
    """The three degradation operators plus the parameters they were built from.

    P1 : (I_H, I_M) operator for the first spatial axis.
    P2 : (J_H, J_M) operator for the second spatial axis.
    P3 : (K_M, K_H) spectral response.
    params : provenance (kernel_size, sigma, ratio, offset, srf_source).
    """

    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NoiseSpec:
    """Target SNR in dB (``math.inf`` disables noise) and the generator seed."""

    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise UsageError(f"snr_db must be finite or +inf, got {self.snr_db}")


def gaussian_blur_matrix(n: int, kernel_size: int, sigma: float) -> np.ndarray:
    """1-D truncated Gaussian blur as an ``n x n`` row-stochastic matrix.

    Row i carries weights ``exp(-d^2 / (2 sigma^2))`` for ``|d| <= (kernel_size-1)/2``
    centered at i; weights falling outside the domain are dropped and each row
    is renormalized to sum to 1.
    """
    n = int(n)
    kernel_size = int(kernel_size)
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise UsageError(f"kernel_size must be odd and positive, got {kernel_size}")
    if kernel_size > 2 * n - 1:
        raise UsageError(f"kernel_size {kernel_size} exceeds 2n-1 = {2 * n - 1}")
    if not sigma > 0:
        raise UsageError(f"sigma must be > 0, got {sigma}")
    half = (kernel_size - 1) // 2
    offsets = np.arange(-half, half + 1)
    weights = np.exp(-(offsets.astype(np.float64) ** 2) / (2.0 * sigma * sigma))
    out = np.zeros((n, n))
    for i in range(n):
        cols = i + offsets
        keep = (cols >= 0) & (cols < n)
        w = weights[keep]
        out[i, cols[keep]] = w / w.sum()
    return out


def downsample_matrix(n: int, d: int, offset: int = 0) -> np.ndarray:
    """Selection matrix keeping every d-th index starting at ``offset`` (0-based).

    Shape is ``(ceil((n - offset) / d), n)``.
    """
    n, d, offset = int(n), int(d), int(offset)
    if not 1 <= d <= n:
        raise UsageError(f"need 1 <= d <= n, got d={d}, n={n}")
    if not 0 <= offset < d:
        raise UsageError(f"need 0 <= offset < d, got offset={offset}, d={d}")
    picks = np.arange(offset, n, d)
    out = np.zeros((picks.size, n))
    out[np.arange(picks.size), picks] = 1.0
    return out


def build_spatial_ops(
    I_M: int,
    J_M: int,
    kernel_size: int = 9,
    sigma: float | None = None,
    d: int = 5,
    offset: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Blur-then-downsample operators for both spatial axes.

    ``sigma`` defaults to ``d / 2``, tying the blur extent to the
    downsampling ratio as in standard reference-image protocols.
    """
    if sigma is None:
        sigma = d / 2.0
    p1 = downsample_matrix(I_M, d, offset) @ gaussian_blur_matrix(I_M, kernel_size, sigma)
    p2 = downsample_matrix(J_M, d, offset) @ gaussian_blur_matrix(J_M, kernel_size, sigma)
    return p1, p2


def uniform_srf(K_H: int, K_M: int) -> np.ndarray:
    """Spectral response averaging contiguous band groups as equal as possible.

    The first ``K_H mod K_M`` groups get one extra band; each row averages its
    group uniformly, so rows sum to 1.
    """
    K_H, K_M = int(K_H), int(K_M)
    if K_M < 1 or K_H < 1:
        raise UsageError(f"band counts must be >= 1, got K_H={K_H}, K_M={K_M}")
    if K_M > K_H:
        raise UsageError(f"need K_M <= K_H, got K_M={K_M} > K_H={K_H}")
    base, extra = divmod(K_H, K_M)
    out = np.zeros((K_M, K_H))
    start = 0
    for m in range(K_M):
        size = base + (1 if m < extra else 0)
        out[m, start : start + size] = 1.0 / size
        start += size
    return out


def load_srf_csv(path, K_H: int | None = None, K_M: int | None = None) -> np.ndarray:
    """Read a spectral response matrix from CSV: K_M rows of K_H values, no header."""
    try:
        srf = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"malformed SRF CSV {path}: {exc}") from exc
    if K_M is not None and srf.shape[0] != K_M:
        raise FormatError(f"SRF CSV {path} has {srf.shape[0]} rows, expected {K_M}")
    if K_H is not None and srf.shape[1] != K_H:
        raise FormatError(f"SRF CSV {path} has {srf.shape[1]} columns, expected {K_H}")
    return srf


def make_degradation_ops(
    I_M: int,
    J_M: int,
    K_H: int,
    K_M: int = 4,
    kernel_size: int = 9,
    sigma: float | None = None,
    d: int = 5,
    offset: int = 0,
    srf: np.ndarray | None = None,
    srf_source: str = "uniform",
) -> DegradationOps:
    """Bundle P1, P2, P3 for a given geometry, with provenance parameters."""
    p1, p2 = build_spatial_ops(I_M, J_M, kernel_size, sigma, d, offset)
    if srf is None:
        p3 = uniform_srf(K_H, K_M)
    else:
        p3 = np.asarray(srf, dtype=np.float64)
        if p3.shape != (K_M, K_H):
            raise UsageError(f"SRF must be {K_M}x{K_H}, got {p3.shape}")
    return DegradationOps(
        P1=p1,
        P2=p2,
        P3=p3,
        params={
            "kernel_size": int(kernel_size),
            "sigma": float(sigma) if sigma is not None else d / 2.0,
            "ratio": int(d),
            "offset": int(offset),
            "srf_source": srf_source,
        },
    )


def apply_degradation(sri: np.ndarray, ops: DegradationOps) -> tuple[np.ndarray, np.ndarray]:
    """Produce the (hsi, msi) pair from a reference image by the two mode products."""
    hsi = mode_product(mode_product(sri, ops.P1, 1), ops.P2, 2)
    msi = mode_product(sri, ops.P3, 3)
    return hsi, msi


def add_noise(t: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Add zero-mean i.i.d. Gaussian noise at the target SNR.

    The noise variance is ``||t||_F^2 / (numel * 10^(snr_db/10))``.  Draws come
    from numpy's PCG64 bit generator (``np.random.default_rng(seed)``), the
    package-wide fixed RNG, so results are reproducible for a given seed.
    ``snr_db = inf`` returns the input unchanged.
    """
    t = np.asarray(t, dtype=np.float64)
    if spec.snr_db == math.inf:
        return t.copy()
    norm = frob_norm(t)
    if norm == 0.0:
        raise UsageError("cannot set an SNR on an all-zero tensor")
    sigma = norm / math.sqrt(t.size * 10.0 ** (spec.snr_db / 10.0))
    rng = np.random.default_rng(spec.seed)
    return t + sigma * rng.standard_normal(t.shape)
