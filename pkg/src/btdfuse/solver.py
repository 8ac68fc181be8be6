"""Coupled fusion solvers.

Four methods share one block-coordinate skeleton over the factor blocks
A, B, C of the block-term model:

* ``cnn_btd`` / ``cnn_cpd``: each block solves a nonnegativity-constrained
  quadratic program by a fixed number of ADMM iterations (``cnn_cpd`` is the
  same algorithm with every block rank forced to 1).
* ``stereo``: each block solves the unconstrained quadratic exactly.
* ``two_stage``: fits the spatial factors to the MSI alone, then recovers the
  spectral factor from the HSI by linear least squares.

Every block subproblem reduces to a generalized Sylvester equation
``H1 @ X @ H2 + H3 @ X @ H4 = H5`` in which either H3 or H2 is a scalar
multiple of the identity; ``sylvester_solve`` handles exactly those two forms
by symmetric eigendecomposition.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .degradation import DegradationOps
from .errors import NumericalError, UsageError
from .model import (
    BtdFactors,
    RankSpec,
    btd_reconstruct,
    degrade_factors,
    spatial_map_matrix,
)
from .tensor_ops import _check_tensor3, frob_norm, kronecker, pw_khatri_rao, unfold, unvec, vec

__all__ = [
    "FusionConfig",
    "AdmmWorkspace",
    "FusionResult",
    "objective",
    "sylvester_solve",
    "sylvester_solve_dense",
    "build_subproblem",
    "admm_nn_block",
    "bcd_fuse",
    "two_stage_recover",
    "recover_spectral_factor",
    "init_factors",
]

METHODS = ("cnn_btd", "cnn_cpd", "stereo", "two_stage")
INIT_STRATEGIES = ("random_uniform", "svd_warm", "provided")

# accepted solves must satisfy ||H1 X H2 + H3 X H4 - H5|| <= RTOL ||H5||
SYLVESTER_RESIDUAL_RTOL = 1e-8


@dataclass
class FusionConfig:
    """Everything a fusion run needs besides the data.

    Parameters
    ----------
    method : one of ``cnn_btd``, ``cnn_cpd``, ``stereo``, ``two_stage``.
    rank : RankSpec
        Block count and per-block spatial ranks.  ``cnn_cpd`` coerces all
        block ranks to 1.
    outer_iters : int
        Number of block-coordinate sweeps (cap; always enforced).
    inner_iters : int
        ADMM iterations per block for the constrained methods.
    rho : float or "auto"
        ADMM penalty.  "auto" rescales per block and sweep to the mean
        diagonal of that block's data Gram matrix.
    tol : float
        Relative objective change between sweeps below which iteration stops
        early; 0 disables the check.
    seed : int
        Seed for random initialization.
    init : one of ``random_uniform``, ``svd_warm``, ``provided``.
    init_factors : BtdFactors, required when ``init="provided"``.
    """

    method: str = "cnn_btd"
    rank: RankSpec = field(default_factory=lambda: RankSpec(1, 1))
    outer_iters: int = 20
    inner_iters: int = 5
    rho: float | str = "auto"
    tol: float = 0.0
    seed: int = 0
    init: str = "random_uniform"
    init_factors: BtdFactors | None = None


@dataclass
class AdmmWorkspace:
    """State of one block's constrained quadratic subproblem.

    H1..H4 are the (symmetric) coefficient matrices of the Sylvester system,
    H5_base the data part of its right-hand side; Z is the feasible split
    variable (what gets stored back into the factors), U the scaled dual, and
    X the most recent unconstrained solve.  Z and U persist across sweeps as
    warm starts.
    """

    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    H4: np.ndarray
    H5_base: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    rho: float
    X: np.ndarray | None = None


@dataclass(frozen=True)
class FusionResult:
    """Factors, reconstructed image, and the per-block-update objective trace."""

    factors: BtdFactors
    sri_estimate: np.ndarray
    objective_trace: tuple
    iters_run: int
    wall_time: float
    method: str


def objective(f: BtdFactors, hsi: np.ndarray, msi: np.ndarray, ops: DegradationOps) -> float:
    """Coupled data-fit value: squared residual on the HSI plus on the MSI."""
    hsi = _check_tensor3(hsi, "hsi")
    msi = _check_tensor3(msi, "msi")
    _require_coupled_dims(f, hsi, msi, ops)
    f_h, f_m = degrade_factors(f, ops)
    j_h = frob_norm(hsi - btd_reconstruct(f_h)) ** 2
    j_m = frob_norm(msi - btd_reconstruct(f_m)) ** 2
    return j_h + j_m


def _require_coupled_dims(f, hsi, msi, ops):
    i, j, k = f.dims
    p1, p2, p3 = ops.P1, ops.P2, ops.P3
    if p1.shape[1] != i or p2.shape[1] != j or p3.shape[1] != k:
        raise UsageError(
            f"operators expect an image of {p1.shape[1]}x{p2.shape[1]}x{p3.shape[1]}, "
            f"factors give {i}x{j}x{k}"
        )
    if hsi.shape != (p1.shape[0], p2.shape[0], k):
        raise UsageError(f"hsi is {hsi.shape}, expected {(p1.shape[0], p2.shape[0], k)}")
    if msi.shape != (i, j, p3.shape[0]):
        raise UsageError(f"msi is {msi.shape}, expected {(i, j, p3.shape[0])}")


def _as_square(m, name, size=None):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise UsageError(f"{name} must be square, got shape {m.shape}")
    if size is not None and m.shape[0] != size:
        raise UsageError(f"{name} must be {size}x{size}, got {m.shape}")
    return m


def _identity_scale(m: np.ndarray) -> float | None:
    """c such that m == c*I (within 1e-12), else None."""
    n = m.shape[0]
    c = float(np.trace(m)) / n
    if c == 0.0:
        return None
    if np.abs(m - c * np.eye(n)).max() <= 1e-12 * max(1.0, abs(c)):
        return c
    return None


def _require_symmetric(m, name):
    scale = np.abs(m).max() if m.size else 0.0
    if np.abs(m - m.T).max() > 1e-10 * max(1.0, scale):
        raise UsageError(f"{name} must be symmetric")


def _check_residual(h1, h2, h3, h4, h5, x):
    res = frob_norm(h1 @ x @ h2 + h3 @ x @ h4 - h5)
    bound = SYLVESTER_RESIDUAL_RTOL * frob_norm(h5)
    if not np.isfinite(res) or res > bound:
        raise NumericalError(
            f"Sylvester solve residual {res:.3e} exceeds {bound:.3e}; "
            "the coefficient pencil is singular or severely ill-conditioned"
        )
    return x


def sylvester_solve(h1, h2, h3, h4, h5) -> np.ndarray:
    """Solve ``h1 @ X @ h2 + h3 @ X @ h4 = h5`` for the two forms used here.

    Supported structure: h3 or h2 is a scalar multiple of the identity (these
    are the only forms the block subproblems produce).  h1..h4 must be
    symmetric.  The returned X satisfies the residual bound
    ``||h1 X h2 + h3 X h4 - h5||_F <= 1e-8 ||h5||_F``; a singular pencil
    raises NumericalError.  For anything more general use
    ``sylvester_solve_dense``.
    """
    h5 = np.asarray(h5, dtype=np.float64)
    if h5.ndim != 2:
        raise UsageError(f"h5 must be a matrix, got shape {h5.shape}")
    m, n = h5.shape
    h1 = _as_square(h1, "h1", m)
    h3 = _as_square(h3, "h3", m)
    h2 = _as_square(h2, "h2", n)
    h4 = _as_square(h4, "h4", n)
    for mat, name in ((h1, "h1"), (h2, "h2"), (h3, "h3"), (h4, "h4")):
        _require_symmetric(mat, name)
    if not all(np.isfinite(mat).all() for mat in (h1, h2, h3, h4, h5)):
        raise NumericalError("non-finite entries in the Sylvester system")

    c3 = _identity_scale(h3)
    if c3 is not None:
        x = _solve_rows_reduced(h1, h2, c3 * h4, h5)
        return _check_residual(h1, h2, h3, h4, h5, x)
    c2 = _identity_scale(h2)
    if c2 is not None:
        x = _solve_cols_reduced(c2 * h1, h3, h4, h5)
        return _check_residual(h1, h2, h3, h4, h5, x)
    raise UsageError(
        "neither h3 nor h2 is a scalar multiple of the identity; "
        "use sylvester_solve_dense for general systems"
    )


def _solve_rows_reduced(h1, h2, h4c, h5):
    """Solve h1 X h2 + X h4c = h5 via eigh(h1) and a simultaneous reduction."""
    lam, q = np.linalg.eigh(h1)
    try:
        # h2 v = w (h4c) v with V^T h4c V = I; requires h4c positive definite
        w, v = scipy.linalg.eigh(h2, h4c)
    except np.linalg.LinAlgError:
        # h4c is singular: fall back to one small solve per row eigenvalue
        rhs = q.T @ h5
        mats = lam[:, None, None] * h2[None, :, :] + h4c[None, :, :]
        try:
            y = np.linalg.solve(mats, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular pencil in row-reduced Sylvester solve: {exc}") from exc
        return q @ y
    den = 1.0 + np.outer(lam, w)
    if np.abs(den).min() < 1e-12:
        raise NumericalError(
            f"singular pencil: eigenvalue combination 1 + lam*w reaches {np.abs(den).min():.3e}"
        )
    g = (q.T @ h5 @ v) / den
    return q @ g @ v.T


def _solve_cols_reduced(h1c, h3, h4, h5):
    """Solve h1c X + h3 X h4 = h5 via eigh(h4) and a simultaneous reduction."""
    lam, q = np.linalg.eigh(h4)
    try:
        # h3 v = w (h1c) v with V^T h1c V = I; requires h1c positive definite
        w, v = scipy.linalg.eigh(h3, h1c)
    except np.linalg.LinAlgError:
        rhs = h5 @ q
        mats = h1c[None, :, :] + lam[:, None, None] * h3[None, :, :]
        try:
            y = np.linalg.solve(mats, rhs.T[:, :, None])[:, :, 0].T
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular pencil in column-reduced Sylvester solve: {exc}") from exc
        return y @ q.T
    den = 1.0 + np.outer(w, lam)
    if np.abs(den).min() < 1e-12:
        raise NumericalError(
            f"singular pencil: eigenvalue combination 1 + w*lam reaches {np.abs(den).min():.3e}"
        )
    g = (v.T @ h5 @ q) / den
    return v @ g @ q.T


def sylvester_solve_dense(h1, h2, h3, h4, h5) -> np.ndarray:
    """General dense solve via the equivalent Kronecker system.

    Builds ``(h2^T kron h1 + h4^T kron h3) vec(X) = vec(h5)`` with
    column-major vec; O((mn)^3), intended for tiny systems and cross-checks.
    """
    h5 = np.asarray(h5, dtype=np.float64)
    if h5.ndim != 2:
        raise UsageError(f"h5 must be a matrix, got shape {h5.shape}")
    m, n = h5.shape
    h1 = _as_square(h1, "h1", m)
    h3 = _as_square(h3, "h3", m)
    h2 = _as_square(h2, "h2", n)
    h4 = _as_square(h4, "h4", n)
    system = kronecker(h2.T, h1) + kronecker(h4.T, h3)
    try:
        sol = np.linalg.solve(system, vec(h5))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular pencil in dense Sylvester solve: {exc}") from exc
    return _check_residual(h1, h2, h3, h4, h5, unvec(sol, m, n))


def _resolve_rho(rho, gram: np.ndarray, ncols: int) -> float:
    if isinstance(rho, str):
        if rho != "auto":
            raise UsageError(f"rho must be a number or 'auto', got {rho!r}")
        val = float(np.trace(gram)) / ncols
        # a zero Gram means zero factors; any positive penalty works then
        return val if val > 0 else 1.0
    val = float(rho)
    if not math.isfinite(val) or val < 0:
        raise UsageError(f"rho must be finite and >= 0, got {rho!r}")
    return val


def build_subproblem(block, f: BtdFactors, hsi, msi, ops: DegradationOps, rho) -> AdmmWorkspace:
    """Assemble one block's quadratic subproblem as an AdmmWorkspace.

    The unknown is A for block "A", B for block "B", and C^T for block "C";
    the penalty ``rho`` lands on the identity-adjacent Gram so the system
    stays a supported Sylvester form.  Z starts at the current factor value
    and U at zero; callers that warm-start replace them afterwards.
    """
    hsi = _check_tensor3(hsi, "hsi")
    msi = _check_tensor3(msi, "msi")
    _require_coupled_dims(f, hsi, msi, ops)
    widths = f.rank.L
    total = f.rank.total
    p1, p2, p3 = ops.P1, ops.P2, ops.P3

    if block == "A":
        wh = pw_khatri_rao(f.C, p2 @ f.B, widths)
        wm = pw_khatri_rao(p3 @ f.C, f.B, widths)
        gram_m = wm.T @ wm
        rho_val = _resolve_rho(rho, gram_m, total)
        h1 = p1.T @ p1
        h2 = wh.T @ wh
        h3 = np.eye(f.A.shape[0])
        h4 = gram_m + rho_val * np.eye(total)
        h5 = p1.T @ (unfold(hsi, 1).T @ wh) + unfold(msi, 1).T @ wm
        z = f.A.copy()
    elif block == "B":
        wh = pw_khatri_rao(f.C, p1 @ f.A, widths)
        wm = pw_khatri_rao(p3 @ f.C, f.A, widths)
        gram_m = wm.T @ wm
        rho_val = _resolve_rho(rho, gram_m, total)
        h1 = p2.T @ p2
        h2 = wh.T @ wh
        h3 = np.eye(f.B.shape[0])
        h4 = gram_m + rho_val * np.eye(total)
        h5 = p2.T @ (unfold(hsi, 2).T @ wh) + unfold(msi, 2).T @ wm
        z = f.B.copy()
    elif block == "C":
        f_h, _ = degrade_factors(f, ops)
        wh = spatial_map_matrix(f_h)
        wm = spatial_map_matrix(f)
        gram_h = wh.T @ wh
        rho_val = _resolve_rho(rho, gram_h, f.rank.R)
        h1 = gram_h + rho_val * np.eye(f.rank.R)
        h2 = np.eye(f.C.shape[0])
        h3 = wm.T @ wm
        h4 = p3.T @ p3
        h5 = wh.T @ unfold(hsi, 3) + wm.T @ (unfold(msi, 3) @ p3)
        z = f.C.T.copy()
    else:
        raise UsageError(f"block must be 'A', 'B' or 'C', got {block!r}")

    return AdmmWorkspace(
        H1=h1, H2=h2, H3=h3, H4=h4, H5_base=h5,
        Z=z, U=np.zeros_like(z), rho=rho_val,
    )


def admm_nn_block(w: AdmmWorkspace, inner_iters: int):
    """Run the fixed-count ADMM loop for one nonnegative block.

    Each iteration solves the Sylvester system with right-hand side
    ``H5_base + rho (Z + U)``, projects ``X - U`` onto the nonnegative
    orthant, and takes a dual step.  Returns the feasible iterate Z (this is
    what gets stored as the factor) together with the updated workspace.
    """
    if inner_iters < 1:
        raise UsageError(f"inner_iters must be >= 1, got {inner_iters}")
    if not w.rho > 0:
        raise UsageError(f"constrained block updates need rho > 0, got {w.rho}")
    for _ in range(inner_iters):
        h5 = w.H5_base + w.rho * (w.Z + w.U)
        w.X = sylvester_solve(w.H1, w.H2, w.H3, w.H4, h5)
        w.Z = np.maximum(w.X - w.U, 0.0)
        w.U = w.U + (w.Z - w.X)
    return w.Z, w


def _solve_block_exact(w: AdmmWorkspace, block: str) -> np.ndarray:
    """Unconstrained exact block solve; one jitter retry on a singular system."""
    try:
        return sylvester_solve(w.H1, w.H2, w.H3, w.H4, w.H5_base)
    except NumericalError:
        if _identity_scale(w.H3) is not None:
            target, name = w.H4, "H4"
        else:
            target, name = w.H1, "H1"
        n = target.shape[0]
        jitter = 1e-12 * float(np.trace(target)) / n
        warnings.warn(
            f"block {block} system is numerically singular; retrying with "
            f"diagonal jitter {jitter:.3e} on {name}",
            RuntimeWarning,
            stacklevel=2,
        )
        target[np.diag_indices(n)] += jitter
        return sylvester_solve(w.H1, w.H2, w.H3, w.H4, w.H5_base)


def _validate_config(cfg: FusionConfig):
    if cfg.method not in METHODS:
        raise UsageError(f"unknown method {cfg.method!r}; choose from {METHODS}")
    if not isinstance(cfg.rank, RankSpec):
        raise UsageError("cfg.rank must be a RankSpec")
    if cfg.outer_iters < 1:
        raise UsageError(f"outer_iters must be >= 1, got {cfg.outer_iters}")
    if cfg.method in ("cnn_btd", "cnn_cpd") and cfg.inner_iters < 1:
        raise UsageError(f"inner_iters must be >= 1, got {cfg.inner_iters}")
    if not isinstance(cfg.rho, str):
        if not math.isfinite(float(cfg.rho)) or float(cfg.rho) <= 0:
            raise UsageError(f"rho must be positive or 'auto', got {cfg.rho!r}")
    elif cfg.rho != "auto":
        raise UsageError(f"rho must be a number or 'auto', got {cfg.rho!r}")
    if cfg.tol < 0:
        raise UsageError(f"tol must be >= 0, got {cfg.tol}")
    if cfg.init not in INIT_STRATEGIES:
        raise UsageError(f"unknown init {cfg.init!r}; choose from {INIT_STRATEGIES}")


def _initial_factors(cfg: FusionConfig, rank: RankSpec, dims, msi) -> BtdFactors:
    if cfg.init == "provided":
        if cfg.init_factors is None:
            raise UsageError("init='provided' requires cfg.init_factors")
        f = cfg.init_factors.copy()
        if f.dims != tuple(dims):
            raise UsageError(f"provided factors give dims {f.dims}, data needs {tuple(dims)}")
        if f.rank != rank:
            raise UsageError(f"provided factors have rank {f.rank}, config wants {rank}")
        return f
    return init_factors(dims, rank, cfg.seed, cfg.init, msi=msi)


def bcd_fuse(hsi, msi, ops: DegradationOps, cfg: FusionConfig) -> FusionResult:
    """Fuse an HSI/MSI pair by cyclic block updates A -> B -> C.

    Runs the method selected in ``cfg`` (``two_stage`` is delegated to
    :func:`two_stage_recover`).  The objective value is recorded after every
    block update; iteration stops at ``outer_iters`` sweeps or earlier when
    the relative objective change between sweeps drops below ``tol``.
    """
    start = time.perf_counter()
    _validate_config(cfg)
    if cfg.method == "two_stage":
        return two_stage_recover(hsi, msi, ops, cfg)
    hsi = _check_tensor3(hsi, "hsi")
    msi = _check_tensor3(msi, "msi")
    rank = cfg.rank if cfg.method != "cnn_cpd" else RankSpec(cfg.rank.R, 1)
    dims = (msi.shape[0], msi.shape[1], hsi.shape[2])
    f = _initial_factors(cfg, rank, dims, msi)
    _require_coupled_dims(f, hsi, msi, ops)

    constrained = cfg.method in ("cnn_btd", "cnn_cpd")
    trace = []
    dual_state = {}
    prev_sweep = None
    iters_run = 0
    for sweep in range(cfg.outer_iters):
        for block in ("A", "B", "C"):
            if constrained:
                w = build_subproblem(block, f, hsi, msi, ops, cfg.rho)
                if block in dual_state:
                    w.U = dual_state[block]
                z, w = admm_nn_block(w, cfg.inner_iters)
                dual_state[block] = w.U
                new_value = z
            else:
                w = build_subproblem(block, f, hsi, msi, ops, 0.0)
                new_value = _solve_block_exact(w, block)
            if block == "A":
                f.A = new_value
            elif block == "B":
                f.B = new_value
            else:
                f.C = new_value.T.copy()
            j = objective(f, hsi, msi, ops)
            if not math.isfinite(j):
                raise NumericalError(
                    f"objective became non-finite at sweep {sweep + 1}, block {block}",
                    trace=trace,
                )
            trace.append(j)
        iters_run = sweep + 1
        if cfg.tol > 0 and prev_sweep is not None:
            if abs(prev_sweep - trace[-1]) / max(abs(prev_sweep), 1e-30) < cfg.tol:
                break
        prev_sweep = trace[-1]

    return FusionResult(
        factors=f,
        sri_estimate=btd_reconstruct(f),
        objective_trace=tuple(trace),
        iters_run=iters_run,
        wall_time=time.perf_counter() - start,
        method=cfg.method,
    )


def recover_spectral_factor(hsi, ops: DegradationOps, a, b, rank: RankSpec) -> np.ndarray:
    """Least-squares spectral factor given fixed spatial factors.

    Solves ``unfold(hsi, 3) = K @ C^T`` where column r of K is
    ``vec((P1 A_r)(P2 B_r)^T)``, i.e. the spatially degraded block map.  The
    system determines C only when K has full column rank, which needs at
    least as many coarse pixels as blocks.
    """
    hsi = _check_tensor3(hsi, "hsi")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pa = ops.P1 @ a
    pb = ops.P2 @ b
    k_mat = np.empty((pa.shape[0] * pb.shape[0], rank.R))
    for r in range(rank.R):
        cols = rank.block_slice(r)
        k_mat[:, r] = vec(pa[:, cols] @ pb[:, cols].T)
    sol, _, eff_rank, _ = np.linalg.lstsq(k_mat, unfold(hsi, 3), rcond=None)
    if eff_rank < rank.R:
        raise NumericalError(
            "the spatially degraded block-map matrix is rank-deficient "
            f"(rank {eff_rank} < R = {rank.R}); the spectral factor is only "
            "recoverable when it has full column rank, which requires "
            f"I_H*J_H >= R (here {k_mat.shape[0]} coarse pixels) and "
            "linearly independent degraded maps"
        )
    return sol.T


def two_stage_recover(hsi, msi, ops: DegradationOps, cfg: FusionConfig) -> FusionResult:
    """Decouple the fusion: fit the MSI first, then read the spectra off the HSI.

    Stage 1 runs unconstrained alternating least squares on the MSI-only
    objective ``||Y_M - sum_r A_r B_r^T o (P3 C)_r||_F^2`` with the reduced
    spectral factor as an auxiliary variable (discarded afterwards).  Stage 2
    recovers the full spectral factor from the HSI by one linear solve.  The
    objective trace holds the stage-1 MSI residual after each block update,
    then the final coupled objective of the assembled factors.
    """
    start = time.perf_counter()
    _validate_config(cfg)
    hsi = _check_tensor3(hsi, "hsi")
    msi = _check_tensor3(msi, "msi")
    rank = cfg.rank
    dims = (msi.shape[0], msi.shape[1], hsi.shape[2])
    f0 = _initial_factors(cfg, rank, dims, msi)
    _require_coupled_dims(f0, hsi, msi, ops)

    a, b = f0.A.copy(), f0.B.copy()
    c_m = ops.P3 @ f0.C
    widths = rank.L
    y1, y2, y3 = unfold(msi, 1), unfold(msi, 2), unfold(msi, 3)
    msi_sq = frob_norm(msi) ** 2

    def msi_fit(a_, b_, c_):
        s = _maps(a_, b_, rank)
        return frob_norm(y3 - s @ c_.T) ** 2

    trace = []
    prev_sweep = None
    iters_run = 0
    for sweep in range(cfg.outer_iters):
        a = np.linalg.lstsq(pw_khatri_rao(c_m, b, widths), y1, rcond=None)[0].T
        trace.append(msi_fit(a, b, c_m))
        b = np.linalg.lstsq(pw_khatri_rao(c_m, a, widths), y2, rcond=None)[0].T
        trace.append(msi_fit(a, b, c_m))
        c_m = np.linalg.lstsq(_maps(a, b, rank), y3, rcond=None)[0].T
        j = msi_fit(a, b, c_m)
        if not math.isfinite(j):
            raise NumericalError(
                f"MSI fit became non-finite at sweep {sweep + 1}", trace=trace
            )
        trace.append(j)
        iters_run = sweep + 1
        if cfg.tol > 0 and prev_sweep is not None:
            if abs(prev_sweep - j) / max(abs(prev_sweep), 1e-30) < cfg.tol:
                break
        prev_sweep = j
        # a perfect MSI fit cannot improve further; stop regardless of tol
        if j <= 1e-28 * max(msi_sq, 1.0):
            break

    c = recover_spectral_factor(hsi, ops, a, b, rank)
    f = BtdFactors(a, b, c, rank)
    trace.append(objective(f, hsi, msi, ops))
    return FusionResult(
        factors=f,
        sri_estimate=btd_reconstruct(f),
        objective_trace=tuple(trace),
        iters_run=iters_run,
        wall_time=time.perf_counter() - start,
        method="two_stage",
    )


def _maps(a, b, rank: RankSpec) -> np.ndarray:
    s = np.empty((a.shape[0] * b.shape[0], rank.R))
    for r in range(rank.R):
        cols = rank.block_slice(r)
        s[:, r] = vec(a[:, cols] @ b[:, cols].T)
    return s


def init_factors(dims, rank: RankSpec, seed: int, strategy: str, msi=None) -> BtdFactors:
    """Deterministic starting factors for a given geometry and seed.

    ``random_uniform`` draws every entry uniform on [0, 1), then scales C so
    the model's reconstruction has Frobenius norm equal to ``||msi||_F`` (a
    crude but scale-correct anchor; skipped when no msi is given).
    ``svd_warm`` interpolates the MSI to the full band count, takes one SVD
    per block of its band-map matrix, and uses absolute values of the
    truncated components; no randomness involved.
    """
    i, j, k = (int(d) for d in dims)
    if min(i, j, k) < 1:
        raise UsageError(f"dims must be positive, got {dims}")
    if strategy == "random_uniform":
        rng = np.random.default_rng(seed)
        a = rng.uniform(size=(i, rank.total))
        b = rng.uniform(size=(j, rank.total))
        c = rng.uniform(size=(k, rank.R))
        f = BtdFactors(a, b, c, rank)
    elif strategy == "svd_warm":
        if msi is None:
            raise UsageError("svd_warm needs the msi tensor")
        f = _svd_warm_factors(dims, rank, msi)
    elif strategy == "provided":
        raise UsageError("pass pre-built factors via FusionConfig.init_factors")
    else:
        raise UsageError(f"unknown init strategy {strategy!r}")
    if msi is not None:
        msi = _check_tensor3(msi, "msi")
        norm = frob_norm(btd_reconstruct(f))
        if norm > 0:
            f.C = f.C * (frob_norm(msi) / norm)
    return f


def _svd_warm_factors(dims, rank: RankSpec, msi) -> BtdFactors:
    i, j, k = (int(d) for d in dims)
    msi = _check_tensor3(msi, "msi")
    if msi.shape[0] != i or msi.shape[1] != j:
        raise UsageError(f"msi spatial dims {msi.shape[:2]} do not match {(i, j)}")
    k_m = msi.shape[2]
    if rank.R > min(i * j, k):
        raise UsageError(f"svd_warm needs R <= min(I*J, K) = {min(i * j, k)}, got R={rank.R}")
    if max(rank.L) > min(i, j):
        raise UsageError(f"svd_warm needs L <= min(I, J) = {min(i, j)}")
    # linear band interpolation as a (K, K_M) matrix applied along mode 3
    if k_m == 1:
        t = np.ones((k, 1))
    else:
        src = np.linspace(0.0, 1.0, k_m)
        dst = np.linspace(0.0, 1.0, k)
        t = np.empty((k, k_m))
        for m_ in range(k_m):
            basis = np.zeros(k_m)
            basis[m_] = 1.0
            t[:, m_] = np.interp(dst, src, basis)
    interp3 = unfold(msi, 3) @ t.T
    u, s, vt = np.linalg.svd(interp3, full_matrices=False)
    a = np.empty((i, rank.total))
    b = np.empty((j, rank.total))
    c = np.empty((k, rank.R))
    for r in range(rank.R):
        ur, vr = u[:, r], vt[r]
        if ur.sum() < 0:
            ur, vr = -ur, -vr
        us, ss, vts = np.linalg.svd(unvec(ur, i, j), full_matrices=False)
        l_r = rank.L[r]
        cols = rank.block_slice(r)
        a[:, cols] = np.abs(us[:, :l_r] * np.sqrt(ss[:l_r]))
        b[:, cols] = np.abs(vts[:l_r].T * np.sqrt(ss[:l_r]))
        c[:, r] = np.abs(s[r] * vr)
    return BtdFactors(a, b, c, rank)
