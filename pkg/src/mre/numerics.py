"""Numerical kernels: centered unitary DFTs, block-Hankel lifting, singular-value
truncation and a conjugate-gradient solver for self-adjoint positive systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import ComplexGrid, as_array, as_grid


@dataclass
class HankelLowRankConfig:
    """Block-Hankel low-rank prior settings.

    ``mode`` is "hard_rank" (keep the largest ``rank_or_lambda`` singular
    values) or "soft_threshold" (shrink each singular value by
    ``rank_or_lambda`` times the largest one). ``rank_or_lambda == 0`` with
    soft thresholding makes the projection a no-op, which is how the prior is
    switched off.
    """

    block_ky: int = 7
    block_kx: int = 7
    mode: str = "soft_threshold"
    rank_or_lambda: float = 0.05
    outer_iters: int = 20
    cg_iters: int = 5
    cg_tol: float = 1e-6

    def __post_init__(self):
        if self.block_kx < 1 or self.block_ky < 1:
            raise ValueError("Hankel block extents must be >= 1")
        if self.mode not in ("hard_rank", "soft_threshold"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.rank_or_lambda < 0:
            raise ValueError("rank_or_lambda must be >= 0")


def dft_centered(grid, axes=("x", "y"), direction="forward"):
    """Unitary DFT with the DC sample at index floor(N/2) on every transformed axis.

    ``grid`` may be a ComplexGrid (axes selected by label) or a plain ndarray
    (axes selected by integer position via the same labels resolved against
    default labels). Inverse and adjoint coincide because the transform is
    orthonormal.
    """
    g = as_grid(grid)
    if isinstance(axes, str):
        axes = (axes,)
    ax_idx = tuple(g.axis_index(a) for a in axes)
    if direction == "forward":
        fn = np.fft.fftn
    elif direction == "inverse":
        fn = np.fft.ifftn
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    data = np.fft.fftshift(
        fn(np.fft.ifftshift(g.data, axes=ax_idx), axes=ax_idx, norm="ortho"),
        axes=ax_idx,
    )
    out = ComplexGrid(data, g.axes)
    return out if isinstance(grid, ComplexGrid) else out.data


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centered unitary 2D FFT over the last two axes."""
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)), norm="ortho", axes=(-2, -1)),
        axes=(-2, -1),
    )


def ifft2c(x: np.ndarray) -> np.ndarray:
    """Centered unitary 2D inverse FFT over the last two axes."""
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(x, axes=(-2, -1)), norm="ortho", axes=(-2, -1)),
        axes=(-2, -1),
    )


def fftc_axis(x: np.ndarray, axis: int) -> np.ndarray:
    return np.fft.fftshift(
        np.fft.fft(np.fft.ifftshift(x, axes=axis), axis=axis, norm="ortho"), axes=axis
    )


def ifftc_axis(x: np.ndarray, axis: int) -> np.ndarray:
    return np.fft.fftshift(
        np.fft.ifft(np.fft.ifftshift(x, axes=axis), axis=axis, norm="ortho"), axes=axis
    )


# ---------------------------------------------------------------------------
# Block-Hankel lifting


def _shots_array(kspace) -> np.ndarray:
    """Coerce shot k-space input to (n_shot, nkx, nky)."""
    if isinstance(kspace, ComplexGrid):
        if "shot" in kspace.axes:
            order = [kspace.axis_index("shot")] + [
                i for i in range(kspace.data.ndim) if i != kspace.axis_index("shot")
            ]
            arr = np.transpose(kspace.data, order)
        else:
            arr = kspace.data[None]
    else:
        arr = np.asarray(kspace)
        if arr.ndim == 2:
            arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (shot, kx, ky) k-space, got shape {arr.shape}")
    return arr


def hankel_build(kspace, cfg: HankelLowRankConfig) -> np.ndarray:
    """Lift multi-shot k-space into the block-Hankel matrix.

    Rows run over sliding block positions (valid windows only, no padding);
    each shot contributes a bkx*bky block of columns, shots side by side.
    Output shape: [(nkx-bkx+1)*(nky-bky+1)] x [bkx*bky*n_shot].
    """
    arr = _shots_array(kspace)
    n_shot, nkx, nky = arr.shape
    bx, by = cfg.block_kx, cfg.block_ky
    if bx > nkx or by > nky:
        raise ValueError(f"block ({bx},{by}) larger than k-space ({nkx},{nky})")
    cols = []
    for s in range(n_shot):
        win = np.lib.stride_tricks.sliding_window_view(arr[s], (bx, by))
        cols.append(win.reshape((nkx - bx + 1) * (nky - by + 1), bx * by))
    return np.concatenate(cols, axis=1)


def hankel_occupancy(kspace_shape: tuple[int, int], cfg: HankelLowRankConfig) -> np.ndarray:
    """How many sliding blocks cover each k-space entry."""
    nkx, nky = kspace_shape
    bx, by = cfg.block_kx, cfg.block_ky
    count = np.zeros((nkx, nky))
    npx, npy = nkx - bx + 1, nky - by + 1
    for i in range(bx):
        for j in range(by):
            count[i : i + npx, j : j + npy] += 1.0
    return count


def hankel_adjoint(matrix, kspace_shape, cfg: HankelLowRankConfig, average: bool = True):
    """Map a block-Hankel matrix back to (n_shot, nkx, nky) k-space.

    With ``average=True`` overlapping contributions are divided by the
    per-entry occupancy count, so hankel_adjoint(hankel_build(d)) == d.
    With ``average=False`` this is the plain adjoint of the lifting (sum of
    contributions), the one that passes inner-product adjoint tests.
    """
    matrix = np.asarray(matrix)
    nkx, nky = kspace_shape
    bx, by = cfg.block_kx, cfg.block_ky
    npx, npy = nkx - bx + 1, nky - by + 1
    block_cols = bx * by
    if matrix.shape[0] != npx * npy or matrix.shape[1] % block_cols:
        raise ValueError(
            f"matrix shape {matrix.shape} inconsistent with k-space {kspace_shape} "
            f"and blocks ({bx},{by})"
        )
    n_shot = matrix.shape[1] // block_cols
    out = np.zeros((n_shot, nkx, nky), dtype=complex)
    for s in range(n_shot):
        blocks = matrix[:, s * block_cols : (s + 1) * block_cols].reshape(npx, npy, bx, by)
        for i in range(bx):
            for j in range(by):
                out[s, i : i + npx, j : j + npy] += blocks[:, :, i, j]
    if average:
        out /= hankel_occupancy(kspace_shape, cfg)[None]
    return out


def low_rank_project(matrix: np.ndarray, mode: str, rank_or_lambda: float) -> np.ndarray:
    """Truncate the singular values of a matrix.

    hard_rank keeps the largest r values; soft_threshold maps each singular
    value s to max(s - lambda * s_max, 0), so lambda is relative to the
    spectrum and one value works across data scales.
    """
    matrix = np.asarray(matrix)
    if not np.all(np.isfinite(matrix.real)) or not np.all(np.isfinite(matrix.imag)):
        raise ValueError("matrix has non-finite entries")
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    if mode == "hard_rank":
        r = int(rank_or_lambda)
        s = np.where(np.arange(s.size) < r, s, 0.0)
    elif mode == "soft_threshold":
        if s.size:
            s = np.maximum(s - rank_or_lambda * s[0], 0.0)
    else:
        raise ValueError(f"unknown truncation mode {mode!r}")
    return (u * s) @ vh


# ---------------------------------------------------------------------------
# Conjugate gradients


@dataclass
class CGResult:
    """Best iterate (lowest residual), its monotone residual trace, and the
    final iterate for warm-starting a continued solve."""

    x: np.ndarray
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    x_last: np.ndarray | None = None

    @property
    def relres(self) -> float:
        return self.residuals[-1] if self.residuals else np.inf


def cg_solve(apply_normal_operator, rhs, tol: float = 1e-6, max_iters: int = 30,
             x0=None) -> CGResult:
    """Conjugate gradients for A x = rhs with A self-adjoint positive (semi)definite.

    ``x`` is the best iterate seen (lowest relative residual) and
    ``residuals`` traces its residual per step, so the recorded history never
    increases. ``x_last`` is the plain final CG iterate, the right seed when a
    short solve is one leg of a longer warm-started chain. Works on arrays of
    any shape; the inner product is the standard complex one over all entries.
    """
    grid_in = isinstance(rhs, ComplexGrid)
    b = as_array(rhs).astype(complex)

    def A(v):
        out = as_array(apply_normal_operator(v if not grid_in else as_grid(v, rhs.axes)))
        if out.shape != b.shape:
            raise ValueError(f"operator returned shape {out.shape}, expected {b.shape}")
        return np.asarray(out, dtype=complex)

    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        zero = np.zeros_like(b)
        res = CGResult(zero, [0.0], True, 0, zero)
        if grid_in:
            res.x = as_grid(res.x, rhs.axes)
        return res

    x = np.zeros_like(b) if x0 is None else as_array(x0).astype(complex).copy()
    r = b - A(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = np.vdot(r, r).real

    best_x = x.copy()
    best_res = float(np.sqrt(rs) / bnorm)
    history = [best_res]
    converged = best_res <= tol
    it = 0
    while it < max_iters and not converged:
        Ap = A(p)
        pAp = np.vdot(p, Ap).real
        if pAp <= 0:
            break  # operator not positive along p; stop with best iterate
        alpha = rs / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = np.vdot(r, r).real
        it += 1
        res = float(np.sqrt(rs_new) / bnorm)
        if res < best_res:
            best_res = res
            best_x = x.copy()
        history.append(best_res)
        if best_res <= tol:
            converged = True
            break
        beta = rs_new / rs
        p = r + beta * p
        rs = rs_new

    out = CGResult(best_x, history, converged, it, x)
    if grid_in:
        out.x = as_grid(out.x, rhs.axes)
    return out
