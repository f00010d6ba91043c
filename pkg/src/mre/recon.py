"""Inverse problems: CG-SENSE, reversed-gradient field-map estimation, joint
multi-shot Hankel low-rank reconstruction, virtual-coil augmentation, and
wave-encoded generalized SENSE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .encoding import (SamplingPlan, ShotOperator, ShotSpec, WavePsf,
                       coil_array, reflect_kspace)
from .grids import as_array
from .numerics import (HankelLowRankConfig, cg_solve, fft2c, hankel_adjoint,
                       hankel_build, ifft2c, low_rank_project)


@dataclass
class AcquisitionModel:
    """Everything the forward operator needs: sensitivities, field map, the
    per-shot sampling geometry, and optional SMS/wave configuration.

    ``blocks`` is normally derived from the shot specs; virtual-coil
    augmentation installs explicit (coils, plan) block lists per shot, with
    per-shot data stacked along the channel axis in block order.
    """

    coils: np.ndarray
    field_map: np.ndarray | None
    shot_specs: list[ShotSpec] = field(default_factory=list)
    multiband: int = 1
    wave: WavePsf | None = None
    blocks: list[list[tuple[np.ndarray, SamplingPlan]]] | None = None

    def __post_init__(self):
        self.coils = coil_array(self.coils)
        if self.blocks is None and not self.shot_specs:
            raise ValueError("shot_specs must be non-empty")

    @property
    def n_shots(self) -> int:
        return len(self.blocks) if self.blocks is not None else len(self.shot_specs)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.coils.shape[-2:]

    def shot_blocks(self) -> list[list[tuple[np.ndarray, SamplingPlan]]]:
        if self.blocks is not None:
            return self.blocks
        nx = self.coils.shape[-2]
        return [[(self.coils, SamplingPlan.from_spec(s, nx, self.multiband))]
                for s in self.shot_specs]

    def systems(self) -> list[list[ShotOperator]]:
        return [[ShotOperator(c, p, self.field_map, self.wave) for c, p in shot]
                for shot in self.shot_blocks()]

    def r_total(self) -> float:
        """Total acceleration of the first shot (full grid / acquired samples)."""
        blocks = self.shot_blocks()[0]
        acquired = sum(p.sample_count() for _, p in blocks) // len(blocks)
        nx, ny = self.image_shape
        return nx * ny / acquired


@dataclass
class ShotImageSet:
    """Per-shot reconstructions plus their magnitude-mean combination."""

    images: np.ndarray  # (shot, x, y) complex
    combined: np.ndarray  # (x, y) real
    objective: list[float] = field(default_factory=list)


def combine_shots(images) -> np.ndarray:
    """Magnitude mean across the shot axis; phase is discarded."""
    arr = np.atleast_3d(as_array(images))
    if arr.ndim != 3:
        raise ValueError("expected (shot, x, y) images")
    return np.mean(np.abs(arr), axis=0)


def _solve_blocks(ops: list[ShotOperator], data_blocks, tol, iters, x0=None):
    """CG on the stacked normal equations sum_b E_b^H E_b x = sum_b E_b^H d_b."""
    rhs = np.zeros(ops[0].shape, dtype=complex)
    for op, d in zip(ops, data_blocks):
        rhs += op.adjoint(d)

    def normal(x):
        out = np.zeros_like(rhs)
        for op in ops:
            out += op.normal(x)
        return out

    return cg_solve(normal, rhs, tol=tol, max_iters=iters, x0=x0)


def _split_channel_blocks(kspace, blocks):
    """Split a channel-stacked shot k-space into per-block arrays."""
    k = as_array(kspace)
    sizes = [c.shape[0] for c, _ in blocks]
    if k.shape[0] != sum(sizes):
        raise ValueError(f"k-space has {k.shape[0]} channels, blocks expect {sum(sizes)}")
    offs = np.cumsum([0] + sizes)
    return [k[offs[i] : offs[i + 1]] for i in range(len(sizes))]


def sense_recon(kspace, coils, spec: ShotSpec, tol: float = 1e-6, iters: int = 30,
                multiband: int = 1) -> np.ndarray:
    """CG solution of the SENSE normal equations for one shot.

    No field map enters the model, so the output retains the shot's geometric
    distortion."""
    c = coil_array(coils)
    plan = SamplingPlan.from_spec(spec, c.shape[-2], multiband)
    op = ShotOperator(c, plan, None, None)
    res = _solve_blocks([op], [as_array(kspace)], tol, iters)
    return res.x


def wave_sense_recon(kspace, coils, psf: WavePsf, spec: ShotSpec, tol: float = 1e-6,
                     iters: int = 30, multiband: int = 1) -> np.ndarray:
    """Generalized SENSE with parity-correct wave PSFs in the forward model."""
    c = coil_array(coils)
    plan = SamplingPlan.from_spec(spec, c.shape[-2], multiband)
    op = ShotOperator(c, plan, None, psf)
    res = _solve_blocks([op], [as_array(kspace)], tol, iters)
    return res.x


def buda_recon(shot_kspaces, model: AcquisitionModel, cfg: HankelLowRankConfig | None = None,
               track_objective: bool = False, monotone: bool | None = None) -> ShotImageSet:
    """Joint multi-shot reconstruction with the block-Hankel low-rank prior.

    Alternates (a) per-shot conjugate-gradient data-consistency steps on the
    field-map-aware normal equations with (b) singular-value truncation of the
    across-shot block-Hankel matrix in k-space. A null config (or a zero soft
    threshold) drops step (b), leaving plain per-shot CG-SENSE with B0
    modeling.

    For soft thresholding the outer step is safeguarded: if a full projection
    would raise the composite objective (data term plus the frozen-weight
    nuclear norm), the projection step is shortened until the objective is
    non-increasing. Hard-rank truncation is a subspace constraint rather than
    a proximal step, so no objective line search applies there
    (``monotone=None`` resolves accordingly).
    """
    if model.field_map is None:
        raise ValueError("buda_recon needs a field map in the model (zeros are fine)")
    systems = model.systems()
    n_shot = len(systems)
    if n_shot == 0:
        raise ValueError("no shots in model")
    kspaces = [as_array(k) for k in shot_kspaces]
    if len(kspaces) != n_shot:
        raise ValueError(f"{len(kspaces)} shot k-spaces for {n_shot} shots")
    blocks = model.shot_blocks()
    data = [_split_channel_blocks(kspaces[t], blocks[t]) for t in range(n_shot)]

    cfg = cfg or HankelLowRankConfig()
    project = not (cfg.mode == "soft_threshold" and cfg.rank_or_lambda == 0)
    if monotone is None:
        monotone = project and cfg.mode == "soft_threshold"
    nx, ny = model.image_shape
    x = np.zeros((n_shot, nx, ny), dtype=complex)
    objective = []
    lam_abs = [0.0]

    def j_value(xc):
        data_term = 0.0
        for t in range(n_shot):
            for op, d in zip(systems[t], data[t]):
                data_term += float(np.linalg.norm(op.forward(xc[t]) - d) ** 2)
        if not project:
            return data_term
        s = np.linalg.svd(hankel_build(fft2c(xc), cfg), compute_uv=False)
        if lam_abs[0] == 0.0 and s.size:
            lam_abs[0] = cfg.rank_or_lambda * float(s[0])
        return data_term + lam_abs[0] * float(s.sum())

    j_prev = np.inf
    need_j = track_objective or monotone
    for _ in range(cfg.outer_iters):
        x_start = x.copy() if monotone else None
        for t in range(n_shot):
            # Each outer iteration continues the chain, so seed from the final
            # CG iterate (best-iterate restarts can stall the chain).
            x[t] = _solve_blocks(systems[t], data[t], cfg.cg_tol, cfg.cg_iters, x0=x[t]).x_last
        if project:
            k = fft2c(x)
            mat = hankel_build(k, cfg)
            mat = low_rank_project(mat, cfg.mode, cfg.rank_or_lambda)
            k = hankel_adjoint(mat, (nx, ny), cfg)
            x_proj = ifft2c(k)
            if monotone:
                x_ref, eta = x, 1.0
                x, j_cur = x_proj, j_value(x_proj)
                while np.isfinite(j_prev) and j_cur > j_prev * (1 + 1e-9) and eta > 2**-6:
                    eta /= 2
                    x = x_ref + eta * (x_proj - x_ref)
                    j_cur = j_value(x)
                if np.isfinite(j_prev) and j_cur > j_prev * (1 + 1e-9):
                    # No step length keeps the objective from rising: hold the
                    # previous outer iterate (its objective is j_prev).
                    x, j_cur = x_start, j_prev
            else:
                x, j_cur = x_proj, (j_value(x_proj) if need_j else None)
        elif need_j:
            j_cur = j_value(x)
        if need_j:
            j_prev = j_cur
            if track_objective:
                objective.append(j_cur)

    return ShotImageSet(x, combine_shots(x), objective)


def vc_augment(shot_kspaces, model: AcquisitionModel):
    """Append conjugate-reflected (virtual coil) data and sensitivities.

    Per shot the virtual block carries conj(d(-k)) on the point-reflected
    sampling set with conjugate sensitivities and negated line times, so the
    augmented system is exactly consistent for real-valued images. Channel
    and acquired-sample counts double."""
    nx, ny = model.image_shape
    if nx % 2 or ny % 2:
        raise ValueError("virtual-coil reflection requires even grid extents")
    kspaces = [as_array(k) for k in shot_kspaces]
    blocks = model.shot_blocks()
    aug_blocks = []
    aug_kspaces = []
    for t, shot in enumerate(blocks):
        per_shot = list(shot)
        per_shot += [(np.conj(c), p.reflected()) for c, p in shot]
        aug_blocks.append(per_shot)
        aug_kspaces.append(np.concatenate([kspaces[t], reflect_kspace(kspaces[t])], axis=0))
    aug_model = AcquisitionModel(
        coils=np.concatenate([model.coils, np.conj(model.coils)], axis=0),
        field_map=model.field_map,
        shot_specs=list(model.shot_specs),
        multiband=model.multiband,
        wave=model.wave,
        blocks=aug_blocks,
    )
    return aug_kspaces, aug_model


# ---------------------------------------------------------------------------
# Reversed-gradient field-map estimation


def _upsample_y(img: np.ndarray, factor: int) -> np.ndarray:
    """Sinc (zero-padded FFT) upsampling along the last axis."""
    n = img.shape[-1]
    k = np.fft.fft(img, axis=-1)
    pad = np.zeros(img.shape[:-1] + (n * factor,), dtype=complex)
    half = n // 2
    pad[..., :half] = k[..., :half]
    pad[..., -(n - half):] = k[..., half:]
    return np.real(np.fft.ifft(pad, axis=-1)) * factor


def _sample_y(img: np.ndarray, shift) -> np.ndarray:
    """Resample along the last axis at y + shift (linear, edge clamp).

    ``shift`` may be a scalar or a per-voxel array broadcastable to img."""
    ny = img.shape[-1]
    pos = np.clip(np.arange(ny) + np.asarray(shift, dtype=float), 0.0, ny - 1.0)
    pos = np.broadcast_to(pos, img.shape)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, ny - 1)
    w = pos - i0
    return np.take_along_axis(img, i0, -1) * (1.0 - w) + np.take_along_axis(img, i1, -1) * w


def estimate_field_map(img_up, img_down, spec_up: ShotSpec, spec_down: ShotSpec,
                       smoothness_weight: float = 1.0, max_shift_px: float = 8.0) -> np.ndarray:
    """Estimate the B0 map (Hz) from one blip-up and one blip-down image.

    Coarse-to-fine search over smooth displacement fields: per voxel, candidate
    residual displacements are scored by the mismatch of the two unwarped
    images (each shifted according to its blip polarity), votes are weighted by
    the contrast of the local cost curve (flat regions carry no information)
    and propagated by normalized convolution, then refined on finer candidate
    grids. Displacements convert to Hz through shift_px = f * esp_s * N_y / R.
    """
    a = np.abs(as_array(img_up)).astype(float)
    b = np.abs(as_array(img_down)).astype(float)
    if a.shape != b.shape:
        raise ValueError("images must share an extent")
    peak = max(a.max(), b.max())
    if peak == 0:
        raise ValueError("both images are zero")
    if spec_up.blip_polarity == spec_down.blip_polarity:
        raise ValueError("specs must have opposite blip polarity")
    # Mild smoothing tames Gibbs ringing from the k-space-truncated recons.
    a = gaussian_filter(a / peak, 0.8)
    b = gaussian_filter(b / peak, 0.8)
    pol_up, pol_down = spec_up.blip_polarity, spec_down.blip_polarity
    nx, ny = a.shape

    # The images are band-limited, so resample them on a sinc-upsampled y
    # grid once; per-voxel shifts then interpolate linearly on the fine grid.
    ups = 8
    a_fine = _upsample_y(a, ups)
    b_fine = _upsample_y(b, ups)

    def warp(img_fine, shift):
        pos = np.clip((np.arange(ny) + np.asarray(shift, dtype=float)) * ups,
                      0.0, ny * ups - 1.0)
        pos = np.broadcast_to(pos, (nx, ny))
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, ny * ups - 1)
        w = pos - i0
        return (np.take_along_axis(img_fine, i0, -1) * (1.0 - w)
                + np.take_along_axis(img_fine, i1, -1) * w)

    # Displacement lives on a coarse bilinear knot grid (the smoothness
    # model); d = Wx @ C @ Wy'. Build the pixel-by-knot basis.
    def knot_basis(n, spacing):
        knots = np.arange(0, n - 1 + spacing, spacing, dtype=float)
        knots[-1] = min(knots[-1], n - 1.0)
        w = np.zeros((n, knots.size))
        pos = np.arange(n, dtype=float)
        for j, kx in enumerate(knots):
            w[:, j] = np.clip(1.0 - np.abs(pos - kx) / spacing, 0.0, 1.0)
        return w / np.maximum(w.sum(axis=1, keepdims=True), 1e-12)

    spacing = 6
    wx, wy = knot_basis(nx, spacing), knot_basis(ny, spacing)
    kx_n, ky_n = wx.shape[1], wy.shape[1]
    basis = np.einsum("xi,yj->xyij", wx, wy).reshape(nx * ny, kx_n * ky_n)
    # y-derivative of the basis, for the Jacobian of the intensity factor
    dbasis = np.einsum("xi,yj->xyij", wx, np.gradient(wy, axis=0)).reshape(nx * ny, kx_n * ky_n)

    # Smoothness penalty on the knot grid: curvature plus a gentle
    # first-difference term so linear tilts cannot drift freely (only a
    # constant field is penalty-free).
    nk = kx_n * ky_n
    lap = np.zeros((nk, nk))
    grad_pen = np.zeros((nk, nk))
    for i in range(kx_n):
        for j in range(ky_n):
            row = i * ky_n + j
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < kx_n and 0 <= jj < ky_n:
                    lap[row, row] += 1.0
                    lap[row, ii * ky_n + jj] -= 1.0
                    grad_pen[row, row] += 0.5
                    grad_pen[row, ii * ky_n + jj] -= 0.5
    reg = lap.T @ lap + 0.3 * grad_pen

    # Only voxels with signal constrain the displacement; the background is
    # filled in by the smoothness penalty.
    wsup = gaussian_filter(((a + b) > 0.05 * (a + b).max()).astype(float), 1.0)

    # Global scalar init: a coarse exhaustive search over uniform shifts puts
    # the Gauss-Newton refinement inside its convergence basin even when the
    # mean displacement is large.
    step = 0.25
    cands = np.arange(-max_shift_px, max_shift_px + step / 2, step)
    total = np.empty(cands.size)
    for i, s in enumerate(cands):
        diff = warp(a_fine, -pol_up * s) - warp(b_fine, -pol_down * s)
        total[i] = float((wsup * diff * diff).sum())
    i0 = int(np.clip(np.argmin(total), 1, cands.size - 2))
    den0 = total[i0 - 1] - 2 * total[i0] + total[i0 + 1]
    frac0 = 0.5 * (total[i0 - 1] - total[i0 + 1]) / den0 if abs(den0) > 1e-30 else 0.0
    d_glob = float(cands[i0] + np.clip(frac0, -1.0, 1.0) * step)
    coef = np.full(kx_n * ky_n, d_glob)

    # Gauss-Newton on the knot coefficients: linearize the unwarp mismatch,
    # solve the regularized normal equations exactly (the grid is small), and
    # halve the step until the data residual actually drops. Unwarping
    # includes the intensity Jacobian (1 -/+ pol * d'): distortion compresses
    # or stretches signal along the phase-encode axis.
    lam = smoothness_weight * 0.002
    sqw = np.sqrt(wsup).ravel()

    def residual(c):
        disp = (basis @ c).reshape(nx, ny)
        dgrad = (dbasis @ c).reshape(nx, ny)
        a_s = warp(a_fine, -pol_up * disp)
        b_s = warp(b_fine, -pol_down * disp)
        au = a_s * (1.0 - pol_up * dgrad)
        bd = b_s * (1.0 - pol_down * dgrad)
        return a_s, b_s, (au - bd).ravel() * sqw

    for _ in range(16):
        a_s, b_s, r = residual(coef)
        # d(r)/d(coef): transport term through the basis plus the intensity
        # Jacobian term through the basis y-derivative.
        g1 = (-pol_up * np.gradient(a_s, axis=-1)
              + pol_down * np.gradient(b_s, axis=-1)).ravel()
        g2 = (-pol_up * a_s + pol_down * b_s).ravel()
        jb = basis * (g1 * sqw)[:, None] + dbasis * (g2 * sqw)[:, None]
        gram = jb.T @ jb
        scale = max(np.trace(gram) / gram.shape[0], 1e-12)
        step = np.linalg.solve(gram + lam * scale * reg,
                               -jb.T @ r - lam * scale * (reg @ coef))
        rnorm = np.linalg.norm(r)
        eta = 1.0
        for _ in range(6):
            if np.linalg.norm(residual(coef + eta * step)[2]) <= rnorm:
                break
            eta /= 2
        else:
            break
        coef = coef + eta * step

    # Model selection per region: keep the locally varying fit only where it
    # reduces the mismatch clearly below the uniform-shift fit, so residual
    # reconstruction artifacts cannot pull a truly uniform field apart.
    r_knot = residual(coef)[2].reshape(nx, ny) ** 2
    r_glob = residual(np.full_like(coef, d_glob))[2].reshape(nx, ny) ** 2
    sig_sel = 6.0
    loc_knot = gaussian_filter(r_knot, sig_sel)
    loc_glob = gaussian_filter(r_glob, sig_sel)
    improve = np.where(loc_glob > 1e-12, 1.0 - loc_knot / np.maximum(loc_glob, 1e-12), 0.0)
    w_sel = np.clip((improve - 0.25) / 0.25, 0.0, 1.0)
    disp = (basis @ coef).reshape(nx, ny)
    disp = w_sel * disp + (1.0 - w_sel) * d_glob
    esp_s = spec_up.echo_spacing_ms * 1e-3
    n_y = spec_up.n_ky_full
    return disp * spec_up.r_inplane / (esp_s * n_y)
