"""Quantitative evaluation: NRMSE, pseudo-multiple-replica g-factor maps, and
log-linear diffusion tensor fitting with FA / primary-eigenvector output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import SamplingPlan, ShotOperator, ShotSpec
from .grids import as_array
from .numerics import cg_solve


def nrmse(x, ref, mask=None) -> float:
    """||x - ref|| / ||ref|| over the mask."""
    xa, ra = as_array(x), as_array(ref)
    if xa.shape != ra.shape:
        raise ValueError(f"shapes differ: {xa.shape} vs {ra.shape}")
    if mask is not None:
        m = as_array(mask).astype(bool)
        xa, ra = xa[m], ra[m]
    denom = np.linalg.norm(ra)
    if denom == 0:
        raise ValueError("reference is zero on the mask")
    return float(np.linalg.norm(xa - ra) / denom)


@dataclass
class GFactorMap:
    g: np.ndarray
    r_total: float
    n_replicas: int
    max_g: float
    mean_g: float


def _complex_std(stack: np.ndarray) -> np.ndarray:
    mean = stack.mean(axis=0)
    return np.sqrt((np.abs(stack - mean) ** 2).sum(axis=0) / (stack.shape[0] - 1))


def gfactor_pseudo_replica(recon, model, noise_sigma: float, n_replicas: int,
                           seed: int, image=None, support=None,
                           r_total: float | None = None, ref_iters: int = 20) -> GFactorMap:
    """Monte-Carlo noise-amplification map.

    g(r) = std over replicas of the accelerated recon at r, divided by the
    std of the fully sampled reference recon at r and by sqrt(R_total), with
    matched noise draws per replica pair. ``recon(noisy_shot_kspaces)`` must
    return the combined image for the acquisition the model describes. Noise
    sigma is relative to the peak magnitude of the fully sampled clean
    k-space. Deterministic per master seed.
    """
    if n_replicas < 50:
        raise ValueError("need at least 50 replicas")
    systems = model.systems()
    if any(len(ops) != 1 for ops in systems):
        raise ValueError("pseudo-replica expects single-block shots (no VC augmentation)")
    ops = [s[0] for s in systems]
    nx, ny = model.image_shape
    nc = model.coils.shape[0]
    img = np.zeros((nx, ny), dtype=complex) if image is None else as_array(image).astype(complex)
    clean = [op.forward(img) for op in ops]
    masks = [op.plan.ky_sample_mask() for op in ops]

    ref_plan = SamplingPlan.from_spec(ShotSpec(n_ky_full=ny), nx)
    ref_op = ShotOperator(model.coils, ref_plan, None, None)
    ref_clean = ref_op.forward(img)
    peak = float(np.abs(ref_clean).max())
    sigma_abs = noise_sigma * (peak if peak > 0 else 1.0)

    accel = np.empty((n_replicas, nx, ny), dtype=complex)
    ref = np.empty((n_replicas, nx, ny), dtype=complex)
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n_replicas)):
        rng = np.random.default_rng(ss)
        noise = sigma_abs / np.sqrt(2) * (
            rng.standard_normal((nc, nx, ny)) + 1j * rng.standard_normal((nc, nx, ny))
        )
        noisy = [clean[t] + noise * masks[t] for t in range(len(ops))]
        try:
            accel[i] = as_array(recon(noisy))
        except Exception as exc:
            raise RuntimeError(f"replica {i}: accelerated recon failed: {exc}") from exc
        rres = cg_solve(ref_op.normal, ref_op.adjoint(ref_clean + noise),
                        tol=1e-10, max_iters=ref_iters)
        ref[i] = rres.x

    std_a, std_r = _complex_std(accel), _complex_std(ref)
    if r_total is None:
        r_total = model.r_total()
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(std_r > 0, std_a / np.where(std_r > 0, std_r, 1) / np.sqrt(r_total), 0.0)
    m = np.ones((nx, ny), dtype=bool) if support is None else as_array(support).astype(bool)
    vals = g[m & (std_r > 0)]
    return GFactorMap(g, float(r_total), n_replicas,
                      float(vals.max()) if vals.size else 0.0,
                      float(vals.mean()) if vals.size else 0.0)


def fibonacci_directions(n: int) -> np.ndarray:
    """n roughly uniform unit vectors on the sphere (Fibonacci lattice)."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    return np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


@dataclass
class TensorFit:
    tensor: np.ndarray  # (6, ...) Dxx, Dyy, Dzz, Dxy, Dxz, Dyz
    fa: np.ndarray
    v1: np.ndarray  # (3, ...)
    mask: np.ndarray


def dti_fit(dwis, bvecs, bval: float, b0) -> TensorFit:
    """Log-linear least-squares tensor fit: ln(S/S0) = -b g^T D g per voxel.

    Voxels with non-positive b0 or any non-positive DWI are masked out and
    return zero tensor/FA/v1. Requires >= 6 directions spanning the tensor
    space."""
    s = as_array(dwis).astype(float)
    s0 = as_array(b0).astype(float)
    g = np.asarray(bvecs, dtype=float)
    if g.ndim != 2 or g.shape[1] != 3:
        raise ValueError("bvecs must be (n_dir, 3)")
    if s.shape[0] != g.shape[0]:
        raise ValueError(f"{s.shape[0]} DWIs for {g.shape[0]} directions")
    design = bval * np.stack([
        g[:, 0] ** 2, g[:, 1] ** 2, g[:, 2] ** 2,
        2 * g[:, 0] * g[:, 1], 2 * g[:, 0] * g[:, 2], 2 * g[:, 1] * g[:, 2],
    ], axis=1)
    if np.linalg.matrix_rank(design) < 6:
        raise ValueError("need at least 6 non-collinear diffusion directions")

    spatial = s.shape[1:]
    flat = s.reshape(s.shape[0], -1)
    flat0 = s0.reshape(-1)
    mask = (flat0 > 0) & np.all(flat > 0, axis=0)
    y = np.zeros_like(flat)
    y[:, mask] = -np.log(flat[:, mask] / flat0[mask])
    theta = np.linalg.lstsq(design, y, rcond=None)[0]  # (6, n_vox)
    theta[:, ~mask] = 0.0

    d = np.zeros((flat.shape[1], 3, 3))
    d[:, 0, 0], d[:, 1, 1], d[:, 2, 2] = theta[0], theta[1], theta[2]
    d[:, 0, 1] = d[:, 1, 0] = theta[3]
    d[:, 0, 2] = d[:, 2, 0] = theta[4]
    d[:, 1, 2] = d[:, 2, 1] = theta[5]
    evals, evecs = np.linalg.eigh(d)
    lam_norm = np.linalg.norm(evals, axis=1)
    dev = evals - evals.mean(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        fa = np.sqrt(1.5) * np.linalg.norm(dev, axis=1) / np.where(lam_norm > 0, lam_norm, 1)
    fa = np.clip(np.where(lam_norm > 0, fa, 0.0), 0.0, 1.0)
    v1 = evecs[:, :, 2]  # eigenvector of the largest eigenvalue
    fa[~mask] = 0.0
    v1[~mask] = 0.0
    return TensorFit(theta.reshape((6,) + spatial), fa.reshape(spatial),
                     v1.T.reshape((3,) + spatial), mask.reshape(spatial))
