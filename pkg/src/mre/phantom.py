"""Synthetic ground truth: digital phantoms with tissue parameters, smooth coil
sensitivities, smooth B0 field maps and per-shot polynomial phase corruption.

All generators are pure functions of (parameters, seed)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import fft2c, ifft2c


@dataclass
class Tissue:
    """One row of the tissue table: proton density, T2 and tensor eigenvalues."""

    name: str = "tissue"
    pd: float = 1.0
    t2_ms: float = 100.0
    # Diffusion tensor eigenvalues in mm^2/s, largest first.
    eigenvalues: tuple[float, float, float] = (1.7e-3, 0.2e-3, 0.2e-3)

    def __post_init__(self):
        if self.pd < 0:
            raise ValueError("proton density must be >= 0")
        if not (1.0 <= self.t2_ms <= 1000.0):
            raise ValueError("t2 must lie in [1, 1000] ms")


@dataclass
class PhantomVolume:
    """Piecewise-constant tissue maps over (slice, x, y).

    ``tensor`` stacks the 6 unique tensor components (Dxx, Dyy, Dzz, Dxy,
    Dxz, Dyz) in its leading axis.
    """

    proton_density: np.ndarray
    t2_map: np.ndarray
    field_map: np.ndarray
    tensor: np.ndarray
    label_map: np.ndarray
    tissues: list[Tissue] = field(default_factory=list)

    @property
    def n_slices(self) -> int:
        return self.proton_density.shape[0]

    @property
    def n(self) -> int:
        return self.proton_density.shape[-1]

    def plane(self, name: str, iz: int = 0) -> np.ndarray:
        """One 2D map, e.g. plane('proton_density')."""
        return getattr(self, name)[iz]

    def support(self, iz: int | None = None) -> np.ndarray:
        m = self.proton_density > 0
        return m if iz is None else m[iz]


@dataclass
class CoilSet:
    """Complex receive sensitivities over (channel, x, y)."""

    sensitivities: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.sensitivities.shape[0]

    def rss(self) -> np.ndarray:
        return np.sqrt((np.abs(self.sensitivities) ** 2).sum(axis=0))


@dataclass
class ShotPhase:
    """Smooth per-shot phase maps in radians, (shot, x, y)."""

    phase: np.ndarray

    @property
    def n_shots(self) -> int:
        return self.phase.shape[0]


def _norm_coords(n: int):
    v = (np.arange(n) - n / 2 + 0.5) / (n / 2)
    return np.meshgrid(v, v, indexing="ij")


def make_phantom(n: int, layout: str = "disks", tissue_table: list[Tissue] | None = None,
                 seed: int = 0, n_slices: int = 1) -> PhantomVolume:
    """Build a piecewise-constant phantom. Background label is 0 with PD 0.

    ``disks`` places one disk per tissue on a ring (radii vary per slice so a
    multi-slice phantom has genuine slice-direction structure).
    ``shepp_logan_like`` nests ellipses: a head-sized outline filled with the
    first tissue, then inner ellipses cycling through the rest.
    """
    if n < 16:
        raise ValueError("grid extent must be >= 16")
    if not tissue_table:
        raise ValueError("tissue table is empty")
    rng = np.random.default_rng(seed)
    xx, yy = _norm_coords(n)
    labels = np.zeros((n_slices, n, n), dtype=np.int32)

    if layout == "disks":
        n_t = len(tissue_table)
        angles = rng.uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(n_t) / max(n_t, 1)
        ring = 0.45 if n_t > 1 else 0.0
        base_r = 0.30 if n_t == 1 else min(0.26, 0.9 * np.pi * ring / max(n_t, 2))
        for iz in range(n_slices):
            scale = 1.0 - 0.12 * iz / max(n_slices - 1, 1)
            for t, ang in enumerate(angles):
                cx, cy = ring * np.cos(ang), ring * np.sin(ang)
                r = base_r * scale * (0.8 + 0.4 * ((t + iz) % 3) / 2.0)
                mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
                labels[iz][mask] = t + 1
    elif layout == "shepp_logan_like":
        for iz in range(n_slices):
            scale = 1.0 - 0.10 * iz / max(n_slices - 1, 1)
            head = (xx / (0.82 * scale)) ** 2 + (yy / (0.90 * scale)) ** 2 <= 1.0
            labels[iz][head] = 1
            inner = [(-0.28, 0.0, 0.28, 0.38, 0.3), (0.28, 0.0, 0.24, 0.34, -0.25),
                     (0.0, 0.32, 0.18, 0.18, 0.0), (0.0, -0.30, 0.14, 0.20, 0.0),
                     (0.0, 0.0, 0.08, 0.08, 0.0)]
            for t in range(1, len(tissue_table)):
                cx, cy, a, b, th = inner[(t - 1) % len(inner)]
                a, b = a * scale, b * scale
                u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
                v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
                labels[iz][(u / a) ** 2 + (v / b) ** 2 <= 1.0] = t + 1
    else:
        raise ValueError(f"unknown layout {layout!r}")

    pd = np.zeros_like(labels, dtype=float)
    t2 = np.zeros_like(pd)
    tensor = np.zeros((6,) + labels.shape)
    for t, tis in enumerate(tissue_table):
        mask = labels == t + 1
        pd[mask] = tis.pd
        t2[mask] = tis.t2_ms
        d = _oriented_tensor(tis.eigenvalues, rng)
        for c in range(6):
            tensor[c][mask] = d[c]
    return PhantomVolume(pd, t2, np.zeros_like(pd), tensor, labels, list(tissue_table))


def _oriented_tensor(eigenvalues, rng) -> np.ndarray:
    """Six unique components of R diag(ev) R^T for a seeded random rotation."""
    ev = np.asarray(eigenvalues, dtype=float)
    if np.any(ev < 0):
        raise ValueError("tensor eigenvalues must be >= 0")
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    d = q @ np.diag(ev) @ q.T
    return np.array([d[0, 0], d[1, 1], d[2, 2], d[0, 1], d[0, 2], d[1, 2]])


def simulate_coils(n: int, n_channels: int, seed: int = 0, profile: str = "ring",
                   width: float = 0.55, ring_radius: float = 1.05,
                   phase_scale: float = 2.5) -> CoilSet:
    """Smooth complex sensitivities: Gaussian lobes on a ring around the FOV
    with low-order polynomial phase, normalized to unit root-sum-of-squares
    (like autocalibrated sensitivity maps). ``profile='flat'`` gives all-ones
    coils. ``phase_scale`` controls how much encoding power the phase
    profiles add; small values give a weakly encoding array."""
    if n_channels < 1:
        raise ValueError("need at least one channel")
    if profile == "flat":
        return CoilSet(np.ones((n_channels, n, n), dtype=complex))
    if profile != "ring":
        raise ValueError(f"unknown coil profile {profile!r}")
    rng = np.random.default_rng(seed)
    xx, yy = _norm_coords(n)
    sens = np.zeros((n_channels, n, n), dtype=complex)
    for c in range(n_channels):
        ang = 2 * np.pi * c / n_channels + rng.uniform(-0.05, 0.05)
        cx, cy = ring_radius * np.cos(ang), ring_radius * np.sin(ang)
        mag = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width**2))
        coef = rng.uniform(-1.0, 1.0, size=5)
        ph = phase_scale * (coef[0] + 1.5 * coef[1] * xx + 1.5 * coef[2] * yy
                            + 0.5 * (coef[3] * xx * yy + coef[4] * (xx**2 - yy**2)))
        sens[c] = mag * np.exp(1j * ph)
    return CoilSet(sens / np.sqrt((np.abs(sens) ** 2).sum(axis=0)))


def simulate_field_map(n: int, amplitude_hz: float, pattern: str = "smooth_random",
                       seed: int = 0) -> np.ndarray:
    """B0 off-resonance map in Hz with max |field| <= amplitude_hz.

    smooth_random is band-limited: its spectrum is zero outside a disc of
    radius n/16 (an eighth of the Nyquist index n/2)."""
    if amplitude_hz < 0:
        raise ValueError("amplitude must be >= 0")
    if pattern == "constant":
        return np.full((n, n), float(amplitude_hz))
    if pattern == "linear":
        _, yy = _norm_coords(n)
        return amplitude_hz * yy / np.abs(yy).max() if amplitude_hz else np.zeros((n, n))
    if pattern != "smooth_random":
        raise ValueError(f"unknown field pattern {pattern!r}")
    if amplitude_hz == 0:
        return np.zeros((n, n))
    rng = np.random.default_rng(seed)
    k = fft2c(rng.standard_normal((n, n)))
    fx = np.arange(n) - n // 2
    rad = np.hypot(*np.meshgrid(fx, fx, indexing="ij"))
    k[rad > n / 16] = 0
    f = np.real(ifft2c(k))
    return amplitude_hz * f / np.abs(f).max()


def simulate_shot_phase(n: int, order: int, magnitude_rad: float, seed: int = 0,
                        n_shots: int = 1) -> ShotPhase:
    """Random (x, y) polynomials of total degree <= order, scaled so the grid
    maximum of |phase| equals magnitude_rad."""
    if order > 3:
        raise ValueError("polynomial order must be <= 3")
    rng = np.random.default_rng(seed)
    xx, yy = _norm_coords(n)
    phases = np.zeros((n_shots, n, n))
    terms = [(px, py) for px in range(order + 1) for py in range(order + 1)
             if px + py <= order]
    for s in range(n_shots):
        coef = rng.uniform(-1.0, 1.0, size=len(terms))
        ph = np.zeros((n, n))
        for c, (px, py) in zip(coef, terms):
            ph += c * xx**px * yy**py
        peak = np.abs(ph).max()
        phases[s] = magnitude_rad * ph / peak if peak > 0 and magnitude_rad > 0 else 0.0
    return ShotPhase(phases)
