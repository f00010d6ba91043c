"""Per-shot EPI forward model and exact adjoints.

Conventions: image and k-space arrays end in (x, y) = (readout, phase encode),
both centered with DC at index N//2. Off-resonance phase accrues per acquired
ky line according to that line's time offset from the echo center, applied in
image space before the transform (equivalently: hybrid x-ky modulation).
Wave PSFs multiply in hybrid (kx, y) space between the x and y transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import as_array
from .numerics import fftc_axis, ifftc_axis

#: Gyromagnetic ratio of 1H in Hz/T.
GAMMA_HZ_PER_T = 42.577e6


# ---------------------------------------------------------------------------
# Shot geometry


@dataclass
class ShotSpec:
    """One EPI shot's sampling geometry.

    Acquired ky lines are {ky_shift + m * r_inplane} restricted to the
    partial-Fourier window (the early, most negative fraction of ky is
    omitted). Line times are affine in acquired-line ordinal, zero at the
    line nearest the ky center, with the sign set by blip polarity.
    """

    n_ky_full: int
    r_inplane: int = 1
    ky_shift: int = 0
    pf_fraction: float = 1.0
    blip_polarity: int = 1
    echo_spacing_ms: float = 1.0

    def __post_init__(self):
        if self.r_inplane < 1:
            raise ValueError("r_inplane must be >= 1")
        if not (0 <= self.ky_shift < self.r_inplane):
            raise ValueError("ky_shift must satisfy 0 <= shift < r_inplane")
        if not (0.5 < self.pf_fraction <= 1.0):
            raise ValueError("pf_fraction must lie in (0.5, 1]")
        if self.blip_polarity not in (1, -1):
            raise ValueError("blip_polarity must be +1 or -1")


def shot_mask(spec: ShotSpec):
    """Acquired ky indices (ascending) and their line times in ms."""
    n = spec.n_ky_full
    ky = np.arange(spec.ky_shift, n, spec.r_inplane)
    # Partial Fourier drops the first (1 - pf) of the ky range.
    ky = ky[ky >= (1.0 - spec.pf_fraction) * n - 1e-9]
    if ky.size == 0:
        raise ValueError("shot acquires no ky lines")
    center_ordinal = int(np.argmin(np.abs(ky - n // 2)))
    times = spec.echo_spacing_ms * (np.arange(ky.size) - center_ordinal) * spec.blip_polarity
    return ky, times


@dataclass
class SamplingPlan:
    """Resolved per-shot sampling: which samples, when, and with which parity."""

    n_kx: int
    n_ky: int
    ky_indices: np.ndarray
    times_ms: np.ndarray
    parity: np.ndarray  # 0 even / 1 odd per acquired line, by readout order
    kx_keep: np.ndarray | None = None  # boolean over kx; None = all

    @classmethod
    def from_spec(cls, spec: ShotSpec, n_kx: int, multiband: int = 1) -> "SamplingPlan":
        ky, times = shot_mask(spec)
        parity = np.arange(ky.size) % 2
        kx_keep = None
        if multiband > 1:
            kx = np.arange(n_kx)
            kx_keep = (kx - n_kx // 2) % multiband == 0
        return cls(n_kx, spec.n_ky_full, ky, times, parity, kx_keep)

    @property
    def n_lines(self) -> int:
        return self.ky_indices.size

    def sample_count(self) -> int:
        per_line = self.n_kx if self.kx_keep is None else int(self.kx_keep.sum())
        return per_line * self.n_lines

    def ky_sample_mask(self) -> np.ndarray:
        """Boolean (n_kx, n_ky) mask of acquired samples."""
        m = np.zeros((self.n_kx, self.n_ky), dtype=bool)
        m[:, self.ky_indices] = True
        if self.kx_keep is not None:
            m &= self.kx_keep[:, None]
        return m

    def reflected(self) -> "SamplingPlan":
        """Point reflection about DC: the geometry of conjugate (virtual-coil) data."""
        ky_v = (self.n_ky - self.ky_indices) % self.n_ky
        order = np.argsort(ky_v)
        kx_keep = None
        if self.kx_keep is not None:
            kx = np.arange(self.n_kx)
            kx_keep = self.kx_keep[(self.n_kx - kx) % self.n_kx]
        return SamplingPlan(self.n_kx, self.n_ky, ky_v[order], -self.times_ms[order],
                            self.parity[order], kx_keep)


def reflect_kspace(k: np.ndarray) -> np.ndarray:
    """conj(d(-k)) on the DC-centered grid, over the last two axes."""
    rev = k[..., (k.shape[-2] - np.arange(k.shape[-2])) % k.shape[-2], :]
    rev = rev[..., (k.shape[-1] - np.arange(k.shape[-1])) % k.shape[-1]]
    return np.conj(rev)


# ---------------------------------------------------------------------------
# Wave PSFs


@dataclass
class WaveParams:
    amplitude_mt_m: float = 0.0
    cycles: float = 1.0
    readout_ms: float = 0.5
    delay_samples: float = 0.0


@dataclass
class WavePsf:
    """Unit-modulus even/odd point-spread modulations over (kx, y)."""

    psf_even: np.ndarray
    psf_odd: np.ndarray
    params: WaveParams = field(default_factory=WaveParams)

    def select(self, parity: int) -> np.ndarray:
        return self.psf_even if parity == 0 else self.psf_odd


def wave_build_psf(params: WaveParams, n_kx: int, n_y: int, fov_y_m: float = 0.22) -> WavePsf:
    """Integrate the sinusoidal readout gradient into even/odd PSFs.

    The gradient moment is integrated by the trapezoidal rule on a 10x
    oversampled raster. Odd lines retrace the same trajectory time-reversed
    (so at zero delay they see the identical corkscrew as a function of kx)
    and may be offset by a fractional sample delay along the readout.
    """
    if params.cycles < 1 or params.amplitude_mt_m < 0:
        raise ValueError("need cycles >= 1 and amplitude >= 0")
    t_ro = params.readout_ms * 1e-3
    dt = t_ro / n_kx
    raster = np.linspace(0.0, t_ro, 10 * n_kx + 1)
    grad = params.amplitude_mt_m * 1e-3 * np.sin(2 * np.pi * params.cycles * raster / t_ro)
    moment = np.concatenate([[0.0], np.cumsum((grad[1:] + grad[:-1]) / 2) * (raster[1] - raster[0])])
    # A balanced pre-winder centers the corkscrew on each ky line: the moment
    # oscillates about zero instead of accumulating a net ky offset.
    if moment.size:
        moment = moment - np.trapezoid(moment, raster) / t_ro

    t_samples = (np.arange(n_kx) + 0.5) * dt
    ky_even = GAMMA_HZ_PER_T * np.interp(t_samples, raster, moment)
    t_odd = np.clip(t_samples - params.delay_samples * dt, 0.0, t_ro)
    ky_odd = GAMMA_HZ_PER_T * np.interp(t_odd, raster, moment)

    y = (np.arange(n_y) - n_y // 2) * (fov_y_m / n_y)
    psf_even = np.exp(2j * np.pi * ky_even[:, None] * y[None, :])
    psf_odd = np.exp(2j * np.pi * ky_odd[:, None] * y[None, :])
    return WavePsf(psf_even, psf_odd, params)


def wave_encode(image, psf: WavePsf, line_parity_map) -> np.ndarray:
    """Full-grid wave-modulated k-space: per ky line, x-transform, multiply the
    line's parity PSF in hybrid (kx, y) space, then y-transform."""
    img = as_array(image)
    parity = np.asarray(line_parity_map)
    if parity.shape != (img.shape[-1],):
        raise ValueError("line_parity_map must assign a parity to every ky line")
    h = fftc_axis(img, -2)
    k_even = fftc_axis(h * psf.psf_even, -1)
    k_odd = fftc_axis(h * psf.psf_odd, -1)
    return np.where(parity == 0, k_even, k_odd)


def wave_decode(kspace, psf: WavePsf, line_parity_map) -> np.ndarray:
    """Conjugate-PSF deconvolution of fully sampled wave k-space.

    Exact whenever all acquired lines share one PSF (single parity present, or
    even == odd, which holds at zero delay)."""
    k = as_array(kspace)
    parity = np.asarray(line_parity_map)
    out = np.zeros_like(k, dtype=complex)
    for p in (0, 1):
        lines = parity == p
        if not lines.any():
            continue
        sel = np.zeros_like(k)
        sel[..., lines] = k[..., lines]
        h = ifftc_axis(sel, -1) * np.conj(psf.select(p))
        out += fftc_axis(h, -1)
    return ifftc_axis(ifftc_axis(out, -1), -2)


# ---------------------------------------------------------------------------
# gSlider RF slab encoding


@dataclass
class GSliderEncoding:
    """RF slab-encoding matrix (n_rf x n_subslices), rows at equal energy."""

    a_matrix: np.ndarray

    def __post_init__(self):
        self.a_matrix = np.asarray(self.a_matrix)
        if self.a_matrix.ndim != 2:
            raise ValueError("encoding matrix must be 2-d")

    @property
    def n_rf(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_subslices(self) -> int:
        return self.a_matrix.shape[1]

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.a_matrix))

    @classmethod
    def phase_dither(cls, n: int = 5) -> "GSliderEncoding":
        """Ones with an imaginary-unit diagonal, rows normalized to unit energy."""
        a = np.ones((n, n), dtype=complex) + (1j - 1.0) * np.eye(n)
        return cls(a / np.linalg.norm(a, axis=1, keepdims=True))

    @classmethod
    def sign_dither(cls, n: int = 5) -> "GSliderEncoding":
        """Ones with a -1 diagonal: a real basis compatible with real-valued
        processing (slab images stay signed-real for real sub-slice signals)."""
        a = np.ones((n, n)) - 2.0 * np.eye(n)
        return cls(a / np.linalg.norm(a, axis=1, keepdims=True))


def gslider_encode(subslice_signals, enc: GSliderEncoding) -> np.ndarray:
    """Slab signals: slab[rf] = sum_j A[rf, j] * subslice[j]."""
    sub = as_array(subslice_signals)
    if sub.shape[0] != enc.n_subslices:
        raise ValueError(
            f"{sub.shape[0]} sub-slices but encoding expects {enc.n_subslices}"
        )
    return np.tensordot(enc.a_matrix, sub, axes=(1, 0))


# ---------------------------------------------------------------------------
# The shot operator: coils -> off-resonance phase -> (wave) -> masked DFT


def coil_array(coils) -> np.ndarray:
    """Unwrap a CoilSet (or pass sensitivities through)."""
    return as_array(getattr(coils, "sensitivities", coils))


class ShotOperator:
    """Forward/adjoint encoding of one shot for one coil block.

    Precomputes the per-line off-resonance modulation tensor; a zero or absent
    field map collapses all lines into one transform group.
    """

    def __init__(self, coils, plan: SamplingPlan, field_map_hz=None, wave: WavePsf | None = None):
        self.coils = coil_array(coils).astype(complex)
        if self.coils.ndim != 3:
            raise ValueError("coils must be (channel, x, y)")
        self.plan = plan
        self.wave = wave
        nx, ny = self.coils.shape[-2:]
        if (nx, ny) != (plan.n_kx, plan.n_ky):
            raise ValueError(f"coils {self.coils.shape[-2:]} vs plan ({plan.n_kx}, {plan.n_ky})")
        fmap = None if field_map_hz is None else as_array(field_map_hz)
        if fmap is not None and not np.any(fmap):
            fmap = None
        if fmap is not None and fmap.shape != (nx, ny):
            raise ValueError(f"field map shape {fmap.shape} != ({nx}, {ny})")
        self.modulation = None
        if fmap is not None:
            self.modulation = np.exp(
                2j * np.pi * fmap[None] * (plan.times_ms[:, None, None] * 1e-3)
            )
        self._groups = self._build_groups()

    def _build_groups(self):
        """(line-subset, modulation index or None, parity) transform groups."""
        groups = []
        if self.modulation is None and self.wave is None:
            groups.append((np.arange(self.plan.n_lines), None, 0))
        elif self.modulation is None:
            for p in (0, 1):
                idx = np.flatnonzero(self.plan.parity == p)
                if idx.size:
                    groups.append((idx, None, p))
        else:
            for i in range(self.plan.n_lines):
                groups.append((np.array([i]), i, int(self.plan.parity[i])))
        return groups

    @property
    def shape(self) -> tuple[int, int]:
        return self.coils.shape[-2:]

    def forward(self, image) -> np.ndarray:
        """Image (x, y) -> per-channel k-space, zero at unacquired samples."""
        x = as_array(image)
        if x.shape != self.shape:
            raise ValueError(f"image shape {x.shape} != {self.shape}")
        cimg = self.coils * x[None]
        k = np.zeros_like(cimg)
        for idx, mod_i, parity in self._groups:
            src = cimg if mod_i is None else cimg * self.modulation[mod_i][None]
            h = fftc_axis(src, -2)
            if self.wave is not None:
                h = h * self.wave.select(parity)[None]
            kf = fftc_axis(h, -1)
            cols = self.plan.ky_indices[idx]
            k[:, :, cols] = kf[:, :, cols]
        if self.plan.kx_keep is not None:
            k *= self.plan.kx_keep[None, :, None]
        return k

    def adjoint(self, kspace) -> np.ndarray:
        """Exact adjoint under the unitary-DFT inner products."""
        k = as_array(kspace).astype(complex)
        if k.shape != self.coils.shape:
            raise ValueError(f"k-space shape {k.shape} != {self.coils.shape}")
        if self.plan.kx_keep is not None:
            k = k * self.plan.kx_keep[None, :, None]
        acc = np.zeros_like(k)
        for idx, mod_i, parity in self._groups:
            cols = self.plan.ky_indices[idx]
            sel = np.zeros_like(k)
            sel[:, :, cols] = k[:, :, cols]
            h = ifftc_axis(sel, -1)
            if self.wave is not None:
                h = h * np.conj(self.wave.select(parity))[None]
            m = ifftc_axis(h, -2)
            if mod_i is not None:
                m = m * np.conj(self.modulation[mod_i])[None]
            acc += m
        return (np.conj(self.coils) * acc).sum(axis=0)

    def normal(self, image) -> np.ndarray:
        return self.adjoint(self.forward(image))


def encode_shot(image, coils, field_map_hz, spec: ShotSpec, multiband: int = 1,
                wave: WavePsf | None = None) -> np.ndarray:
    """One-call forward encode; see ShotOperator for the model."""
    c = coil_array(coils)
    plan = SamplingPlan.from_spec(spec, c.shape[-2], multiband)
    return ShotOperator(c, plan, field_map_hz, wave).forward(image)


def adjoint_shot(kspace, coils, field_map_hz, spec: ShotSpec, multiband: int = 1,
                 wave: WavePsf | None = None) -> np.ndarray:
    """One-call adjoint of encode_shot."""
    c = coil_array(coils)
    plan = SamplingPlan.from_spec(spec, c.shape[-2], multiband)
    return ShotOperator(c, plan, field_map_hz, wave).adjoint(kspace)


# ---------------------------------------------------------------------------
# Simultaneous multi-slice via readout-extended FOV


def sms_readout_extend(slice_images, coil_sets):
    """Concatenate slices along the readout axis; each slice's sensitivities
    keep support only on their own segment. With one slice this is the
    identity. kx undersampling by the multiband factor is applied by the
    sampling plan, not here."""
    imgs = [as_array(s) for s in slice_images]
    coils = [coil_array(c) for c in coil_sets]
    if len(imgs) != len(coils):
        raise ValueError("need one coil set per slice")
    shape = imgs[0].shape
    if any(s.shape != shape for s in imgs):
        raise ValueError("slice extents differ")
    nc = coils[0].shape[0]
    if any(c.shape != (nc,) + shape for c in coils):
        raise ValueError("coil extents differ")
    mb = len(imgs)
    ext_img = np.concatenate(imgs, axis=0)
    ext_coils = np.zeros((nc, mb * shape[0], shape[1]), dtype=complex)
    for s in range(mb):
        ext_coils[:, s * shape[0] : (s + 1) * shape[0], :] = coils[s]
    return ext_img, ext_coils


def sms_split(extended_image, multiband: int):
    """Inverse of the readout concatenation."""
    arr = as_array(extended_image)
    if arr.shape[-2] % multiband:
        raise ValueError("extended readout extent not divisible by multiband")
    nx = arr.shape[-2] // multiband
    return [arr[..., s * nx : (s + 1) * nx, :] for s in range(multiband)]
