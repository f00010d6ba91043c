"""Slab super-resolution, signal dictionaries, TE-shuffled joint solves, and
dictionary template matching to T2 maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import GSliderEncoding
from .epg import te_signal_epg_grid
from .grids import as_array
from .numerics import fft2c, ifft2c


@dataclass
class Dictionary:
    """Signal evolution curves over a T2 grid; atoms are the unit-norm columns."""

    t2_grid: np.ndarray
    atoms: np.ndarray  # (n_te, n_t2), columns normalized
    raw_atoms: np.ndarray  # unnormalized signals
    te_list: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        if np.any(np.diff(self.t2_grid) <= 0):
            raise ValueError("t2_grid must be strictly increasing")


@dataclass
class TemporalBasis:
    """Orthonormal TE-domain basis (n_te x k)."""

    phi: np.ndarray
    k: int

    def project_residual(self, signals: np.ndarray) -> np.ndarray:
        """||(I - phi phi^H) s|| per column of signals."""
        s = np.asarray(signals)
        return np.linalg.norm(s - self.phi @ (self.phi.conj().T @ s), axis=0)


def remove_background_phase(image, lowpass_fraction: float = 0.25) -> np.ndarray:
    """Demodulate the smooth background phase and keep the real part.

    The phase estimate is the angle of the image reconstructed from a
    centered k-space window of the given per-axis fraction."""
    if not (0 < lowpass_fraction < 1):
        raise ValueError("lowpass_fraction must lie in (0, 1)")
    img = as_array(image).astype(complex)
    k = fft2c(img)
    win = np.zeros(img.shape[-2:], dtype=bool)
    nx, ny = img.shape[-2:]
    wx = max(1, int(round(lowpass_fraction * nx)))
    wy = max(1, int(round(lowpass_fraction * ny)))
    x0, y0 = nx // 2 - wx // 2, ny // 2 - wy // 2
    win[x0 : x0 + wx, y0 : y0 + wy] = True
    low = ifft2c(k * win)
    phase = np.where(np.abs(low) > 0, np.angle(low), 0.0)
    return np.real(img * np.exp(-1j * phase))


def gslider_solve(b, enc: GSliderEncoding, lam: float = 0.0) -> np.ndarray:
    """Closed-form Tikhonov slab unmixing: X = (A^H A + lam I)^-1 A^H b.

    ``b`` stacks the RF-encoded slab images in its leading axis."""
    barr = as_array(b)
    if barr.shape[0] != enc.n_rf:
        raise ValueError(f"{barr.shape[0]} slab volumes but encoding has {enc.n_rf} rows")
    a = enc.a_matrix
    gram = a.conj().T @ a + lam * np.eye(enc.n_subslices)
    try:
        solver = np.linalg.solve(gram, a.conj().T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("encoding normal matrix is singular; increase lam") from exc
    return np.tensordot(solver, barr, axes=(1, 0))


def build_dictionary(te_list, t2_grid=None, t1: float = 1000.0,
                     refocus_flip: float = 180.0) -> Dictionary:
    """Simulate spin-echo signals on a T2 grid (default 1..1000 ms, 1 ms steps)
    and normalize the columns."""
    te_list = np.atleast_1d(np.asarray(te_list, dtype=float))
    if te_list.size == 0:
        raise ValueError("te_list is empty")
    if t2_grid is None:
        t2_grid = np.arange(1.0, 1001.0)
    t2_grid = np.asarray(t2_grid, dtype=float)
    raw = te_signal_epg_grid(t2_grid, t1, te_list, refocus_flip)
    norms = np.linalg.norm(raw, axis=0)
    atoms = raw / np.where(norms > 0, norms, 1.0)
    return Dictionary(t2_grid, atoms, raw, te_list)


def temporal_basis(dictionary: Dictionary, k: int) -> TemporalBasis:
    """First k left singular vectors of the raw signal matrix."""
    n_te = dictionary.raw_atoms.shape[0]
    if not (1 <= k <= n_te):
        raise ValueError(f"k must lie in [1, {n_te}]")
    u, _, _ = np.linalg.svd(dictionary.raw_atoms, full_matrices=False)
    return TemporalBasis(u[:, :k], k)


@dataclass
class ShuffleSystem:
    """The joint slab-unmixing / TE-subspace system.

    ``sampling`` lists, per RF encoding, the TE indices it acquires; ``b``
    stacks the acquired slab images row-major in (rf, te-within-rf) order,
    shape (n_rows, ...). The design matrix couples sub-slices through the
    RF-encoding matrix and echo times through the temporal basis:
    row (r, e) of the system is kron(A[r, :], phi[e, :]).
    """

    enc: GSliderEncoding
    basis: TemporalBasis
    sampling: list[tuple[int, ...]]
    b: np.ndarray

    def __post_init__(self):
        if len(self.sampling) != self.enc.n_rf:
            raise ValueError("need one TE tuple per RF encoding")
        rows = sum(len(s) for s in self.sampling)
        if self.b.shape[0] != rows:
            raise ValueError(f"b has {self.b.shape[0]} rows, sampling implies {rows}")

    def design_matrix(self) -> np.ndarray:
        """(n_rows) x (n_subslices * k); unknown order: sub-slice major."""
        rows = []
        for r, tes in enumerate(self.sampling):
            for e in tes:
                rows.append(np.kron(self.enc.a_matrix[r, :], self.basis.phi[e, :]))
        return np.array(rows)

    @property
    def n_unknowns(self) -> int:
        return self.enc.n_subslices * self.basis.k


def default_shuffle_sampling(n_rf: int, n_te: int, tes_per_rf: int = 3) -> list[tuple[int, ...]]:
    """RF encoding r acquires TEs {r, r+1, ..., r+tes_per_rf-1} cyclically."""
    return [tuple((r + j) % n_te for j in range(tes_per_rf)) for r in range(n_rf)]


def shuffling_gslider_solve(system: ShuffleSystem, lam: float = 1e-4) -> np.ndarray:
    """Tikhonov-regularized least squares for the temporal coefficients.

    ``lam`` is relative to the largest eigenvalue of the normal matrix.
    Returns coefficients shaped (n_subslices, k, ...spatial).
    """
    m = system.design_matrix()
    gram = m.conj().T @ m
    eig_max = float(np.linalg.eigvalsh(gram)[-1])
    if lam == 0:
        rank = np.linalg.matrix_rank(gram)
        if rank < system.n_unknowns:
            raise ValueError(
                f"system is under-determined at lam=0 (effective rank {rank} "
                f"of {system.n_unknowns})"
            )
    solver = np.linalg.solve(gram + lam * eig_max * np.eye(gram.shape[0]), m.conj().T)
    b = system.b.reshape(system.b.shape[0], -1)
    c = solver @ b
    spatial = system.b.shape[1:]
    return c.reshape(system.enc.n_subslices, system.basis.k, *spatial)


def expand_te_series(coeffs: np.ndarray, basis: TemporalBasis) -> np.ndarray:
    """Recover TE-series images phi @ c, shaped (n_te, n_subslices, ...)."""
    return np.tensordot(basis.phi, coeffs, axes=(1, 1))


def t2_match(te_signals, dictionary: Dictionary, background_frac: float = 0.05):
    """Per-voxel dictionary match: argmax of |<normalized signal, atom>|.

    Proton density is |<signal, raw atom>| / ||raw atom||^2 for the winning
    atom. Voxels whose signal norm falls below background_frac times the
    99th-percentile norm get the T2 = 0 background sentinel.
    Returns (t2_map_ms, pd_map)."""
    s = as_array(te_signals)
    if s.shape[0] != dictionary.atoms.shape[0]:
        raise ValueError(
            f"signal has {s.shape[0]} TEs, dictionary has {dictionary.atoms.shape[0]}"
        )
    spatial = s.shape[1:]
    flat = s.reshape(s.shape[0], -1)
    norms = np.linalg.norm(flat, axis=0)
    thresh = background_frac * np.percentile(norms, 99)
    corr = np.abs(dictionary.atoms.conj().T @ flat)  # (n_t2, n_vox)
    idx = np.argmax(corr, axis=0)
    t2 = dictionary.t2_grid[idx]
    raw = dictionary.raw_atoms[:, idx]
    pd = np.abs(np.sum(np.conj(raw) * flat, axis=0)) / np.sum(np.abs(raw) ** 2, axis=0)
    fg = norms >= max(thresh, 1e-300)
    t2 = np.where(fg, t2, 0.0)
    pd = np.where(fg, pd, 0.0)
    return t2.reshape(spatial), pd.reshape(spatial)
