"""Extended-phase-graph signal simulation for single spin echoes.

Each echo time is simulated as its own 90deg excitation / single refocusing
pulse experiment (the TE-shuffled protocol acquires one echo per excitation),
using the configuration-state recursion: RF mixing of (F+, F-, Z) per
dephasing order, relaxation with T1 recovery into Z0, and unit gradient
shifts between pulse and echo."""

from __future__ import annotations

import numpy as np

#: Configuration-state orders tracked; plenty for the <= 10 pulses used here.
N_STATES = 32


def _rf_matrix(alpha_rad: float) -> np.ndarray:
    """Mixing of (F+, F-, Z) per order for a refocusing pulse about x (CPMG)."""
    c2, s2 = np.cos(alpha_rad / 2) ** 2, np.sin(alpha_rad / 2) ** 2
    ca, sa = np.cos(alpha_rad), np.sin(alpha_rad)
    return np.array([[c2, s2, sa], [s2, c2, -sa], [-0.5 * sa, 0.5 * sa, ca]])


def _relax(states: np.ndarray, tau_ms, t1_ms, t2_ms) -> np.ndarray:
    e2 = np.exp(-tau_ms / np.asarray(t2_ms, dtype=float))
    e1 = np.exp(-tau_ms / t1_ms)
    out = states.copy()
    out[0] *= e2
    out[1] *= e2
    out[2] *= e1
    out[2, 0] += 1.0 - e1
    return out


def _grad(states: np.ndarray) -> np.ndarray:
    out = states.copy()
    out[0] = np.roll(out[0], 1, axis=0)
    out[1] = np.roll(out[1], -1, axis=0)
    out[1, -1] = 0.0
    out[0, 0] = out[1, 0]
    return out


def _spin_echo(t2_ms, t1_ms, te_ms: float, refocus_rad: float) -> np.ndarray:
    """Echo amplitude(s) for 90y - TE/2 - refocus_x - TE/2; broadcasts over T2."""
    t2 = np.atleast_1d(np.asarray(t2_ms, dtype=float))
    # states: (component, order, t2-grid)
    states = np.zeros((3, N_STATES, t2.size))
    states[0, 0] = 1.0  # F+(0) after the 90deg excitation about y
    states[1, 0] = 1.0
    rf = _rf_matrix(refocus_rad)
    states = _relax(states, te_ms / 2, t1_ms, t2)
    states = _grad(states)
    states = np.einsum("ab,bkm->akm", rf, states)
    states = _grad(states)
    states = _relax(states, te_ms / 2, t1_ms, t2)
    return np.abs(states[0, 0])


def te_signal_epg(t2: float, t1: float, te_list, refocus_flip: float = 180.0) -> np.ndarray:
    """Spin-echo magnitudes at each TE for one (T2, T1) pair.

    refocus_flip is in degrees; 180 reduces to exp(-TE/T2).
    """
    te_list = np.atleast_1d(np.asarray(te_list, dtype=float))
    if t2 <= 0 or t1 <= 0:
        raise ValueError("relaxation times must be positive")
    if np.any(te_list <= 0):
        raise ValueError("echo times must be positive")
    alpha = np.deg2rad(refocus_flip)
    return np.array([_spin_echo(t2, t1, te, alpha)[0] for te in te_list])


def te_signal_epg_grid(t2_grid, t1: float, te_list, refocus_flip: float = 180.0) -> np.ndarray:
    """Vectorized variant: signal matrix (n_te, n_t2) over a T2 grid."""
    t2_grid = np.asarray(t2_grid, dtype=float)
    if np.any(t2_grid <= 0) or t1 <= 0:
        raise ValueError("relaxation times must be positive")
    te_list = np.atleast_1d(np.asarray(te_list, dtype=float))
    if np.any(te_list <= 0):
        raise ValueError("echo times must be positive")
    alpha = np.deg2rad(refocus_flip)
    return np.stack([_spin_echo(t2_grid, t1, te, alpha) for te in te_list])
