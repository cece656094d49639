"""Deterministic line-of-sight channel and linear-array response model.

Everything here is a pure function of immutable inputs; the heavy paths are
vectorized over slots and users.  The array responds to a user through a
single elevation-derived angle (equivalently, through range alone):
cross-track bearing is not modeled, so users at equal distance from the
transmitter are indistinguishable to the array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import AntennaLayout, BeamformerSet, Scenario, Trajectory

__all__ = [
    "ChannelSnapshot",
    "steering_angle",
    "steering_vector",
    "path_loss",
    "squared_distance",
    "snapshot",
    "sinr",
    "sinr_matrix",
    "rate",
    "total_rate",
    "beam_gain",
    "beam_pattern",
]

TWO_PI = 2.0 * np.pi


def positions(Q) -> np.ndarray:
    """Full position array (N+1, 2) from a Trajectory or a raw array."""
    q = Q.q if isinstance(Q, Trajectory) else np.asarray(Q, dtype=float)
    return np.atleast_2d(q)


def coords(X) -> np.ndarray:
    """Element coordinates (N, M) from an AntennaLayout or a raw array."""
    x = X.x if isinstance(X, AntennaLayout) else np.asarray(X, dtype=float)
    return np.atleast_2d(x)


def weights(W) -> np.ndarray:
    """Beamforming weights (N, K, M) from a BeamformerSet or a raw array."""
    w = W.w if isinstance(W, BeamformerSet) else np.asarray(W, dtype=complex)
    return w


def squared_distance(q, s, H: float):
    """Squared 3D separation ||q - s||^2 + H^2 between UAV and ground point."""
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.sum((q - s) ** 2, axis=-1) + H * H


def steering_angle(q, s, H: float):
    """Angle between the vertical and the UAV-to-user line of sight.

    arccos(H / sqrt(||q - s||^2 + H^2)), in [0, pi/2).
    """
    return np.arccos(H / np.sqrt(squared_distance(q, s, H)))


def steering_vector(x, theta, wavelength: float) -> np.ndarray:
    """Array response exp(j * (2*pi/wavelength) * x_m * cos(theta)).

    ``theta`` may be a scalar or an array; the element axis comes last.
    """
    x = np.asarray(x, dtype=float)
    phase = (TWO_PI / wavelength) * np.multiply.outer(
        np.cos(np.asarray(theta, dtype=float)), x
    )
    return np.exp(1j * phase)


def path_loss(q, s, H: float, chi: float):
    """Amplitude path loss sqrt(chi) / sqrt(||q - s||^2 + H^2)."""
    return np.sqrt(chi) / np.sqrt(squared_distance(q, s, H))


@dataclass
class ChannelSnapshot:
    """Geometry-derived channel state for every (slot, user) pair.

    All arrays are (N, K); row n corresponds to the UAV position in slot n+1.
    ``vartheta`` is the spatial frequency (2*pi/wavelength) * cos(theta) in
    rad/m, ``h`` the amplitude path loss, ``d`` the squared 3D distance.
    """

    theta: np.ndarray
    vartheta: np.ndarray
    h: np.ndarray
    d: np.ndarray
    sigma2: np.ndarray  # (K,)


def snapshot(s: Scenario, Q) -> ChannelSnapshot:
    """Evaluate angles, spatial frequencies, and path losses along a path."""
    q = positions(Q)[1:]  # (N, 2)
    diff = q[:, None, :] - s.users[None, :, :]
    d = np.sum(diff * diff, axis=-1) + s.H * s.H
    cos_theta = s.H / np.sqrt(d)
    return ChannelSnapshot(
        theta=np.arccos(cos_theta),
        vartheta=(TWO_PI / s.wavelength) * cos_theta,
        h=np.sqrt(s.chi) / np.sqrt(d),
        d=d,
        sigma2=s.noise.copy(),
    )


def sinr(k: int, n: int, snap: ChannelSnapshot, x_row, W) -> float:
    """Received SINR of user ``k`` in slot ``n`` (0-based slot index).

    Direct scalar evaluation; the vectorized twin is :func:`sinr_matrix`.
    """
    w = weights(W)
    x_row = np.asarray(x_row, dtype=float)
    a = np.exp(1j * snap.vartheta[n, k] * x_row)
    h = snap.h[n, k]
    amps = np.abs(h * (a.conj() @ w[n].T)) ** 2  # (K,)
    signal = amps[k]
    interference = float(np.sum(amps)) - signal
    return float(signal / (interference + snap.sigma2[k]))


def sinr_matrix(snap: ChannelSnapshot, X, W) -> np.ndarray:
    """SINR of every (slot, user) pair, shape (N, K)."""
    x = coords(X)
    w = weights(W)
    a = np.exp(1j * snap.vartheta[:, :, None] * x[:, None, :])  # (N, K, M)
    inner = np.einsum("nkm,nlm->nkl", a.conj(), w)
    p = (snap.h**2)[:, :, None] * np.abs(inner) ** 2  # (N, K, K)
    sig = np.einsum("nkk->nk", p)
    interference = p.sum(axis=2) - sig
    return sig / (interference + snap.sigma2[None, :])


def rate(gamma):
    """Achievable rate log2(1 + gamma) in bits per channel use."""
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


def total_rate(s: Scenario, Q, X, W) -> float:
    """Sum of per-user rates over all slots (the exact objective)."""
    snap = snapshot(s, Q)
    return float(np.sum(rate(sinr_matrix(snap, X, W))))


def beam_gain(x_row, w, theta, wavelength: float):
    """Transmit array gain |a(x, theta)^H w|^2; vectorized over theta."""
    a = steering_vector(x_row, theta, wavelength)
    return np.abs(a.conj() @ np.asarray(w, dtype=complex)) ** 2


def beam_pattern(x_row, w, wavelength: float, points: int = 1024):
    """Gain sampled on a uniform angle grid over [0, pi/2]."""
    theta = np.linspace(0.0, np.pi / 2.0, points)
    return theta, beam_gain(x_row, w, theta, wavelength)
