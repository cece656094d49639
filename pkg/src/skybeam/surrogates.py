"""Convex surrogate construction for the three block subproblems.

Three families of bounds live here, each tight at its expansion point:

* first-order linearizations of log2(interference + noise) used by the
  beamforming step,
* a distance linearization and a slack-based interference bound used by the
  trajectory step,
* global second-order cosine bounds expanded into quadratic forms of the
  element coordinates, used by the antenna-placement step.

All constructors are pure functions over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel
from .scenario import Scenario

__all__ = [
    "LOG2E",
    "cos_minorant",
    "cos_majorant",
    "BeamformingLinearization",
    "lambda_matrices",
    "beamforming_linearization",
    "QuadraticSurrogate",
    "assemble_signal_quadratic",
    "assemble_interference_quadratic",
    "TrajectorySurrogateTerms",
    "trajectory_surrogate",
]

LOG2E = math.log2(math.e)


# ---------------------------------------------------------------------------
# cosine bounds


def cos_minorant(beta, beta0):
    """Global lower bound on cos(beta), tight at beta0.

    Second-order expansion at beta0 with the curvature replaced by its worst
    case: cos(b0) - sin(b0)*(b - b0) - (b - b0)^2 / 2.
    """
    d = np.asarray(beta, dtype=float) - beta0
    return np.cos(beta0) - np.sin(beta0) * d - 0.5 * d * d


def cos_majorant(beta, beta0):
    """Global upper bound on cos(beta), tight at beta0 (mirror of the minorant)."""
    d = np.asarray(beta, dtype=float) - beta0
    return np.cos(beta0) - np.sin(beta0) * d + 0.5 * d * d


# ---------------------------------------------------------------------------
# beamforming-step linearization


@dataclass
class BeamformingLinearization:
    """Per-(slot, user) pieces of the concave beamforming surrogate.

    ``alpha`` is log2 of the interference-plus-noise power at the expansion
    point and ``Delta`` its gradient against the covariance variables, so the
    surrogate equals the true rate at ``W_ref`` and lower-bounds it elsewhere.
    """

    alpha: np.ndarray  # (N, K)
    Delta: np.ndarray  # (N, K, M, M)
    Lambda: np.ndarray  # (N, K, M, M), h^2 * a a^H
    sigma2: np.ndarray  # (K,)
    W_ref: np.ndarray  # (N, K, M, M) expansion-point covariances

    def _traces(self, W: np.ndarray) -> np.ndarray:
        # T[n, k, l] = tr(Lambda[n, k] @ W[n, l]), real for Hermitian pairs
        return np.einsum("nkij,nlji->nkl", self.Lambda, W).real

    def surrogate_value(self, W: np.ndarray) -> float:
        """Value of the surrogate objective at covariances ``W`` (bits)."""
        T = self._traces(W)
        total = T.sum(axis=2) + self.sigma2[None, :]
        D = np.einsum("nkij,nlji->nkl", self.Delta, W - self.W_ref).real
        cross = D.sum(axis=2) - np.einsum("nkk->nk", D)
        return float(np.sum(np.log2(total) - self.alpha - cross))

    def true_value(self, W: np.ndarray) -> float:
        """Exact sum rate at covariances ``W`` (bits)."""
        T = self._traces(W)
        sig = np.einsum("nkk->nk", T)
        interference = T.sum(axis=2) - sig
        return float(np.sum(np.log2(1.0 + sig / (interference + self.sigma2[None, :]))))


def lambda_matrices(snap: channel.ChannelSnapshot, X) -> np.ndarray:
    """Rank-one channel outer products h^2 * a a^H, shape (N, K, M, M)."""
    x = channel.coords(X)
    a = np.exp(1j * snap.vartheta[:, :, None] * x[:, None, :])  # (N, K, M)
    return (snap.h**2)[:, :, None, None] * np.einsum("nkm,nkp->nkmp", a, a.conj())


def beamforming_linearization(W_prev: np.ndarray, Lambda: np.ndarray,
                              sigma2: np.ndarray) -> BeamformingLinearization:
    """Linearize the interference log at the covariances ``W_prev``."""
    W_prev = np.asarray(W_prev, dtype=complex)
    Lambda = np.asarray(Lambda, dtype=complex)
    sigma2 = np.asarray(sigma2, dtype=float)
    scale = np.abs(W_prev).max(axis=(2, 3), initial=0.0)
    min_eig = np.linalg.eigvalsh(W_prev).min(axis=2)
    if np.any(min_eig < -1e-9 * np.maximum(scale, 1.0)):
        raise ValueError("W_prev contains a non-PSD covariance")
    T = np.einsum("nkij,nlji->nkl", Lambda, W_prev).real
    interference = T.sum(axis=2) - np.einsum("nkk->nk", T) + sigma2[None, :]
    alpha = np.log2(interference)
    Delta = LOG2E * Lambda / interference[:, :, None, None]
    return BeamformingLinearization(
        alpha=alpha, Delta=Delta, Lambda=Lambda, sigma2=sigma2, W_ref=W_prev
    )


# ---------------------------------------------------------------------------
# antenna-step quadratic forms


@dataclass
class QuadraticSurrogate:
    """Quadratic bound q(x) = x^T A x / 2 + b^T x + c on a beam power term.

    ``kind`` is ``"signal-minorant"`` (A negative semidefinite, q <= power)
    or ``"interference-majorant"`` (A positive semidefinite, q >= power);
    both are tight at the expansion layout.
    """

    A: np.ndarray  # (M, M) symmetric
    b: np.ndarray  # (M,)
    c: float
    kind: str

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x + self.b @ x + self.c)

    def curvature_violation(self) -> float:
        """Largest eigenvalue of the wrong sign (0 when the invariant holds)."""
        eigs = np.linalg.eigvalsh(0.5 * (self.A + self.A.T))
        if self.kind == "signal-minorant":
            return float(max(eigs.max(), 0.0))
        return float(max(-eigs.min(), 0.0))


def _quadratic_bound(w, vartheta: float, x_prev, sign: float,
                     kind: str) -> QuadraticSurrogate:
    # Expand sum_{p,q} |w_p w_q| * bound(cos(phase difference)) into a
    # quadratic in the element coordinates; sign=-1 gives the minorant.
    w = np.asarray(w, dtype=complex)
    x_prev = np.asarray(x_prev, dtype=float)
    u = np.abs(w)
    phi = np.angle(w)
    D = x_prev[:, None] - x_prev[None, :]
    theta0 = vartheta * D - (phi[:, None] - phi[None, :])
    U = np.outer(u, u)
    S = np.sin(theta0)
    C = np.cos(theta0)
    B = u.sum() * np.diag(u) - U  # PSD for u >= 0
    A = (2.0 * sign) * vartheta**2 * B
    b = -sign * 2.0 * vartheta**2 * (U * D).sum(axis=1) - 2.0 * vartheta * (U * S).sum(axis=1)
    c = float(
        (U * C).sum()
        + vartheta * (U * S * D).sum()
        + sign * 0.5 * vartheta**2 * (U * D * D).sum()
    )
    return QuadraticSurrogate(A=A, b=b, c=c, kind=kind)


def assemble_signal_quadratic(w_k, vartheta: float, x_prev) -> QuadraticSurrogate:
    """Concave quadratic lower bound on |a(x)^H w_k|^2, tight at ``x_prev``."""
    return _quadratic_bound(w_k, vartheta, x_prev, -1.0, "signal-minorant")


def assemble_interference_quadratic(w_l, vartheta: float, x_prev) -> QuadraticSurrogate:
    """Convex quadratic upper bound on |a(x)^H w_l|^2, tight at ``x_prev``.

    ``vartheta`` is the observing user's spatial frequency; amplitudes and
    phases come from the interfering weight vector ``w_l``.
    """
    return _quadratic_bound(w_l, vartheta, x_prev, +1.0, "interference-majorant")


# ---------------------------------------------------------------------------
# trajectory-step surrogate


@dataclass
class TrajectorySurrogateTerms:
    """Frozen-steering rate pieces for the trajectory step.

    With the steering vectors frozen at the previous path, the rate of user k
    in slot n is r1 - r2 with r1 = log2((Phi + Upsilon)/d + sigma^2) and
    r2 = log2(Upsilon/d + sigma^2), both functions of the squared 3D distance
    d alone.  ``r1`` below is the tangent minorant of the first term at
    ``d_prev``; the second term is handled through a slack z >= -ln d.
    """

    a_tilde: np.ndarray  # (N, K, M) frozen steering vectors
    Phi: np.ndarray  # (N, K) desired-signal numerators
    Upsilon: np.ndarray  # (N, K) interference numerators
    d_prev: np.ndarray  # (N, K) squared distances at the expansion path
    r1_const: np.ndarray  # (N, K)
    r1_slope: np.ndarray  # (N, K), nonnegative
    sigma2: np.ndarray  # (K,)
    H: float

    def r1(self, d) -> np.ndarray:
        """Affine-in-d minorant of the first rate term, tight at d_prev."""
        return self.r1_const - self.r1_slope * (np.asarray(d, dtype=float) - self.d_prev)

    def r2(self, z) -> np.ndarray:
        """Slack form log2(Upsilon * e^z + sigma^2) of the second rate term."""
        return np.log2(self.Upsilon * np.exp(np.asarray(z, dtype=float))
                       + self.sigma2[None, :])

    def frozen_first_term(self, d) -> np.ndarray:
        """Exact first term log2((Phi + Upsilon)/d + sigma^2), frozen steering."""
        tot = self.Phi + self.Upsilon
        return np.log2(tot / np.asarray(d, dtype=float) + self.sigma2[None, :])

    def frozen_rate(self, d) -> np.ndarray:
        """Exact per-(slot, user) rate at squared distances d, frozen steering."""
        d = np.asarray(d, dtype=float)
        return self.frozen_first_term(d) - np.log2(
            self.Upsilon / d + self.sigma2[None, :]
        )


def trajectory_surrogate(s: Scenario, W, X, Q_prev) -> TrajectorySurrogateTerms:
    """Build the trajectory-step surrogate pieces around the path ``Q_prev``."""
    snap_prev = channel.snapshot(s, Q_prev)
    x = channel.coords(X)
    w = channel.weights(W)
    a_tilde = np.exp(1j * snap_prev.vartheta[:, :, None] * x[:, None, :])
    inner = np.einsum("nkm,nlm->nkl", a_tilde.conj(), w)
    p = s.chi * np.abs(inner) ** 2  # (N, K, K)
    Phi = np.einsum("nkk->nk", p)
    Upsilon = p.sum(axis=2) - Phi
    d_prev = snap_prev.d
    tot = Phi + Upsilon
    denom = tot / d_prev + s.noise[None, :]
    return TrajectorySurrogateTerms(
        a_tilde=a_tilde,
        Phi=Phi,
        Upsilon=Upsilon,
        d_prev=d_prev,
        r1_const=np.log2(denom),
        r1_slope=LOG2E * tot / (d_prev**2) / denom,
        sigma2=s.noise.copy(),
        H=s.H,
    )
