"""Beamforming block: rank-relaxed covariance update and vector recovery.

With the path and the element layout fixed, the sum rate is concavified by
linearizing the interference log at the previous beamformers and relaxing the
rank-one constraint on the per-user covariances.  The relaxation is solved as
one conic program (jointly or per slot; the objective and constraints separate
over slots), after which beamforming vectors are recovered from the principal
eigenpairs, with a guarded randomization fallback for the rare non-rank-one
covariance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import channel, surrogates
from .conic import ConicProgram, Solution, SolveFailedError, solve
from .scenario import Scenario

__all__ = [
    "beamformer_matrices",
    "build_beamforming_program",
    "solve_beamforming_program",
    "psd_project",
    "RankOneExtraction",
    "extract_rank_one",
    "ExtractionStats",
    "extract_beamformers",
]

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))


def beamformer_matrices(W) -> np.ndarray:
    """Rank-one covariances w w^H of a beamformer set, shape (N, K, M, M)."""
    w = channel.weights(W)
    return np.einsum("nkm,nkp->nkmp", w, w.conj())


def build_beamforming_program(s: Scenario, X, Q, W_prev,
                              slots=None) -> ConicProgram:
    """Concave surrogate program over per-(slot, user) PSD covariances.

    Constraints: per-slot trace power budget and PSD cones (the rank
    constraint is dropped).  The objective value is in bits and equals the
    exact sum rate at the expansion point ``W_prev``.
    """
    snap = channel.snapshot(s, Q)
    Lambda = surrogates.lambda_matrices(snap, X)
    Wp = beamformer_matrices(W_prev)
    lin = surrogates.beamforming_linearization(Wp, Lambda, s.noise)
    slots = list(range(s.N)) if slots is None else [int(n) for n in slots]
    # log arguments are normalized by their expansion-point value (so they
    # start at 1), which keeps the exponential cones well scaled
    traces_prev = np.einsum("nkij,nlji->nkl", Lambda, Wp).real
    total_prev = traces_prev.sum(axis=2) + s.noise[None, :]

    prog = ConicProgram("beamforming")
    affine = 0.0
    const = 0.0
    log_terms = []
    for n in slots:
        Wv = [
            prog.add_variable(f"W_n{n}_k{k}", (s.M, s.M), hermitian=True)
            for k in range(s.K)
        ]
        for k in range(s.K):
            prog.add_cone_constraint("psd", Wv[k])
        prog.add_cone_constraint(
            "nonneg", s.P_max - cp.sum([cp.real(cp.trace(Wv[k])) for k in range(s.K)])
        )
        for k in range(s.K):
            sig2 = s.noise[k]
            c_nk = total_prev[n, k]
            arg = cp.Constant(sig2 / c_nk)
            for l in range(s.K):
                arg = arg + cp.real(cp.trace((Lambda[n, k] / c_nk) @ Wv[l]))
            log_terms.append((1.0 / LN2, arg))
            for l in range(s.K):
                if l == k:
                    continue
                affine = affine - cp.real(cp.trace(lin.Delta[n, k] @ Wv[l]))
                const += float(np.trace(lin.Delta[n, k] @ Wp[n, l]).real)
            const += float(np.log2(c_nk) - lin.alpha[n, k])
    prog.set_objective(affine + const, log_terms)
    prog.meta = {
        "slots": slots,
        "K": s.K,
        "M": s.M,
        "P_max": s.P_max,
        "Lambda": Lambda[slots],
        "sigma2": s.noise.copy(),
    }
    return prog


def psd_project(mat: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues to zero (interior-point output hygiene)."""
    mat = 0.5 * (mat + mat.conj().T)
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.maximum(vals, 0.0)) @ vecs.conj().T


def solve_beamforming_program(program: ConicProgram,
                              tol: float = 1e-8) -> tuple[np.ndarray, Solution]:
    """Solve the covariance program; returns (n_slots, K, M, M) PSD matrices.

    Raises :class:`SolveFailedError` (solution attached) when the backend does
    not reach optimality.
    """
    sol = solve(program, tol=tol)
    if sol.status != "optimal":
        raise SolveFailedError(
            f"beamforming solve failed: {sol.status} ({sol.message})", sol
        )
    slots = program.meta["slots"]
    K, M = program.meta["K"], program.meta["M"]
    P_max = program.meta["P_max"]
    mats = np.empty((len(slots), K, M, M), dtype=complex)
    for i, n in enumerate(slots):
        for k in range(K):
            mats[i, k] = psd_project(sol.values[f"W_n{n}_k{k}"])
    power = np.einsum("nkii->n", mats).real
    if np.any(power > P_max * (1.0 + 1e-6)):
        raise SolveFailedError(
            f"beamforming solve violated the power budget: max {power.max():.12g} W",
            sol,
        )
    # Interior-point output leaves de-allocated users with residual spread
    # covariances (the optimal face is flat in them); zero any covariance
    # whose own rate is negligible next to its slot's best user, so the
    # returned set is cleanly rank one where it matters.
    T = np.einsum("nkij,nlji->nkl", program.meta["Lambda"], mats).real
    sig = np.einsum("nkk->nk", T)
    rates = np.log2(
        1.0 + sig / (T.sum(axis=2) - sig + program.meta["sigma2"][None, :])
    )
    off = rates <= 1e-6 * rates.max(axis=1, keepdims=True)
    mats[off] = 0.0
    # Scaling a slot's covariances up to the full budget raises every SINR in
    # the slot (noise is the only fixed term), so filling the budget exactly
    # is always at least as good and also absorbs the PSD-clamp and zeroing
    # perturbations.
    power = np.einsum("nkii->n", mats).real
    active = power > 1e-3 * P_max
    if np.any(active):
        mats[active] *= (P_max / power[active])[:, None, None, None]
    return mats, sol


@dataclass
class RankOneExtraction:
    """Principal-eigenpair recovery of a beamforming vector from a covariance."""

    w: np.ndarray
    eigen_ratio: float  # second-to-first eigenvalue ratio
    reconstruction_error: float  # ||W - w w^H||_F
    inexact_rank_one: bool


def extract_rank_one(Wmat: np.ndarray, ratio_tol: float = 1e-3,
                     psd_tol: float = 1e-6, zero_tol: float = 0.0) -> RankOneExtraction:
    """Recover w = sqrt(lambda_1) * u_1; flag when the matrix is not rank one.

    The phase is normalized so the largest-magnitude entry is real positive
    (beamformers only matter up to a common phase).  Matrices whose leading
    eigenvalue is at most ``zero_tol`` are effectively switched-off users:
    they are extracted as usual but never flagged (the ratio of two noise
    eigenvalues says nothing about rank).
    """
    Wmat = np.asarray(Wmat, dtype=complex)
    Wmat = 0.5 * (Wmat + Wmat.conj().T)
    vals, vecs = np.linalg.eigh(Wmat)
    top = float(vals[-1])
    if vals[0] < -psd_tol * max(top, 1.0):
        raise ValueError(f"matrix is not PSD within tolerance (min eig {vals[0]:.3e})")
    if top <= 0.0:
        m = Wmat.shape[0]
        return RankOneExtraction(np.zeros(m, dtype=complex), 0.0, 0.0, False)
    w = np.sqrt(top) * vecs[:, -1]
    pivot = int(np.argmax(np.abs(w)))
    w = w * np.exp(-1j * np.angle(w[pivot]))
    ratio = float(max(vals[-2], 0.0) / top) if len(vals) > 1 else 0.0
    err = float(np.linalg.norm(Wmat - np.outer(w, w.conj())))
    inexact = ratio > ratio_tol and top > zero_tol
    return RankOneExtraction(w, ratio, err, inexact)


@dataclass
class ExtractionStats:
    total: int
    inexact: list[tuple[int, int]]
    fallback_used: int


def _slot_rate(snap: channel.ChannelSnapshot, x_row: np.ndarray, n: int,
               w_slot: np.ndarray) -> float:
    a = np.exp(1j * snap.vartheta[n, :, None] * x_row[None, :])  # (K, M)
    amps = (snap.h[n, :, None] ** 2) * np.abs(a.conj() @ w_slot.T) ** 2  # (K, K)
    sig = np.diag(amps)
    interference = amps.sum(axis=1) - sig
    return float(np.sum(np.log2(1.0 + sig / (interference + snap.sigma2))))


def extract_beamformers(mats: np.ndarray, s: Scenario,
                        snap: channel.ChannelSnapshot, X,
                        rng: np.random.Generator | None = None,
                        draws: int = 50, ratio_tol: float = 1e-3,
                        slots=None) -> tuple[np.ndarray, ExtractionStats]:
    """Recover beamforming vectors for every (slot, user) covariance.

    Where the eigenvalue ratio flags an inexact rank-one matrix, draw
    ``draws`` Gaussian candidates from the covariance, rescale each to the
    covariance trace (so the slot power budget is preserved), and keep the
    candidate with the best exact slot rate; the eigenpair candidate always
    competes.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = channel.coords(X)
    n_slots, K, M, _ = mats.shape
    slots = list(range(n_slots)) if slots is None else list(slots)
    zero_tol = 1e-6 * s.P_max
    w = np.zeros((n_slots, K, M), dtype=complex)
    inexact: list[tuple[int, int]] = []
    fallback = 0
    for i, n in enumerate(slots):
        for k in range(K):
            ext = extract_rank_one(mats[i, k], ratio_tol=ratio_tol, zero_tol=zero_tol)
            w[i, k] = ext.w
            if ext.inexact_rank_one:
                inexact.append((n, k))
    for i, n in enumerate(slots):
        flagged = [k for (nn, k) in inexact if nn == n]
        for k in flagged:
            fallback += 1
            target = float(np.trace(mats[i, k]).real)
            vals, vecs = np.linalg.eigh(mats[i, k])
            factor = vecs * np.sqrt(np.maximum(vals, 0.0))
            best_w = w[i, k]
            best_rate = _slot_rate(snap, x[n], n, w[i])
            for _ in range(draws):
                g = rng.standard_normal(M) + 1j * rng.standard_normal(M)
                cand = factor @ (g / np.sqrt(2.0))
                nrm = float(np.linalg.norm(cand))
                if nrm == 0.0:
                    continue
                cand *= np.sqrt(target) / nrm
                trial = w[i].copy()
                trial[k] = cand
                r = _slot_rate(snap, x[n], n, trial)
                if r > best_rate:
                    best_rate, best_w = r, cand
            w[i, k] = best_w
            log.info("rank-one fallback used at slot %d, user %d", n, k)
    return w, ExtractionStats(total=n_slots * K, inexact=inexact, fallback_used=fallback)
