"""Independent verifiers: closed forms, exhaustive search, and bound sampling.

Nothing here goes through the conic layer or the surrogate builders; expected
values come from closed forms, direct evaluation of the physics, generic NLP
multistarts, and exhaustive enumeration, so agreement with the solver stack is
evidence rather than tautology.  (:func:`sampled_bound_check` necessarily
imports the surrogate constructors, but only as the object under test; every
reference value is computed locally.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .scenario import Scenario

__all__ = [
    "mrt_closed_form_rate",
    "best_beamforming_rate",
    "GridOracleResult",
    "grid_oracle_antenna",
    "sampled_bound_check",
]

MAX_GRID_COMBOS = 10_000_000


def mrt_closed_form_rate(P: float, M: int, h: float, sigma2: float) -> float:
    """Single-user optimum log2(1 + P*M*h^2/sigma^2), valid for any layout."""
    return math.log2(1.0 + P * M * h * h / sigma2)


# ---------------------------------------------------------------------------
# generic sum-rate beamforming via NLP multistart


def _sum_rate(w_flat: np.ndarray, G: np.ndarray, noise: np.ndarray, K: int, M: int) -> float:
    w = w_flat[: K * M].reshape(K, M) + 1j * w_flat[K * M:].reshape(K, M)
    inner = G.conj() @ w.T  # inner[k, l] = g_k^H w_l
    p = np.abs(inner) ** 2
    sig = np.diag(p)
    interference = p.sum(axis=1) - sig
    return float(np.sum(np.log2(1.0 + sig / (interference + noise))))


def _starts(G: np.ndarray, noise: np.ndarray, P: float,
            rng: np.random.Generator, extra: int) -> list[np.ndarray]:
    K, M = G.shape
    norms = np.linalg.norm(G, axis=1)
    unit = G / norms[:, None]
    out = []
    mrt = np.sqrt(P / K) * unit
    out.append(mrt)
    for k in range(K):
        solo = np.zeros((K, M), dtype=complex)
        solo[k] = np.sqrt(P) * unit[k]
        out.append(solo)
    if K > 1 and M >= K and np.linalg.matrix_rank(G) == K:
        # zero-forcing directions with an equal power split
        pinv = np.linalg.pinv(G).T  # rows are the ZF directions
        zf = pinv / np.linalg.norm(pinv, axis=1)[:, None]
        out.append(np.sqrt(P / K) * zf)
    for _ in range(extra):
        g = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
        g *= np.sqrt(P / np.sum(np.abs(g) ** 2))
        out.append(g)
    return out


def best_beamforming_rate(G: np.ndarray, noise: np.ndarray, P: float,
                          seed: int = 0, extra_starts: int = 3,
                          polish: str = "all") -> tuple[float, np.ndarray]:
    """Best-found sum rate over beamformers under a total power budget.

    Multistart sequential quadratic programming on the exact rate (matched,
    single-user, zero-forcing, and random starts).  Exact for K = 1; for the
    tiny instances the grid oracle feeds it, the start set covers the known
    optimum structure.  Channels are rescaled to unit order internally; the
    returned weights are in physical units.  ``polish="best"`` runs the local
    ascent only from the best raw start (the cheap mode used while scanning
    a grid).
    """
    G = np.asarray(G, dtype=complex)
    noise = np.asarray(noise, dtype=float)
    K, M = G.shape
    scale = float(np.exp(np.mean(np.log(np.linalg.norm(G, axis=1)))))
    Gn = G / scale
    nn = noise / scale**2
    rng = np.random.default_rng(seed)

    def objective(w_flat):
        return -_sum_rate(w_flat, Gn, nn, K, M)

    constraint = {
        "type": "ineq",
        "fun": lambda w_flat: P - float(np.sum(w_flat**2)),
    }
    starts = []
    for w0 in _starts(Gn, nn, P, rng, extra_starts):
        flat0 = np.concatenate([w0.real.ravel(), w0.imag.ravel()])
        starts.append((_sum_rate(flat0, Gn, nn, K, M), flat0))
    starts.sort(key=lambda item: -item[0])
    best_rate, best_w = starts[0]
    to_polish = starts[:1] if polish == "best" else starts
    for _, flat0 in to_polish:
        res = minimize(
            objective, flat0, method="SLSQP", constraints=[constraint],
            options={"maxiter": 200, "ftol": 1e-12},
        )
        if res.x is None or not np.all(np.isfinite(res.x)):
            continue
        x = res.x
        total = float(np.sum(x**2))
        if total > P:
            x = x * np.sqrt(P / total)
        r = _sum_rate(x, Gn, nn, K, M)
        if r > best_rate:
            best_rate = r
            best_w = x
    w = best_w[: K * M].reshape(K, M) + 1j * best_w[K * M:].reshape(K, M)
    return best_rate, w


# ---------------------------------------------------------------------------
# exhaustive layout search for tiny single-slot instances


@dataclass
class GridOracleResult:
    layout: np.ndarray  # (M,) best element coordinates
    rate: float
    weights: np.ndarray  # (K, M) beamformers achieving the rate
    evaluations: dict = field(default_factory=dict)  # relative pattern -> rate
    refined_gain: float = 0.0


def _single_slot_channels(s: Scenario, q) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    d2 = np.sum((q - s.users) ** 2, axis=1) + s.H**2
    h = np.sqrt(s.chi) / np.sqrt(d2)  # (K,)
    vartheta = (2.0 * np.pi / s.wavelength) * s.H / np.sqrt(d2)
    return h, vartheta


def _layout_rate(x: np.ndarray, h: np.ndarray, vartheta: np.ndarray,
                 noise: np.ndarray, P: float, seed: int,
                 extra_starts: int = 3) -> tuple[float, np.ndarray]:
    G = h[:, None] * np.exp(1j * np.outer(vartheta, x))
    return best_beamforming_rate(G, noise, P, seed=seed, extra_starts=extra_starts)


def grid_oracle_antenna(s: Scenario, q, grid_step: float | None = None,
                        refine: bool = True, seed: int = 0,
                        top_refine: int = 5) -> GridOracleResult:
    """Exhaustive layout search for one slot at UAV position ``q``.

    Enumerates every ordered, spacing-feasible layout on the coordinate grid
    (default step: wavelength/8), solves the beamforming inner problem at each,
    and returns the maximum; ties go to the lexicographically lowest layout.
    Rates are invariant under rigid layout translation, so the inner solve is
    memoized on the relative element pattern.  ``refine`` polishes the few best
    patterns with a continuous joint (layout, weights) ascent so the result is
    a trustworthy upper reference for continuous optimizers.

    Guards: M <= 3 and at most ``MAX_GRID_COMBOS`` enumerated layouts.
    """
    if s.M > 3:
        raise ValueError(f"grid oracle supports at most 3 elements, got M = {s.M}")
    step = s.wavelength / 8.0 if grid_step is None else float(grid_step)
    points = np.arange(0.0, s.L + 0.5 * step, step)
    n_pts = len(points)
    gap = max(int(math.ceil(s.d_min / step - 1e-12)), 0)
    reduced = n_pts - (s.M - 1) * (gap - 1) if gap >= 1 else n_pts + (s.M - 1)
    combos = math.comb(max(reduced, 0), s.M) if reduced >= s.M else 0
    if combos > MAX_GRID_COMBOS:
        raise ValueError(f"grid too large: {combos} layouts exceed {MAX_GRID_COMBOS}")
    if combos == 0:
        raise ValueError("grid too coarse: no spacing-feasible layout on it")

    h, vartheta = _single_slot_channels(s, q)
    noise = s.noise
    rng = np.random.default_rng(seed)
    memo: dict[tuple[int, ...], tuple[float, np.ndarray, np.ndarray]] = {}

    def patterns(prefix: tuple[int, ...]):
        if len(prefix) == s.M:
            yield prefix
            return
        start = prefix[-1] + gap if prefix else 0
        for i in range(start, n_pts - gap * (s.M - 1 - len(prefix))):
            yield from patterns(prefix + (i,))

    best_rate = -np.inf
    best_key: tuple[int, ...] | None = None
    for combo in patterns(()):
        key = tuple(i - combo[0] for i in combo)
        if key not in memo:
            x = points[list(key)]
            inner_seed = int(rng.integers(0, 2**31 - 1))
            r, w = _layout_rate(x, h, vartheta, noise, s.P_max, inner_seed,
                                extra_starts=1)
            memo[key] = (r, x, w)
        r = memo[key][0]
        if r > best_rate:
            best_rate = r
            best_key = key

    result = GridOracleResult(
        layout=memo[best_key][1].copy(),
        rate=best_rate,
        weights=memo[best_key][2].copy(),
        evaluations={k: v[0] for k, v in memo.items()},
    )
    if not refine:
        return result

    ranked = sorted(memo.items(), key=lambda kv: -kv[1][0])[:top_refine]
    K, M = s.K, s.M
    for _key, (r0, x0, w0_grid) in ranked:
        # re-solve the inner problem with a wider multistart before the joint
        # polish (the grid scan economizes on random starts)
        r_full, w0 = _layout_rate(x0, h, vartheta, noise, s.P_max,
                                  seed=seed + 17, extra_starts=4)
        if r_full > result.rate:
            result.refined_gain = r_full - best_rate
            result.rate = r_full
            result.layout = x0.copy()
            result.weights = w0.copy()
        flat0 = np.concatenate([x0, w0.real.ravel(), w0.imag.ravel()])

        def objective(v):
            x = v[:M]
            G = h[:, None] * np.exp(1j * np.outer(vartheta, x))
            return -_sum_rate(v[M:], G, noise, K, M)

        cons = [
            {"type": "ineq", "fun": lambda v: s.P_max - float(np.sum(v[M:] ** 2))},
            {"type": "ineq", "fun": lambda v: v[:M]},
            {"type": "ineq", "fun": lambda v: s.L - v[:M]},
        ]
        if M > 1:
            cons.append({"type": "ineq", "fun": lambda v: np.diff(v[:M]) - s.d_min})
        res = minimize(
            objective, flat0, method="SLSQP", constraints=cons,
            options={"maxiter": 300, "ftol": 1e-12},
        )
        if res.x is None or not np.all(np.isfinite(res.x)):
            continue
        x = np.clip(res.x[:M], 0.0, s.L)
        if M > 1 and np.any(np.diff(x) < s.d_min - 1e-9):
            continue
        wf = res.x[M:]
        total = float(np.sum(wf**2))
        if total > s.P_max:
            wf = wf * np.sqrt(s.P_max / total)
        G = h[:, None] * np.exp(1j * np.outer(vartheta, x))
        r = _sum_rate(wf, G, noise, K, M)
        if r > result.rate:
            result.refined_gain = r - best_rate
            result.rate = r
            result.layout = x
            result.weights = wf[: K * M].reshape(K, M) + 1j * wf[K * M:].reshape(K, M)
    return result


# ---------------------------------------------------------------------------
# randomized bound verification


def _check_cos(trials: int, rng: np.random.Generator, upper: bool) -> int:
    beta = rng.uniform(-4 * np.pi, 4 * np.pi, trials)
    beta0 = rng.uniform(-4 * np.pi, 4 * np.pi, trials)
    from . import surrogates

    if upper:
        diff = np.cos(beta) - surrogates.cos_majorant(beta, beta0)
    else:
        diff = surrogates.cos_minorant(beta, beta0) - np.cos(beta)
    return int(np.sum(diff > 1e-9))


def _check_quadratic(trials: int, rng: np.random.Generator, interference: bool) -> int:
    from . import surrogates

    bad = 0
    for _ in range(trials):
        m = int(rng.integers(1, 5))
        w = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * rng.uniform(0.2, 2.0)
        vartheta = rng.uniform(0.0, 70.0)
        x_prev = rng.uniform(0.0, 0.8, m)
        x = rng.uniform(0.0, 0.8, m)
        if interference:
            quad = surrogates.assemble_interference_quadratic(w, vartheta, x_prev)
        else:
            quad = surrogates.assemble_signal_quadratic(w, vartheta, x_prev)
        exact = float(np.abs(np.sum(w.conj() * np.exp(1j * vartheta * x))) ** 2)
        tol = 1e-9 * (np.sum(np.abs(w)) ** 2 + 1.0)
        gap = (quad.value(x) - exact) if not interference else (exact - quad.value(x))
        if gap > tol:
            bad += 1
    return bad


def _check_trajectory_r1(trials: int, rng: np.random.Generator) -> int:
    from . import surrogates

    bad = 0
    for _ in range(trials):
        phi = 10.0 ** rng.uniform(-12.0, -6.0)
        ups = 0.0 if rng.uniform() < 0.2 else 10.0 ** rng.uniform(-14.0, -6.0)
        sig2 = 10.0 ** rng.uniform(-15.0, -10.0)
        d_prev = 10.0 ** rng.uniform(3.0, 6.0)
        d = 10.0 ** rng.uniform(3.0, 6.0)
        terms = surrogates.TrajectorySurrogateTerms(
            a_tilde=np.zeros((1, 1, 1), dtype=complex),
            Phi=np.array([[phi]]),
            Upsilon=np.array([[ups]]),
            d_prev=np.array([[d_prev]]),
            r1_const=np.log2(np.array([[(phi + ups) / d_prev + sig2]])),
            r1_slope=np.array(
                [[surrogates.LOG2E * (phi + ups) / d_prev**2
                  / ((phi + ups) / d_prev + sig2)]]
            ),
            sigma2=np.array([sig2]),
            H=100.0,
        )
        lower = float(terms.r1(np.array([[d]]))[0, 0])
        exact = float(terms.frozen_first_term(np.array([[d]]))[0, 0])
        if lower - exact > 1e-9:
            bad += 1
    return bad


def _check_vmin_linearization(trials: int, rng: np.random.Generator) -> int:
    bad = 0
    done = 0
    while done < trials:
        c = rng.uniform(0.5, 10.0)
        a = rng.standard_normal(2)
        a *= rng.uniform(1.0, 4.0) * c / np.linalg.norm(a)
        b = rng.standard_normal(2) * rng.uniform(0.0, 4.0) * c
        if 2.0 * a @ b - a @ a < c * c:  # candidate violates the linear form
            continue
        done += 1
        if np.linalg.norm(b) < c - 1e-9:
            bad += 1
    return bad


_BOUND_CHECKS = {
    "cos_minorant": lambda t, rng: _check_cos(t, rng, upper=False),
    "cos_majorant": lambda t, rng: _check_cos(t, rng, upper=True),
    "signal_quadratic": lambda t, rng: _check_quadratic(t, rng, interference=False),
    "interference_quadratic": lambda t, rng: _check_quadratic(t, rng, interference=True),
    "trajectory_r1": _check_trajectory_r1,
    "vmin_linearization": _check_vmin_linearization,
}


def sampled_bound_check(bound_kind: str, trials: int, seed: int = 0) -> int:
    """Count violations (beyond 1e-9) of one bound family on random samples.

    Deterministic for a given seed.  Kinds: cos_minorant, cos_majorant,
    signal_quadratic, interference_quadratic, trajectory_r1,
    vmin_linearization.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    try:
        check = _BOUND_CHECKS[bound_kind]
    except KeyError:
        raise ValueError(
            f"unknown bound kind {bound_kind!r}; expected one of {sorted(_BOUND_CHECKS)}"
        ) from None
    return int(check(trials, np.random.default_rng(seed)))
