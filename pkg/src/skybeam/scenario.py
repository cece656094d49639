"""Problem instances and solution containers for the movable-array UAV planner.

A :class:`Scenario` is an immutable description of one problem: ground users,
UAV kinematic limits, the sliding-element array geometry, radio constants, and
the discretized mission horizon.  Scenario files are plain INI text whose
power, gain and length fields carry explicit unit suffixes (``W``/``dBm``,
``dB``/``linear``, ``m``/``lambda``); see the README for the schema.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "Scenario",
    "ScenarioError",
    "Trajectory",
    "AntennaLayout",
    "BeamformerSet",
    "load_scenario",
    "loads_scenario",
    "save_scenario",
    "dumps_scenario",
    "validate",
    "audit",
    "randomize_users",
    "bundled_scenario_path",
    "load_bundled",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "linear_to_db",
]


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or fails validation."""


# ---------------------------------------------------------------------------
# unit conversions


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class Scenario:
    """One downlink planning problem.  All stored quantities are SI/linear."""

    user_positions: tuple[tuple[float, float], ...]  # ground coordinates (m)
    H: float  # UAV altitude (m)
    T: float  # mission duration (s)
    N: int  # number of time slots
    q_init: tuple[float, float]  # start position (m)
    q_final: tuple[float, float]  # end position (m)
    V_min: float  # minimum speed (m/s)
    V_max: float  # maximum speed (m/s)
    a_max: float  # maximum acceleration (m/s^2)
    M: int  # number of array elements
    L: float  # array segment length (m)
    d_min: float  # minimum inter-element spacing (m)
    wavelength: float  # carrier wavelength (m)
    P_max: float  # transmit power budget (W)
    sigma2: tuple[float, ...]  # per-user noise power (W)
    chi: float  # reference path gain at 1 m (linear)
    enforce_endpoints: bool = True
    name: str = "unnamed"

    def __post_init__(self):
        object.__setattr__(
            self,
            "user_positions",
            tuple((float(x), float(y)) for x, y in self.user_positions),
        )
        object.__setattr__(self, "q_init", tuple(float(v) for v in self.q_init))
        object.__setattr__(self, "q_final", tuple(float(v) for v in self.q_final))
        sig = self.sigma2
        if np.isscalar(sig):
            sig = (float(sig),) * len(self.user_positions)
        object.__setattr__(self, "sigma2", tuple(float(v) for v in sig))

    @property
    def K(self) -> int:
        return len(self.user_positions)

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def users(self) -> np.ndarray:
        return np.asarray(self.user_positions, dtype=float)

    @property
    def noise(self) -> np.ndarray:
        return np.asarray(self.sigma2, dtype=float)

    @property
    def q0(self) -> np.ndarray:
        return np.asarray(self.q_init, dtype=float)

    @property
    def qf(self) -> np.ndarray:
        return np.asarray(self.q_final, dtype=float)


def validate(s: Scenario) -> list[str]:
    """Check every scenario invariant; returns one message per violation.

    Total function: never raises, an empty list means the scenario is valid.
    """
    bad: list[str] = []
    numeric = {
        "H": s.H,
        "T": s.T,
        "V_min": s.V_min,
        "V_max": s.V_max,
        "a_max": s.a_max,
        "L": s.L,
        "d_min": s.d_min,
        "wavelength": s.wavelength,
        "P_max": s.P_max,
        "chi": s.chi,
    }
    for fname, val in numeric.items():
        if not math.isfinite(val):
            bad.append(f"{fname}: must be finite (got {val!r})")
    if any(not math.isfinite(v) for p in s.user_positions for v in p):
        bad.append("user_positions: must be finite")
    if any(not math.isfinite(v) for v in (*s.q_init, *s.q_final)):
        bad.append("q_init/q_final: must be finite")
    if any(not math.isfinite(v) for v in s.sigma2):
        bad.append("sigma2: must be finite")
    if bad:
        return bad

    if s.N < 1:
        bad.append(f"N: slot count must be at least 1 (got {s.N})")
    if s.K < 1:
        bad.append("user_positions: at least one user is required")
    if s.M < 1:
        bad.append(f"M: antenna count must be at least 1 (got {s.M})")
    if s.T <= 0:
        bad.append(f"T: mission duration must be positive (got {s.T})")
    if len(s.sigma2) != s.K:
        bad.append(
            f"sigma2: expected 1 or {s.K} entries, got {len(s.sigma2)}"
        )
    if s.wavelength <= 0:
        bad.append(f"wavelength: must be positive (got {s.wavelength})")
    if s.d_min <= 0:
        bad.append(f"d_min: must be positive (got {s.d_min})")
    if s.L < 0:
        bad.append(f"L: segment length must be nonnegative (got {s.L})")
    if (s.M - 1) * s.d_min > s.L:
        bad.append(
            f"array: (M-1)*d_min = {(s.M - 1) * s.d_min:g} m exceeds "
            f"L = {s.L:g} m; no feasible layout exists"
        )
    if s.V_min <= 0:
        bad.append(f"V_min: must be positive (got {s.V_min})")
    elif s.V_min > s.V_max:
        bad.append(f"V_min: must not exceed V_max ({s.V_min} > {s.V_max})")
    if s.a_max <= 0:
        bad.append(f"a_max: must be positive (got {s.a_max})")
    if s.H <= 0:
        bad.append(f"H: altitude must be positive (got {s.H})")
    if s.P_max <= 0:
        bad.append(f"P_max: must be positive (got {s.P_max})")
    if any(v <= 0 for v in s.sigma2):
        bad.append("sigma2: noise power must be positive")
    if s.chi <= 0:
        bad.append(f"chi: reference gain must be positive (got {s.chi})")
    if s.T > 0 and s.V_max > 0:
        span = float(np.linalg.norm(s.qf - s.q0))
        if span > s.V_max * s.T:
            bad.append(
                "endpoint reachability: ||q_final - q_init|| = "
                f"{span:g} m exceeds V_max*T = {s.V_max * s.T:g} m"
            )
    return bad


# ---------------------------------------------------------------------------
# scenario file parsing


_REQUIRED_SECTIONS = ("users", "uav", "array", "radio", "horizon")


def _floats(body: str, fieldname: str) -> list[float]:
    try:
        vals = [float(tok) for tok in body.split(",") if tok.strip()]
    except ValueError as exc:
        raise ScenarioError(f"{fieldname}: cannot parse numbers from {body!r}") from exc
    if not vals:
        raise ScenarioError(f"{fieldname}: no values in {body!r}")
    if any(not math.isfinite(v) for v in vals):
        raise ScenarioError(f"{fieldname}: non-finite value in {body!r}")
    return vals


def _split_unit(text: str, fieldname: str) -> tuple[str, str]:
    parts = text.strip().rsplit(None, 1)
    if len(parts) != 2:
        raise ScenarioError(
            f"{fieldname}: expected '<values> <unit>', got {text!r}"
        )
    return parts[0], parts[1].lower()


def _parse_power(text: str, fieldname: str) -> list[float]:
    body, unit = _split_unit(text, fieldname)
    vals = _floats(body, fieldname)
    if unit == "w":
        watts = vals
    elif unit == "dbm":
        watts = [dbm_to_watts(v) for v in vals]
    else:
        raise ScenarioError(f"{fieldname}: unit must be W or dBm, got {unit!r}")
    if any(not math.isfinite(v) for v in watts):
        raise ScenarioError(f"{fieldname}: conversion produced non-finite value")
    return watts


def _parse_gain(text: str, fieldname: str) -> float:
    body, unit = _split_unit(text, fieldname)
    (val,) = _floats(body, fieldname)
    if unit == "db":
        out = db_to_linear(val)
    elif unit == "linear":
        out = val
    else:
        raise ScenarioError(f"{fieldname}: unit must be dB or linear, got {unit!r}")
    if not math.isfinite(out):
        raise ScenarioError(f"{fieldname}: conversion produced non-finite value")
    return out


def _parse_length(text: str, wavelength: float, fieldname: str) -> float:
    parts = text.strip().rsplit(None, 1)
    if len(parts) == 1:
        (val,) = _floats(parts[0], fieldname)
        return val
    body, unit = parts[0], parts[1].lower()
    (val,) = _floats(body, fieldname)
    if unit == "m":
        return val
    if unit == "lambda":
        return val * wavelength
    raise ScenarioError(f"{fieldname}: unit must be m or lambda, got {unit!r}")


def _parse_pair(text: str, fieldname: str) -> tuple[float, float]:
    vals = _floats(text, fieldname)
    if len(vals) != 2:
        raise ScenarioError(f"{fieldname}: expected two coordinates, got {text!r}")
    return vals[0], vals[1]


def loads_scenario(text: str, name: str = "unnamed") -> Scenario:
    """Parse scenario text, convert units, and validate.

    Raises :class:`ScenarioError` on malformed input or, after parsing, with
    every violated invariant listed.
    """
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from exc
    missing = [sec for sec in _REQUIRED_SECTIONS if not cfg.has_section(sec)]
    if missing:
        raise ScenarioError(f"missing sections: {', '.join(missing)}")

    def get(section: str, key: str, fallback: str | None = None) -> str:
        if cfg.has_option(section, key):
            return cfg.get(section, key)
        if fallback is not None:
            return fallback
        raise ScenarioError(f"missing field [{section}] {key}")

    try:
        users = []
        i = 1
        while cfg.has_option("users", f"user_{i}"):
            users.append(_parse_pair(get("users", f"user_{i}"), f"user_{i}"))
            i += 1
        if cfg.has_option("users", "count"):
            declared = cfg.getint("users", "count")
            if declared != len(users):
                raise ScenarioError(
                    f"users: count = {declared} but {len(users)} user_<i> entries found"
                )
        if not users:
            raise ScenarioError("users: no user_<i> entries found")

        wavelength = float(get("array", "wavelength"))
        noise = _parse_power(get("radio", "noise_power"), "noise_power")
        if len(noise) == 1:
            noise = noise * len(users)
        pmax = _parse_power(get("radio", "power_budget"), "power_budget")
        if len(pmax) != 1:
            raise ScenarioError("power_budget: expected a single value")

        scenario = Scenario(
            user_positions=tuple(users),
            H=float(get("uav", "altitude")),
            T=float(get("horizon", "duration")),
            N=cfg.getint("horizon", "slots"),
            q_init=_parse_pair(get("uav", "start"), "start"),
            q_final=_parse_pair(get("uav", "finish"), "finish"),
            V_min=float(get("uav", "speed_min")),
            V_max=float(get("uav", "speed_max")),
            a_max=float(get("uav", "accel_max")),
            M=cfg.getint("array", "elements"),
            L=_parse_length(get("array", "length"), wavelength, "length"),
            d_min=_parse_length(get("array", "min_spacing"), wavelength, "min_spacing"),
            wavelength=wavelength,
            P_max=pmax[0],
            sigma2=tuple(noise),
            chi=_parse_gain(get("radio", "reference_gain"), "reference_gain"),
            enforce_endpoints=get("uav", "enforce_endpoints", "true").strip().lower()
            in ("1", "true", "yes", "on"),
            name=name,
        )
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario file: {exc}") from exc

    violations = validate(scenario)
    if violations:
        raise ScenarioError(
            "invalid scenario:\n" + "\n".join(f"  - {v}" for v in violations)
        )
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return loads_scenario(text, name=path.stem)


def dumps_scenario(s: Scenario) -> str:
    """Emit the canonical scenario text (SI units, watts, full precision)."""
    lines = ["[users]", f"count = {s.K}"]
    for i, (x, y) in enumerate(s.user_positions, start=1):
        lines.append(f"user_{i} = {x!r}, {y!r}")
    lines += [
        "",
        "[uav]",
        f"altitude = {s.H!r}",
        f"start = {s.q_init[0]!r}, {s.q_init[1]!r}",
        f"finish = {s.q_final[0]!r}, {s.q_final[1]!r}",
        f"speed_min = {s.V_min!r}",
        f"speed_max = {s.V_max!r}",
        f"accel_max = {s.a_max!r}",
        f"enforce_endpoints = {'true' if s.enforce_endpoints else 'false'}",
        "",
        "[array]",
        f"elements = {s.M}",
        f"wavelength = {s.wavelength!r}",
        f"min_spacing = {s.d_min!r} m",
        f"length = {s.L!r} m",
        "",
        "[radio]",
        f"power_budget = {s.P_max!r} W",
        "noise_power = " + ", ".join(repr(v) for v in s.sigma2) + " W",
        f"reference_gain = {s.chi!r} linear",
        "",
        "[horizon]",
        f"duration = {s.T!r}",
        f"slots = {s.N}",
        "",
    ]
    return "\n".join(lines)


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(s))


def bundled_scenario_path(name: str = "paper_default") -> Path:
    """Path of a scenario file shipped with the package."""
    return Path(str(resources.files("skybeam") / "data" / f"{name}.ini"))


def load_bundled(name: str = "paper_default") -> Scenario:
    return load_scenario(bundled_scenario_path(name))


def randomize_users(s: Scenario, seed: int, count: int | None = None,
                    area: tuple[float, float] = (500.0, 500.0)) -> Scenario:
    """Replace user positions with a seeded uniform draw inside ``area``.

    Used by sweeps and tests that need reproducible random placements.
    """
    rng = np.random.default_rng(seed)
    k = s.K if count is None else count
    pos = rng.uniform((0.0, 0.0), area, size=(k, 2))
    if k == s.K:
        sigma2 = s.sigma2
    elif len(set(s.sigma2)) == 1:
        sigma2 = (s.sigma2[0],) * k
    else:
        raise ScenarioError(
            "randomize_users: cannot change user count with non-uniform sigma2"
        )
    return replace(
        s,
        user_positions=tuple(map(tuple, pos)),
        sigma2=sigma2,
        name=f"{s.name}-seed{seed}",
    )


# ---------------------------------------------------------------------------
# solution containers


@dataclass
class Trajectory:
    """UAV path: N+1 planar positions, index 0 is the start of the mission."""

    q: np.ndarray  # (N+1, 2) metres
    tau: float  # slot length (s)

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        if self.q.ndim != 2 or self.q.shape[1] != 2 or self.q.shape[0] < 2:
            raise ValueError(f"trajectory positions must be (N+1, 2), got {self.q.shape}")

    @property
    def N(self) -> int:
        return self.q.shape[0] - 1

    @property
    def v(self) -> np.ndarray:
        """Per-slot velocities, shape (N, 2); row i is the velocity over slot i+1."""
        return np.diff(self.q, axis=0) / self.tau

    @property
    def a(self) -> np.ndarray:
        """Per-slot accelerations, shape (N-1, 2); row i belongs to slot i+2."""
        return np.diff(self.v, axis=0) / self.tau

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)

    def violations(self, s: Scenario, speed_tol: float = 1e-6,
                   accel_tol: float = 1e-6, endpoint_tol: float = 1e-9) -> list[str]:
        bad: list[str] = []
        if self.N != s.N:
            bad.append(f"trajectory: expected {s.N} slots, got {self.N}")
            return bad
        if np.linalg.norm(self.q[0] - s.q0) > endpoint_tol:
            bad.append("trajectory: start position differs from q_init")
        if s.enforce_endpoints and np.linalg.norm(self.q[-1] - s.qf) > endpoint_tol:
            bad.append("trajectory: final position differs from q_final")
        # speed limits bind on every slot after the first, acceleration after
        # the second
        sp = self.speeds[1:]
        if sp.size and float(sp.min()) < s.V_min - speed_tol:
            bad.append(f"trajectory: speed {sp.min():.6g} m/s below V_min = {s.V_min:g}")
        if sp.size and float(sp.max()) > s.V_max + speed_tol:
            bad.append(f"trajectory: speed {sp.max():.6g} m/s above V_max = {s.V_max:g}")
        acc = np.linalg.norm(self.a[1:], axis=1) if self.N >= 2 else np.empty(0)
        if acc.size and float(acc.max()) > s.a_max + accel_tol:
            bad.append(
                f"trajectory: acceleration {acc.max():.6g} m/s^2 above a_max = {s.a_max:g}"
            )
        return bad


@dataclass
class AntennaLayout:
    """Per-slot ordered element coordinates on the segment [0, L]."""

    x: np.ndarray  # (N, M) metres

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def M(self) -> int:
        return self.x.shape[1]

    def violations(self, s: Scenario, spacing_tol: float = 1e-8) -> list[str]:
        bad: list[str] = []
        if self.x.shape != (s.N, s.M):
            bad.append(f"layout: expected shape {(s.N, s.M)}, got {self.x.shape}")
            return bad
        if float(self.x.min()) < 0.0 or float(self.x.max()) > s.L:
            bad.append(
                f"layout: coordinates outside [0, {s.L:g}] "
                f"(range [{self.x.min():.6g}, {self.x.max():.6g}])"
            )
        if s.M > 1:
            gaps = np.diff(self.x, axis=1)
            if float(gaps.min()) < s.d_min - spacing_tol:
                bad.append(
                    f"layout: spacing {gaps.min():.6g} m below d_min = {s.d_min:g} m"
                )
        return bad


@dataclass
class BeamformerSet:
    """Per-slot, per-user complex transmit weight vectors (units sqrt(W))."""

    w: np.ndarray  # (N, K, M) complex

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        if self.w.ndim != 3:
            raise ValueError(f"beamformers must be (N, K, M), got {self.w.shape}")

    @property
    def slot_power(self) -> np.ndarray:
        return np.sum(np.abs(self.w) ** 2, axis=(1, 2))

    def violations(self, s: Scenario, power_tol: float = 1e-8) -> list[str]:
        bad: list[str] = []
        if self.w.shape != (s.N, s.K, s.M):
            bad.append(f"beamformers: expected shape {(s.N, s.K, s.M)}, got {self.w.shape}")
            return bad
        p = self.slot_power
        if float(p.max()) > s.P_max + power_tol:
            bad.append(
                f"beamformers: slot power {p.max():.10g} W exceeds P_max = {s.P_max:g} W"
            )
        return bad


def audit(s: Scenario, Q: Trajectory, X: AntennaLayout, W: BeamformerSet,
          **tols) -> list[str]:
    """Exact feasibility audit of one iterate against all problem constraints."""
    speed_tol = tols.get("speed_tol", 1e-6)
    accel_tol = tols.get("accel_tol", 1e-6)
    endpoint_tol = tols.get("endpoint_tol", 1e-9)
    spacing_tol = tols.get("spacing_tol", 1e-8)
    power_tol = tols.get("power_tol", 1e-8)
    return (
        Q.violations(s, speed_tol, accel_tol, endpoint_tol)
        + X.violations(s, spacing_tol)
        + W.violations(s, power_tol)
    )
