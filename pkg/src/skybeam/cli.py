"""Batch front door: optimization runs, baselines, sweeps, beam patterns.

Every output file is plain delimited text with its column schema in a comment
header; reruns with the same seed and inputs are byte-identical apart from the
``# generated`` timestamp line.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import channel, driver
from .scenario import (
    Scenario,
    ScenarioError,
    dbm_to_watts,
    load_scenario,
    validate,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_INVALID_SCENARIO = 1
EXIT_SOLVER_ABORT = 2

SWEEP_AXES = ("noise_dbm", "power_w", "antennas")


def _header(title: str) -> str:
    return f"# skybeam {title}\n# generated: {time.strftime('%Y-%m-%d %H:%M:%S')}\n"


def _write(path: Path, title: str, body: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_header(title) + body)


def _load(path: str):
    try:
        return load_scenario(path), None
    except ScenarioError as exc:
        return None, str(exc)


def _run_result_files(out: Path, result: driver.AoResult) -> None:
    _write(out / "trace.txt", "optimization trace", driver.trace_table(result.trace))
    _write(out / "trajectory.txt", "trajectory export", driver.trajectory_table(result.Q))
    _write(out / "layout.txt", "layout export", driver.layout_table(result.X))
    _write(out / "solution.txt", "solution bundle", driver.solution_bundle(result))


def _cmd_run(args) -> int:
    scenario, err = _load(args.scenario)
    if scenario is None:
        print(err, file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    result = driver.optimize(
        scenario,
        epsilon_star=args.epsilon,
        i_max=args.i_max,
        fpa_mode=args.fpa,
        seed=args.seed,
    )
    out = Path(args.out)
    _run_result_files(out, result)
    print(f"final objective: {result.objective:.9f} bits "
          f"({result.trace.terminal_reason} after {len(result.trace.records)} iterations)")
    if result.trace.terminal_reason == "failure":
        return EXIT_SOLVER_ABORT
    return EXIT_OK


def _derived_scenario(base: Scenario, axis: str, value: float) -> Scenario:
    if axis == "noise_dbm":
        watts = dbm_to_watts(value)
        return replace(base, sigma2=(watts,) * base.K,
                       name=f"{base.name}-noise{value:g}dBm")
    if axis == "power_w":
        return replace(base, P_max=float(value), name=f"{base.name}-P{value:g}W")
    if axis == "antennas":
        m = int(round(value))
        if m != value:
            raise ScenarioError(f"antennas axis needs integer values, got {value!r}")
        return replace(base, M=m, name=f"{base.name}-M{m}")
    raise ScenarioError(f"unknown sweep axis {axis!r}")


def _sweep_point(payload) -> tuple[float, float, float]:
    base, axis, value, epsilon, i_max, seed = payload
    scenario = _derived_scenario(base, axis, value)
    bad = validate(scenario)
    if bad:
        raise ScenarioError(f"value {value!r} produces an invalid scenario: {bad}")
    ma = driver.optimize(scenario, epsilon_star=epsilon, i_max=i_max, seed=seed,
                         keep_iterates=False)
    fpa = driver.optimize(scenario, epsilon_star=epsilon, i_max=i_max, seed=seed,
                          fpa_mode=True, keep_iterates=False)
    return value, ma.objective, fpa.objective


def _cmd_sweep(args) -> int:
    scenario, err = _load(args.scenario)
    if scenario is None:
        print(err, file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    try:
        values = [float(tok) for tok in args.values.split(",") if tok.strip()]
    except ValueError:
        print(f"cannot parse sweep values: {args.values!r}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    if not values:
        print("no sweep values given", file=sys.stderr)
        return EXIT_INVALID_SCENARIO

    payloads = [
        (scenario, args.axis, v, args.epsilon, args.i_max, args.seed) for v in values
    ]
    rows: dict[float, tuple[float, float, float]] = {}
    failure: str | None = None
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                for row in pool.map(_sweep_point, payloads):
                    rows[row[0]] = row
        else:
            for payload in payloads:
                row = _sweep_point(payload)
                rows[row[0]] = row
    except ScenarioError as exc:
        failure = str(exc)
    finally:
        lines = ["# columns: value rate_ma_bits rate_fpa_bits"]
        for v in values:
            if v in rows:
                val, ma, fpa = rows[v]
                lines.append(f"{val:.12g} {ma:.12g} {fpa:.12g}")
        if failure is not None:
            lines.append(f"# aborted: {failure}")
        out = Path(args.out)
        _write(out / f"sweep_{args.axis}.txt", f"{args.axis} sweep", "\n".join(lines) + "\n")
    if failure is not None:
        print(failure, file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    for v in values:
        val, ma, fpa = rows[v]
        print(f"{val:g}: rate {ma:.6f} bits (baseline {fpa:.6f})")
    return EXIT_OK


def _cmd_beampattern(args) -> int:
    scenario, err = _load(args.scenario)
    if scenario is None:
        print(err, file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    try:
        text = Path(args.bundle).read_text()
    except OSError as exc:
        print(f"cannot read solution bundle: {exc}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    w, q, x = driver.parse_solution_bundle(text)
    n = args.slot if args.slot is not None else scenario.N // 2 + 1
    if not 1 <= n <= scenario.N:
        print(f"slot must be in [1, {scenario.N}], got {n}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    out = Path(args.out)
    for k in range(scenario.K):
        theta, gain = channel.beam_pattern(
            x[n - 1], w[n - 1, k], scenario.wavelength, points=args.grid
        )
        body = ["# columns: theta_rad gain"]
        body += [f"{t:.12g} {g:.12g}" for t, g in zip(theta, gain)]
        _write(out / f"beampattern_slot{n}_user{k + 1}.txt",
               f"beam pattern, slot {n}, user {k + 1}", "\n".join(body) + "\n")
    print(f"wrote {scenario.K} beam patterns for slot {n} to {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    print(f"{scenario.name}: ok "
          f"(K={scenario.K}, M={scenario.M}, N={scenario.N}, T={scenario.T:g}s)")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skybeam",
        description="UAV downlink planner: beamforming, trajectory, and "
        "sliding-element array placement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file path")
        p.add_argument("--epsilon", type=float, default=1e-3,
                       help="stop when one iteration gains at most this many bits")
        p.add_argument("--i-max", type=int, default=30, help="iteration cap")
        p.add_argument("--out", default="skybeam_out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="RNG seed")

    run = sub.add_parser("run", help="optimize one scenario")
    common(run)
    run.add_argument("--fpa", action="store_true",
                     help="baseline mode: keep the uniform fixed layout")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="optimize across one parameter axis")
    common(sweep)
    sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sweep.add_argument("--values", required=True,
                       help="comma-separated axis values")
    sweep.add_argument("--jobs", type=int, default=1,
                       help="concurrent sweep points")
    sweep.set_defaults(func=_cmd_sweep)

    pat = sub.add_parser("beampattern", help="export per-user gain vs angle")
    pat.add_argument("scenario", help="scenario file path")
    pat.add_argument("--bundle", required=True,
                     help="solution bundle from a previous run")
    pat.add_argument("--slot", type=int, default=None,
                     help="slot to analyze (default: middle of the horizon)")
    pat.add_argument("--grid", type=int, default=1024,
                     help="angle grid points over [0, pi/2]")
    pat.add_argument("--out", default="skybeam_out", help="output directory")
    pat.set_defaults(func=_cmd_beampattern)

    val = sub.add_parser("validate", help="lint a scenario file")
    val.add_argument("scenario", help="scenario file path")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
