import math

import numpy as np
import pytest

from skybeam.oracle import (
    best_beamforming_rate,
    grid_oracle_antenna,
    mrt_closed_form_rate,
    sampled_bound_check,
)

from conftest import hover_scenario


def test_closed_form_single_user_values():
    assert mrt_closed_form_rate(3.0, 4, 1e-5, 1e-14) == pytest.approx(
        math.log2(1.0 + 1.2e5), rel=1e-12
    )
    assert mrt_closed_form_rate(0.0, 4, 1e-5, 1e-14) == 0.0
    assert mrt_closed_form_rate(1.0, 1, 1e-7, 1e-14) == pytest.approx(1.0, rel=1e-12)


def test_best_beamforming_matches_closed_form_for_one_user():
    rng = np.random.default_rng(3)
    for m in (2, 4):
        a = np.exp(1j * rng.uniform(0, 2 * np.pi, m))
        g = (1e-5 * a)[None, :]
        rate, w = best_beamforming_rate(g, np.array([1e-14]), 3.0, seed=0)
        want = mrt_closed_form_rate(3.0, m, 1e-5, 1e-14)
        assert rate == pytest.approx(want, rel=1e-9)
        assert np.sum(np.abs(w) ** 2) <= 3.0 + 1e-9


def test_bound_checks_find_no_violations():
    assert sampled_bound_check("cos_minorant", 10_000, seed=0) == 0
    assert sampled_bound_check("cos_majorant", 10_000, seed=1) == 0
    assert sampled_bound_check("signal_quadratic", 300, seed=2) == 0
    assert sampled_bound_check("interference_quadratic", 300, seed=3) == 0
    assert sampled_bound_check("trajectory_r1", 500, seed=4) == 0
    assert sampled_bound_check("vmin_linearization", 500, seed=5) == 0


def test_bound_check_is_deterministic_and_validated():
    a = sampled_bound_check("cos_minorant", 2000, seed=9)
    b = sampled_bound_check("cos_minorant", 2000, seed=9)
    assert a == b
    with pytest.raises(ValueError, match="unknown bound kind"):
        sampled_bound_check("parabola", 10)
    with pytest.raises(ValueError, match="trials"):
        sampled_bound_check("cos_minorant", 0)


def test_grid_oracle_single_user_is_flat_and_matches_closed_form():
    s = hover_scenario(K=1, M=2)
    res = grid_oracle_antenna(s, (250.0, 250.0), grid_step=s.wavelength / 4,
                              refine=False, seed=0)
    want = mrt_closed_form_rate(s.P_max, 2, 1e-5, s.sigma2[0])
    rates = np.array(list(res.evaluations.values()))
    assert rates.max() - rates.min() <= 1e-9 * want
    assert res.rate == pytest.approx(want, rel=1e-9)


def test_grid_oracle_single_element():
    s = hover_scenario(K=1, M=1)
    res = grid_oracle_antenna(s, (250.0, 250.0), grid_step=s.wavelength / 2, seed=0)
    want = mrt_closed_form_rate(s.P_max, 1, 1e-5, s.sigma2[0])
    assert res.rate == pytest.approx(want, rel=1e-9)
    rates = np.array(list(res.evaluations.values()))
    assert rates.max() - rates.min() <= 1e-9 * want


def test_grid_oracle_dominates_sampled_layouts():
    s = hover_scenario(K=2, M=2, users=((180.0, 260.0), (320.0, 210.0)))
    res = grid_oracle_antenna(s, (250.0, 250.0), seed=1)
    h = np.sqrt(s.chi) / np.sqrt(
        np.sum(((250.0, 250.0) - s.users) ** 2, axis=1) + s.H**2
    )
    vartheta = (2 * np.pi / s.wavelength) * s.H / np.sqrt(
        np.sum(((250.0, 250.0) - s.users) ** 2, axis=1) + s.H**2
    )
    rng = np.random.default_rng(7)
    for _ in range(12):
        x1 = rng.uniform(0.0, s.L - s.d_min)
        x = np.array([x1, rng.uniform(x1 + s.d_min, s.L)])
        g = h[:, None] * np.exp(1j * np.outer(vartheta, x))
        rate, _ = best_beamforming_rate(g, s.noise, s.P_max, seed=11)
        assert res.rate >= rate - 1e-6
    assert np.all(np.diff(res.layout) >= s.d_min - 1e-9)
    assert res.layout.min() >= 0.0 and res.layout.max() <= s.L


def test_grid_oracle_is_deterministic():
    s = hover_scenario(K=2, M=2, users=((200.0, 300.0), (310.0, 190.0)))
    a = grid_oracle_antenna(s, (250.0, 250.0), grid_step=s.wavelength / 4, seed=5)
    b = grid_oracle_antenna(s, (250.0, 250.0), grid_step=s.wavelength / 4, seed=5)
    assert a.rate == b.rate
    assert np.array_equal(a.layout, b.layout)


def test_grid_oracle_guards():
    s = hover_scenario(K=1, M=4)
    with pytest.raises(ValueError, match="at most 3"):
        grid_oracle_antenna(s, (250.0, 250.0))
    s2 = hover_scenario(K=1, M=2)
    with pytest.raises(ValueError, match="grid too large"):
        grid_oracle_antenna(s2, (250.0, 250.0), grid_step=1e-7)
