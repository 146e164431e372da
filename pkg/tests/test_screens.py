"""Slab planning and von Karman phase screen synthesis."""

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import j0

import duallink.screens
from duallink.atmosphere import (
    NO_TURBULENCE,
    AtmosphereProfile,
    greenwood_and_coherence,
    rytov_variance,
    scintillation_index,
)
from duallink.errors import UsageError
from duallink.screens import (
    PhaseScreen,
    ScreenStreams,
    Slab,
    SlabPlan,
    generate_screen,
    mvk_psd,
    plan_slabs,
    screen_structure_function,
)

from conftest import make_geometry


def kolmogorov_like_profile(inner_scale: float = 0.04) -> AtmosphereProfile:
    # Outer scale far beyond any grid window, so the inertial power law is
    # the correct reference across all measurable separations.
    return AtmosphereProfile(
        ground_cn2=9.6e-14, ground_wind=3.0, outer_scale=1e6, inner_scale=inner_scale
    )


def make_screens(slab, n, spacing, profile, count, seed=11):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", duallink.screens.ScreenResolutionWarning)
        return [
            generate_screen(slab, n, spacing, ScreenStreams(seed, i).generator(0), profile)
            for i in range(count)
        ]


# ---------------------------------------------------------------------------
# slab planning


def test_zero_turbulence_plan_is_single_vacuum_slab(baseline_profile):
    dead = AtmosphereProfile(
        ground_cn2=9.6e-14, ground_wind=3.0, outer_scale=5.0, inner_scale=0.01, cn2_scale=0.0
    )
    geom = make_geometry(0.0)
    plan = plan_slabs(geom, dead, None)
    assert len(plan.slabs) == 1
    assert not plan.slabs[0].has_screen
    assert plan.total_path_length == pytest.approx(geom.path_length, rel=1e-12)


@pytest.mark.parametrize("theta", [0.0, 30.0, 60.0])
def test_slab_conditions_hold(baseline_profile, theta):
    geom = make_geometry(theta)
    diag = greenwood_and_coherence(geom, baseline_profile)
    plan = plan_slabs(geom, baseline_profile, diag)
    cap = min(0.1, 0.1 * diag.scintillation_index)
    for slab in plan.slabs:
        assert slab.scint_index < 0.1
        assert slab.scint_index < cap or not slab.has_screen
    # contiguous, non-overlapping, and covering the whole slant path
    assert plan.total_path_length == pytest.approx(geom.path_length, rel=1e-9)
    bounds = plan.boundaries
    assert all(b2 > b1 for b1, b2 in zip(bounds[:-1], bounds[1:]))


def test_slab_count_at_sixty_degrees(baseline_profile):
    # Each slab carries less than 10% of the total scintillation, so at
    # least ten turbulent slabs are forced by additivity of the Rytov
    # variance. Count and coarse boundaries are regression-pinned.
    geom = make_geometry(60.0)
    diag = greenwood_and_coherence(geom, baseline_profile)
    plan = plan_slabs(geom, baseline_profile, diag)
    turbulent = [s for s in plan.slabs if s.has_screen]
    assert len(turbulent) >= 10
    assert len(turbulent) == 12  # snapshot
    assert plan.slabs[-1].has_screen is False
    assert plan.boundaries[-2] == pytest.approx(16037.4, abs=2.0)  # snapshot
    assert plan.boundaries[-1] == pytest.approx(500e3)


def test_slab_rytov_additivity(baseline_profile):
    geom = make_geometry(30.0)
    diag = greenwood_and_coherence(geom, baseline_profile)
    plan = plan_slabs(geom, baseline_profile, diag)
    total = sum(
        rytov_variance(geom, baseline_profile, s.h_lo, s.h_hi) for s in plan.slabs
    )
    assert total == pytest.approx(diag.rytov_variance, rel=1e-6)


def test_slab_cap_exceeded_is_config_error(baseline_profile):
    violent = AtmosphereProfile(
        ground_cn2=9.6e-14, ground_wind=3.0, outer_scale=5.0, inner_scale=0.01, cn2_scale=1e4
    )
    geom = make_geometry(60.0)
    with pytest.raises(UsageError):
        plan_slabs(geom, violent, None)


def test_plan_rejects_noncontiguous_slabs():
    a = Slab(0.0, 100.0, 100.0, 0.1, 0.01)
    b = Slab(200.0, 300.0, 100.0, 0.1, 0.01)
    with pytest.raises(UsageError):
        SlabPlan((a, b))


# ---------------------------------------------------------------------------
# spectrum


def test_mvk_psd_finite_at_zero_frequency():
    assert mvk_psd(0.0, 0.1, 5.0, 0.01) == pytest.approx(390.1975323855177, rel=1e-12)


def test_mvk_psd_gaussian_rolloff():
    fm = 0.9422 / 0.01
    assert mvk_psd(5 * fm, 0.1, 5.0, 0.01) < 1e-12 * mvk_psd(fm, 0.1, 5.0, 0.01)


def test_mvk_psd_frozen_value():
    assert mvk_psd(1.0, 0.1, 5.0, 0.01) == pytest.approx(0.9933854454493568, rel=1e-12)


def test_mvk_psd_rejects_negative_frequency():
    with pytest.raises(UsageError):
        mvk_psd(-1.0, 0.1, 5.0, 0.01)


# ---------------------------------------------------------------------------
# screen synthesis


def test_vacuum_slab_yields_zero_screen(baseline_profile):
    vac = Slab(16e3, 500e3, 484e3, NO_TURBULENCE, 0.0)
    screen = generate_screen(vac, 64, 0.05, ScreenStreams(1, 0).generator(0), baseline_profile)
    assert np.all(screen.grid == 0.0)


def test_screens_are_deterministic(baseline_profile):
    slab = Slab(0.0, 100.0, 100.0, 0.08, 0.01)
    a = generate_screen(slab, 128, 0.05, ScreenStreams(42, 7).generator(3), baseline_profile)
    b = generate_screen(slab, 128, 0.05, ScreenStreams(42, 7).generator(3), baseline_profile)
    assert np.array_equal(a.grid, b.grid)


def test_distinct_streams_give_distinct_screens(baseline_profile):
    slab = Slab(0.0, 100.0, 100.0, 0.08, 0.01)
    a = generate_screen(slab, 64, 0.05, ScreenStreams(42, 7).generator(3), baseline_profile)
    b = generate_screen(slab, 64, 0.05, ScreenStreams(42, 8).generator(3), baseline_profile)
    assert not np.array_equal(a.grid, b.grid)


def test_grid_size_must_be_power_of_two(baseline_profile):
    slab = Slab(0.0, 100.0, 100.0, 0.08, 0.01)
    with pytest.raises(UsageError):
        generate_screen(slab, 100, 0.05, ScreenStreams(1, 0).generator(0), baseline_profile)


def test_under_resolved_outer_scale_warns():
    profile = kolmogorov_like_profile()
    slab = Slab(0.0, 100.0, 100.0, 0.1, 0.01)
    with pytest.warns(duallink.screens.ScreenResolutionWarning):
        generate_screen(slab, 64, 0.01, ScreenStreams(1, 0).generator(0), profile)


def test_ensemble_pixel_means_near_zero():
    profile = kolmogorov_like_profile()
    slab = Slab(0.0, 100.0, 100.0, 0.1, 0.01)
    screens = make_screens(slab, 64, 0.01, profile, 200, seed=5)
    stack = np.stack([s.grid for s in screens])
    mean = stack.mean(axis=0)
    sigma = stack.std(axis=0, ddof=1) / math.sqrt(len(screens))
    assert np.all(np.abs(mean) < 5.0 * sigma)


def test_screen_variance_scales_with_integrated_turbulence():
    # Doubling integrated Cn2 in a slab divides r0 by 2^(3/5) and must
    # double the pixel variance (r0^(-5/3) scaling).
    profile = kolmogorov_like_profile()
    base = Slab(0.0, 100.0, 100.0, 0.1, 0.01)
    doubled = Slab(0.0, 100.0, 100.0, 0.1 * 2 ** (-3.0 / 5.0), 0.01)
    base_screens = make_screens(base, 128, 0.01, profile, 200, seed=5)
    doubled_screens = make_screens(doubled, 128, 0.01, profile, 200, seed=6)
    v1 = np.mean([np.var(s.grid) for s in base_screens])
    v2 = np.mean([np.var(s.grid) for s in doubled_screens])
    assert v2 / v1 == pytest.approx(2.0, rel=0.05)


# ---------------------------------------------------------------------------
# structure function


def exact_mvk_structure_function(r, fried, outer_scale, inner_scale):
    """Quadrature oracle: D(r) = 4 pi Int PSD(f) [1 - J0(2 pi f r)] f df."""

    def integrand(f):
        return mvk_psd(f, fried, outer_scale, inner_scale) * (1.0 - j0(2 * np.pi * f * r)) * f

    edges = np.geomspace(1e-7, 1e4, 120)
    total = quad(integrand, 0.0, edges[0], limit=100)[0]
    total += sum(quad(integrand, a, b, limit=100)[0] for a, b in zip(edges[:-1], edges[1:]))
    return 4.0 * np.pi * total


def test_structure_function_zero_for_zero_screens(baseline_profile):
    zeros = [PhaseScreen(np.zeros((32, 32)), 0.1, 0, "") for _ in range(50)]
    values = screen_structure_function(zeros, [0.1, 0.5, 1.0])
    assert values == [0.0, 0.0, 0.0]


def test_structure_function_requires_enough_screens(baseline_profile):
    zeros = [PhaseScreen(np.zeros((32, 32)), 0.1, 0, "") for _ in range(10)]
    with pytest.raises(UsageError):
        screen_structure_function(zeros, [0.1])


def test_structure_function_rejects_off_grid_separation():
    zeros = [PhaseScreen(np.zeros((32, 32)), 0.1, 0, "") for _ in range(50)]
    with pytest.raises(UsageError):
        screen_structure_function(zeros, [0.15])
    with pytest.raises(UsageError):
        screen_structure_function(zeros, [3.3])


def test_structure_function_nondecreasing():
    profile = kolmogorov_like_profile()
    slab = Slab(0.0, 100.0, 100.0, 0.1, 0.01)
    screens = make_screens(slab, 128, 0.01, profile, 60, seed=9)
    rs = [0.02, 0.04, 0.08, 0.16, 0.32]
    d = screen_structure_function(screens, rs)
    assert all(b > a for a, b in zip(d[:-1], d[1:]))


def test_structure_function_matches_exact_spectrum_with_table_scales():
    # Production-scale spectrum (5 m outer scale): compare against the
    # exact quadrature of the model PSD, not the inertial power law, since
    # outer-scale saturation is part of the model.
    profile = AtmosphereProfile(
        ground_cn2=9.6e-14, ground_wind=3.0, outer_scale=5.0, inner_scale=0.01
    )
    slab = Slab(0.0, 100.0, 100.0, 0.25, 0.01)
    screens = make_screens(slab, 256, 0.02, profile, 120, seed=13)
    rs = [0.08, 0.32, 1.28]
    measured = screen_structure_function(screens, rs)
    for r, d in zip(rs, measured):
        exact = exact_mvk_structure_function(r, 0.25, 5.0, 0.01)
        assert d == pytest.approx(exact, rel=0.10)


def test_structure_function_matches_kolmogorov_power_law():
    # Effectively infinite outer scale: the 5/3 power law is the reference
    # over separations resolved by the grid, from twice the inner scale up
    # to a quarter of the window.
    profile = kolmogorov_like_profile(inner_scale=0.04)
    r0 = 0.1
    slab = Slab(0.0, 100.0, 100.0, r0, 0.01)
    screens = make_screens(slab, 256, 0.01, profile, 200, seed=17)
    rs = [0.08, 0.16, 0.32, 0.64]
    measured = screen_structure_function(screens, rs)
    for r, d in zip(rs, measured):
        assert d == pytest.approx(6.88 * (r / r0) ** (5.0 / 3.0), rel=0.10)
