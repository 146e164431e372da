"""Shared scenario builders for the test suite."""

import pytest

from duallink.atmosphere import AtmosphereProfile, LinkGeometry

# Baseline downlink scenario used throughout: 500 km orbit, 1064 nm,
# 15 cm waist, Hufnagel-Valley profile with A = 9.6e-14 and 3 m/s ground wind.
BASELINE = dict(
    ground_altitude=0.0,
    satellite_altitude=500e3,
    wavelength=1.064e-6,
    beam_waist=0.15,
)


def make_geometry(zenith_angle: float = 0.0, aperture_radius: float = 0.5) -> LinkGeometry:
    return LinkGeometry(zenith_angle=zenith_angle, aperture_radius=aperture_radius, **BASELINE)


@pytest.fixture(scope="session")
def baseline_profile() -> AtmosphereProfile:
    return AtmosphereProfile(
        ground_cn2=9.6e-14, ground_wind=3.0, outer_scale=5.0, inner_scale=0.01
    )
