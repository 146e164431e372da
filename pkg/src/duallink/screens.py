"""Slab partitioning of the turbulent path and random phase screen synthesis.

A slab is a horizontal altitude band thin enough that its own scintillation
is negligible, both in absolute terms and relative to the whole channel;
each turbulent slab is represented by one random phase screen placed at the
middle of its slant extent. Screens are drawn from the modified von Karman
spectrum with the slab's local Fried parameter.

The FFT sampling of the spectrum misses power below one grid-window cycle,
which shows up as a structure-function deficit at large separations. Three
levels of 3x3 subharmonic patches repair this; each patch amplitude carries
the PSD integrated over its frequency cell (tensor Gauss-Legendre) rather
than a midpoint sample, because near zero frequency the spectrum is so steep
that midpoint weighting underfills the cells by tens of percent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .atmosphere import (
    NO_TURBULENCE,
    AtmosphereProfile,
    LinkGeometry,
    NoTurbulence,
    TurbulenceDiagnostics,
    _cn2_array,
    fried_parameter,
    rytov_variance,
    scintillation_index,
)
from .errors import UsageError

# Both slab conditions: absolute scintillation bound and share of the total.
_SLAB_SIGMA_CAP = 0.1
_SLAB_SHARE_CAP = 0.1
_MAX_SLABS = 64
# Fraction of the integrated Cn2 kept below the modeled turbulence top.
_EFFECTIVE_ATMOSPHERE_FRACTION = 0.999


class ScreenResolutionWarning(UserWarning):
    """Grid window too small to resolve the outer scale of the spectrum."""


@dataclass(frozen=True)
class Slab:
    """One altitude band of the propagation path."""

    h_lo: float
    h_hi: float
    path_length: float  # slant distance across the band
    fried: float | NoTurbulence  # local r0 evaluated over the band
    scint_index: float  # local sigma_I^2 of the band

    @property
    def has_screen(self) -> bool:
        return not isinstance(self.fried, NoTurbulence)


@dataclass(frozen=True)
class SlabPlan:
    """Contiguous slabs from the ground up; the last is pure vacuum."""

    slabs: tuple[Slab, ...]

    def __post_init__(self) -> None:
        if not self.slabs:
            raise UsageError("a slab plan needs at least one slab")
        for a, b in zip(self.slabs[:-1], self.slabs[1:]):
            if not math.isclose(a.h_hi, b.h_lo, rel_tol=0.0, abs_tol=1e-6):
                raise UsageError("slabs must be contiguous and non-overlapping")

    @property
    def boundaries(self) -> tuple[float, ...]:
        return tuple(s.h_lo for s in self.slabs) + (self.slabs[-1].h_hi,)

    @property
    def screen_count(self) -> int:
        return sum(1 for s in self.slabs if s.has_screen)

    @property
    def total_path_length(self) -> float:
        return sum(s.path_length for s in self.slabs)


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    """One random phase realization on a square grid (radians)."""

    grid: np.ndarray
    spacing: float
    slab_index: int
    rng_stream_id: str


@dataclass(frozen=True)
class ScreenStreams:
    """Named, counter-based random substreams, one per (realization, slab).

    Every stream is derived from (master seed, realization, slab index)
    alone, so any subset of realizations can be regenerated bit-identically
    in any execution order and on any worker count.
    """

    master_seed: int
    realization: int

    def generator(self, slab_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.realization, slab_index)
        )
        return np.random.Generator(np.random.Philox(seq))

    def stream_id(self, slab_index: int) -> str:
        return f"{self.master_seed}/{self.realization}/{slab_index}"


def plan_slabs(
    geom: LinkGeometry, profile: AtmosphereProfile, diagnostics: TurbulenceDiagnostics | None
) -> SlabPlan:
    """Greedy bottom-up partition of the turbulent path.

    Each slab grows upward until its locally evaluated scintillation index
    would reach the cap (the lesser of 0.1 and 10% of the whole-channel
    value); everything above the altitude holding 99.9% of the integrated
    Cn2 becomes a single vacuum slab with no screen.
    """
    h0 = geom.ground_altitude
    top = geom.satellite_altitude
    sec = geom.sec_zenith

    def vacuum(h_lo: float, h_hi: float) -> Slab:
        return Slab(h_lo, h_hi, (h_hi - h_lo) * sec, NO_TURBULENCE, 0.0)

    if profile.cn2_scale == 0.0:
        return SlabPlan((vacuum(h0, top),))

    # Dense altitude grid: linear through the ground layer, logarithmic above.
    lin_top = min(h0 + 2e3, top)
    hs = np.linspace(h0, lin_top, 8001)
    if lin_top < top:
        hs = np.concatenate([hs[:-1], np.geomspace(lin_top, top, 30000)])
    c = _cn2_array(hs, profile)
    cum_cn2 = np.concatenate([[0.0], np.cumsum(0.5 * (c[1:] + c[:-1]) * np.diff(hs))])
    kern = c * (hs - h0) ** (5.0 / 6.0)
    cum_ryt = np.concatenate([[0.0], np.cumsum(0.5 * (kern[1:] + kern[:-1]) * np.diff(hs))])
    rytov_factor = 2.25 * geom.wavenumber ** (7.0 / 6.0) * sec ** (11.0 / 6.0)

    h_top = float(
        np.interp(_EFFECTIVE_ATMOSPHERE_FRACTION * cum_cn2[-1], cum_cn2, hs)
    )

    sigma_total = (
        diagnostics.scintillation_index
        if diagnostics is not None
        else scintillation_index(rytov_variance(geom, profile))
    )
    cap = min(_SLAB_SIGMA_CAP, _SLAB_SHARE_CAP * sigma_total)
    if cap <= 0.0:
        raise UsageError("whole-channel scintillation index must be positive to plan slabs")
    # Rytov budget per slab for a scintillation index just under the cap.
    budget = brentq(lambda x: scintillation_index(x) - cap * (1.0 - 1e-3), 0.0, 1.0)

    edges = [h0]
    ryt_at = lambda h: float(np.interp(h, hs, cum_ryt))
    while edges[-1] < h_top:
        if len(edges) > _MAX_SLABS:
            raise UsageError(
                f"slab conditions need more than {_MAX_SLABS} slabs; "
                "check the turbulence profile and geometry"
            )
        target = ryt_at(edges[-1]) + budget / rytov_factor
        if target >= ryt_at(h_top):
            edges.append(h_top)
        else:
            edges.append(float(np.interp(target, cum_ryt, hs)))

    slabs = []
    for h_lo, h_hi in zip(edges[:-1], edges[1:]):
        local_r0 = fried_parameter(geom, profile, h_lo, h_hi)
        local_scint = scintillation_index(rytov_variance(geom, profile, h_lo, h_hi))
        slabs.append(Slab(h_lo, h_hi, (h_hi - h_lo) * sec, local_r0, local_scint))
    if h_top < top:
        slabs.append(vacuum(h_top, top))
    return SlabPlan(tuple(slabs))


def mvk_psd(f, fried: float, outer_scale: float, inner_scale: float):
    """Modified von Karman phase PSD, frequency in cycles per meter."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0.0):
        raise UsageError("spatial frequency must be nonnegative")
    f0 = 1.0 / outer_scale
    fm = 0.9422 / inner_scale
    out = 0.023 * fried ** (-5.0 / 3.0) * np.exp(-((f / fm) ** 2)) / (f**2 + f0**2) ** (11.0 / 6.0)
    return out if out.shape else float(out)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _cell_integrated_psd(
    fx0: float, fy0: float, width: float, fried: float, outer_scale: float, inner_scale: float
) -> float:
    """Integral of the PSD over one square frequency cell centered at (fx0, fy0)."""
    half = 0.5 * width
    gx = fx0 + half * _GL_NODES
    gy = fy0 + half * _GL_NODES
    f = np.hypot(gx[:, None], gy[None, :])
    vals = mvk_psd(f, fried, outer_scale, inner_scale)
    return float(_GL_WEIGHTS @ vals @ _GL_WEIGHTS) * half * half


_SUBHARMONIC_LEVELS = 3

# The r0-independent spectral factors repeat across every screen of a run,
# so they are cached per grid geometry (r0 enters as a scalar power).
@lru_cache(maxsize=8)
def _fft_amplitude_factor(n: int, spacing: float, l_out: float, l_in: float) -> np.ndarray:
    """sqrt(PSD / r0^(-5/3)) * df on the FFT lattice, DC zeroed."""
    fx = np.fft.fftfreq(n, spacing)
    f2 = fx[:, None] ** 2 + fx[None, :] ** 2
    f0 = 1.0 / l_out
    fm = 0.9422 / l_in
    psd_geo = 0.023 * np.exp(-f2 / fm**2) / (f2 + f0**2) ** (11.0 / 6.0)
    psd_geo[0, 0] = 0.0
    out = np.sqrt(psd_geo) / (n * spacing)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=8)
def _subharmonic_factors(n: int, spacing: float, l_out: float, l_in: float):
    """Per level: sqrt cell weights (3x3, r0 factored out) and axis phasors (3xN)."""
    df = 1.0 / (n * spacing)
    coords = (np.arange(n) - n // 2) * spacing
    levels = []
    for level in range(1, _SUBHARMONIC_LEVELS + 1):
        dfb = df / 3.0**level
        w = np.empty((3, 3))
        for a, i in enumerate((-1, 0, 1)):
            for b, j in enumerate((-1, 0, 1)):
                w[a, b] = _cell_integrated_psd(i * dfb, j * dfb, dfb, 1.0, l_out, l_in)
        w[1, 1] = 0.0  # center cell: owned by the next level, or DC at the last
        phasor = np.exp(2j * np.pi * dfb * np.outer([-1.0, 0.0, 1.0], coords))
        sw = np.sqrt(w)
        sw.setflags(write=False)
        phasor.setflags(write=False)
        levels.append((sw, phasor))
    return tuple(levels)


def generate_screen(
    slab: Slab,
    grid_size: int,
    spacing: float,
    rng: np.random.Generator,
    profile: AtmosphereProfile,
    stream_id: str = "",
    slab_index: int = 0,
) -> PhaseScreen:
    """Draw one phase screen for a slab on an N x N grid.

    Spectral synthesis: circular-Gaussian amplitudes weighted by
    sqrt(PSD) * df on the FFT lattice (the real part of the inverse
    transform is the screen; the imaginary part would be a second
    independent screen and is discarded), plus three levels of 3x3
    subharmonic patches whose amplitudes carry the cell-integrated PSD.
    """
    n = grid_size
    if n <= 0 or n & (n - 1):
        raise UsageError(f"grid size must be a power of two, got {n}")
    if spacing <= 0.0:
        raise UsageError("grid spacing must be positive")
    if not slab.has_screen:
        return PhaseScreen(np.zeros((n, n)), spacing, slab_index, stream_id)
    r0 = slab.fried
    l_out, l_in = profile.outer_scale, profile.inner_scale
    if n * spacing < l_out / 2.0:
        warnings.warn(
            f"grid window {n * spacing:.3g} m resolves less than half the outer scale "
            f"{l_out:.3g} m; low-frequency phase power will be underrepresented",
            ScreenResolutionWarning,
            stacklevel=2,
        )

    # DC cell is zeroed in the cached factor; the subharmonic levels own
    # everything below one window cycle.
    scale = r0 ** (-5.0 / 6.0)
    factor = _fft_amplitude_factor(n, spacing, l_out, l_in)
    amplitude = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    screen = np.fft.ifft2(amplitude * (scale * factor)).real * (n * n)

    sub = np.zeros((n, n), dtype=complex)
    for sqrt_w, phasor in _subharmonic_factors(n, spacing, l_out, l_in):
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        a *= scale * sqrt_w
        # sum over the 3x3 patch grid as two small matmuls
        sub += phasor.T @ (a @ phasor)
    sub_real = sub.real
    screen += sub_real - sub_real.mean()
    return PhaseScreen(screen, spacing, slab_index, stream_id)


def screen_structure_function(screens: list[PhaseScreen], separations) -> list[float]:
    """Empirical phase structure function, averaged over pixels and screens.

    D(r) = <(phi(x + r) - phi(x))^2> along both grid axes; separations must
    be grid-aligned (integer multiples of the common spacing).
    """
    if len(screens) < 50:
        raise UsageError(f"need at least 50 screens for a stable estimate, got {len(screens)}")
    spacing = screens[0].spacing
    n = screens[0].grid.shape[0]
    for s in screens:
        if s.spacing != spacing or s.grid.shape != (n, n):
            raise UsageError("screens must share grid geometry")

    shifts = []
    for r in separations:
        m = round(r / spacing)
        if not math.isclose(m * spacing, r, rel_tol=1e-6, abs_tol=1e-12):
            raise UsageError(f"separation {r} is not a multiple of the grid spacing {spacing}")
        if m < 1 or m >= n:
            raise UsageError(f"separation {r} outside the grid (max {(n - 1) * spacing})")
        shifts.append(m)

    totals = np.zeros(len(shifts))
    counts = np.zeros(len(shifts))
    for s in screens:
        g = s.grid
        for idx, m in enumerate(shifts):
            dx = g[:, m:] - g[:, :-m]
            dy = g[m:, :] - g[:-m, :]
            totals[idx] += float(np.sum(dx * dx)) + float(np.sum(dy * dy))
            counts[idx] += dx.size + dy.size
    return list(totals / counts)
