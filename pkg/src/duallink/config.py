"""Run configuration: strict INI-style parsing, canonical rendering,
and content hashing for reproducible reports.

The schema is closed: unknown sections or keys are errors, so a typo
like ``zenit_angle`` cannot silently fall back to a default and waste a
simulation run.  Rendering is canonical (fixed section and key order,
shortest round-trip float form), which makes the config hash stable and
lets ``parse(render(config))`` reproduce the config exactly.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass

from .atmosphere import AtmosphereProfile, LinkGeometry
from .errors import UsageError
from .keyrate import DetectorModel, FiniteSizeParams
from .protocol import ClassicalLayer, SqueezingParams

__all__ = ["RunConfig", "parse_config", "load_config", "render_config", "config_hash"]

_REQUIRED = object()

# section -> key -> (converter, default); _REQUIRED means the key must
# be present.  Order here is the canonical rendering order.
_SCHEMA: dict[str, dict[str, tuple]] = {
    "scenario": {"name": (str, _REQUIRED)},
    "geometry": {
        "wavelength": (float, _REQUIRED),
        "beam_waist": (float, _REQUIRED),
        "zenith_angle": (float, _REQUIRED),
        "satellite_altitude": (float, _REQUIRED),
        "ground_altitude": (float, 0.0),
        "aperture_radius": (float, _REQUIRED),
    },
    "atmosphere": {
        "ground_cn2": (float, _REQUIRED),
        "ground_wind": (float, _REQUIRED),
        "outer_scale": (float, _REQUIRED),
        "inner_scale": (float, _REQUIRED),
        "cn2_scale": (float, 1.0),
    },
    "grid": {"size": (int, 1024)},
    "ensemble": {
        "realizations": (int, 10000),
        "master_seed": (int, 1),
    },
    "squeezing": {"squeezing_db": (float, _REQUIRED)},
    "classical": {
        "displacement": (float, _REQUIRED),
        "carrier_amplitude": (float, _REQUIRED),
    },
    "detector": {
        "efficiency": (float, _REQUIRED),
        "electronic_noise": (float, _REQUIRED),
    },
    "finite_size": {
        "block_size": (float, _REQUIRED),
        "kept_fraction": (float, _REQUIRED),
        "recon_efficiency": (float, _REQUIRED),
        "discretisation": (int, _REQUIRED),
        "total_epsilon": (float, _REQUIRED),
        "aep_interior_eps": (str, "composed"),
    },
    "output": {
        "directory": (str, _REQUIRED),
        "histogram_bin_db": (float, 0.5),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """One fully resolved run: scene, physics, protocol, and outputs."""

    scenario: str
    geometry: LinkGeometry
    profile: AtmosphereProfile
    grid_size: int
    realizations: int
    master_seed: int
    squeezing_db: float
    classical: ClassicalLayer
    detector: DetectorModel
    block_size: float
    kept_fraction: float
    recon_efficiency: float
    discretisation: int
    total_epsilon: float
    aep_interior_eps: str
    output_dir: str
    histogram_bin_db: float

    def __post_init__(self) -> None:
        if not self.scenario or any(c.isspace() for c in self.scenario):
            raise UsageError(
                f"scenario name must be nonempty without whitespace, got {self.scenario!r}"
            )
        if self.grid_size < 2 or self.grid_size & (self.grid_size - 1):
            raise UsageError(f"grid size must be a power of two, got {self.grid_size}")
        if self.realizations < 1:
            raise UsageError(f"realizations must be at least 1, got {self.realizations}")
        if not (0.0 < self.kept_fraction <= 1.0):
            raise UsageError(f"kept fraction must be in (0, 1], got {self.kept_fraction}")
        if self.histogram_bin_db <= 0.0:
            raise UsageError(f"histogram bin must be positive, got {self.histogram_bin_db}")
        # Build the derived parameter objects once so an invalid
        # combination fails at parse time, not mid-run.
        self.squeezing_params()
        self.finite_size_params()

    def squeezing_params(self) -> SqueezingParams:
        return SqueezingParams.from_squeezing_db(self.squeezing_db)

    def finite_size_params(self) -> FiniteSizeParams:
        return FiniteSizeParams.from_total_epsilon(
            block_size=self.block_size,
            kept_length=self.block_size * self.kept_fraction,
            recon_efficiency=self.recon_efficiency,
            discretisation=self.discretisation,
            total_epsilon=self.total_epsilon,
            aep_interior_eps=self.aep_interior_eps,
        )


def _read_sections(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive; typos must not alias
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text against the closed schema."""
    sections = _read_sections(text)

    unknown_sections = set(sections) - set(_SCHEMA)
    if unknown_sections:
        raise UsageError(f"unknown config sections: {sorted(unknown_sections)}")

    values: dict[str, dict[str, object]] = {}
    for section, fields in _SCHEMA.items():
        present = sections.get(section, {})
        unknown_keys = set(present) - set(fields)
        if unknown_keys:
            raise UsageError(
                f"unknown keys in [{section}]: {sorted(unknown_keys)}"
            )
        parsed: dict[str, object] = {}
        for key, (convert, default) in fields.items():
            if key in present:
                raw = present[key]
                try:
                    parsed[key] = convert(raw)
                except ValueError as exc:
                    raise UsageError(
                        f"[{section}] {key}: cannot parse {raw!r} as {convert.__name__}"
                    ) from exc
            elif default is _REQUIRED:
                raise UsageError(f"missing required key [{section}] {key}")
            else:
                parsed[key] = default
        values[section] = parsed

    geometry = LinkGeometry(
        ground_altitude=values["geometry"]["ground_altitude"],
        satellite_altitude=values["geometry"]["satellite_altitude"],
        zenith_angle=values["geometry"]["zenith_angle"],
        wavelength=values["geometry"]["wavelength"],
        beam_waist=values["geometry"]["beam_waist"],
        aperture_radius=values["geometry"]["aperture_radius"],
    )
    profile = AtmosphereProfile(
        ground_cn2=values["atmosphere"]["ground_cn2"],
        ground_wind=values["atmosphere"]["ground_wind"],
        outer_scale=values["atmosphere"]["outer_scale"],
        inner_scale=values["atmosphere"]["inner_scale"],
        cn2_scale=values["atmosphere"]["cn2_scale"],
    )
    classical = ClassicalLayer(
        displacement=values["classical"]["displacement"],
        carrier_amplitude=values["classical"]["carrier_amplitude"],
    )
    detector = DetectorModel(
        efficiency=values["detector"]["efficiency"],
        electronic_noise=values["detector"]["electronic_noise"],
    )
    return RunConfig(
        scenario=values["scenario"]["name"],
        geometry=geometry,
        profile=profile,
        grid_size=values["grid"]["size"],
        realizations=values["ensemble"]["realizations"],
        master_seed=values["ensemble"]["master_seed"],
        squeezing_db=values["squeezing"]["squeezing_db"],
        classical=classical,
        detector=detector,
        block_size=values["finite_size"]["block_size"],
        kept_fraction=values["finite_size"]["kept_fraction"],
        recon_efficiency=values["finite_size"]["recon_efficiency"],
        discretisation=values["finite_size"]["discretisation"],
        total_epsilon=values["finite_size"]["total_epsilon"],
        aep_interior_eps=values["finite_size"]["aep_interior_eps"],
        output_dir=values["output"]["directory"],
        histogram_bin_db=values["output"]["histogram_bin_db"],
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _render_value(value) -> str:
    # repr of a float is its shortest round-trip form, so a rendered
    # config parses back to bit-identical numbers.
    return repr(value) if isinstance(value, float) else str(value)


def render_config(config: RunConfig) -> str:
    """Canonical text form; parse_config inverts it exactly."""
    flat = {
        "scenario": {"name": config.scenario},
        "geometry": {
            "wavelength": config.geometry.wavelength,
            "beam_waist": config.geometry.beam_waist,
            "zenith_angle": config.geometry.zenith_angle,
            "satellite_altitude": config.geometry.satellite_altitude,
            "ground_altitude": config.geometry.ground_altitude,
            "aperture_radius": config.geometry.aperture_radius,
        },
        "atmosphere": {
            "ground_cn2": config.profile.ground_cn2,
            "ground_wind": config.profile.ground_wind,
            "outer_scale": config.profile.outer_scale,
            "inner_scale": config.profile.inner_scale,
            "cn2_scale": config.profile.cn2_scale,
        },
        "grid": {"size": config.grid_size},
        "ensemble": {
            "realizations": config.realizations,
            "master_seed": config.master_seed,
        },
        "squeezing": {"squeezing_db": config.squeezing_db},
        "classical": {
            "displacement": config.classical.displacement,
            "carrier_amplitude": config.classical.carrier_amplitude,
        },
        "detector": {
            "efficiency": config.detector.efficiency,
            "electronic_noise": config.detector.electronic_noise,
        },
        "finite_size": {
            "block_size": config.block_size,
            "kept_fraction": config.kept_fraction,
            "recon_efficiency": config.recon_efficiency,
            "discretisation": config.discretisation,
            "total_epsilon": config.total_epsilon,
            "aep_interior_eps": config.aep_interior_eps,
        },
        "output": {
            "directory": config.output_dir,
            "histogram_bin_db": config.histogram_bin_db,
        },
    }
    out = io.StringIO()
    for section, fields in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key in fields:
            out.write(f"{key} = {_render_value(flat[section][key])}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical rendering; stamps every output file."""
    return hashlib.sha256(render_config(config).encode("utf-8")).hexdigest()
