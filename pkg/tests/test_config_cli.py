"""Config schema, canonical rendering, and the command-line workflow."""

import math

import pytest

from duallink.cli import main
from duallink.config import config_hash, parse_config, render_config
from duallink.ensemble import fading_stats, load_ensemble
from duallink.errors import UsageError
from duallink.optics import vacuum_beam_radius

BASE_CONFIG = """\
[scenario]
name = smoke

[geometry]
wavelength = 1.064e-6
beam_waist = 0.15
zenith_angle = 0.0
satellite_altitude = 500e3
aperture_radius = 0.5

[atmosphere]
ground_cn2 = 9.6e-14
ground_wind = 3.0
outer_scale = 5.0
inner_scale = 0.01

[grid]
size = 64

[ensemble]
realizations = 6
master_seed = 7

[squeezing]
squeezing_db = 10.0

[classical]
displacement = 10.0
carrier_amplitude = 100.0

[detector]
efficiency = 0.61
electronic_noise = 0.12

[finite_size]
block_size = 1e10
kept_fraction = 0.5
recon_efficiency = 0.98
discretisation = 5
total_epsilon = 1e-9

[output]
directory = {out}
"""


def write_config(tmp_path, **edits) -> str:
    text = BASE_CONFIG.format(out=tmp_path / "out")
    for old, new in edits.items():
        assert old in text
        text = text.replace(old, new)
    path = tmp_path / "run.ini"
    path.write_text(text)
    return str(path)


# ------------------------------------------------------------------ config


def test_parse_applies_defaults(tmp_path):
    config = parse_config(BASE_CONFIG.format(out=tmp_path))
    assert config.scenario == "smoke"
    assert config.geometry.ground_altitude == 0.0
    assert config.profile.cn2_scale == 1.0
    assert config.grid_size == 64
    assert config.aep_interior_eps == "composed"
    assert config.histogram_bin_db == 0.5


def test_parse_render_round_trip(tmp_path):
    config = parse_config(BASE_CONFIG.format(out=tmp_path))
    rendered = render_config(config)
    assert parse_config(rendered) == config
    # Canonical form is a fixed point.
    assert render_config(parse_config(rendered)) == rendered


def test_config_hash_tracks_content(tmp_path):
    config = parse_config(BASE_CONFIG.format(out=tmp_path))
    same = parse_config(render_config(config))
    assert config_hash(config) == config_hash(same)
    other = parse_config(
        BASE_CONFIG.format(out=tmp_path).replace("zenith_angle = 0.0", "zenith_angle = 30.0")
    )
    assert config_hash(other) != config_hash(config)


def test_unknown_section_rejected(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path) + "\n[plotting]\nstyle = fancy\n"
    with pytest.raises(UsageError, match="unknown config sections"):
        parse_config(text)


def test_unknown_key_rejected(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path).replace(
        "zenith_angle = 0.0", "zenit_angle = 0.0"
    )
    with pytest.raises(UsageError, match="zenit_angle"):
        parse_config(text)


def test_missing_required_key_rejected(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path).replace("squeezing_db = 10.0\n", "")
    with pytest.raises(UsageError, match="squeezing_db"):
        parse_config(text)


def test_unparseable_value_rejected(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path).replace(
        "beam_waist = 0.15", "beam_waist = wide"
    )
    with pytest.raises(UsageError, match="beam_waist"):
        parse_config(text)


def test_duplicate_key_rejected(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path).replace(
        "ground_wind = 3.0", "ground_wind = 3.0\nground_wind = 4.0"
    )
    with pytest.raises(UsageError, match="malformed config"):
        parse_config(text)


def test_physics_validation_happens_at_parse(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path).replace(
        "zenith_angle = 0.0", "zenith_angle = 95.0"
    )
    with pytest.raises(UsageError, match="zenith"):
        parse_config(text)


def test_grid_size_must_be_power_of_two(tmp_path):
    text = BASE_CONFIG.format(out=tmp_path).replace("size = 64", "size = 100")
    with pytest.raises(UsageError, match="power of two"):
        parse_config(text)


# --------------------------------------------------------------------- cli


def run_cli(*argv) -> int:
    return main(list(argv))


def test_simulate_channel_writes_products(tmp_path, capsys):
    config = write_config(tmp_path)
    assert run_cli("simulate-channel", "--config", config) == 0
    out = tmp_path / "out"
    ensemble_path = out / "smoke.ensemble"
    assert ensemble_path.exists()
    assert (out / "smoke_stats.txt").exists()
    assert (out / "smoke_histogram.csv").exists()
    assert (out / "smoke_steps.csv").exists()

    ens = load_ensemble(ensemble_path)
    assert len(ens) == 6
    assert ens.master_seed == 7
    stats_text = (out / "smoke_stats.txt").read_text()
    assert stats_text.startswith("# duallink 0.1.0 config ")
    assert "mean_loss_db" in stats_text
    assert "simulated 6 realizations" in capsys.readouterr().out


def test_simulate_channel_is_deterministic_across_threads(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("simulate-channel", "--config", config, "--threads", "1") == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert run_cli("simulate-channel", "--config", config, "--threads", "2") == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second


def test_simulate_channel_zero_turbulence_matches_diffraction(tmp_path):
    # cn2_scale defaults to 1.0; switch the turbulence off explicitly.
    text = BASE_CONFIG.format(out=tmp_path / "out")
    text = text.replace("inner_scale = 0.01", "inner_scale = 0.01\ncn2_scale = 0.0")
    text = text.replace("realizations = 6", "realizations = 1")
    path = tmp_path / "vacuum.ini"
    path.write_text(text)

    assert run_cli("simulate-channel", "--config", str(path)) == 0
    out = tmp_path / "out"
    ens = load_ensemble(out / "smoke.ensemble")
    stats = fading_stats(ens)
    assert stats.var_sqrt <= 1e-15
    assert math.isinf(ens.coherence_time)
    # No coherence stepping without a finite coherence time.
    assert not (out / "smoke_steps.csv").exists()

    w = vacuum_beam_radius(ens.geometry, ens.geometry.path_length)
    expected = 1.0 - math.exp(-2.0 * 0.5**2 / w**2)
    assert stats.mean_eta == pytest.approx(expected, rel=0.02)


def test_cli_overrides(tmp_path):
    config = write_config(tmp_path)
    override_out = tmp_path / "elsewhere"
    assert (
        run_cli(
            "simulate-channel",
            "--config",
            config,
            "--seed",
            "99",
            "--realizations",
            "2",
            "--out",
            str(override_out),
        )
        == 0
    )
    ens = load_ensemble(override_out / "smoke.ensemble")
    assert len(ens) == 2
    assert ens.master_seed == 99


def test_key_rate_command(tmp_path):
    config = write_config(tmp_path)
    assert run_cli("simulate-channel", "--config", config) == 0
    ensemble_path = tmp_path / "out" / "smoke.ensemble"
    assert run_cli("key-rate", "--config", config, "--ensemble", str(ensemble_path)) == 0

    report = (tmp_path / "out" / "smoke_keyrate.txt").read_text()
    assert "finite_size_rate" in report
    csv_lines = (tmp_path / "out" / "smoke_keyrate.csv").read_text().splitlines()
    assert csv_lines[0].startswith("# duallink")
    header = csv_lines[1].split(",")
    row = dict(zip(header, csv_lines[2].split(",")))
    k_fin = float(row["finite_size_rate"])
    k_asym = float(row["asymptotic_rate"])
    k_ideal = float(row["ideal_rate"])
    k_plob = float(row["plob_bound"])
    assert k_fin <= k_asym <= k_ideal <= k_plob
    assert float(row["zenith_angle_deg"]) == 0.0


def test_key_rate_rejects_mismatched_ensemble(tmp_path, capsys):
    config = write_config(tmp_path)
    assert run_cli("simulate-channel", "--config", config) == 0
    ensemble_path = tmp_path / "out" / "smoke.ensemble"

    skewed = write_config(tmp_path, **{"zenith_angle = 0.0": "zenith_angle = 30.0"})
    assert run_cli("key-rate", "--config", skewed, "--ensemble", str(ensemble_path)) == 1
    assert "does not match config" in capsys.readouterr().err


def test_link_budget_command(tmp_path):
    config = write_config(tmp_path)
    assert run_cli("simulate-channel", "--config", config) == 0
    ensemble_path = tmp_path / "out" / "smoke.ensemble"
    assert run_cli("link-budget", "--config", config, "--ensemble", str(ensemble_path)) == 0

    lines = (tmp_path / "out" / "smoke_linkbudget.csv").read_text().splitlines()
    assert lines[1] == "realization,eta,snr,ber"
    rows = [line.split(",") for line in lines[2:-1]]
    assert len(rows) == 6
    ens = load_ensemble(ensemble_path)
    for row, eta in zip(rows, ens.etas):
        assert float(row[1]) == pytest.approx(eta, rel=1e-15)
        assert float(row[2]) == pytest.approx(4.0 * eta * 10.0**2, rel=1e-12)
    assert lines[-1].startswith("# ensemble_mean_ber = ")

    # Doubling the displacement quadruples every SNR entry.
    doubled = write_config(tmp_path, **{"displacement = 10.0": "displacement = 20.0"})
    assert run_cli("link-budget", "--config", doubled, "--ensemble", str(ensemble_path)) == 0
    lines2 = (tmp_path / "out" / "smoke_linkbudget.csv").read_text().splitlines()
    for row, row2 in zip(lines[2:-1], lines2[2:-1]):
        assert float(row2.split(",")[2]) == pytest.approx(
            4.0 * float(row.split(",")[2]), rel=1e-12
        )


def test_protocol_verify_passes_and_is_deterministic(tmp_path, capsys):
    config = write_config(tmp_path)
    assert run_cli("protocol-verify", "--config", config) == 0
    report_path = tmp_path / "out" / "smoke_verify.txt"
    first = report_path.read_bytes()
    assert b"verdict PASS" in first
    assert "-> PASS" in capsys.readouterr().out
    assert run_cli("protocol-verify", "--config", config) == 0
    assert report_path.read_bytes() == first


def test_protocol_verify_sabotage_is_detected(tmp_path, capsys):
    config = write_config(tmp_path)
    assert run_cli("protocol-verify", "--config", config, "--sabotage") == 3
    report = (tmp_path / "out" / "smoke_verify.txt").read_text()
    assert "verdict FAIL" in report
    assert "zero_leakage no" in report
    assert "deviates from closed forms" in capsys.readouterr().err


def test_protocol_verify_without_classical_layer(tmp_path):
    config = write_config(tmp_path, **{"displacement = 10.0": "displacement = 0.0"})
    assert run_cli("protocol-verify", "--config", config) == 0
    report = (tmp_path / "out" / "smoke_verify.txt").read_text()
    ber_line = next(line for line in report.splitlines() if line.startswith("ber"))
    assert float(ber_line.split()[1]) == pytest.approx(0.5, abs=0.01)


def test_missing_config_file_exits_one(tmp_path, capsys):
    assert run_cli("simulate-channel", "--config", str(tmp_path / "nope.ini")) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_config_exits_one(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(BASE_CONFIG.format(out=tmp_path).replace("size = 64", "size = 63"))
    assert run_cli("simulate-channel", "--config", str(path)) == 1
    assert "power of two" in capsys.readouterr().err