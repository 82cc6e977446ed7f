import csv
import json
import math
import os

import numpy as np
import pytest

from cqednet import cli
from cqednet.linear_response import local_maxima
from cqednet.verify import CheckResult

ZERO_DAMPING = {k: 0.0 for k in ("kappa_1l", "kappa_1r", "kappa_2l", "kappa_2r", "kappa_1loss", "kappa_2loss",
                                 "kappa_b_bs", "kappa_b_loss", "gamma_par", "gamma_las")}


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def column(path, name):
    header, rows = read_csv(path)
    k = header.index(name)
    return np.array([float(r[k]) for r in rows])


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    return tmp_path


def test_modes_symmetric(outdir):
    assert cli.run(["modes", "--g", "5", "5", "--v", "9", "9", "--out", "modes.csv"]) == 0
    freqs = np.sort(column(outdir / "modes.csv", "frequency"))
    np.testing.assert_allclose(freqs, [-math.sqrt(187), -5, 0, 5, math.sqrt(187)], atol=1e-10)
    assert freqs[-1] == pytest.approx(13.674, abs=1e-3)


def test_modes_numeric_labels(outdir, capsys):
    assert cli.run(["modes", "--g", "0", "5", "--v", "9", "9"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("label,frequency") and "mode0" in out


def test_spectrum_empty_three_peaks(outdir):
    argv = ["spectrum", "--preset", "fig2", "--v-scaling", "preset", "--empty", "--points", "1201",
            "--out", "empty.csv"]
    assert cli.run(argv) == 0
    flux_b = column(outdir / "empty.csv", "flux_B")
    delta = column(outdir / "empty.csv", "delta_mhz")
    peaks = delta[local_maxima(flux_b)]
    assert len(peaks) == 3 and np.min(np.abs(peaks)) < 0.1


def test_spectrum_default_name_and_outputs(outdir):
    argv = ["spectrum", "--preset", "fig3", "--in", "C", "--points", "51", "--plot-script", "--figure"]
    assert cli.run(argv) == 0
    csv_path = outdir / "spectrum_fig3_C.csv"
    assert csv_path.exists()
    assert "flux_C" in (outdir / "spectrum_fig3_C.gp").read_text()
    assert (outdir / "spectrum_fig3_C.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert not [p for p in os.listdir(outdir) if p.endswith(".tmp")]


def test_spectrum_deterministic(outdir):
    for name in ("a.csv", "b.csv"):
        assert cli.run(["spectrum", "--preset", "fig2", "--points", "101", "--out", name]) == 0
    assert (outdir / "a.csv").read_bytes() == (outdir / "b.csv").read_bytes()


def test_derive_rates_roundtrip(outdir):
    assert cli.run(["derive-rates", "--preset", "fig2", "--v-scaling", "preset", "--out", "rates.json"]) == 0
    rates = json.loads((outdir / "rates.json").read_text())
    config = outdir / "run.json"
    config.write_text(json.dumps({"rates_override": rates, "atoms": {"g_eff": [5.0, 5.0]}}))
    assert cli.run(["spectrum", "--config", str(config), "--points", "101", "--out", "from_json.csv"]) == 0
    assert cli.run(["spectrum", "--preset", "fig2", "--v-scaling", "preset", "--points", "101",
                    "--out", "from_preset.csv"]) == 0
    assert (outdir / "from_json.csv").read_bytes() == (outdir / "from_preset.csv").read_bytes()


def test_derive_rates_from_geometry(capsys):
    assert cli.run(["derive-rates", "--preset", "fig2", "--from-geometry"]) == 0
    rates = json.loads(capsys.readouterr().out)
    assert rates["kappa_1"] == pytest.approx(rates["kappa_1l"] + rates["kappa_1loss"] + rates["gamma_las"])
    assert cli.run(["derive-rates", "--from-geometry"]) == 1


def test_saturate_small_run(outdir):
    argv = ["saturate", "--preset", "fig3", "--v-scaling", "preset", "--powers", "1e-9", "1e-8",
            "--points", "101", "--out", "sat.csv", "--figure"]
    assert cli.run(argv) == 0
    T = column(outdir / "sat.csv", "norm_transmission")
    assert len(T) == 2 and T[1] < T[0]
    assert (outdir / "sat.png").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"preset": "fig2", "geometry": {"R2": 1.2}}))
    assert cli.run(["derive-rates", "--config", str(config)]) == 1
    assert "geometry.R2" in capsys.readouterr().err


def test_argument_error_exit_code():
    assert cli.run(["spectrum", "--preset", "fig7"]) == 1
    assert cli.run(["spectrum"]) == 1


def test_saturate_needs_saturation_numbers(outdir):
    assert cli.run(["saturate", "--preset", "fig2", "--powers", "1e-9"]) == 1


def test_singular_system_exit_code(tmp_path, outdir):
    config = tmp_path / "singular.json"
    config.write_text(json.dumps({
        "rates_override": {**ZERO_DAMPING, "v1": 9.0, "v2": 9.0},
        "atoms": {"g_eff": [5.0, 5.0]},
        "sweep": {"delta_min": -1.0, "delta_max": 1.0, "n_points": 3},
    }))
    assert cli.run(["spectrum", "--config", str(config)]) == 2


def test_verify_exit_codes(outdir, monkeypatch):
    assert cli.run(["verify", "--only", "bracket_vs_quadrature", "--json", "v.json"]) == 0
    assert json.loads((outdir / "v.json").read_text())["passed"] is True
    monkeypatch.setattr(cli, "verification_suite",
                        lambda seed=0, only=None: [CheckResult("forced", False, 1.0, 0.1)])
    assert cli.run(["verify"]) == 3


def test_write_atomic_keeps_old_file_on_failure(tmp_path):
    target = tmp_path / "out.csv"
    cli.write_atomic(target, "old\n")
    with pytest.raises(TypeError):
        cli.write_atomic(target, 12345)
    assert target.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["out.csv"]
