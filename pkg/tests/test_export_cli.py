import subprocess
import sys

import numpy as np
import pytest

from nvxy8.cli import main
from nvxy8.config import apply_overrides, default_config
from nvxy8.export import ExportError, export, read_map_csv
from nvxy8.geometry import read_pgm
from nvxy8.pulses import read_iq_text
from nvxy8.scenarios import run_scenario

FAST_SWEEP = ["--set", "experiment.repeats=2", "--set", "sequence.tau_start=25e-9",
              "--set", "sequence.tau_stop=27e-9"]


def _run(argv, capsys=None):
    code = main(argv)
    return code, (capsys.readouterr() if capsys else None)


def test_sweep_csv_header(tmp_path, capsys):
    code, out = _run(["xy8-sweep", "--out", str(tmp_path), "--no-figures"] + FAST_SWEEP, capsys)
    assert code == 0
    assert "peak_tau_s = " in out.out
    lines = (tmp_path / "xy8_sweep.csv").read_text().splitlines()
    assert lines[0] == "tau_s,field_T"
    assert len(lines) == 22
    assert (tmp_path / "xy8_sweep_repeats.csv").read_text().startswith("tau_s,field_T_r0,field_T_r1\n")
    report = (tmp_path / "report.txt").read_text()
    assert "config_sha256 = " in report and "\nseed = 0\n" in report
    assert (tmp_path / "config_resolved.ini").exists()


def test_rerun_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["xy8-image", "--out", str(tmp_path / d), "--format", "both", "--no-figures", "-q"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


@pytest.mark.parametrize("fmt,csv,pgm", [("csv", True, False), ("pgm", False, True), ("both", True, True)])
def test_format_selection(tmp_path, fmt, csv, pgm):
    assert main(["xy8-image", "--out", str(tmp_path), "--format", fmt, "--no-figures", "-q"]) == 0
    assert (tmp_path / "field_map.csv").exists() == csv
    assert (tmp_path / "field_map.pgm").exists() == pgm
    assert (tmp_path / "image_profile.csv").exists()


def test_map_round_trips(tmp_path):
    cfg = default_config("xy8-image")
    res = run_scenario(cfg)
    export(res, tmp_path, "both")
    fmap = res.maps["field_map"]
    x, y, v = read_map_csv(tmp_path / "field_map.csv")
    assert x == pytest.approx(fmap.x, rel=1e-9)
    assert y == pytest.approx(fmap.y, rel=1e-9)
    assert v == pytest.approx(fmap.values, rel=1e-9, abs=1e-20)
    back = read_pgm(tmp_path / "field_map.pgm")
    vmax = max(np.abs(m.values).max() for m in res.maps.values())
    assert np.abs(back - fmap.values).max() <= 2 * vmax / 65535


def test_waveform_files(tmp_path):
    code = main(["compile-waveform", "--out", str(tmp_path), "--set", "sequence.n_reps=1", "-q"])
    assert code == 0
    wf = read_iq_text(tmp_path / "waveform_iq.txt")
    res = run_scenario(apply_overrides(default_config("compile-waveform"), ["sequence.n_reps=1"]))
    assert wf == res.waveform
    assert (tmp_path / "waveform_iq.bin").stat().st_size == 4 * len(wf)
    assert (tmp_path / "waveform.png").exists()


@pytest.mark.parametrize("verb,figure", [("odmr", "odmr"), ("hahn", "hahn"), ("rabi", "rabi"),
                                         ("xy8-image", "xy8_image")])
def test_figures_written(tmp_path, verb, figure):
    assert main([verb, "--out", str(tmp_path), "-q"]) == 0
    png = tmp_path / f"{figure}.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_no_figures(tmp_path):
    assert main(["odmr", "--out", str(tmp_path), "--no-figures", "-q"]) == 0
    assert not list(tmp_path.glob("*.png"))


def test_config_file_and_seed(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text("[experiment]\nseed = 5\nrepeats = 2\n[sequence]\ntau_start = 25e-9\ntau_stop = 27e-9\n")
    assert main(["xy8-sweep", "--config", str(ini), "--out", str(tmp_path / "o"), "--no-figures", "-q"]) == 0
    assert "\nseed = 5\n" in (tmp_path / "o" / "report.txt").read_text()
    assert main(["xy8-sweep", "--config", str(ini), "--seed", "0x10", "--out", str(tmp_path / "p"),
                 "--no-figures", "-q"]) == 0
    assert "\nseed = 16\n" in (tmp_path / "p" / "report.txt").read_text()


def test_validation_exit_code(tmp_path, capsys):
    code, out = _run(["odmr", "--out", str(tmp_path), "--set", "nv.contrast=2"], capsys)
    assert code == 2 and "contrast" in out.err
    bad = tmp_path / "bad.ini"
    bad.write_text("[nv]\nnot_a_key = 1\n")
    assert main(["odmr", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["odmr", "--config", str(tmp_path / "missing.ini")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["odmr", "--format", "tiff"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["odmr", "--seed", "-1"])
    assert exc.value.code == 2


def test_runtime_exit_code(tmp_path, capsys):
    # tau shorter than the pi pulse cannot be laid out
    code, out = _run(["xy8-sweep", "--out", str(tmp_path), "--set", "sequence.tau_start=5e-9"], capsys)
    assert code == 3 and "InfeasibleSequenceError" in out.err
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["odmr", "--out", str(blocker / "sub"), "-q"]) == 3


def test_export_error_type(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    res = run_scenario(default_config("odmr"))
    with pytest.raises(ExportError):
        export(res, blocker / "sub")
    with pytest.raises(ValueError):
        export(res, tmp_path, "tiff")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nvxy8", "odmr", "--out", str(tmp_path), "--no-figures"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "splitting_Hz" in proc.stdout
