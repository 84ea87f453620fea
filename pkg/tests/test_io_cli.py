import json

import numpy as np
import pytest

from geoxray import cli
from geoxray.errors import CacheFormatError, ConfigError
from geoxray.io import Manifest, read_array, read_pgm, write_array, write_pgm

SMALL = ["--set", "grid_n=49", "--set", "boundary_n=32", "--set", "n_theta=32",
         "--set", "h_step=5e-3", "--set", "max_iters=3"]


def test_array_round_trip(tmp_path):
    for arr in (np.arange(12.0).reshape(3, 4), np.exp(1j * np.arange(5.0))):
        p = write_array(tmp_path / "a.bin", arr, note="x")
        back, side = read_array(p)
        assert np.array_equal(back, arr) and side["note"] == "x"
        assert p.stat().st_size == arr.size * arr.itemsize


def test_array_checksum_detects_tampering(tmp_path):
    p = write_array(tmp_path / "a.bin", np.ones(4))
    raw = bytearray(p.read_bytes())
    raw[0] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(CacheFormatError):
        read_array(p)


def test_pgm_round_trip(tmp_path):
    a = np.linspace(0, 1, 20).reshape(4, 5)
    win = write_pgm(tmp_path / "a.pgm", a)
    img = read_pgm(tmp_path / "a.pgm")
    assert win == {"min": 0.0, "max": 1.0}
    assert img.shape == (4, 5) and img.max() == 65535 and img.min() == 0
    sq = np.zeros((3, 3))
    sq[2, 0] = 1.0  # x = +1, y = -1: bottom-right pixel
    write_pgm(tmp_path / "s.pgm", sq)
    assert read_pgm(tmp_path / "s.pgm")[2, 2] == 65535


def test_manifest_verify(tmp_path):
    p = write_array(tmp_path / "a.bin", np.ones(3))
    m = Manifest(tmp_path)
    m.add_array(p, kind="array")
    m.save()
    assert Manifest(tmp_path).verify() == []
    write_array(tmp_path / "a.bin", np.zeros(3))
    assert "a.bin" in Manifest(tmp_path).verify()


def test_config_parsing(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"grid_n": 65, "bump_center": [0.1, 0.2]}))
    cfg = cli.load_config(cfgfile, ["method=oneshot", "boundary_correction=false"])
    assert cfg.grid_n == 65 and cfg.bump_center == (0.1, 0.2)
    assert cfg.method == "oneshot" and cfg.boundary_correction is False
    with pytest.raises(ConfigError):
        cli.load_config(None, ["nonsense=1"])
    with pytest.raises(ConfigError):
        cli.load_config(None, ["method=magic"])
    with pytest.raises(ConfigError):
        cli.load_config(None, ["grid_n=-3"])


def test_cli_pipeline(tmp_path, capsys):
    out = ["--set", f"out_dir={tmp_path}"]
    assert cli.main(["phantom", *SMALL, *out]) == 0
    assert cli.main(["forward", *SMALL, *out]) == 0
    assert cli.main(["invert", *SMALL, *out]) == 0
    text = capsys.readouterr().out
    assert "status: converged" in text or "status: maxed" in text
    man = Manifest(tmp_path)
    assert man.verify() == []
    for name in ("f.bin", "a.bin", "c.bin", "data.bin", "recon.bin", "iterations.csv", "error.pgm"):
        assert name in man.data["files"]
    rows = (tmp_path / "iterations.csv").read_text().splitlines()
    assert rows[0].startswith("iteration,rel_error") and len(rows) >= 3
    recon, _ = read_array(tmp_path / "recon.bin")
    truth, _ = read_array(tmp_path / "f.bin")
    assert recon.shape == truth.shape == (49, 49)


def test_cli_reports_missing_input(tmp_path, capsys):
    assert cli.main(["invert", *SMALL, "--set", f"out_dir={tmp_path}"]) == 1
    assert "missing input" in capsys.readouterr().err


def test_cli_diverged_exit_code(tmp_path):
    out = ["--set", f"out_dir={tmp_path}", "--set", "phantom=jumpy",
           "--set", "attenuation_scale=8", "--set", "max_iters=6"]
    assert cli.main(["phantom", *SMALL, *out]) == 0
    assert cli.main(["forward", *SMALL, *out]) == 0
    assert cli.main(["invert", *SMALL, *out]) == 2


def test_cli_doppler_pipeline(tmp_path, capsys):
    out = ["--set", f"out_dir={tmp_path}", "--set", "phantom=polynomial-field",
           "--set", "metric=euclidean"]
    assert cli.main(["phantom", *SMALL, *out]) == 0
    assert cli.main(["forward", *SMALL, *out]) == 0
    _, side = read_array(tmp_path / "data.bin")
    assert side["transform"] == "doppler"
    # scalar methods refuse vector-field data
    assert cli.main(["invert", *SMALL, *out]) == 1
    assert "does not apply" in capsys.readouterr().err
    assert cli.main(["invert", *SMALL, *out, "--set", "method=doppler"]) == 0
    man = Manifest(tmp_path)
    assert man.verify() == []
    for name in ("f1.bin", "f2.bin", "recon_f1.bin", "recon_f2.bin", "error_f1.pgm"):
        assert name in man.data["files"]
    assert "iterate 1: relative interior error" in capsys.readouterr().out
