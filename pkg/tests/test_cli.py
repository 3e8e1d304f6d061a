import json
from pathlib import Path

import pytest
import yaml

from patternspectra import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def cgl_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cgl")
    assert cli.main(["profile", "--config", str(CONFIGS / "cgl_pair.yaml"), "--out", str(out)]) == 0
    return out


def run(cmd, config, out, *extra):
    return cli.main([cmd, "--config", str(config), "--out", str(out), *extra])


def test_profile_writes_archive_and_manifest(cgl_run):
    assert (cgl_run / "wave.npz").exists()
    man = json.loads((cgl_run / "manifest_profile.json").read_text())
    assert man["status"] == 0 and len(man["config_sha256"]) == 64


def test_spectrum_passes_kernel_check(cgl_run):
    assert run("spectrum", CONFIGS / "cgl_pair.yaml", cgl_run) == 0
    rep = json.loads((cgl_run / "spectrum.json").read_text())
    assert rep["max_re"] < 1e-10
    assert (cgl_run / "spectrum.csv").read_text().startswith("xi1")


def test_classify_and_whitham_on_wave(cgl_run, capsys):
    assert run("classify", CONFIGS / "cgl_pair.yaml", cgl_run) == 0
    assert capsys.readouterr().out.strip() == "CaseB0"
    assert run("whitham", CONFIGS / "cgl_pair.yaml", cgl_run) == 0
    rep = json.loads((cgl_run / "whitham.json").read_text())
    assert rep["commutator_defect"] <= 1e-10


def test_classify_explicit_modulation_block(tmp_path, capsys):
    assert run("classify", CONFIGS / "delta_example.yaml", tmp_path) == 0
    assert capsys.readouterr().out.strip() == "CaseA"


def test_manifest_is_idempotent(cgl_run):
    run("classify", CONFIGS / "cgl_pair.yaml", cgl_run)
    first = (cgl_run / "manifest_classify.json").read_text()
    run("classify", CONFIGS / "cgl_pair.yaml", cgl_run)
    assert (cgl_run / "manifest_classify.json").read_text() == first


def test_missing_archive_is_input_error(tmp_path, capsys):
    assert run("spectrum", CONFIGS / "cgl_pair.yaml", tmp_path) == 2
    assert "MissingArtifact" in capsys.readouterr().err


def test_bad_K_exits_with_input_error(tmp_path):
    cfg = yaml.safe_load((CONFIGS / "cgl_pair.yaml").read_text())
    cfg["K"] = [[1.0, 2.0]]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert run("profile", path, tmp_path) == 2


def test_wavenumber_outside_band_is_input_error(tmp_path):
    cfg = yaml.safe_load((CONFIGS / "cgl_pair.yaml").read_text())
    cfg["K"] = [[0.3, 0.0], [0.0, 0.3]]
    path = tmp_path / "far.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert run("profile", path, tmp_path) == 2


def test_unstable_pattern_fails_spectrum_check(tmp_path):
    # the unit-diffusion Brusselator square pattern is spectrally unstable
    cfg = {"model": {"name": "brusselator", "params": {"a": 1.0, "b": 5.0}}, "N": 16,
           "K": [[0.2334, 0.0], [0.0, 0.2334]]}
    path = tmp_path / "b.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert run("profile", path, tmp_path) == 0
    assert run("spectrum", path, tmp_path) == 1


def test_decay_quick_suite(tmp_path, capsys):
    assert cli.main(["decay", "--suite", "quick", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.endswith("PASS") for line in lines)
    assert (tmp_path / "decay.json").exists()


def test_bad_thread_count(tmp_path):
    assert cli.main(["decay", "--threads", "0", "--out", str(tmp_path)]) == 2
