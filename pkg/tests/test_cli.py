import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from cortexlift.cli import (
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    build_run_config,
    main,
    read_config,
)
from cortexlift.imagegrid import load_image
from cortexlift.lifting import load_lifted
from cortexlift.stimuli import GratingSpec, PoggendorffSpec, grating_induction, read_spec

SMALL = ["--N", "32", "--period", "8", "--bar-height", "8", "--K", "8", "--sigma-mu", "2",
         "--sigma-omega", "1.5", "--alpha", "2.5"]


def test_generate_grating_defaults(tmp_path):
    out = tmp_path / "g.png"
    assert main(["generate", "--out", str(out)]) == EXIT_OK
    img = load_image(out)
    assert img.shape == (200, 200)
    assert np.array_equal(img, np.rint(grating_induction(GratingSpec()) * 255) / 255)
    assert read_spec(tmp_path / "g.spec.txt") == GratingSpec()


def test_generate_classic_poggendorff(tmp_path):
    out = tmp_path / "p.pgm"
    assert main(["generate", "--kind", "poggendorff", "--classic", "true", "--out", str(out)]) == EXIT_OK
    assert read_spec(tmp_path / "p.spec.txt") == PoggendorffSpec(classic=True)
    assert set(np.unique(np.asarray(Image.open(out)))) == {0, 128, 255}


def test_generate_invalid_period(tmp_path, capsys):
    assert main(["generate", "--period", "0", "--out", str(tmp_path / "x.png")]) == EXIT_USAGE
    assert "period" in capsys.readouterr().err


def test_generate_unknown_field_for_kind(tmp_path):
    code = main(["generate", "--kind", "grating", "--line-angle", "1.0", "--out", str(tmp_path / "x.png")])
    assert code == EXIT_USAGE


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment\n"
        "stimulus.kind = poggendorff\n"
        "stimulus.occluder_width = 30\n"
        "model.sigma_mu = 3\n"
        "model.sigma_omega = 10\n"
        "model.lambda = 0.5\n"
        "model.K = 16\n"
        "model.bw = 3\n"
        "model.tau = 0.02\n"
        "run.model = 2d\n"
        "dump.lifted = yes\n"
    )
    config = build_run_config(read_config(cfg))
    assert config.stimulus == PoggendorffSpec(occluder_width=30)
    assert config.params.sigma_mu == 3 and config.params.lam == 0.5 and config.params.tau == 0.02
    assert (config.K, config.bw, config.model) == (16, 3, "2d")
    assert config.dump["lifted"] is True


@pytest.mark.parametrize("text", ["model.nope = 1\n", "bogus\n", "model.alpha = 0.5\n", "run.model = 4d\n",
                                  "model.K = x\n", "dump.lifted = maybe\n", "model.sigma_mu = -1\n"])
def test_config_errors(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(ConfigError):
        build_run_config(read_config(cfg))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.cfg")]) == EXIT_USAGE


def test_missing_stimulus_image(tmp_path):
    assert main(["run", "--stimulus", str(tmp_path / "none.png"), "--out", str(tmp_path)]) == EXIT_USAGE


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    code = main(["run", "--out", str(out), "--dump-lifted", "true"] + SMALL)
    assert code == EXIT_OK
    for name in ("output.npy", "output.png", "output.png.rescale.txt", "energy.csv", "manifest.json",
                 "profiles.csv", "profiles.svg", "lifted.lf"):
        assert (out / name).is_file(), name
    manifest = json.loads((out / "manifest.json").read_text())
    model = manifest["model"]
    for key in ("sigma_mu", "sigma_omega", "lambda", "K", "bw", "tau", "alpha"):
        assert key in model
    assert model["K"] == 8 and model["sigma_mu"] == 2.0
    assert manifest["result"]["converged"] is True
    assert manifest["result"]["iterations"] >= 1
    assert manifest["result"]["wall_time_s"] > 0
    assert "amplitude" in manifest["result"]["metrics"]
    lines = (out / "energy.csv").read_text().splitlines()
    assert lines[0] == "iter,energy,rel_change"
    assert len(lines) == manifest["result"]["iterations"] + 2
    F = load_lifted(out / "lifted.lf")
    assert np.allclose(F.sum(axis=2), np.load(out / "output.npy"), atol=1e-12)


def test_run_max_iters_zero_returns_input(tmp_path):
    out = tmp_path / "zero"
    assert main(["run", "--out", str(out), "--max-iters", "0"] + SMALL) == EXIT_OK
    spec = GratingSpec(N=32, period=8, bar_height=8)
    assert np.allclose(np.load(out / "output.npy"), grating_induction(spec), atol=1e-12)


def test_run_non_convergence_exit_code(tmp_path):
    out = tmp_path / "nc"
    code = main(["run", "--out", str(out), "--max-iters", "2", "--tau", "1e-12"] + SMALL)
    assert code == EXIT_NOT_CONVERGED
    assert (out / "output.npy").is_file() and (out / "manifest.json").is_file()
    assert json.loads((out / "manifest.json").read_text())["result"]["converged"] is False


def test_run_from_image_and_spec_file(tmp_path):
    assert main(["generate", "--N", "32", "--period", "8", "--bar-height", "8",
                 "--out", str(tmp_path / "s.png")]) == EXIT_OK
    model = ["--K", "8", "--sigma-mu", "2", "--sigma-omega", "1.5", "--alpha", "2.5"]
    assert main(["run", "--stimulus", str(tmp_path / "s.png"), "--out", str(tmp_path / "a")] + model) == EXIT_OK
    assert main(["run", "--stimulus", str(tmp_path / "s.spec.txt"), "--out", str(tmp_path / "b")] + model) == EXIT_OK
    a = np.load(tmp_path / "a" / "output.npy")
    b = np.load(tmp_path / "b" / "output.npy")
    # the PNG is an exact byte encoding of the generated {0, 0.5, 1} image up to 128/255
    assert a.shape == b.shape == (32, 32)


def test_run_2d_and_direct(tmp_path):
    args = SMALL + ["--max-iters", "3", "--tau", "1e-12"]
    assert main(["run", "--out", str(tmp_path / "f"), "--model", "2d"] + args) == EXIT_NOT_CONVERGED
    assert main(["run", "--out", str(tmp_path / "d"), "--model", "2d", "--direct"] + args) == EXIT_NOT_CONVERGED
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["run"]["fast"] is False and manifest["model"]["K"] == 1
    f = np.load(tmp_path / "f" / "output.npy")
    d = np.load(tmp_path / "d" / "output.npy")
    assert np.max(np.abs(f - d)) < 1e-2


def test_repeat_runs_bit_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--out", str(tmp_path / name), "--dump-lifted", "true"] + SMALL) == EXIT_OK
    for dump in ("output.npy", "lifted.lf"):
        assert (tmp_path / "a" / dump).read_bytes() == (tmp_path / "b" / dump).read_bytes()


def test_reproduce_unknown_experiment(tmp_path, capsys):
    assert main(["reproduce", "--experiment", "muller-lyer", "--out", str(tmp_path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    for name in ("gi-pi2", "gi-pi3", "poggendorff", "poggendorff-classic"):
        assert name in err


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CORTEXLIFT_THREADS", "zero")
    assert main(["generate", "--out", str(tmp_path / "x.png")]) == EXIT_USAGE


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--model", "4d"])
    assert exc.value.code == EXIT_USAGE


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cortexlift", "generate", "--N", "16", "--period", "4",
                          "--bar-height", "4", "--out", str(tmp_path / "m.png")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m.png").is_file()


@pytest.mark.parametrize("extra, expected", [([], True), (["--taper", "false"], False)])
def test_reproduce_taper_default(tmp_path, monkeypatch, extra, expected):
    import cortexlift.cli as cli

    seen = {}

    def fake(name, out, base, log=print):
        seen["taper"] = base.taper
        return {"runs": {}, "checks": {}, "passed": None}

    monkeypatch.setattr(cli, "cmd_reproduce", fake)
    assert main(["reproduce", "--experiment", "gi-pi2", "--out", str(tmp_path)] + extra) == EXIT_OK
    assert seen["taper"] is expected
