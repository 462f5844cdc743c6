import json
import logging
import subprocess
import sys

import numpy as np
import pytest
from scipy.io import wavfile

from glmbpitch.cli import main
from glmbpitch.config import RunConfig, load_config_file, resolve
from glmbpitch.evaluation import synth_harmonic

# -- configuration -----------------------------------------------------------------------------


def test_defaults_are_published_constants():
    c = RunConfig()
    assert (c.sample_rate, c.f_min, c.f_max, c.eta_c, c.order) == (16000, 60.0, 1270.0, 1.0, 4)
    assert c.threshold == 0.125
    assert c.frame_params().n_corr / 16000 == pytest.approx(0.0333, abs=1e-4)
    p = c.tracker_params()
    assert (p.alpha, p.mu_step, p.kappa_mu, p.m_birth) == (0.1, 40.0, 0.1, 1000)
    assert (p.lambda_birth, p.r_birth_max, p.p_survive, p.p_detect_max) == (0.3, 0.15, 0.8, 0.98)
    assert (p.f_mid, p.detect_spread, p.meas_std, p.clutter_intensity) == (280.0, 100.0, 5.0, 1e-4)
    assert p.t_step == pytest.approx(0.01)


def test_precedence_file_then_overrides(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("eta_c = 0.5\nseed = 3\nthreshold = 0.2\n")
    c = resolve(f, {"threshold": "0.3"}, environ={})
    assert (c.eta_c, c.seed, c.threshold) == (0.5, 3, 0.3)


def test_env_seed_is_fallback_only(tmp_path):
    env = {"PITCHTRACK_SEED": "42"}
    assert resolve(None, {}, environ=env).seed == 42
    assert resolve(None, {"seed": 5}, environ=env).seed == 5
    f = tmp_path / "c.toml"
    f.write_text("seed = 9\n")
    assert resolve(f, {}, environ=env).seed == 9
    assert resolve(None, {}, environ={}).seed == 0


def test_config_errors(tmp_path):
    with pytest.raises(KeyError):
        resolve(None, {"bogus": 1}, environ={})
    with pytest.raises(ValueError):
        resolve(None, {"order": "2.5"}, environ={})
    with pytest.raises(ValueError):
        resolve(None, {"multi": "perhaps"}, environ={})
    with pytest.raises(ValueError):
        RunConfig(p_survive=2.0)
    f = tmp_path / "n.toml"
    f.write_text("[tracker]\nalpha = 1\n")
    with pytest.raises(ValueError, match="tables"):
        load_config_file(f)


def test_replace_coerces():
    assert RunConfig().replace(multi="true", hop_ms="20").mode == "multi"


# -- command line -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def voice_wav(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    f0 = np.r_[np.zeros(10), np.full(40, 150.0)]
    x = 0.3 * synth_harmonic(f0, 8, np.full(8, 1 / 8))
    p = d / "v.wav"
    wavfile.write(p, 16000, x.astype(np.float32))
    truth = d / "truth.csv"
    truth.write_text("time_s,f0_hz\n" + "".join(f"{0.01 * k:.2f},{v}\n" for k, v in enumerate(f0)))
    return p, truth


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_design_defaults(capsys):
    code, out, _ = run(["design", "--log-level", "WARNING"], capsys)
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "band,center_hz,bandwidth_hz,eta_realized"
    assert len(lines) == 19
    assert float(lines[1].split(",")[1]) == pytest.approx(60.0)


def test_config_echo_logged(capsys, caplog):
    with caplog.at_level(logging.INFO, logger="glmbpitch"):
        assert main(["design", "--set", "eta_c=0.5"]) == 0
    capsys.readouterr()
    echo = [r.getMessage() for r in caplog.records if "resolved config" in r.getMessage()]
    cfg = json.loads(echo[0].split(": ", 1)[1])
    assert cfg["eta_c"] == 0.5 and cfg["p_survive"] == 0.8


def test_estimate_track_eval_pipeline(voice_wav, tmp_path, capsys):
    wav, truth = voice_wav
    est = tmp_path / "e.csv"
    assert run(["estimate", str(wav), "-o", str(est)], capsys)[0] == 0
    assert est.read_text().startswith("frame,time_s,f0_hz,strength\n")
    outs = []
    for name in ("t1.csv", "t2.csv"):
        dest = tmp_path / name
        assert run(["track", str(wav), "--single", "--seed", "7", "-o", str(dest)], capsys)[0] == 0
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"frame,time_s,label,f0_hz,weight\n")
    code, out, _ = run(["eval", "--est", str(tmp_path / "t1.csv"), "--truth", str(truth)], capsys)
    report = json.loads(out)
    assert code == 0 and report["gpe"] == 0.0 and set(report) == {"gpe", "vde", "sie", "counts"}
    tracked = tmp_path / "tc.csv"
    assert run(["track", str(est), "--seed", "7", "-o", str(tracked)], capsys)[0] == 0
    assert tracked.read_text().count("\n") > 30


def test_short_file_gives_header_only(tmp_path, capsys):
    p = tmp_path / "short.wav"
    wavfile.write(p, 16000, np.zeros(320, np.int16))
    code, out, _ = run(["estimate", str(p)], capsys)
    assert code == 0 and out == "frame,time_s,f0_hz,strength\n"


def test_correlogram(voice_wav, capsys):
    code, out, _ = run(["correlogram", str(voice_wav[0]), "--log-level", "ERROR"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "frame,time_s,delay,value"
    assert len(lines) > 1000


def test_mix_and_synth(tmp_path, capsys):
    track = tmp_path / "f0.csv"
    track.write_text("time_s,f0_hz\n" + "".join(f"{0.01 * k:.2f},120\n" for k in range(50)))
    speech = tmp_path / "s.wav"
    assert run(["synth", "--f0-track", str(track), "--harmonics", "4", "--out", str(speech)], capsys)[0] == 0
    sr, x = wavfile.read(speech)
    assert sr == 16000 and x.size == 8000
    noise = tmp_path / "n.wav"
    wavfile.write(noise, 16000, np.random.default_rng(0).standard_normal(3000).astype(np.float32))
    mixed = tmp_path / "m.wav"
    assert run(["mix", "--speech", str(speech), "--noise", str(noise), "--snr-db", "10",
                "--out", str(mixed)], capsys)[0] == 0
    _, m = wavfile.read(mixed)
    n = m.astype(float) - x.astype(float)
    assert 10 * np.log10(np.mean(x.astype(float) ** 2) / np.mean(n**2)) == pytest.approx(10, abs=0.01)


def test_errors_are_one_line(tmp_path, capsys):
    code, _, err = run(["estimate", str(tmp_path / "missing.wav")], capsys)
    assert code == 1
    lines = [l for l in err.splitlines() if l.startswith("glmbpitch: error:")]
    assert len(lines) == 1 and "FileNotFoundError" in lines[0]
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    code, _, err = run(["estimate", str(bad), "--log-level", "ERROR"], capsys)
    assert code == 1 and err.count("\n") == 1


def test_usage_errors_exit_2(capsys):
    for argv in (["frobnicate"], ["design", "--no-such-flag"], ["track", "x", "--single", "--multi"],
                 ["design", "--set", "nope=1"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "glmbpitch.cli", "design", "--log-level", "ERROR"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and len(res.stdout.splitlines()) == 19
