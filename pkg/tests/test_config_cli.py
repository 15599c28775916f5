import json
import math

import numpy as np
import pytest
import yaml

from beamdelay.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_MODES, EXIT_OK, EXIT_SYNTH, main
from beamdelay.config import ConfigError, PRESETS, config_from_dict, config_to_dict, load_config, preset
from beamdelay.robustness import parse_certificate, verify_certificate

from .conftest import PRINTED_K_LEFT

XS = np.linspace(0.0, 1.0, 41)
TS = np.linspace(0.0, 10.0, 57)


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def short_scenario(**extra):
    """Closed-loop preset shortened so that CLI round trips stay cheap."""
    data = preset("paper-sec6")
    data.update(n_sim=4, dt=5e-4, T=0.5, save_every=0.05, x_points=11, field_snapshots=3)
    data.update(extra)
    return data


def report_values(text):
    out = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition(" ")
        out[key] = value
    return out


# -- presets -------------------------------------------------------------------


@pytest.mark.parametrize("name", ["paper-sec6", "paper-sec6-closedloop", "paper-sec6-40modes"])
def test_preset_encodes_numerical_example(name):
    cfg = config_from_dict(preset(name))
    assert (cfg.alpha, cfg.beta0, cfg.gamma, cfg.N0) == (1.5, 50.0, 50.0, 2)
    assert sorted(cfg.poles) == [-8.0, -7.0, -6.0, -5.0] and cfg.actuation == "both"

    h = cfg.delay.build()
    assert np.allclose(h(TS), 0.12 + 0.1 * np.sin(6 * math.pi * TS), rtol=0, atol=1e-15)
    assert (h.h_min, h.h_max) == pytest.approx((0.02, 0.22))

    dist = cfg.disturbance.build()
    env = np.exp(-2 * (TS - 5) ** 2)
    t, x = np.meshgrid(TS, XS, indexing="ij")
    assert np.allclose(dist.distributed(t, x), 3 * np.exp(-2 * (t - 5) ** 2) * (2 + np.cos(2 * math.pi * x)), atol=1e-14)
    db = dist.boundary(TS)
    assert np.allclose(db[:, 0], np.cos(2 * math.pi * TS) * env, atol=1e-15)
    assert np.allclose(db[:, 1], -np.sin(3 * math.pi * TS) * env, atol=1e-15)

    ic = cfg.initial.build()
    for tau in (-0.22, -0.1, 0.0):
        assert np.allclose(ic.y0(tau, XS), 2 * (1 - tau) ** 2 * XS * (1 - XS), atol=1e-15)
        assert np.allclose(ic.yt0(tau, XS), -((1 - tau) ** 2) * np.sin(4 * math.pi * XS) * (1 + 2 * XS), atol=1e-15)
        assert np.allclose(ic.dy0_dtau(tau, XS), -4 * (1 - tau) * XS * (1 - XS), atol=1e-15)


def test_open_loop_preset():
    cfg = config_from_dict(preset("paper-sec6-openloop"))
    assert cfg.open_loop and cfg.disturbance.build().distributed is None
    assert cfg.T == 10.0


def test_presets_are_independent_copies():
    a = preset("paper-sec6")
    a["poles"].append(-9.0)
    assert len(preset("paper-sec6")["poles"]) == 4
    with pytest.raises(ConfigError, match="available"):
        preset("nope")


def test_config_round_trip(tmp_path):
    for name in PRESETS:
        cfg = config_from_dict(preset(name))
        path = write_yaml(tmp_path / f"{name}.yaml", config_to_dict(cfg))
        assert load_config(path) == cfg


@pytest.mark.parametrize(
    "patch,match",
    [
        ({"alpha": 1.0}, "alpha"),
        ({"gamma": 0.0}, "gamma"),
        ({"dt": -1e-3}, "positive"),
        ({"dt": 0.01}, "h_min/4"),
        ({"delay": {"kind": "sinusoidal", "offset": 0.1, "amplitude": 0.1}}, "delay"),
        ({"delay": {"kind": "ramp"}}, "delay kind"),
        ({"actuation": "middle"}, "actuation"),
        ({"n_sim": 2.5}, "integer"),
        ({"alpha": "big"}, "number"),
        ({"bogus": 1}, "unknown keys"),
        ({"disturbance": {"distributed": [{"carrier": "tan"}]}}, "carrier"),
        ({"initial": {"velocity": [{"profile": "cubic"}]}}, "profile"),
    ],
)
def test_validation_rejects(patch, match):
    data = preset("paper-sec6") | patch
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


# -- exit codes ------------------------------------------------------------------


def test_spectrum_report(tmp_path, capsys):
    assert main(["spectrum", "--preset", "paper-sec6", "--modes", "3", "--out", str(tmp_path)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "unstable_count 1"
    riesz = lines[1].split()
    assert riesz[2] == "m_R" and float(riesz[3]) == pytest.approx(1 / 3, rel=1e-12)
    rows = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert rows[0] == "n,eps,lambda,k,C" and len(rows) == 7
    assert float(rows[2].split(",")[2]) == pytest.approx(0.0872476, abs=1e-7)


def test_malformed_config_exit_2_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("alpha: [1.5\n")
    out = tmp_path / "out"
    for cmd in ("spectrum", "synthesize", "simulate"):
        assert main([cmd, "--config", str(bad), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    cfg = write_yaml(tmp_path / "alpha.yaml", preset("paper-sec6") | {"alpha": 0.5})
    assert main(["spectrum", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert main(["spectrum"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_mode_count_failure_exit_3(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "n0.yaml", preset("paper-sec6") | {"N0": 0, "poles": []})
    assert main(["synthesize", "--config", str(cfg)]) == EXIT_MODES
    assert "lhs=" in capsys.readouterr().err


def test_pole_count_mismatch_exit_2(tmp_path):
    cfg = write_yaml(tmp_path / "poles.yaml", preset("paper-sec6") | {"poles": [-5.0, -6.0]})
    assert main(["synthesize", "--config", str(cfg)]) == EXIT_CONFIG


def test_placement_failure_exit_4(tmp_path, capsys):
    # the robust two-input method cannot place a pole repeated more often than rank(B) = 2
    cfg = write_yaml(tmp_path / "triple.yaml", preset("paper-sec6") | {"poles": [-5.0, -7.0, -7.0, -7.0]})
    assert main(["synthesize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SYNTH
    assert "synthesis failed" in capsys.readouterr().err
    assert not (tmp_path / "o" / "gain.json").exists()


def test_divergence_exit_5(tmp_path, capsys):
    data = preset("paper-sec6-openloop") | {
        "n_sim": 12,
        "delay": {"kind": "constant", "value": 1.0},
        "dt": 0.05,
        "save_every": 0.05,
        "T": 50.0,
    }
    cfg = write_yaml(tmp_path / "div.yaml", data)
    with pytest.warns(RuntimeWarning, match="explicit RK4 may be unstable"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_DIVERGED
    assert "divergence" in capsys.readouterr().err


# -- synthesize / simulate ---------------------------------------------------------


def test_synthesize_left_outputs(tmp_path, capsys):
    out = tmp_path / "left"
    assert main(["synthesize", "--preset", "paper-sec6", "--actuation", "left", "--resolution", "0.01", "--out", str(out)]) == EXIT_OK
    rep = report_values((out / "synthesis.txt").read_text())
    assert float(rep["mode_count_lhs"]) == pytest.approx(0.0303, abs=1e-3)
    K = np.array([[float(v) for v in row.split()] for row in rep["K"].split(";")])
    assert np.abs(K - PRINTED_K_LEFT).max() < 0.01
    assert np.allclose(sorted(float(v) for v in rep["eig"].split()), [-8, -7, -6, -5], atol=1e-6)
    assert float(rep["certified_h_M"]) >= 0.03
    gain = json.loads((out / "gain.json").read_text())
    assert gain["actuation"] == "left" and np.allclose(gain["K"], K, rtol=1e-11)
    cert = parse_certificate((out / "certificate.txt").read_text())
    assert verify_certificate(cert) and cert.problem.h_M == pytest.approx(float(rep["certified_h_M"]))


def test_simulate_with_saved_gain(tmp_path):
    syn = tmp_path / "syn"
    assert main(["synthesize", "--preset", "paper-sec6", "--resolution", "0.05", "--out", str(syn)]) == EXIT_OK
    cfg = write_yaml(tmp_path / "short.yaml", short_scenario())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(cfg), "--gain", str(syn / "gain.json"), "--out", str(b)]) == EXIT_OK
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_simulate_rejects_bad_gain_file(tmp_path):
    cfg = write_yaml(tmp_path / "short.yaml", short_scenario())
    gain = tmp_path / "g.json"
    gain.write_text(json.dumps({"K": [[1.0, 2.0, 3.0]]}))
    assert main(["simulate", "--config", str(cfg), "--gain", str(gain), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_simulate_outputs_are_deterministic(tmp_path):
    cfg = write_yaml(tmp_path / "short.yaml", short_scenario())
    runs = []
    for name in ("r1", "r2"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == EXIT_OK
        runs.append({f: (tmp_path / name / f).read_bytes() for f in ("trajectory.csv", "field.csv", "diagnostics.txt")})
    assert runs[0] == runs[1]
    rows = runs[0]["trajectory.csv"].decode().splitlines()
    assert rows[0].startswith("time,c_1_-1,c_1_+1") and rows[0].endswith("u1,u2,state_norm,sup_displacement")
    assert len(rows) == 12
    field = runs[0]["field.csv"].decode().splitlines()
    assert len(field) == 4 and len(field[0].split(",")) == 12


def test_open_loop_flag_grows(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "ol.yaml", short_scenario(T=4.0, save_every=0.1, disturbance={}))
    assert main(["simulate", "--config", str(cfg), "--open-loop", "--out", str(tmp_path / "o")]) == EXIT_OK
    data = np.loadtxt(tmp_path / "o" / "trajectory.csv", delimiter=",", skiprows=1)
    t, norm, u = data[:, 0], data[:, -2], data[:, -4:-2]
    assert np.all(u == 0)
    assert norm[-1] > norm[np.searchsorted(t, 2.0)]
    rep = report_values(capsys.readouterr().out)
    assert float(rep["decay_rate"]) < 0
