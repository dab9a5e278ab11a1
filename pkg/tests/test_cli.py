import json

import numpy as np
import pytest

from pendusim import cli, sim
from pendusim.control import Gains, Setpoint, solve_equilibrium_qm
from pendusim.model import model_to_dict, preset_paper
from pendusim.sim import Scenario, save_scenario

QR_DES = np.array([np.pi / 4, np.pi / 2, 0.0])


@pytest.fixture(scope="module")
def desk():
    return preset_paper(3)


@pytest.fixture(scope="module")
def quick_scenario_path(tmp_path_factory, desk):
    sp = Setpoint(0.0, QR_DES, solve_equilibrium_qm(desk, QR_DES))
    sc = Scenario(model=desk, controller="proposed", gains=Gains(),
                  setpoint=sp, dt=1e-2, duration=6.0, decimation=2,
                  label="quick")
    path = tmp_path_factory.mktemp("scn") / "quick.json"
    save_scenario(sc, path)
    return str(path)


def test_run_missing_scenario_exits_2(tmp_path):
    code = cli.main(["run", "--scenario", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "o")])
    assert code == 2


def test_run_requires_source(tmp_path):
    assert cli.main(["run", "--out", str(tmp_path / "o")]) == 2


def test_run_scenario_outputs(quick_scenario_path, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--scenario", quick_scenario_path,
                     "--out", str(out), "--svg"])
    assert code == 0
    assert (out / "trajectory.csv").exists()
    assert (out / "report.json").exists()
    for name in ("qr_gamma.svg", "xc.svg", "qm.svg", "phi.svg"):
        svg_text = (out / name).read_text()
        assert svg_text.startswith("<svg")
        assert "polyline" in svg_text
    report = json.loads((out / "report.json").read_text())
    assert set(report["signals"]) == {"phi", "gamma", "qm", "qr", "xc"}
    back = sim.read_csv(out / "trajectory.csv")
    assert back["n_links"] == 3
    text = capsys.readouterr().out
    assert "quick" in text


def test_run_preset_full_matches_expectation(tmp_path):
    code = cli.main(["run", "--preset", "fig3_motivating",
                     "--out", str(tmp_path / "o")])
    assert code == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["expected_outcome_matched"] is True
    assert report["signals"]["qm"]["classification"] == "limit_cycle"


def test_run_preset_short_duration_mismatch_exits_3(tmp_path):
    # 12 s is not enough for the proposed law to reach its bands
    code = cli.main(["run", "--preset", "fig6_proposed", "--out",
                     str(tmp_path / "o"), "--duration", "12"])
    assert code == 3
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["expected_outcome_matched"] is False


def test_run_rejects_bad_dt(quick_scenario_path, tmp_path):
    code = cli.main(["run", "--scenario", quick_scenario_path,
                     "--out", str(tmp_path / "o"), "--dt", "0.5"])
    assert code == 2


def test_verify_passes(capsys):
    assert cli.main(["verify", "--seed", "3"]) == 0
    assert "all properties pass" in capsys.readouterr().out


def test_verify_seed_robustness(desk):
    # identical verdicts across seeds
    from pendusim import verify
    for seed in range(4):
        assert verify.run_all(model=desk, seed=seed, out=lambda *_: None)


def test_verify_corrupt_model_exits_2(tmp_path, quick_scenario_path):
    doc = json.load(open(quick_scenario_path))
    doc["model"]["platform"]["mass"] = -5.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert cli.main(["verify", "--scenario", str(bad)]) == 2


def test_equilibrium_preset(capsys):
    assert cli.main(["equilibrium", "--preset", "desk3"]) == 0
    out = capsys.readouterr().out
    assert "qm*" in out and "residual" in out


def test_equilibrium_writeback(tmp_path, desk):
    sp = Setpoint(0.0, QR_DES, solve_equilibrium_qm(desk, QR_DES))
    sc = Scenario(model=desk, controller="proposed", gains=Gains(),
                  setpoint=sp, dt=1e-2, duration=5.0)
    path = tmp_path / "scn.json"
    save_scenario(sc, path)
    assert cli.main(["equilibrium", "--scenario", str(path), "--write"]) == 0
    doc = json.load(open(path))
    assert np.allclose(doc["setpoint"]["qm_star"], sp.qm_star, atol=1e-9)


def test_equilibrium_unreachable_exits_1(tmp_path, desk, capsys):
    # arm mass scaled 10x puts the balance point beyond the mover travel
    doc_model = model_to_dict(desk)
    for link in doc_model["links"]:
        link["mass"] *= 10.0
        link["inertia"] = (np.asarray(link["inertia"]) * 10.0).tolist()
    doc = {
        "model": doc_model,
        "controller": "free",
        "dt": 1e-3,
        "duration": 1.0,
        "setpoint": {"gamma_des": 0.0, "qr_des": QR_DES.tolist(),
                     "qm_star": None},
    }
    path = tmp_path / "heavy.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["equilibrium", "--scenario", str(path)]) == 1
    assert "residual" in capsys.readouterr().out


def test_usage_error_exits_2():
    assert cli.main(["bogus-command"]) == 2
    assert cli.main(["run", "--preset", "not-a-preset"]) == 2
