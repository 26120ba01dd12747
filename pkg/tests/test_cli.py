import json
import subprocess
import sys

import numpy as np
import pytest

from losslim.cli import main
from losslim.formats import read_gains, read_network, read_statespace

SKEW = {"n": 2, "m": 1, "p": 1, "A": [[0, -1], [1, 0]], "B": [[1], [0]], "C": [[1, 0]], "D": [[0]]}
DAMPED = {"n": 1, "m": 1, "p": 1, "A": [[-1]], "B": [[1]], "C": [[1]], "D": [[0]]}
SKEW_D = {"n": 3, "m": 2, "p": 2,
          "A": [[0, -1, 0], [1, 0, -0.5], [0, 0.5, 0]],
          "B": [[1, 0], [0, 0], [0, 1]], "C": [[1, 0, 0], [0, 0, 1]], "D": [[0, 1], [-1, 0]]}


def bus(i, kind, power, inertia=None, cluster=0):
    b = {"id": i, "kind": kind, "power": power, "position": [float(i), 0.0], "cluster": cluster}
    if inertia is not None:
        b["inertia"] = inertia
    return b


NET63 = {"buses": [bus(0, "conventional", 1.0, 6.0), bus(1, "hydro", -1.0, 3.0)],
         "lines": [{"i": 0, "j": 1, "susceptance": 2.0, "tier": "transmission"}]}
NET1 = {"buses": [bus(0, "conventional", 1.0, 1.0), bus(1, "load", -1.0)],
        "lines": [{"i": 0, "j": 1, "susceptance": 1.0, "tier": "transmission"}]}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, data in [("skew", SKEW), ("damped", DAMPED), ("skewd", SKEW_D),
                       ("net63", NET63), ("net1", NET1)]:
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(data))
        out[name] = str(p)
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 1')
    out["bad"] = str(bad)
    out["dir"] = tmp_path
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_certify_skew(files, capsys):
    code, out, _ = run(capsys, "certify", files["skew"])
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["P"], np.eye(2), atol=1e-12)


def test_certify_damped_is_model_class_error(files, capsys):
    code, _, err = run(capsys, "certify", files["damped"])
    assert code == 2 and "NotLossless" in err


@pytest.mark.parametrize("name", ["bad", "missing"])
def test_certify_unreadable_input(files, capsys, name):
    path = files.get(name, str(files["dir"] / "missing.json"))
    code, _, err = run(capsys, "certify", path)
    assert code == 1 and "InputError" in err


def test_certify_writes_report(files, capsys):
    out_file = files["dir"] / "cert.json"
    code, out, _ = run(capsys, "certify", files["skew"], "-o", out_file)
    assert code == 0 and json.loads(out_file.read_text()) == json.loads(out)


def test_limits_network(files, capsys):
    code, out, _ = run(capsys, "limits", files["net63"], "--json")
    data = json.loads(out)
    assert code == 0
    assert data["gamma_h2"] == pytest.approx(1.0, abs=1e-12)
    assert data["gamma_hinf"] == pytest.approx(1.41421356, abs=1e-8)
    contrib = [c["contribution"] for c in data["contributions"]]
    assert contrib == sorted(contrib, reverse=True)
    assert data["contributions"][0]["bus"] == 1


def test_limits_human_readable(files, capsys):
    code, out, _ = run(capsys, "limits", files["skew"])
    assert code == 0 and "gamma_h2   = 1.4142136" in out


def test_limits_with_feedthrough(files, capsys):
    code, out, _ = run(capsys, "limits", files["skewd"], "--json")
    data = json.loads(out)
    assert code == 0 and data["gamma_hinf"] is None
    assert data["gamma_h2"] == pytest.approx(np.sqrt(4.0))


def test_synthesize_structured_single_generator(files, capsys):
    code, out, _ = run(capsys, "synthesize", files["net1"], "--controller", "h2-structured")
    assert code == 0
    assert "achieved H2 norm 1.4142136" in out and "limit             1.4142136" in out


def test_synthesize_static_hinf(files, capsys):
    code, out, _ = run(capsys, "synthesize", files["net63"], "--controller", "hinf-static", "--json")
    data = json.loads(out)
    assert code == 0 and data["achieved"] == pytest.approx(np.sqrt(2), abs=1e-4)


def test_synthesize_riccati_loop_shift(files, capsys):
    k_file = files["dir"] / "k.json"
    code, out, _ = run(capsys, "synthesize", files["skewd"], "--controller", "h2-riccati",
                       "-o", k_file, "--json")
    data = json.loads(out)
    assert code == 0
    assert data["achieved"] == pytest.approx(data["limit"], rel=1e-6)
    K = read_statespace(k_file)
    assert (K.n, K.m, K.p) == (3, 2, 2)
    assert json.loads(k_file.read_text())["kind"] == "riccati_h2"


def test_synthesize_structured_rejects_feedthrough(files, capsys):
    code, _, err = run(capsys, "synthesize", files["skewd"], "--controller", "h2-structured")
    assert code == 2 and "NonzeroFeedthrough" in err


def test_gen_network_deterministic(files, capsys):
    d = files["dir"]
    for name in ("a.json", "b.json"):
        assert run(capsys, "gen-network", "--seed", 1, "-o", d / name)[0] == 0
    assert (d / "a.json").read_bytes() == (d / "b.json").read_bytes()
    assert len(read_network(d / "a.json").buses) == 100
    man = json.loads((d / "a.json.manifest.json").read_text())
    assert man["outputs"] == [str(d / "a.json")] and man["seed"] == 1
    man_b = json.loads((d / "b.json.manifest.json").read_text())
    assert man["config_digest"] == man_b["config_digest"]


def test_gen_network_small(files, capsys):
    out = files["dir"] / "small.json"
    code, _, _ = run(capsys, "gen-network", "--clusters", 3, "--buses", 12, "--seed", 0, "-o", out)
    net = read_network(out)
    assert code == 0 and len(net.buses) == 12
    assert sum(ln.tier == "subtransmission" for ln in net.lines) == 12 - 3


def test_gen_network_sizing_failure_is_numerical(files, capsys):
    cfg = files["dir"] / "cfg.json"
    cfg.write_text(json.dumps({"max_sizing_iterations": 1}))
    code, _, err = run(capsys, "gen-network", "--config", cfg, "-o", files["dir"] / "x.json")
    assert code == 3 and "InfeasibleSizing" in err


def test_gen_network_bad_config(files, capsys):
    cfg = files["dir"] / "cfg.json"
    cfg.write_text(json.dumps({"n_clusters": 3, "fixed_cluster_sizes": [1, 2]}))
    code, _, _ = run(capsys, "gen-network", "--config", cfg, "-o", files["dir"] / "x.json")
    assert code == 1


def test_gains_single_generator(files, capsys):
    out = files["dir"] / "g.csv"
    code, _, _ = run(capsys, "gains", files["net1"], "--metric", "h2", "-o", out)
    g = read_gains(out, "H2")
    assert code == 0 and g.values.shape == (1, 1)
    assert g.values[0, 0] == pytest.approx(np.sqrt(2), rel=1e-12)


def test_gains_hinf_with_svg_and_json(files, capsys):
    d = files["dir"]
    run(capsys, "gen-network", "--clusters", 3, "--buses", 12, "--seed", 0, "-o", d / "n.json")
    code, out, _ = run(capsys, "gains", d / "n.json", "--metric", "hinf", "-o", d / "g.json",
                       "--svg", d / "g.svg", "--json")
    assert code == 0
    data = json.loads((d / "g.json").read_text())
    np.testing.assert_allclose(np.diag(data["values"]), np.sqrt(2), atol=1e-3)
    assert (d / "g.svg").read_text().startswith("<svg")
    assert json.loads(out)["diagonal_min"] == pytest.approx(np.sqrt(2), abs=1e-3)
    man = json.loads((d / "g.json.manifest.json").read_text())
    assert man["outputs"] == [str(d / "g.json"), str(d / "g.svg")]


def test_gains_lumped(files, capsys):
    d = files["dir"]
    run(capsys, "gen-network", "--seed", 2, "-o", d / "n.json")
    code, out, _ = run(capsys, "gains", d / "n.json", "--metric", "hinf", "--lumped",
                       "-o", d / "l.csv", "--json")
    g = read_gains(d / "l.csv", "Hinf")
    assert code == 0 and g.n == 5  # one bus per generating cluster
    data = json.loads(out)
    assert data["limit_lumped"] <= data["limit_full"]


def test_gains_ensemble(files, capsys):
    d = files["dir"]
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps({"n_clusters": 3, "total_buses": 12,
                               "fixed_cluster_sizes": [4, 4, 4]}))
    code, _, _ = run(capsys, "gains", "--ensemble", 3, "--config", cfg, "-o", d / "e.csv")
    assert code == 0 and read_gains(d / "e.csv", "H2").n == 8
    code, _, _ = run(capsys, "gains", d / "cfg.json", "--ensemble", 3, "-o", d / "e.csv")
    assert code == 1


def test_gains_thread_invariance(files, capsys):
    d = files["dir"]
    run(capsys, "gen-network", "--clusters", 3, "--buses", 12, "--seed", 3, "-o", d / "n.json")
    for t in (1, 2, 0):
        run(capsys, "gains", d / "n.json", "--metric", "hinf", "--threads", t, "-o", d / f"t{t}.csv")
    ref = (d / "t1.csv").read_bytes()
    assert (d / "t2.csv").read_bytes() == ref and (d / "t0.csv").read_bytes() == ref


def test_usage_errors_exit_1(files, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gains", files["net1"], "--bogus", "-o", "x.csv"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["gains", files["net1"], "--threads", "-1", "-o", "x.csv"])
    assert exc.value.code == 1


def test_console_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "losslim", "certify", files["skew"]],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["certified"]
