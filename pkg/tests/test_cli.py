import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from evalab import formats as fmt
from evalab.cli import main
from evalab.constructions import restricted_kl_triple
from evalab.distributions import make_distribution

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out.strip(), err


def write_dist(path, d):
    fmt.write_json(path, fmt.distribution_to_dict(d))
    return str(path)


# -- metric ------------------------------------------------------------------------------------


def test_metric_tv_uniform(capsys):
    assert run(capsys, "metric", "--kind", "tv", "--p", "u2", "--q", "u2") == (0, "0.000000000000", "")


def test_metric_restricted_kl_on_triple(capsys, tmp_path):
    b = restricted_kl_triple(0.25, M=5)
    p = write_dist(tmp_path / "qstar.json", b["qstar"])
    q = write_dist(tmp_path / "q1.json", b["q1"])
    code, out, _ = run(capsys, "metric", "--kind", "rkl", "--beta", "0.25", "--p", p, "--q", q)
    assert code == 0 and out.startswith("1.35767")
    assert float(out) == pytest.approx(1.357674895623599, abs=1e-12)


def test_metric_infinite_value(capsys, tmp_path):
    p = write_dist(tmp_path / "p.json", make_distribution(["x0", "x1"], [0.5, 0.5]))
    q = write_dist(tmp_path / "q.json", make_distribution(["x0", "x1"], [1.0, 0.0]))
    assert run(capsys, "metric", "--kind", "kl", "--p", p, "--q", q)[:2] == (0, "inf")


def test_metric_restricted_kl_cap_exits_3(capsys):
    code, _, err = run(capsys, "metric", "--kind", "rkl", "--beta", "0.25", "--p", "u30", "--q", "u30")
    assert code == 3 and "exceeds" in err


def test_metric_ipm_with_builtin_family(capsys, tmp_path):
    p = write_dist(tmp_path / "p.json", make_distribution(["x0", "x1", "x2"], [0.2, 0.3, 0.5]))
    code, out, _ = run(capsys, "metric", "--kind", "ipm", "--family", "all_binary", "--p", p, "--q", "u3")
    assert code == 0 and float(out) == pytest.approx(0.5 - 1 / 3, abs=1e-12)


@pytest.mark.parametrize(
    "argv",
    [
        ["metric", "--kind", "renyi", "--p", "u2", "--q", "u2"],
        ["metric", "--kind", "renyi", "--alpha", "0.5", "--p", "u2", "--q", "u2"],
        ["metric", "--kind", "tv", "--p", "u2", "--q", "u3"],
        ["metric", "--kind", "tv", "--p", "nope.json", "--q", "u2"],
        ["metric", "--kind", "bogus", "--p", "u2", "--q", "u2"],
        ["frobnicate"],
        [],
    ],
)
def test_invalid_input_exits_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


# -- score ---------------------------------------------------------------------------------------


def test_score_nll(capsys, tmp_path):
    (tmp_path / "spec.json").write_text('{"schema_version": 1, "kind": "nll"}')
    (tmp_path / "s.json").write_text('{"schema_version": 1, "points": ["x0", "x1", "x1"]}')
    code, out, _ = run(capsys, "score", "--spec", str(tmp_path / "spec.json"), "--q", "u2", "--sample", str(tmp_path / "s.json"))
    assert code == 0 and float(out) == pytest.approx(math.log(2), abs=1e-12)


def test_score_scheffe_pair(capsys, tmp_path):
    q2 = write_dist(tmp_path / "q2.json", make_distribution(["x0", "x1"], [0.9, 0.1]))
    spec = {"kind": "scheffe_ipm", "family": "all_binary", "pair": {"q1": "u2", "q2": "q2.json"}}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    (tmp_path / "s.json").write_text('{"points": ["x0", "x0", "x0", "x0"]}')
    args = ["score", "--spec", str(tmp_path / "spec.json"), "--sample", str(tmp_path / "s.json")]
    # all-x0 sample picks q2, which is 0.4 from the uniform candidate
    assert run(capsys, *args, "--q", q2)[:2] == (0, "0.000000000000")
    assert run(capsys, *args, "--q", "u2")[:2] == (0, "0.400000000000")
    assert run(capsys, *args, "--q", "u3")[0] == 2


# -- dims ------------------------------------------------------------------------------------------


def test_dims(capsys, tmp_path):
    assert run(capsys, "dims", "--family", "all_binary_4")[:2] == (0, "vc=4")
    assert run(capsys, "dims", "--family", "threshold_5")[:2] == (0, "vc=1")
    assert run(capsys, "dims", "--family", "no_taxonomy_2_3", "--gamma", "0.2")[:2] == (0, "fat[0.2]=3")
    assert run(capsys, "dims", "--family", "no_taxonomy_2_3")[0] == 2
    assert run(capsys, "dims", "--family", "all_binary_20")[0] == 3
    path = tmp_path / "f.json"
    path.write_text('{"labels": ["a", "b"], "rows": [[0, 0], [1, 1]]}')
    assert run(capsys, "dims", "--family", str(path))[:2] == (0, "vc=1")


# -- construct -------------------------------------------------------------------------------------------


def test_construct_renyi_bundle_reverifies(capsys, tmp_path):
    out = tmp_path / "renyi.json"
    code, text, _ = run(capsys, "construct", "--recipe", "renyi", "--params", "{alpha:2, M:4}", "--out", str(out))
    assert code == 0 and "FAIL" not in text
    bundle = fmt.load_bundle(out)
    fact = next(f for f in bundle.facts if f.quantity == "renyi" and f.kind == "exact")
    assert fact.value == pytest.approx(2.1104, abs=1e-4)
    manifest = json.loads(Path(f"{out}.manifest.json").read_text())
    assert manifest["command"] == "construct" and manifest["parameters"]["alpha"] == 2


def test_construct_params_file(capsys, tmp_path):
    (tmp_path / "p.json").write_text('{"N": 2, "gamma": 0.1, "eta": 0.001}')
    out = tmp_path / "c.json"
    assert run(capsys, "construct", "--recipe", "coverage", "--params", str(tmp_path / "p.json"), "--out", str(out))[0] == 0
    assert set(fmt.load_bundle(out).distributions) == {"q1", "q2", "q3"}


def test_construct_rejects_bad_parameters(capsys, tmp_path):
    out = str(tmp_path / "x.json")
    assert run(capsys, "construct", "--recipe", "kl", "--params", "{M: 2}", "--out", out)[0] == 2
    assert run(capsys, "construct", "--recipe", "nope", "--params", "{}", "--out", out)[0] == 2


# -- trial and probe ----------------------------------------------------------------------------------------


def trial(capsys, tmp_path, name, *extra):
    rep, csv = tmp_path / f"{name}.json", tmp_path / f"{name}.csv"
    code, out, _ = run(
        capsys, "trial", "--config", str(CONFIGS / "renyi_demo.json"), "--out-report", str(rep), "--out-csv", str(csv), *extra
    )
    assert code == 0
    return rep, csv, out


def test_trial_renyi_demo(capsys, tmp_path):
    rep, csv, out = trial(capsys, tmp_path, "r")
    doc = fmt.read_json(rep)
    assert 0.47 <= doc["implication_failure"]["rate"] <= 0.53
    assert out.startswith("implication_failure=")
    assert len(fmt.read_report_csv(csv)) == doc["T"] == 4000


def test_trial_threads_do_not_change_outputs(capsys, tmp_path):
    rep1, csv1, _ = trial(capsys, tmp_path, "one", "--threads", "1")
    rep8, csv8, _ = trial(capsys, tmp_path, "eight", "--threads", "8")
    assert rep1.read_bytes() == rep8.read_bytes()
    assert csv1.read_bytes() == csv8.read_bytes()


def test_seed_precedence(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("EVALAB_SEED", "5")
    env_rep, _, _ = trial(capsys, tmp_path, "env")
    assert fmt.read_json(env_rep)["config"]["master_seed"] == 5
    assert json.loads(Path(f"{env_rep}.manifest.json").read_text())["seed_source"] == "EVALAB_SEED"
    flag_rep, _, _ = trial(capsys, tmp_path, "flag", "--seed", "6")
    assert fmt.read_json(flag_rep)["config"]["master_seed"] == 6
    assert json.loads(Path(f"{flag_rep}.manifest.json").read_text())["seed_source"] == "--seed"
    monkeypatch.setenv("EVALAB_SEED", "x")
    assert run(capsys, "trial", "--config", str(CONFIGS / "renyi_demo.json"), "--out-report", "a", "--out-csv", "b")[0] == 2


def test_manifest_reruns_byte_for_byte(capsys, tmp_path):
    rep, csv, _ = trial(capsys, tmp_path, "orig", "--seed", "11")
    manifest = json.loads(Path(f"{rep}.manifest.json").read_text())
    first = rep.read_bytes()
    rep.unlink()
    assert main(manifest["argv"]) == 0
    assert rep.read_bytes() == first
    assert {o["path"] for o in manifest["outputs"]} == {str(rep), str(csv)}


def test_probe(capsys, tmp_path):
    out = tmp_path / "probe.json"
    code, text, _ = run(capsys, "probe", "--config", str(CONFIGS / "estimate_tv.json"), "--m-grid", "50,200,800", "--out", str(out))
    assert code == 0
    doc = fmt.read_json(out)
    assert [r["m"] for r in doc["rows"]] == [50, 200, 800]
    assert doc["m_star"] in (50, 200, 800)
    assert text.splitlines()[-1] == f"m_star={doc['m_star']}"
    assert run(capsys, "probe", "--config", str(CONFIGS / "estimate_tv.json"), "--m-grid", "", "--out", str(out))[0] == 2


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "evalab", "metric", "--kind", "hellinger2", "--p", "u2", "--q", "u2"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0 and res.stdout.strip() == "0.000000000000"
