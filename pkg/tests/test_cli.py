import json
import subprocess
import sys


from keane_mixer.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def last_json(text):
    return json.loads(text[text.index("{"):])


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != "timing"}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def test_search_two(capsys, tmp_path):
    code, out, _ = run(["search", "--stages", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["params"]["stages"] == [["13", "3"], ["112", "22"]]
    assert d["table"]["c"] == ["2004"] and d["table"]["d"] == ["211682"]
    assert d["conditions_passed"]
    saved = json.loads((tmp_path / "params.json").read_text())
    assert saved["stages"] == d["params"]["stages"]


def test_usage_errors(capsys):
    assert run(["search", "--stages", "0"], capsys)[0] == 64
    assert run(["frobnicate"], capsys)[0] == 64
    assert run(["verify", "lemma2", "--k", "0", "--depth", "2"], capsys)[0] == 64
    assert run(["inspect", "lengths", "--seed", "1/2,1/2"], capsys)[0] == 64


def test_search_budget(capsys):
    code, out, _ = run(["search", "--stages", "3", "--budget-steps", "1"], capsys)
    assert code == 30
    assert json.loads(out)["partial"] is not None


def test_inspect_commands(capsys):
    code, out, _ = run(["inspect", "matrix", "--m", "13", "--n", "3"], capsys)
    assert code == 0 and last_json(out)["matrix"][1] == [12, 13, 0, 0]
    code, out, _ = run(["inspect", "lengths", "--depth", "1"], capsys)
    assert out.strip() == "[1/21, 25/42, 11/42, 2/21]"
    code, out, _ = run(["inspect", "table", "--depth", "2"], capsys)
    assert "c_0 = 2004, d_0 = 211682" in out
    code, out, _ = run(["inspect", "towers", "--depth", "3"], capsys)
    assert code == 0 and "level 1: heights 16, 17, 4, 5" in out


def test_check_and_params_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"stages": [["1", "1"], ["1", "1"]]}))
    code, out, _ = run(["check", "--params", str(bad)], capsys)
    assert code == 20
    assert not json.loads(out)["report"]["passed"]
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"stages": [["13", "3"], ["112", "22"]], "seed": ["1/4"] * 4}))
    assert run(["check", "--params", str(good)], capsys)[0] == 0
    assert run(["check", "--params", str(tmp_path / "missing.json")], capsys)[0] == 64


def test_build_reports_scale(capsys):
    code, out, _ = run(["build", "--depth", "4"], capsys)
    d = json.loads(out)
    assert code == 0
    assert d["scale"] == "78114074431659498441330"
    assert d["scale_bits"] == 77


def test_verify_obstruction(capsys, tmp_path):
    code, out, _ = run(["verify", "obstruction", "--thresholds", "100", "--out", str(tmp_path)], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["verdict"] and d["contained_in_J"]
    assert (tmp_path / "obstruction.json").exists()


def test_verify_lemma2_budget(capsys, tmp_path):
    code, out, _ = run(["verify", "lemma2", "--budget-steps", "2500", "--spot-checks", "3",
                        "--out", str(tmp_path)], capsys)
    assert code == 30
    d = json.loads(out)
    assert d["segments"][0]["misses"] == 0
    csv = (tmp_path / "lemma2_segment0.csv").read_text().splitlines()
    assert csv[0] == "n,hit,piece_count"


def test_reproducible_output(capsys):
    argv = ["verify", "lemma3", "--stride", "0", "--span", "200", "--spot-checks", "5"]
    code1, out1, _ = run(argv, capsys)
    code2, out2, _ = run(argv, capsys)
    assert code1 == code2 == 0
    assert strip_timing(json.loads(out1)) == strip_timing(json.loads(out2))


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "keane_mixer.cli", "inspect", "matrix", "--m", "2", "--n", "1"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
    assert '"m": 2' in r.stdout
