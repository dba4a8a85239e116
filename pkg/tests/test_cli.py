import json

import pytest

import hypersep
from hypersep import cli


@pytest.fixture
def example_csv():
    return str(hypersep.worked_example_path())


def _run(capsys, *argv):
    rc = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_separate_and_audit(tmp_path, capsys, example_csv):
    state = tmp_path / "s.json"
    rc, out, _ = _run(capsys, "separate", example_csv, "--out", state, "--seed", 3)
    assert rc == 0
    summary = json.loads(out)
    assert summary["N_f"] == 29 and summary["separation"] == "ok"
    rc, out, _ = _run(capsys, "audit", state)
    assert rc == 0 and json.loads(out)["ok"]


def test_same_seed_same_bytes(tmp_path, capsys, example_csv):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    _run(capsys, "separate", example_csv, "--out", a, "--seed", 5)
    _run(capsys, "separate", example_csv, "--out", b, "--seed", 5)
    assert a.read_bytes() == b.read_bytes()


def test_seed_from_environment(tmp_path, capsys, example_csv, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv("HYPERSEP_SEED", "11")
    _run(capsys, "separate", example_csv, "--out", a)
    monkeypatch.delenv("HYPERSEP_SEED")
    _run(capsys, "separate", example_csv, "--out", b, "--seed", 11)
    assert a.read_bytes() == b.read_bytes()


def test_corrupted_code_fails_audit(tmp_path, capsys, example_csv):
    state = tmp_path / "s.json"
    _run(capsys, "separate", example_csv, "--out", state)
    doc = json.loads(state.read_text())
    victim = next(p for p in doc["points"] if p["set"] == "S")
    code = victim["code"]
    victim["code"] = ("0" if code[0] == "1" else "1") + code[1:]
    state.write_text(json.dumps(doc))
    rc, _, err = _run(capsys, "audit", state)
    assert rc == 3
    assert f"point {victim['id']}" in err


def test_audit_notes_pending_pairs(tmp_path, capsys):
    from hypersep import stateio
    from hypersep.engine import SeparationConfig, SeparationState
    from hypersep.geometry import Hyperplane, Point
    st = SeparationState(2, SeparationConfig())
    st.bootstrap([Point(1, [3.0, 2.0]), Point(2, [2.0, 8.0]), Point(3, [8.0, 2.0])],
                 planes=[Hyperplane(1.0, [-0.2, 0.0]), Hyperplane(1.0, [0.0, -0.2])])
    st.insert_point(Point(5, [1.0, 1.0]))
    path = tmp_path / "mid.json"
    stateio.save(st, path)
    rc, out, _ = _run(capsys, "audit", path)
    report = json.loads(out)
    assert rc == 0 and report["pending_pairs"] == 1


def test_append_and_lift(tmp_path, capsys, example_csv):
    state = tmp_path / "s.json"
    _run(capsys, "separate", example_csv, "--out", state)
    more = _write(tmp_path / "m.csv", "id,label,x1,x2\n100,a,5.5,12.2\n101,c,16.5,15.1\n")
    rc, out, _ = _run(capsys, "append", state, more, "--out", tmp_path / "s2.json")
    assert rc == 0 and json.loads(out)["N_f"] == 31
    three = _write(tmp_path / "t.csv", "id,label,x1,x2,x3\n200,,5,5,2\n201,,10,10,1\n")
    rc, _, err = _run(capsys, "append", tmp_path / "s2.json", three)
    assert rc == 1 and "hypersep lift" in err
    rc, _, _ = _run(capsys, "lift", tmp_path / "s2.json", 1, "--out", tmp_path / "s3.json")
    assert rc == 0
    rc, _, _ = _run(capsys, "append", tmp_path / "s3.json", three)
    assert rc == 0
    rc, _, _ = _run(capsys, "audit", tmp_path / "s3.json")
    assert rc == 0


def test_lift_zero_is_usage_error(tmp_path, capsys, example_csv):
    state = tmp_path / "s.json"
    _run(capsys, "separate", example_csv, "--out", state)
    rc, _, _ = _run(capsys, "lift", state, 0)
    assert rc == 1


def test_index_and_query(tmp_path, capsys, example_csv):
    state, index = tmp_path / "s.json", tmp_path / "i.hsx"
    _run(capsys, "separate", example_csv, "--out", state)
    payloads = _write(tmp_path / "p.jsonl", "\n".join(json.dumps({"id": i, "payload": f"row {i}"})
                                                       for i in range(1, 30)) + "\n")
    rc, _, _ = _run(capsys, "index", state, "--payloads", payloads, "--out", index)
    assert rc == 0
    rc, out, _ = _run(capsys, "query", index, "--probe", "[2, 15]")
    hit = json.loads(out)
    assert rc == 0 and hit["point_id"] == 1 and hit["payload"] == "row 1"
    probes = _write(tmp_path / "q.csv", "id,label,x1,x2\n1,,2,15\n2,,10,3\n")
    rc, out, _ = _run(capsys, "query", index, "--probes", probes)
    assert [json.loads(line)["point_id"] for line in out.splitlines()] == [1, 11]
    rc, _, _ = _run(capsys, "query", index, "--probe", "[1, 2, 3]")
    assert rc == 1


def test_plot(tmp_path, capsys, example_csv):
    state, svg = tmp_path / "s.json", tmp_path / "p.svg"
    _run(capsys, "separate", example_csv, "--out", state)
    rc, out, _ = _run(capsys, "plot", state, "--out", svg)
    assert rc == 0 and svg.read_text().count("<circle") == 29
    rc, _, _ = _run(capsys, "lift", state, 1)
    rc, _, _ = _run(capsys, "plot", state, "--out", svg)
    assert rc == 1


def test_bad_input_files(tmp_path, capsys):
    rc, _, _ = _run(capsys, "separate", _write(tmp_path / "e.csv", ""))
    assert rc == 2
    rc, _, err = _run(capsys, "separate", _write(tmp_path / "r.csv", "id,label,x1,x2\n1,a,1\n"))
    assert rc == 2 and "line 2" in err
    rc, _, err = _run(capsys, "separate", _write(tmp_path / "n.csv", "id,label,x1,x2\n1,a,1,zz\n"))
    assert rc == 2
    rc, _, _ = _run(capsys, "audit", _write(tmp_path / "x.json", "{"))
    assert rc == 2
    rc, _, _ = _run(capsys, "separate", tmp_path / "missing.csv")
    assert rc == 2


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["separate", "--no-such-flag"])
    assert info.value.code == 1


def test_sequences(tmp_path, capsys):
    seqs = _write(tmp_path / "s.jsonl", '{"id": 1, "values": [3, 1, 4, 1, 5]}\n'
                                        '{"id": 2, "values": [3, 1, 4, 2, 6]}\n'
                                        '{"id": 3, "values": [2, 7, 1, 8]}\n')
    index = tmp_path / "sq.hsx"
    rc, _, _ = _run(capsys, "seq-index", seqs, "--out", index)
    assert rc == 0
    rc, out, _ = _run(capsys, "seq-predict", index, "--prefix", "[3, 1, 4]")
    got = sorted((m["id"], m["tail"][0]) for m in map(json.loads, out.splitlines()))
    assert rc == 0 and got == [(1, 1.0), (2, 2.0)]
