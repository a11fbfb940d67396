import json

import pytest

from ppfs.cli import run

WALK = "Age,LEMS,Walk\n16-30,50,Yes\n16-30,0,No\n31-45,1-25,No\n31-45,1-25,Yes\n46-60,26-49,No\n16-30,26-49,Yes\n46-60,26-49,No\n"


@pytest.fixture
def walk_csv(tmp_path):
    p = tmp_path / "walk.csv"
    p.write_text(WALK)
    return str(p)


def call(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = run([*args, "--out", str(out), "--no-timestamp"])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_reduct_walk(walk_csv, tmp_path):
    code, rep = call(["reduct", "--input", walk_csv], tmp_path)
    assert code == 0
    assert rep["schema"] == "ppfs-report/1"
    assert rep["selected_attributes"] == ["Age", "LEMS"]
    assert rep["gamma_trace"][-1] == "5/7"
    assert "runtime_ms" not in rep


def test_reduct_timestamped(walk_csv, tmp_path):
    out = tmp_path / "r.json"
    assert run(["reduct", "--input", walk_csv, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert "runtime_ms" in rep and "generated_at" in rep


def test_reduct_perfect_and_uniform(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("a,y\n1,1\n2,2\n1,1\n")
    code, rep = call(["reduct", "--input", str(p)], tmp_path)
    assert rep["selected_attributes"] == ["a"] and rep["gamma_trace"] == ["1/1"]
    p.write_text("a,y\n1,k\n2,k\n")
    code, rep = call(["reduct", "--input", str(p)], tmp_path)
    assert rep["selected_attributes"] == [] and rep["note"] == "uniform decision"


def test_simulate_horizontal(walk_csv, tmp_path):
    tr = tmp_path / "t.ndjson"
    code, rep = call(
        ["simulate", "--input", walk_csv, "--partition", "horizontal", "--cuts", "4,3", "--transcript", str(tr)], tmp_path
    )
    assert code == 0
    assert rep["gamma_trace"] == ["2/7", "5/7"]
    records = [json.loads(line) for line in tr.read_text().splitlines()]
    assert len(records) == rep["communication"]["messages"]
    assert set(records[0]) == {"round", "from", "to", "kind", "size", "digest"}
    assert set(rep["communication"]["per_party"]) == {"0", "1"}


def test_simulate_vertical(walk_csv, tmp_path):
    code, rep = call(["simulate", "--input", walk_csv, "--partition", "vertical", "--groups", "Age|LEMS"], tmp_path)
    assert code == 0 and rep["gamma_trace"][-1] == "5/7"


def test_simulate_eigen_matches_plaintext(tmp_path):
    p = tmp_path / "n.csv"
    rows = ["a,b,c,d,y"] + [f"{i % 7},{(i * 3) % 11}.5,{(i * i) % 5},{i % 2},k" for i in range(30)]
    p.write_text("\n".join(rows) + "\n")
    for mode, shape in (("horizontal", ["--cuts", "10,20"]), ("vertical", ["--groups", "a,b|c,d"])):
        code, rep = call(
            ["simulate", "--input", str(p), "--partition", mode, *shape, "--protocol", "eigen", "--delta", "0.5"], tmp_path
        )
        assert code == 0
        assert rep["eigen"]["kept_ranks"] == rep["eigen"]["plaintext_kept_ranks"]


def test_figures_written(walk_csv, tmp_path):
    figs = tmp_path / "figs"
    code, rep = call(
        ["simulate", "--input", walk_csv, "--partition", "horizontal", "--figures", str(figs)], tmp_path
    )
    assert code == 0
    assert sorted(p.name for p in figs.iterdir()) == ["gamma_trace.png", "party_traffic.png"]


def test_verify_pass_and_planted_failure(walk_csv, tmp_path):
    code, rep = call(["verify", "--input", walk_csv, "--partition", "vertical", "--groups", "Age|LEMS"], tmp_path)
    assert code == 0 and rep["pass"]
    code, rep = call(
        ["verify", "--input", walk_csv, "--partition", "horizontal", "--cuts", "4,3", "--plant-corruption", "2"], tmp_path
    )
    assert code == 5
    assert rep["run"]["first_mismatch"]["subset"] == ["Age"]


def test_verify_fuzz(tmp_path):
    code, rep = call(["verify", "--fuzz", "100"], tmp_path)
    assert code == 0
    assert rep["fuzz"]["passed"] == rep["fuzz"]["cases"] == 100


@pytest.mark.parametrize(
    "args, code",
    [
        (["reduct", "--input", "/no/such.csv"], 2),
        (["simulate", "--input", "WALK"], 3),
        (["simulate", "--input", "WALK", "--partition", "horizontal", "--parties", "1"], 3),
        (["simulate", "--input", "WALK", "--partition", "horizontal", "--cuts", "4,4"], 3),
        (["simulate", "--input", "WALK", "--partition", "vertical", "--protocol", "eigen"], 3),
    ],
)
def test_exit_codes(args, code, walk_csv, tmp_path):
    args = [walk_csv if a == "WALK" else a for a in args]
    assert run(args + ["--out", str(tmp_path / "x.json")]) == code


def test_bogus_flag_exit_code():
    with pytest.raises(SystemExit) as info:
        run(["reduct", "--bogus"])
    assert info.value.code == 3


def test_ragged_csv_exit_code(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3\n")
    assert run(["reduct", "--input", str(p)]) == 2


def test_reports_byte_identical(walk_csv, tmp_path):
    outs = []
    for k in range(2):
        out, tr = tmp_path / f"r{k}.json", tmp_path / f"t{k}.ndjson"
        run(["simulate", "--input", walk_csv, "--partition", "horizontal", "--seed", "99",
             "--out", str(out), "--transcript", str(tr), "--audit-full", "--no-timestamp"])
        outs.append((out.read_bytes(), tr.read_bytes()))
    assert outs[0] == outs[1]
