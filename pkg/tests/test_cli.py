import json
import math

import pytest

from treedisp import __version__, cli
from treedisp.errors import ConvergenceError, InvariantError


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    cols = lines[0].split(",")
    return cols, [dict(zip(cols, ln.split(","))) for ln in lines[1:]]


def test_header(capsys):
    code, out, _ = run(capsys, "bands", "--n-bands", "3")
    assert code == 0
    first, second = out.splitlines()[:2]
    assert first == f"# treedisp {__version__}"
    cfg = json.loads(second.removeprefix("# config: "))
    assert cfg["task"] == "bands" and cfg["n_bands"] == 3


def test_bands_first_edge(capsys):
    _, out, _ = run(capsys, "bands", "--n-bands", "2")
    cols, rows = parse_csv(out)
    assert cols[:5] == ["n", "a", "b", "delta", "w_sign"]
    assert float(rows[0]["a"]) == pytest.approx(0.115489, abs=5e-7)
    assert float(rows[1]["delta"]) == pytest.approx(4 * math.pi**2, abs=1e-10)


def test_sp_check_fresnel(capsys):
    _, out, _ = run(capsys, "sp-check", "--problem", "fresnel:1,1", "--t-min", "100",
                    "--t-max", "100", "--t-count", "1")
    _, rows = parse_csv(out)
    assert float(rows[0]["bound"]) == pytest.approx(0.01, rel=1e-14)
    assert rows[0]["bound_satisfied"] == "true"


def test_decay_fit_discrete(capsys):
    _, out, _ = run(capsys, "decay-fit", "--source", "discrete", "--distance", "0",
                    "--t-min", "50", "--t-max", "1000", "--t-peaks", "--t-count", "10")
    summary = [ln for ln in out.splitlines() if ln.startswith("# summary: ")][0]
    fit = dict(kv.split("=") for kv in summary.removeprefix("# summary: ").split(","))
    fit = {k: float(v) for k, v in fit.items()}
    assert fit["slope"] == pytest.approx(-1.5, abs=0.05)
    assert fit["samples"] >= 8


def test_decay_fit_line(capsys):
    _, out, _ = run(capsys, "decay-fit", "--source", "line", "--t-min", "20", "--t-max",
                    "2000", "--t-peaks", "--t-count", "10", "--format", "json")
    assert json.loads(out)["summary"]["slope"] == pytest.approx(-0.5, abs=0.05)


def test_json_matches_csv(capsys):
    args = ["quantum-kernel", "--potential", "cosine:0.5", "--n-bands", "6", "--t-min", "2",
            "--t-max", "40", "--t-count", "4"]
    _, csv_out, _ = run(capsys, *args)
    _, json_out, _ = run(capsys, *args, "--format", "json")
    cols, rows = parse_csv(csv_out)
    data = json.loads(json_out)
    assert data["columns"] == cols
    for row, jrow in zip(rows, data["rows"]):
        for c, v in zip(cols, jrow):
            assert float(row[c]) == float(v)


def test_reproducible(capsys, tmp_path):
    args = ["discrete-kernel", "--q", "3", "--distance", "2", "--t-min", "1", "--t-max", "30",
            "--t-count", "5"]
    outs = []
    for name in ("a.csv", "b.csv"):
        assert cli.main(args + ["--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_config_file(capsys, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"q": 3, "n-bands": 2, "potential": "cosine:1"}))
    _, out, _ = run(capsys, "bands", "--config", str(path), "--n-bands", "4")
    cfg = json.loads(out.splitlines()[1].removeprefix("# config: "))
    assert cfg["q"] == 3 and cfg["n_bands"] == 4 and cfg["potential"] == "cosine:1"


def test_quantum_columns(capsys):
    _, out, _ = run(capsys, "quantum-kernel", "--query", "same-edge:0.3,0.3", "--n-bands", "4",
                    "--t-min", "60", "--t-max", "200", "--t-peaks", "--t-count", "3")
    cols, rows = parse_csv(out)
    assert cols[-1] == "tail_bound" and "residual" in cols
    assert len(rows) == 3


@pytest.mark.parametrize("argv", [
    ["bands", "--q", "1"],
    ["bands", "--potential", "sawtooth:1"],
    ["quantum-kernel", "--query", "edges:1,0,0"],
    ["discrete-kernel", "--t-min", "5", "--t-max", "1"],
    ["sp-check", "--t-min", "0", "--t-max", "10"],
    ["sp-check", "--problem", "gauss:1"],
    ["bands", "--config", "/nonexistent/run.json"],
])
def test_config_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "treedisp:" in err


def test_unknown_config_key(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"bogus": 1}')
    assert run(capsys, "bands", "--config", str(path))[0] == 2


def test_argparse_error_exit():
    with pytest.raises(SystemExit) as exc:
        cli.main(["bands", "--format", "xml"])
    assert exc.value.code == 2


@pytest.mark.parametrize("error,code", [(ConvergenceError, 3), (InvariantError, 4)])
def test_numerical_exit_codes(capsys, monkeypatch, error, code):
    def boom(cfg):
        raise error("synthetic")

    monkeypatch.setitem(cli._RUNNERS, "bands", boom)
    assert run(capsys, "bands")[0] == code


def test_line_check(capsys):
    _, out, _ = run(capsys, "line-check", "--t-min", "50", "--t-max", "50", "--t-count", "1",
                    "--velocity", "0.3")
    _, rows = parse_csv(out)
    assert float(rows[0]["error"]) < 1e-6
