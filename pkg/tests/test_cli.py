import csv
import json
import re
from importlib import resources

import jsonschema
import pytest

from dtacopula import cli
from dtacopula.sampler import SamplingError

FIT = ["--builtin", "telomerase", "--iter", "120", "--warmup", "60", "--chains", "2", "--seed", "5"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def bundles(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    for kind in ("gauss", "fgm"):
        assert cli.main(["fit", "--copula", kind, *FIT, "--out", str(root / kind)]) == 0
    return root


def test_fit_writes_bundle(bundles):
    b = bundles / "gauss"
    assert sorted(p.name for p in b.iterdir()) == ["diagnostics.csv", "draws.csv", "manifest.json", "summary.json"]
    doc = json.loads((b / "summary.json").read_text())
    schema = json.loads(resources.files("dtacopula").joinpath("schema/summary.v1.json").read_text())
    jsonschema.validate(doc, schema)
    manifest = json.loads((b / "manifest.json").read_text())
    assert manifest["model"] == "gauss" and manifest["config"]["seed"] == 5
    with open(b / "draws.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 120
    assert {"chain", "draw", "MUse[1]", "ktau[1]", "loglik[20]"} <= set(rows[0])


def test_fit_prints_summary(tmp_path, capsys):
    code, out, _ = run(["fit", "--copula", "frank", *FIT, "--out", str(tmp_path / "f")], capsys)
    assert code == 0
    assert "WAIC:" in out and "MUse[1]" in out and "Divergent transitions" in out


def test_rerun_is_byte_identical(bundles, tmp_path):
    assert cli.main(["fit", "--copula", "gauss", *FIT, "--out", str(tmp_path / "again")]) == 0
    for name in ("summary.json", "draws.csv", "diagnostics.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (bundles / "gauss" / name).read_bytes()


def test_env_sets_default_output(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["fit", "--copula", "fgm", *FIT]) == 0
    assert (tmp_path / "telomerase-fgm-seed5" / "summary.json").is_file()


def test_plots_are_deterministic(bundles, tmp_path, capsys):
    b = bundles / "gauss"
    for kind in ("forest", "trace"):
        assert run(["plot", str(b), "--kind", kind, "--out", str(tmp_path / f"{kind}1.svg")], capsys)[0] == 0
        assert run(["plot", str(b), "--kind", kind, "--out", str(tmp_path / f"{kind}2.svg")], capsys)[0] == 0
        one = (tmp_path / f"{kind}1.svg").read_bytes()
        assert one == (tmp_path / f"{kind}2.svg").read_bytes()
        assert b'width="960" height="720"' in one


def test_forest_structure(bundles, tmp_path):
    assert cli.main(["plot", str(bundles / "gauss"), "--out", str(tmp_path / "forest.svg")]) == 0
    svg = (tmp_path / "forest.svg").read_text()
    # two panels, ten studies each
    for cls in ("observed", "observed-ci", "posterior", "posterior-ci"):
        assert len(re.findall(f'class="{cls}"', svg)) == 20
    assert len(re.findall('class="pooled"', svg)) == 2
    # study 7 has tn = n, so its observed specificity interval reaches 1
    xs = [(float(a), float(b)) for a, b in re.findall(r'class="observed-ci" x1="([\d.]+)" y1="[\d.]+" x2="([\d.]+)"', svg)]
    spec7 = xs[10 + 6]
    right_edge = max(b for _, b in xs)
    assert spec7[1] == right_edge


def test_trace_structure(bundles, tmp_path):
    assert cli.main(["plot", str(bundles / "gauss"), "--kind", "trace", "--out", str(tmp_path / "t.svg")]) == 0
    svg = (tmp_path / "t.svg").read_text()
    assert svg.count("<polyline") == 2 * 3  # chains x reported parameters


def test_compare(bundles, tmp_path, capsys):
    code, out, _ = run(["compare", str(bundles / "gauss"), str(bundles / "fgm"), "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "comparison.txt").read_text() == out
    rows = list(csv.DictReader(open(tmp_path / "comparison.csv")))
    waics = [float(r["waic"]) for r in rows]
    assert waics == sorted(waics) and {r["model"] for r in rows} == {"gauss", "fgm"}


def test_compare_different_data(bundles, tmp_path, capsys, monkeypatch):
    other = tmp_path / "other.csv"
    other.write_text("ID,Dis,TP,NonDis,TN\n1,10,8,10,9\n2,12,9,11,10\n3,9,7,10,8\n")
    assert cli.main(["fit", "--copula", "fgm", "--data", str(other), "--iter", "60", "--warmup", "30",
                     "--chains", "2", "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    code, _, err = run(["compare", str(bundles / "gauss"), str(tmp_path / "o")], capsys)
    assert code == 3 and err.startswith("dtacopula-error:data:")


@pytest.mark.parametrize(
    "argv",
    [[], ["fit"], ["fit", "--copula", "clayton", "--builtin", "telomerase"], ["fit", "--copula", "gauss"],
     ["fit", "--copula", "gauss", "--builtin", "telomerase", "--chains", "1"],
     ["fit", "--copula", "gauss", "--builtin", "telomerase", "--iter", "10", "--warmup", "10"]],
)
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err.startswith("dtacopula-error:usage:") and err.count("\n") == 1


def test_data_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("ID,Dis,TP,NonDis,TN\n1,3,5,4,4\n2,3,2,4,4\n")
    for argv in (["fit", "--copula", "gauss", "--data", str(bad)],
                 ["fit", "--copula", "gauss", "--data", str(tmp_path / "missing.csv")],
                 ["fit", "--copula", "gauss", "--builtin", "nosuch"],
                 ["plot", str(tmp_path)]):
        code, _, err = run(argv, capsys)
        assert code == 3, argv
        assert err.startswith("dtacopula-error:") and err.count("\n") == 1


def test_sampling_and_internal_errors(monkeypatch, tmp_path, capsys):
    def fail(exc):
        def _run(*a, **k):
            raise exc
        return _run

    monkeypatch.setattr(cli, "run_chains", fail(SamplingError("no finite starting point")))
    code, _, err = run(["fit", "--copula", "gauss", *FIT, "--out", str(tmp_path)], capsys)
    assert code == 4 and err.startswith("dtacopula-error:sampling:")
    monkeypatch.setattr(cli, "run_chains", fail(RuntimeError("boom")))
    code, _, err = run(["fit", "--copula", "gauss", *FIT, "--out", str(tmp_path)], capsys)
    assert code == 5 and err.startswith("dtacopula-error:internal:")
