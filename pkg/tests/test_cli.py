from __future__ import annotations

import io
import json

import pytest

from gse_lab.cli import cli_main

TIMING = {"runtime", "wall_time"}


@pytest.fixture
def files(tmp_path):
    d = {
        "k3": "3\n1 2 1\n1 3 1\n2 3 1\n",
        "k4": "4\n1 2 1\n1 3 1\n1 4 1\n2 3 1\n2 4 1\n3 4 1\n",
        "e2": "2\n",
        "star": "5\n1 2 1\n1 3 1\n1 4 1\n1 5 1\n",
        "maxcut2": "2\n0 1\n1 0\n",
        "mincut2": "2\n0 -1\n-1 0\n",
        "one": "1\n1\n",
        "pair": "2\n0.7 -1.3\n-1.3 2\n",
    }
    out = {}
    for name, text in d.items():
        p = tmp_path / f"{name}.txt"
        p.write_text(text)
        out[name] = str(p)
    for name, doc in {
        "const1": {"lambda": [1.0], "B": [[1.0]]},
        "const0": {"lambda": [1.0], "B": [[0.0]]},
        "two": {"lambda": [0.5, 0.5], "B": [[1, 0.2], [0.2, 0.6]]},
        "two_swapped": {"lambda": [0.5, 0.5], "B": [[0.6, 0.2], [0.2, 1]]},
    }.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        out[name] = str(p)
    out["dir"] = tmp_path
    return out


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli_main(argv, out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def ok(argv):
    code, out, err = run(argv)
    assert code == 0, err
    return json.loads(out)


def strip_timing(x):
    if isinstance(x, dict):
        return {k: strip_timing(v) for k, v in x.items() if k not in TIMING}
    if isinstance(x, list):
        return [strip_timing(v) for v in x]
    return x


class TestEnergy:
    def test_triangle_maxcut(self, files):
        d = ok(["energy", "gse", "--graph", files["k3"], "--J", files["maxcut2"], "--mode", "exhaustive"])
        assert d["value"] == pytest.approx(-4 / 9)
        assert d["schema"] == "gse-lab/1"
        assert d["certificate"]["assignment"] == [1, 1, 2]

    def test_heuristic(self, files):
        d = ok(["energy", "gse", "--graph", files["k3"], "--J", files["maxcut2"], "--mode", "heuristic"])
        assert d["value"] == pytest.approx(-4 / 9)

    def test_mgse(self, files):
        d = ok(["energy", "mgse", "--graph", files["k4"], "--J", files["maxcut2"], "--a", "0.5 0.5"])
        assert d["value"] == pytest.approx(-0.5)

    def test_ltgse(self, files):
        d = ok(["energy", "ltgse", "--graph", files["k4"], "--J", files["mincut2"], "--c", "0.5"])
        assert d["value"] == pytest.approx(3 / 8)

    def test_mgse_needs_distribution(self, files):
        code, _, err = run(["energy", "mgse", "--graph", files["k4"], "--J", files["maxcut2"], "--c", "0.2"])
        assert code == 2 and err

    def test_budget_exit(self, files, tmp_path):
        p = tmp_path / "k12.txt"
        p.write_text("12\n" + "".join(f"{u} {v} 1\n" for u in range(1, 13) for v in range(u + 1, 13)))
        code, _, err = run(["energy", "gse", "--graph", str(p), "--J", files["maxcut2"], "--budget", "100"])
        assert code == 3 and "budget" in err.lower()


class TestGraphon:
    def test_solver(self, files):
        d = ok(["graphon-energy", "--graphon", files["const1"], "--J", files["mincut2"], "--a", "0.5 0.5"])
        assert d["value"] == pytest.approx(0.5)

    def test_graph_source(self, files):
        d = ok(["graphon-energy", "--graph", files["k3"], "--J", files["maxcut2"], "--restarts", "8"])
        assert d["value"] <= -4 / 9 + 1e-9

    def test_oracle(self, files):
        d = ok(["oracle", "--graphon", files["const1"], "--J", files["maxcut2"], "--m", "4"])
        assert d["value"] == pytest.approx(-0.5)

    def test_cutnorm(self, files):
        d = ok(["cutnorm", "--graphon", files["const1"]])
        assert d["value"] == 1.0 and d["exact"]

    def test_cutdist(self, files):
        assert ok(["cutdist", "--left", files["const1"], "--right", files["const0"], "--mode", "exact"])["value"] == 1
        assert ok(["cutdist", "--left", files["two"], "--right", files["two_swapped"]])["value"] == 0

    def test_cutdist_graphs(self, files):
        d = ok(["cutdist", "--left", files["k3"], "--right", files["k3"], "--mode", "alt"])
        assert d["value"] == 0


class TestTransforms:
    def test_blowup(self, files):
        d = ok(["blowup", "--a", "1/3 2/3", "--qprime", "3", "--J", files["pair"]])
        assert d["J"] == [[0.7, -1.3, -1.3], [-1.3, 2, 2], [-1.3, 2, 2]]
        assert d["parent"] == [1, 2, 2]

    def test_blowup_not_rational(self, files):
        code, _, _ = run(["blowup", "--a", "0.3 0.7", "--qprime", "4", "--J", files["pair"]])
        assert code == 2

    def test_continuity(self, files):
        d = ok(["bounds", "continuity", "--graphon", files["const1"], "--J", files["mincut2"],
                "--a", "0.5 0.5", "--b", "0.4 0.6", "--restarts", "8"])
        assert d["lhs"] == pytest.approx(0.02) and d["rhs"] == pytest.approx(0.4) and d["pass"]

    def test_graphgraphon(self, files):
        d = ok(["bounds", "graphgraphon", "--graph", files["k3"], "--J", files["maxcut2"], "--a", "0.5 0.5"])
        assert d["rhs"] == pytest.approx(16) and d["pass"]

    def test_lipschitz(self, files):
        d = ok(["bounds", "lipschitz", "--left", files["const1"], "--right", files["const0"],
                "--J", files["one"], "--a", "1"])
        assert d["lhs"] == pytest.approx(1) and d["rhs"] == pytest.approx(1) and d["pass"]


class TestSamplingAndExperiments:
    def test_sample(self, files):
        d = ok(["sample", "--graph", files["k4"], "--k", "3", "--seed", "5"])
        assert len(d["nodes"]) == 3 and d["graph"].startswith("3")

    def test_sample_too_many(self, files):
        assert run(["sample", "--graph", files["k3"], "--k", "4"])[0] == 2

    def test_testability(self, files):
        csv_path = files["dir"] / "t.csv"
        d = ok(["test", "--graph", files["k4"], "--J", files["maxcut2"], "--k", "2 3", "--m", "3",
                "--c", "0", "--csv", str(csv_path)])
        assert d["summary"]["label"] == "empirical evidence"
        assert csv_path.read_text().splitlines()[0] == "index,q,J-id,threshold,value,method,seed"

    def test_blockdiag(self, files):
        d = ok(["experiment", "blockdiag", "--alpha", "0.5", "--beta1", "1", "--beta2", "1", "--k", "8 16 32",
                "--restarts", "8"])
        assert d["summary"]["single_entry"]["value"] == pytest.approx(0.005, abs=1e-5)

    def test_hierarchy(self, files):
        d = ok(["experiment", "hierarchy", "--alphas", "0.5 0.7 0.5 0.7", "--q", "2 5", "--restarts", "8"])
        assert d["summary"]["flagged"] == ["mincut5"]


class TestExitCodes:
    def test_unknown_flag(self, files):
        code, out, err = run(["energy", "gse", "--graph", files["k3"], "--J", files["maxcut2"], "--bogus"])
        assert code == 1 and "usage" in err.lower() and out == ""

    def test_no_command(self):
        assert run([])[0] == 1

    def test_help(self):
        assert run(["--help"])[0] == 0

    def test_missing_file(self, files):
        assert run(["energy", "gse", "--graph", "/nonexistent/g.txt", "--J", files["maxcut2"]])[0] == 2

    def test_parse_error(self, files, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3\n1 q 1\n")
        code, _, err = run(["energy", "gse", "--graph", str(p), "--J", files["maxcut2"]])
        assert code == 2 and "line 2" in err

    def test_bad_restarts(self, files):
        assert run(["energy", "gse", "--graph", files["k3"], "--J", files["maxcut2"], "--restarts", "0"])[0] == 1

    def test_domain_error(self, files):
        assert run(["energy", "ltgse", "--graph", files["k3"], "--J", files["mincut2"], "--c", "0.9"])[0] == 2


REPRO = [
    ["energy", "gse", "--graph", "k4", "--J", "maxcut2", "--mode", "heuristic", "--seed", "3"],
    ["graphon-energy", "--graphon", "two", "--J", "pair", "--c", "0.2", "--seed", "1", "--restarts", "8"],
    ["cutdist", "--left", "two", "--right", "const1", "--seed", "2"],
    ["sample", "--graph", "star", "--k", "2", "--seed", "11"],
    ["test", "--graph", "k4", "--J", "maxcut2", "--k", "2 3", "--m", "4", "--seed", "7"],
    ["bounds", "continuity", "--graphon", "two", "--J", "pair", "--a", "0.3 0.7", "--b", "0.5 0.5", "--restarts", "8"],
    ["experiment", "hierarchy", "--alphas", "0.5 0.7", "--q", "2 5", "--restarts", "4"],
]


@pytest.mark.parametrize("argv", REPRO, ids=lambda a: a[0] + ("-" + a[1] if not a[1].startswith("-") else ""))
def test_byte_identical_values(files, argv):
    argv = [files.get(a, a) if isinstance(files.get(a), str) else a for a in argv]
    first, second = run(argv), run(argv)
    assert first[0] == second[0] == 0, first[2]
    a, b = strip_timing(json.loads(first[1])), strip_timing(json.loads(second[1]))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
