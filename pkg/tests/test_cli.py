import io
import json
import sys
from contextlib import redirect_stderr, redirect_stdout

import pytest

from stochlp.cli import dispatch, render_json


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        rc = dispatch(argv)
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture
def chain_files(tmp_path):
    rc, _, _ = run([
        "gen", "--shape", "chain", "--n", "3", "--dist", "uniform",
        "--out-graph", str(tmp_path / "g.txt"), "--out-td", str(tmp_path / "t.td"),
    ])
    assert rc == 0
    return str(tmp_path / "g.txt"), str(tmp_path / "t.td")


@pytest.fixture
def exp_files(tmp_path):
    rc, _, _ = run([
        "gen", "--shape", "chain", "--n", "3", "--dist", "exp",
        "--out-graph", str(tmp_path / "ge.txt"), "--out-td", str(tmp_path / "te.td"),
    ])
    assert rc == 0
    return str(tmp_path / "ge.txt"), str(tmp_path / "te.td")


class TestDispatch:
    def test_validate_ok(self, chain_files):
        g, t = chain_files
        rc, out, _ = run(["validate-td", "--graph", g, "--td", t])
        assert rc == 0
        assert json.loads(out)["valid"] is True

    def test_approx_needs_resolution(self, chain_files):
        g, t = chain_files
        rc, out, err = run(["approx", "--graph", g, "--td", t, "--x", "1"])
        assert rc == 1
        assert "epsilon" in err

    def test_distribution_mismatch(self, chain_files):
        g, t = chain_files
        rc, out, err = run(["exact-exp", "--graph", g, "--td", t, "--x", "1"])
        assert rc == 1
        assert "mismatch" in err

    def test_unknown_flag(self, chain_files):
        g, _ = chain_files
        rc, _, _ = run(["mc", "--graph", g, "--x", "1", "--frobnicate"])
        assert rc == 1

    def test_budget_abort_exit_2(self, chain_files):
        g, t = chain_files
        rc, out, _ = run([
            "approx", "--graph", g, "--td", t, "--x", "1",
            "--grid-m", "64", "--max-cells", "10",
        ])
        assert rc == 2
        assert json.loads(out)["kind"] == "budget"

    def test_missing_file(self):
        rc, _, err = run(["mc", "--graph", "/nonexistent", "--x", "1"])
        assert rc == 1 and "cannot read" in err

    def test_approx_json_fields(self, chain_files):
        g, t = chain_files
        rc, out, _ = run(["approx", "--graph", g, "--td", t, "--x", "1", "--grid-m", "8"])
        assert rc == 0
        doc = json.loads(out)
        for key in ("value", "M", "separated_width", "separated_n", "per_bag"):
            assert key in doc
        assert "elapsed_ms" not in doc  # timings only on request

    def test_timings_flag(self, chain_files):
        g, t = chain_files
        rc, out, _ = run(["approx", "--graph", g, "--td", t, "--x", "1",
                          "--grid-m", "8", "--timings"])
        assert rc == 0 and "elapsed_ms" in json.loads(out)

    def test_exact_exp_symbolic(self, exp_files):
        g, t = exp_files
        rc, out, _ = run(["exact-exp", "--graph", g, "--td", t, "--x", "1",
                          "--emit-symbolic"])
        assert rc == 0
        doc = json.loads(out)
        assert doc["guarantee"]["kind"] == "exact" and doc["symbolic"]

    def test_taylor_requires_order(self, tmp_path):
        p = tmp_path / "o.txt"
        p.write_text("2 1\n1 2 oracle expcdf\n")
        rc, _, err = run(["taylor", "--graph", str(p), "--x", "1"])
        assert rc == 1 and "tau" in err

    def test_sp_exact_rational_field(self, chain_files):
        g, _ = chain_files
        rc, out, _ = run(["sp-exact", "--graph", g, "--x", "1"])
        assert rc == 0
        doc = json.loads(out)
        assert doc["exact"] == {"num": "1", "den": "2"}
        assert doc["value"] == 0.5


class TestDeterminism:
    def test_gen_reproducible(self, tmp_path):
        paths = []
        for tag in ("a", "b"):
            gp, tp = str(tmp_path / f"g{tag}"), str(tmp_path / f"t{tag}")
            rc, _, _ = run(["gen", "--shape", "random-tw", "--n", "12", "--k", "2",
                            "--seed", "7", "--out-graph", gp, "--out-td", tp])
            assert rc == 0
            paths.append((open(gp).read(), open(tp).read()))
        assert paths[0] == paths[1]

    def test_byte_identical_runs(self, chain_files, exp_files):
        g, t = chain_files
        ge, te = exp_files
        cmds = [
            ["approx", "--graph", g, "--td", t, "--x", "0.7", "--grid-m", "8"],
            ["exact-exp", "--graph", ge, "--td", te, "--x", "1.5"],
            ["mc", "--graph", g, "--x", "0.9", "--samples", "200000", "--seed", "3"],
            ["bracket", "--graph", g, "--x", "0.9", "--resolution", "13"],
            ["sp-exact", "--graph", g, "--x", "0.9"],
        ]
        for cmd in cmds:
            rc1, out1, _ = run(cmd)
            rc2, out2, _ = run(cmd)
            assert rc1 == rc2 == 0
            assert out1 == out2, cmd

    def test_mc_thread_count_irrelevant(self, chain_files):
        g, _ = chain_files
        outs = []
        for threads in ("1", "4"):
            rc, out, _ = run(["mc", "--graph", g, "--x", "0.8",
                              "--samples", "100000", "--seed", "1",
                              "--threads", threads])
            assert rc == 0
            outs.append(out)
        assert outs[0] == outs[1]

    def test_json_roundtrip(self, chain_files):
        g, t = chain_files
        _, out, _ = run(["approx", "--graph", g, "--td", t, "--x", "1", "--grid-m", "8"])
        doc = json.loads(out)
        assert json.loads(render_json(doc)) == doc


class TestEnvironment:
    def test_budget_env_override(self, chain_files, monkeypatch):
        g, t = chain_files
        monkeypatch.setenv("STOCHLP_BUDGET", "10")
        rc, out, _ = run(["approx", "--graph", g, "--td", t, "--x", "1", "--grid-m", "32"])
        assert rc == 2 and json.loads(out)["kind"] == "budget"
        monkeypatch.delenv("STOCHLP_BUDGET")
        rc, _, _ = run(["approx", "--graph", g, "--td", t, "--x", "1", "--grid-m", "32"])
        assert rc == 0

    def test_negative_seed_accepted(self, chain_files):
        g, _ = chain_files
        rc, out1, _ = run(["mc", "--graph", g, "--x", "1", "--samples", "1000", "--seed", "-3"])
        rc2, out2, _ = run(["mc", "--graph", g, "--x", "1", "--samples", "1000", "--seed", "-3"])
        assert rc == rc2 == 0 and out1 == out2


class TestBadDecompositionFiles:
    def test_td_with_unknown_vertex(self, chain_files, tmp_path):
        g, _ = chain_files
        bad = tmp_path / "bad.td"
        bad.write_text("s td 1 5 3\nb 1 1 2 3 9\n", encoding="utf-8")
        rc, _, err = run(["validate-td", "--graph", g, "--td", str(bad)])
        assert rc == 1 and "unknown vertex" in err
