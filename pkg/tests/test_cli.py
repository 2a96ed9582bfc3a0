"""End-to-end command-line behavior: output schemas, exit codes, determinism.

Almost everything drives cli.run() in process; one test goes through the
real interpreter entry point to cover __main__.
"""

import csv
import io
import json
import math
import subprocess
import sys
from contextlib import redirect_stderr, redirect_stdout

import pytest

from stabilsim.cli import run

DIVIDER = "* divider\nV1 in 0 DC 12\nR1 in out 1k\nR2 out 0 1k\n"
RC_STEP = "* step rc\nV1 in 0 PWL(0 0 1n 1)\nR1 in out 1k\nC1 out 0 1u esr=1u rleak=1e15\n"
DIODE_R = "* clamp\nV1 in 0 DC 5\nR1 in d 1k\nD1 d 0 is=1e-12\n"


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        rc = run(argv)
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture
def divider(tmp_path):
    p = tmp_path / "div.net"
    p.write_text(DIVIDER)
    return str(p)


# --- argv surface ------------------------------------------------------------

def test_no_arguments_is_usage_error():
    assert _run([])[0] == 1


def test_help_exits_clean():
    rc, out, _ = _run(["--help"])
    assert rc == 0
    assert "op" in out and "sweep" in out


def test_missing_file_names_the_path():
    rc, _, err = _run(["op", "missing.net"])
    assert rc == 1
    assert "missing.net" in err


def test_syntax_error_reports_location(tmp_path):
    p = tmp_path / "bad.net"
    p.write_text("R1 a b\n")
    rc, _, err = _run(["op", str(p)])
    assert rc == 1
    assert "bad.net" in err and "line 1" in err


def test_unknown_node_is_input_error(divider):
    rc, _, err = _run(["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "zz"])
    assert rc == 1
    assert "zz" in err


# --- op ---------------------------------------------------------------------

def test_op_csv_table(divider):
    rc, out, err = _run(["op", divider])
    assert rc == 0 and err == ""
    assert out == (
        "quantity,name,value\n"
        "voltage,0,0\n"
        "voltage,in,12\n"
        "voltage,out,6\n"
        "current,V1,-0.00600000002\n"
    )


def test_op_json_schema(divider):
    rc, out, _ = _run(["op", divider, "--format", "json"])
    assert rc == 0
    pl = json.loads(out)
    assert pl["schema"] == "stabilsim/1"
    assert pl["subcommand"] == "op"
    assert pl["node_voltages"]["out"] == pytest.approx(6.0, rel=1e-9)
    assert pl["iterations"] == 1
    assert pl["strategy"] == "plain"


def test_out_flag_writes_file_not_stdout(divider, tmp_path):
    dest = tmp_path / "op.csv"
    rc, out, _ = _run(["op", divider, "--out", str(dest)])
    assert rc == 0 and out == ""
    rc, direct, _ = _run(["op", divider])
    assert dest.read_text() == direct


def test_byte_identical_reruns(divider):
    a = _run(["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out", "--format", "json"])
    b = _run(["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out", "--format", "json"])
    assert a == b


# --- tran ---------------------------------------------------------------------

def test_tran_rc_charge_matches_analytic(tmp_path):
    p = tmp_path / "rc.net"
    p.write_text(RC_STEP)
    rc, out, _ = _run(["tran", str(p), "--tstep", "1u", "--tstop", "5m"])
    assert rc == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "v(in)", "v(out)", "i(V1)"]
    vo = {float(r[0]): float(r[2]) for r in rows[1:]}
    t = min(vo, key=lambda x: abs(x - 1e-3))
    expected = 1.0 - math.exp(-1.0)
    assert abs(vo[t] - expected) / expected <= 1e-3


def test_tran_csv_row_count(tmp_path):
    p = tmp_path / "rc.net"
    p.write_text(RC_STEP)
    rc, out, _ = _run(["tran", str(p), "--tstep", "0.5m", "--tstop", "1m"])
    assert rc == 0
    assert out.count("\n") == 4  # header + t=0, 0.5m, 1m


def test_tran_directive_supplies_grid(tmp_path):
    p = tmp_path / "rc.net"
    p.write_text(RC_STEP + ".tran 0.5m 1m\n")
    rc, out, _ = _run(["tran", str(p)])
    assert rc == 0
    assert out.count("\n") == 4
    # explicit flags override the directive
    rc, out, _ = _run(["tran", str(p), "--tstop", "2m"])
    assert out.count("\n") == 6


def test_tran_without_grid_is_usage_error(tmp_path):
    p = tmp_path / "rc.net"
    p.write_text(RC_STEP)
    rc, _, err = _run(["tran", str(p)])
    assert rc == 1
    assert "tstep" in err


def test_tran_polarity_warning_on_stderr_and_json(tmp_path):
    p = tmp_path / "rev.net"
    p.write_text("V1 a 0 PWL(0 0 1m -2)\nR1 a b 10\nC1 b 0 1u type=electrolytic\n")
    rc, out, err = _run(["tran", str(p), "--tstep", "0.5m", "--tstop", "1m", "--format", "json"])
    assert rc == 0
    assert err.startswith("warning: ReversePolarity: C1 ")
    pl = json.loads(out)
    assert len(pl["warnings"]) == 1
    assert "reverse bias" in pl["warnings"][0]


# --- sweep ----------------------------------------------------------------------

def test_sweep_csv_and_summary(divider):
    rc, out, err = _run(["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out"])
    assert rc == 0
    assert out == "vi,vo,converged\n10,5,1\n11,5.5,1\n12,6,1\n"
    assert "line regulation" in err and "verdict" in err


def test_sweep_json_regulation_keys(divider):
    rc, out, _ = _run(
        ["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out", "--format", "json"]
    )
    pl = json.loads(out)
    assert set(pl["regulation"]) == {
        "line_regulation_pct_per_v",
        "delta_vi",
        "delta_vo",
        "vo_ref",
        "max_pu",
        "verdict",
    }
    assert [p["vi"] for p in pl["points"]] == [10.0, 11.0, 12.0]
    assert all(p["converged"] for p in pl["points"])


def test_sweep_grid_from_directive(tmp_path):
    p = tmp_path / "d.net"
    p.write_text(DIVIDER + ".dcsweep V1 10 12 1\n")
    rc, out, _ = _run(["sweep", str(p), "--node", "out"])
    assert rc == 0
    assert out.splitlines()[1:] == ["10,5,1", "11,5.5,1", "12,6,1"]


def test_sweep_requires_node(divider):
    rc, _, err = _run(["sweep", divider, "--from", "10", "--to", "12", "--step", "1"])
    assert rc == 1
    assert "--node" in err


def test_sweep_requires_grid(divider):
    rc, _, err = _run(["sweep", divider, "--node", "out"])
    assert rc == 1
    assert "dcsweep" in err


# --- --check against the reference table -------------------------------------------

def _stage_corpus(tmp_path, table_text):
    (tmp_path / "vavs.net").write_text(DIVIDER)
    (tmp_path / "rpm_map.sample.csv").write_text("rpm,volts\n100,1\n200,2\n")
    (tmp_path / "table2.csv").write_text(table_text)


def test_check_passes_matching_bands(tmp_path, monkeypatch, divider):
    _stage_corpus(tmp_path, "# local\nvi,vo,tol\n10,5,0.1\n11,5.5,0.1\n12,6,0.1\n")
    monkeypatch.setenv("STABILSIM_CORPUS", str(tmp_path))
    rc, _, err = _run(
        ["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out", "--check"]
    )
    assert rc == 0
    assert "check: 3 reference rows matched" in err


def test_check_violation_exits_3(tmp_path, monkeypatch, divider):
    _stage_corpus(tmp_path, "# local\nvi,vo,tol\n10,5,0.1\n11,5.5,0.1\n12,5.9,0.01\n")
    monkeypatch.setenv("STABILSIM_CORPUS", str(tmp_path))
    rc, _, err = _run(
        ["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out", "--check"]
    )
    assert rc == 3
    assert "check: 3 reference rows matched" in err
    assert "check violation: vi=12: vo=6.0000 outside 5.9±0.01" in err


def test_check_only_counts_rows_on_the_grid(tmp_path, monkeypatch, divider):
    # reference rows off the sweep grid are not silently passed or failed
    _stage_corpus(tmp_path, "# local\nvi,vo,tol\n10,5,0.1\n99,1,0.1\n")
    monkeypatch.setenv("STABILSIM_CORPUS", str(tmp_path))
    rc, _, err = _run(
        ["sweep", divider, "--from", "10", "--to", "12", "--step", "1", "--node", "out", "--check"]
    )
    assert rc == 0
    assert "check: 1 reference rows matched" in err


# --- study -----------------------------------------------------------------------

def test_study_ranks_corpus_resistor_axis():
    rc, out, _ = _run(
        ["study", "corpus/vavs.net", "--param", "R1.value=100,1000", "--node", "out", "--nominal", "12"]
    )
    assert rc == 0
    rows = out.splitlines()
    assert rows[0] == "value,max_abs_deviation,line_regulation_pct_per_v,ok"
    assert [r.split(",")[0] for r in rows[1:]] == ["1000", "100"]
    assert all(r.endswith(",1") for r in rows[1:])


def test_study_json_nulls_for_failed_candidates(tmp_path):
    p = tmp_path / "d.net"
    p.write_text(DIODE_R)
    rc, out, _ = _run(
        [
            "study", str(p), "--param", "R1.value=500,1k",
            "--from", "4", "--to", "6", "--step", "1", "--node", "d",
            "--nominal", "0.5", "--format", "json",
            "--vntol", "1e-300", "--abstol", "1e-300", "--reltol", "1e-300",
        ]
    )
    assert rc == 0
    pl = json.loads(out)
    # the candidate whose sweep converged (bitwise Newton fixed points reached
    # from warm starts) ranks first; the starved one sinks with null metrics
    assert [r["value"] for r in pl["rows"]] == [500.0, 1000.0]
    assert pl["rows"][0]["ok"] and pl["rows"][0]["max_abs_deviation"] is not None
    assert not pl["rows"][1]["ok"]
    assert pl["rows"][1]["max_abs_deviation"] is None
    assert pl["rows"][1]["line_regulation_pct_per_v"] is None


def test_study_rejects_malformed_param(divider):
    rc, _, err = _run(
        ["study", divider, "--param", "R2value=1,2", "--from", "10", "--to", "12",
         "--step", "1", "--node", "out", "--nominal", "6"]
    )
    assert rc == 1
    assert "COMP.KEY" in err


def test_study_requires_nominal(divider):
    rc, _, err = _run(
        ["study", divider, "--param", "R2.value=1,2", "--from", "10", "--to", "12",
         "--step", "1", "--node", "out"]
    )
    assert rc == 1
    assert "--nominal" in err


def test_study_unknown_parameter_is_input_error(divider):
    rc, _, err = _run(
        ["study", divider, "--param", "R2.bogus=1,2", "--from", "10", "--to", "12",
         "--step", "1", "--node", "out", "--nominal", "6"]
    )
    assert rc == 1
    assert "bogus" in err


# --- vehicle ----------------------------------------------------------------------

def test_vehicle_defaults_to_bundled_map():
    rc, out, err = _run(["vehicle", "corpus/vavs.net", "--node", "out"])
    assert rc == 0 and err == ""
    rows = out.splitlines()
    assert rows[0] == "rpm,input_v,output_v,line_regulation_pct_per_v,clamped,converged"
    assert len(rows) == 7  # six map breakpoints
    assert rows[1].startswith("1500,12.4,")


def test_vehicle_custom_map_and_grid(tmp_path, divider):
    m = tmp_path / "m.csv"
    m.write_text("rpm,volts\n1000,10\n2000,14\n")
    rc, out, _ = _run(
        ["vehicle", divider, "--rpm-map", str(m), "--rpm", "1000,1500,2000", "--node", "out", "--format", "json"]
    )
    assert rc == 0
    pl = json.loads(out)
    assert [r["rpm"] for r in pl["rows"]] == [1000.0, 1500.0, 2000.0]
    assert [r["input_v"] for r in pl["rows"]] == [10.0, 12.0, 14.0]
    assert pl["rows"][0]["output_v"] == pytest.approx(5.0, rel=1e-6)
    assert not pl["insufficient"]


def test_vehicle_single_point_warns(divider, tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("rpm,volts\n1000,10\n2000,14\n")
    rc, _, err = _run(["vehicle", divider, "--rpm-map", str(m), "--rpm", "1500", "--node", "out"])
    assert rc == 0
    assert "fewer than 2 usable points" in err


# --- report -----------------------------------------------------------------------

def test_report_consolidated_json():
    rc, out, _ = _run(["report", "corpus/vavs.net", "--node", "out", "--nominal", "12"])
    assert rc == 0
    pl = json.loads(out)
    assert list(pl) == [
        "schema", "subcommand", "source", "node", "points",
        "regulation", "ieee1159", "power_warnings",
    ]
    assert pl["schema"] == "stabilsim/1"
    assert len(pl["points"]) == 6  # grid from the bundled .dcsweep directive
    assert pl["ieee1159"]["nominal_v"] == 12.0
    assert pl["ieee1159"]["verdict"] == "compliant"
    assert pl["ieee1159"]["max_pu"] < 1.1
    assert pl["power_warnings"] == []


def test_report_rejects_csv():
    rc, _, err = _run(["report", "corpus/vavs.net", "--node", "out", "--format", "csv"])
    assert rc == 1
    assert "JSON only" in err


def test_report_flags_hot_resistors(tmp_path):
    p = tmp_path / "hot.net"
    p.write_text("V1 in 0 DC 12\nR1 in out 10\nR2 out 0 10\n")
    rc, out, _ = _run(
        ["report", str(p), "--from", "10", "--to", "12", "--step", "1", "--node", "out"]
    )
    assert rc == 0
    pl = json.loads(out)
    names = [w["component"] for w in pl["power_warnings"]]
    assert names == ["R1", "R2"]
    assert pl["power_warnings"][0]["rated_w"] == 0.25


# --- failure modes ------------------------------------------------------------------

def test_nonconvergence_exits_2(tmp_path):
    p = tmp_path / "d.net"
    p.write_text(DIODE_R)
    rc, _, err = _run(
        ["op", str(p), "--vntol", "1e-300", "--abstol", "1e-300", "--reltol", "1e-300"]
    )
    assert rc == 2
    assert "simulation failed" in err


def test_corpus_shorthand_resolves_bundled_files():
    rc, _, _ = _run(["op", "corpus/vavs.net"])
    assert rc == 0


def test_interpreter_entry_point(divider):
    proc = subprocess.run(
        [sys.executable, "-m", "stabilsim", "op", divider, "--format", "json"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["schema"] == "stabilsim/1"
