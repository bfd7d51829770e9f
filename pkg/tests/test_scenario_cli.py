import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from conftest import SQRT2
from ltvcommute import cli
from ltvcommute.scenario import (
    ScenarioError,
    check,
    dumps_scenario,
    list_builtins,
    load_builtin,
    load_scenario,
    loads_scenario,
    read_dump,
    resolve_scenario,
    run,
    save_scenario,
)

BUILTINS = list_builtins()

EX1_TEXT = """\
[scenario]
name = custom
[system_a]
a2 = 0.5*t^2
a1 = t + 1
a0 = 1/(2*t^2)
[constants]
k2 = 2
k1 = sqrt(2)
k0 = 0.5
[initial]
mode = nonrelaxed
y0 = 1
dy0 = auto
[simulation]
t0 = 1
t_end = 2
h = 1e-3
"""


def test_builtin_list():
    assert {"example1", "example2", "example3", "example2_feedback", "thm2_unity",
            "scalar_identity", "scalar_gain2"} <= set(BUILTINS)


def test_load_example1():
    sc = load_builtin("example1")
    assert sc.a[0] == "0.5*t^2"
    assert sc.constants[1] == "sqrt(2)"
    assert tuple(sc.k()) == (2.0, SQRT2, 0.5)
    assert sc.t0 == 1.0 and sc.Y() == (1.0, -3.0)
    assert sc.input.amplitude == 40 and sc.input.frequency == 2


def test_load_example2():
    sc = load_builtin("example2")
    A = sc.system_a()
    assert [A.coefficients[1].value(t) for t in (0.5, 1, 3, 4.5)] == [-1, 9, -1, 9]
    assert A.breakpoints == (1, 3, 4.5)
    assert tuple(sc.k()) == (1, -2, 4)
    assert sc.input.amplitude == -10
    # the reference partner in the file equals the synthesized one
    assert not any("expected" in n for n in check(sc).notes)


def test_example3_reports_b0_discrepancy():
    notes = check(load_builtin("example3")).notes
    assert any("expected b0" in n and "synthesized" in n for n in notes)
    assert not any("expected b1" in n for n in notes)


def test_auto_ic():
    sc = loads_scenario(EX1_TEXT)
    assert sc.Y() == pytest.approx((1.0, -3.0))
    assert sc.with_overrides(t0=1.5).Y() == pytest.approx((1.0, -(4 / 2.25)))


def test_window_through_singularity_rejected():
    text = EX1_TEXT.replace("a2 = 0.5*t^2", "a2 = t").replace("a0 = 1/(2*t^2)", "a0 = 1")
    text = text.replace("t0 = 1", "t0 = -1")
    with pytest.raises(ScenarioError, match="vanish"):
        loads_scenario(text)


def test_window_outside_domain():
    with pytest.raises(ScenarioError):
        load_builtin("example2").with_overrides(t0=-1)


def test_auto_needs_k1():
    text = EX1_TEXT.replace("k1 = sqrt(2)", "k1 = 0")
    with pytest.raises(ScenarioError, match="auto"):
        loads_scenario(text)


def test_formula_error_reports_line_and_position():
    text = EX1_TEXT.replace("a1 = t + 1", "a1 = t + * 1")
    with pytest.raises(ScenarioError) as info:
        loads_scenario(text, "f.ini")
    assert info.value.line == 5
    assert "f.ini:5" in str(info.value) and "position 4" in str(info.value)


def test_unknown_identifier_in_file():
    with pytest.raises(ScenarioError, match="unknown identifier"):
        loads_scenario(EX1_TEXT.replace("a1 = t + 1", "a1 = x + 1"))


def test_constant_depending_on_t_rejected():
    with pytest.raises(ScenarioError, match="constant"):
        loads_scenario(EX1_TEXT.replace("k0 = 0.5", "k0 = t"))


def test_missing_pieces():
    with pytest.raises(ScenarioError, match="simulation"):
        loads_scenario(EX1_TEXT.split("[simulation]")[0])
    with pytest.raises(ScenarioError, match="h"):
        loads_scenario(EX1_TEXT.replace("h = 1e-3\n", ""))
    with pytest.raises(ScenarioError, match=r"\[constants\] or \[system_b\]"):
        loads_scenario(EX1_TEXT.replace("[constants]\nk2 = 2\nk1 = sqrt(2)\nk0 = 0.5\n", ""))
    with pytest.raises(ScenarioError):
        loads_scenario("[system_a\n")


def test_switching_form_needs_table():
    with pytest.raises(ScenarioError, match="switching"):
        loads_scenario(EX1_TEXT.replace("a1 = t + 1", "a1 = base:-1 gain:1"))


def test_explicit_partner_fits_constants():
    text = EX1_TEXT.replace(
        "[constants]\nk2 = 2\nk1 = sqrt(2)\nk0 = 0.5\n",
        "[system_b]\nb2 = t^2\nb1 = 3*t + 2\nb0 = (t^2 + t + 1)/t^2\n",
    )
    sc = loads_scenario(text)
    np.testing.assert_allclose(tuple(sc.k()), (2, SQRT2, 0.5), atol=1e-9)
    assert check(sc).commutative


def test_foreign_partner():
    foreign = "[system_b]\nb2 = t^2\nb1 = t\nb0 = 1\n"
    with pytest.raises(ScenarioError, match="not of the form"):
        loads_scenario(EX1_TEXT.replace("[constants]\nk2 = 2\nk1 = sqrt(2)\nk0 = 0.5\n", foreign))
    sc = loads_scenario(EX1_TEXT + foreign)
    assert not check(sc).commutative


def _equivalent(a, b):
    ts = np.linspace(a.t0, a.t_end, 97)
    for ca, cb in zip(a.system_a().coefficients, b.system_a().coefficients):
        np.testing.assert_allclose(ca.values(ts), cb.values(ts), rtol=1e-12)
    for ca, cb in zip(a.system_b().coefficients, b.system_b().coefficients):
        np.testing.assert_allclose(ca.values(ts), cb.values(ts), rtol=1e-12)
    np.testing.assert_allclose(tuple(a.k()), tuple(b.k()), rtol=1e-15)
    assert a.Y() == pytest.approx(b.Y(), rel=1e-15)
    assert (a.input, a.window, a.h, a.ic_mode, a.tolerances, a.sim_rel) == (
        b.input, b.window, b.h, b.ic_mode, b.tolerances, b.sim_rel)
    np.testing.assert_allclose(a.input(ts), b.input(ts), rtol=0)


@pytest.mark.parametrize("name", BUILTINS)
def test_round_trip(name, tmp_path):
    sc = load_builtin(name)
    path = tmp_path / f"{name}.ini"
    save_scenario(sc, path)
    back = load_scenario(path)
    _equivalent(sc, back)
    assert dumps_scenario(back) == dumps_scenario(sc)


def test_overrides_replace_partner():
    sc = load_builtin("example2").with_overrides(k1=0)
    assert tuple(sc.k()) == (1, 0, 4)
    assert sc.expected_b is None
    assert sc.with_overrides(h=0.01, t_end=3).window == (0.0, 3.0)


def test_resolve():
    assert resolve_scenario("example1").name == "example1"
    with pytest.raises(ScenarioError):
        resolve_scenario("no_such_builtin")
    with pytest.raises(ScenarioError):
        resolve_scenario("missing/file.ini")


@pytest.mark.parametrize("name", BUILTINS)
def test_builtins_never_contradict(name):
    result = run(load_builtin(name))
    assert result.report.agreement, result.report.to_text()
    assert result.exit_code == 0


# -- command line --------------------------------------------------------

def test_cli_run_writes_artifacts(tmp_path, capsys):
    code = cli.main(["run", "example2", "--k1", "0", "--out-dir", str(tmp_path)])
    assert code == 0
    out = tmp_path / "example2"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ab_forced.csv", "ab_ic.csv", "ba_forced.csv", "ba_ic.csv",
                     "condition_report.txt", "scenario_report.txt"]
    rep = read_dump(out / "scenario_report.txt")
    assert rep["agreement"] == "AGREEMENT"
    assert float(rep["max_abs_forced"]) <= float(rep["threshold_forced"])
    assert float(rep["max_abs_ic"]) > 10 * float(rep["threshold_ic"])
    cond = read_dump(out / "condition_report.txt")
    assert cond["theorem_case"] == "Feedback"
    assert "AGREEMENT" in capsys.readouterr().out


def test_cli_csv_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["simulate", "example3", "--h", "0.01", "--out-dir", str(tmp_path / d)]) == 0
    for name in ("ab_forced.csv", "ba_ic.csv"):
        assert (tmp_path / "a/example3" / name).read_bytes() == (tmp_path / "b/example3" / name).read_bytes()
    assert not (tmp_path / "a/example3/scenario_report.txt").exists()


def test_cli_check_dump(capsys):
    assert cli.main(["check", "example2", "--dump"]) == 0
    out = capsys.readouterr().out
    assert "delta=3.0" in out and "violated_breakpoints=1.0,3.0,4.5" in out


def test_cli_contradiction_exit_code(tmp_path):
    # an absurdly tight equality threshold turns rounding noise into "divergence"
    code = cli.main(["run", "thm2_unity", "--t-end", "1", "--tol-sim", "1e-30", "--out-dir", str(tmp_path)])
    assert code == 1


def test_cli_error_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "nope"]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text(EX1_TEXT.replace("t + 1", "t +"))
    assert cli.main(["check", str(bad)]) == 2
    assert "bad.ini:5" in capsys.readouterr().err
    assert cli.main([]) == 2
    assert cli.main(["run", "example1", "--h", "abc"]) == 2


def test_cli_list_builtins(capsys):
    assert cli.main(["list-builtins"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in BUILTINS)


def test_cli_jobs(tmp_path, capsys):
    code = cli.main(["run", "scalar_identity", "scalar_gain2", "--t-end", "2", "--jobs", "2",
                     "--out-dir", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "scalar_gain2" / "ab_ic.csv").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ltvcommute", "check", "example3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "commutative until t=1" in proc.stdout
