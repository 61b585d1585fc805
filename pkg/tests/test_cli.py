import csv
import io
import math
from pathlib import Path

import pytest

from sscc import cli
from sscc.model import Policy

DEFAULT = Path(__file__).resolve().parents[1] / "scenarios" / "default.scn"

BASE = {
    "qp_db": "0", "pmax_offset_db": "10", "n_relays": "1", "var_sd": "1", "var_sr": "1",
    "var_rd": "1", "var_p": "1", "theta_deg": "26.6", "alpha": "1", "beta": "1",
    "policy": "instantaneous", "genie_relay": "false", "snr_start_db": "0",
    "snr_stop_db": "10", "snr_step_db": "5", "trials": "2000",
}


def scenario_text(**overrides):
    values = {**BASE, **{k: str(v) for k, v in overrides.items()}}
    return "# test scenario\n" + "".join(f"{k} = {v}\n" for k, v in values.items())


@pytest.fixture
def scn(tmp_path):
    def make(**overrides):
        path = tmp_path / "s.scn"
        path.write_text(scenario_text(**overrides))
        return path
    return make


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return header, list(csv.DictReader(io.StringIO("\n".join(body))))


class TestParse:
    def test_happy_path(self):
        sc = cli.parse_scenario_text(scenario_text())
        assert sc.config.qp == 1.0
        assert sc.config.pmax == pytest.approx(10.0)
        assert sc.snr_grid == (0.0, 5.0, 10.0)
        assert sc.trials == 2000
        assert sc.config.policy is Policy.INSTANTANEOUS_CSI

    def test_theta_degrees(self):
        sc = cli.parse_scenario_text(scenario_text(theta_deg=26.6))
        assert sc.config.theta == pytest.approx(26.6 * math.pi / 180, rel=1e-15)

    def test_inf_offset(self):
        assert cli.parse_scenario_text(scenario_text(pmax_offset_db="inf")).config.power_unbounded

    def test_zero_relays_names_key(self):
        with pytest.raises(cli.ScenarioError, match="n_relays"):
            cli.parse_scenario_text(scenario_text(n_relays=0))

    def test_bad_variance_names_line(self):
        text = scenario_text(var_p=-1)
        lineno = [i for i, l in enumerate(text.splitlines(), 1) if l.startswith("var_p")][0]
        with pytest.raises(cli.ScenarioError, match=f":{lineno}: var_p"):
            cli.parse_scenario_text(text)

    def test_unknown_key(self):
        with pytest.raises(cli.ScenarioError, match=r":18: unknown key 'colour'"):
            cli.parse_scenario_text(scenario_text() + "colour = blue\n")

    def test_missing_key(self):
        text = "\n".join(l for l in scenario_text().splitlines() if not l.startswith("beta"))
        with pytest.raises(cli.ScenarioError, match="missing key.*beta"):
            cli.parse_scenario_text(text)

    def test_unparsable(self):
        with pytest.raises(cli.ScenarioError, match="alpha"):
            cli.parse_scenario_text(scenario_text(alpha="lots"))

    def test_duplicate(self):
        with pytest.raises(cli.ScenarioError, match="duplicate"):
            cli.parse_scenario_text(scenario_text() + "alpha = 2\n")

    def test_no_equals(self):
        with pytest.raises(cli.ScenarioError, match=":2:"):
            cli.parse_scenario_text("# x\nnonsense\n")

    def test_default_file(self):
        sc = cli.parse_scenario(DEFAULT)
        assert sc.snr_grid[0] == 0.0 and sc.snr_grid[-1] == 30.0

    def test_grid_inclusive(self):
        assert cli.snr_grid(0, 30, 3) == tuple(float(x) for x in range(0, 31, 3))


class TestSubcommands:
    def test_simulate_schema(self, scn, tmp_path):
        out = tmp_path / "sim.csv"
        assert cli.main(["simulate", "--scenario", str(scn()), "--out", str(out), "--seed", "3"]) == 0
        header, rows = read_csv(out)
        assert any(h.startswith("# seed: 3") for h in header)
        assert any(h.startswith("# timestamp:") for h in header)
        assert list(rows[0].keys()) == cli.CSV_HEADER
        assert [float(r["snr_db"]) for r in rows] == [0.0, 5.0, 10.0]
        for r in rows:
            assert r["method"] == "monte_carlo"
            assert float(r["ci_low"]) <= float(r["ber"]) <= float(r["ci_high"])
            assert int(r["bits"]) == 4 * 2000

    def test_analytic_rows(self, scn, tmp_path):
        out = tmp_path / "an.csv"
        argv = ["analytic", "--scenario", str(scn()), "--out", str(out),
                "--methods", "quadrature_upper,mv_closed_form_17,asymptotic_19"]
        assert cli.main(argv) == 0
        _, rows = read_csv(out)
        assert len(rows) == 9
        keys = [(r["method"], float(r["snr_db"])) for r in rows]
        assert keys == sorted(keys)
        for r in rows:
            assert r["ci_low"] == r["ci_high"] == r["errors"] == r["bits"] == ""
        assert {r["policy"] for r in rows if r["method"] == "mv_closed_form_17"} == {"mean_value"}

    def test_deterministic_rows(self, scn, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            cli.main(["simulate", "--scenario", str(scn()), "--out", str(path), "--seed", "9"])
        strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("# timestamp")]
        assert strip(a) == strip(b)

    def test_worker_env_does_not_change_rows(self, scn, tmp_path, monkeypatch):
        outs = []
        for workers in ("1", "2"):
            monkeypatch.setenv("SSCC_WORKERS", workers)
            path = tmp_path / f"w{workers}.csv"
            cli.main(["simulate", "--scenario", str(scn()), "--out", str(path), "--trials", "70000"])
            outs.append(read_csv(path)[1])
        assert outs[0] == outs[1]

    def test_compare_flags(self, scn, tmp_path):
        out = tmp_path / "cmp.csv"
        argv = ["compare", "--scenario", str(scn(snr_stop_db=5)), "--out", str(out),
                "--relays", "1,2", "--policies", "instantaneous,mean_value", "--trials", "3000"]
        assert cli.main(argv) == 0
        _, rows = read_csv(out)
        assert {r["method"] for r in rows} == {"monte_carlo", "quadrature_upper", "asymptotic_19"}
        _, flags = read_csv(str(out) + ".flags.csv")
        assert len(flags) == 2 * 2 * 2
        assert list(flags[0].keys()) == cli.FLAG_HEADER
        for f in flags:
            assert f["bound_violation"] in ("0", "1") and f["ci_covers_exact"] in ("0", "1")

    def test_relay_sweep_saturates(self, scn, tmp_path):
        out = tmp_path / "r.csv"
        cli.main(["analytic", "--scenario", str(scn(snr_start_db=0, snr_stop_db=0)), "--out", str(out),
                  "--methods", "quadrature_upper", "--relays", "1,2,3,4,5"])
        _, rows = read_csv(out)
        ber = [float(r["ber"]) for r in sorted(rows, key=lambda r: int(r["relay_count"]))]
        gains = [a - b for a, b in zip(ber, ber[1:])]
        assert all(g > 0 for g in gains) and gains[-1] < gains[0]

    def test_validate_reports_and_exits(self, tmp_path, capsys):
        out = tmp_path / "v.csv"
        code = cli.main(["validate", "--scenario", str(DEFAULT), "--out", str(out)])
        _, rows = read_csv(out)
        status = {r["check"]: r["status"] for r in rows}
        assert status["ks_direct_cdf"] == "pass"
        assert status["modem_noiseless_roundtrip"] == "pass"
        assert status["asymptotic_slope"] == "pass"
        failed = [k for k, v in status.items() if v == "FAIL"]
        assert code == (1 if failed else 0)
        err = capsys.readouterr().err
        for name in failed:
            assert name in err

    def test_bad_scenario_exit_code(self, scn, capsys):
        assert cli.main(["simulate", "--scenario", str(scn(n_relays=0))]) == 2
        assert "n_relays" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["simulate", "--scenario", str(tmp_path / "nope.scn")]) == 2

    def test_unknown_method(self, scn):
        assert cli.main(["analytic", "--scenario", str(scn()), "--methods", "tea_leaves"]) == 2

    def test_stdout(self, scn, capsys):
        assert cli.main(["analytic", "--scenario", str(scn()), "--methods", "asymptotic_19"]) == 0
        out = capsys.readouterr().out
        assert "snr_db,method,ber,ci_low,ci_high,errors,bits,relay_count,policy" in out
