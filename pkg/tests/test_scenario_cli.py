import csv
import json
import math

import pytest

from gfm_stab import scenario as sc
from gfm_stab.cli import main
from gfm_stab.models import SystemKind, TwoSourceSystem


def run(tmp_path, cmd, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"out-{cmd}"
    return main([cmd, "--config", str(path), "--out", str(out)]), out


def read_csv(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


def test_shipped_configs_validate_and_build(shipped_name):
    cfg = sc.shipped(shipped_name)
    system = sc.build_system(cfg)
    if shipped_name.startswith("prototype"):
        assert isinstance(system, TwoSourceSystem)


def test_shipped_kinds():
    kinds = {n: sc.build_system(sc.shipped(n)).kind for n in sc.SHIPPED if n.startswith("prototype")}
    assert kinds == {
        "prototype-hybrid": SystemKind.HYBRID,
        "prototype-smib": SystemKind.SMIB,
        "prototype-two-gen": SystemKind.TWO_GENERATOR,
        "prototype-two-inv": SystemKind.TWO_INVERTER,
    }


def test_missing_field_is_named():
    cfg = sc.shipped("prototype-hybrid")
    del cfg["fault"]
    with pytest.raises(sc.ConfigError, match="fault"):
        sc.validate(cfg)
    cfg = sc.shipped("prototype-hybrid")
    cfg["solver"]["dt"] = -1
    with pytest.raises(sc.ConfigError, match="dt"):
        sc.validate(cfg)


def test_hash_is_order_independent():
    a = sc.shipped("prototype-hybrid")
    b = json.loads(json.dumps(a, sort_keys=True))
    assert sc.config_hash(a) == sc.config_hash(dict(reversed(list(b.items()))))
    assert len(sc.config_hash(a)) == 16


def test_set_parameter_polar_leaves():
    cfg = sc.shipped("prototype-hybrid")
    z = cfg["network"]["z_load"]
    mag = math.hypot(z["re"], z["im"])
    out = sc.set_parameter(cfg, "network.z_load.angle_deg", 10.0)
    z2 = out["network"]["z_load"]
    assert math.hypot(z2["re"], z2["im"]) == pytest.approx(mag)
    assert math.degrees(math.atan2(z2["im"], z2["re"])) == pytest.approx(10.0)
    assert cfg["network"]["z_load"] == z  # original untouched
    with pytest.raises(sc.ConfigError):
        sc.set_parameter(cfg, "network.nope.re", 1.0)


def test_sweep_values():
    assert sc.sweep_values({"values": [1, 2]}) == [1.0, 2.0]
    assert sc.sweep_values({"start": 0, "stop": 1, "num": 3}) == [0.0, 0.5, 1.0]
    with pytest.raises(sc.ConfigError):
        sc.sweep_values({"start": 0})


def test_simulate_outputs(tmp_path):
    cfg = sc.shipped("prototype-hybrid")
    cfg["solver"]["t_end"] = 3.0
    cfg["output"]["stride"] = 100
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    text = (out / "trajectory.csv").read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# gfm-stab ")
    assert lines[1] == f"# config {sc.config_hash(cfg)}"
    rows = read_csv(out / "trajectory.csv")
    assert len(rows) == 30000 // 100 + 1
    events = [json.loads(x) for x in (out / "events.jsonl").read_text().splitlines()]
    assert [e["kind"] for e in events] == ["fault_apply", "fault_clear"]
    # the echoed config re-parses to the same analysis
    echo = json.loads((out / "config.echo.json").read_text())
    assert sc.config_hash(echo) == sc.config_hash(cfg)
    code2, out2 = run(tmp_path, "simulate", echo, "echo.json")
    assert code2 == 0
    assert (out2 / "trajectory.csv").read_text() == text


def test_equilibria_report(tmp_path):
    code, out = run(tmp_path, "equilibria", sc.shipped("prototype-two-inv"))
    assert code == 0
    doc = json.loads((out / "equilibria.json").read_text())
    assert doc["modes"]["fault"]["equilibria"] == []
    assert doc["modes"]["fault"]["existence"]["holds"] is False
    assert doc["modes"]["pre_fault"]["existence"]["holds"] is True


def test_cct_command(tmp_path):
    code, out = run(tmp_path, "cct", sc.shipped("prototype-two-gen"))
    assert code == 0
    doc = json.loads((out / "cct.json").read_text())
    assert doc["report"]["cct_refined"] == pytest.approx(0.1712)
    assert doc["config_hash"] == sc.config_hash(sc.shipped("prototype-two-gen"))


def test_single_point_sweep_equals_command(tmp_path):
    cfg = sc.shipped("prototype-two-gen")
    cfg["sweep"] = {"parameter": "sources.1.tj", "values": [3.0], "metrics": ["cct", "sep"]}
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    rows = {r["metric"]: float(r["result"]) for r in read_csv(out / "sweep.csv")}
    _, cct_out = run(tmp_path, "cct", sc.shipped("prototype-two-gen"), "plain.json")
    assert rows["cct"] == json.loads((cct_out / "cct.json").read_text())["report"]["cct_refined"]
    _, eq_out = run(tmp_path, "equilibria", sc.shipped("prototype-two-gen"), "plain2.json")
    seps = [e["delta"] for e in json.loads((eq_out / "equilibria.json").read_text())["modes"]["pre_fault"]["equilibria"]
            if e["kind"] == "SEP"]
    assert min(seps, key=abs) == pytest.approx(rows["sep"], abs=1e-12)


def test_boundary_command(tmp_path):
    cfg = sc.shipped("prototype-smib")
    cfg["sources"]["1"]["d"] = 0.0
    code, out = run(tmp_path, "boundary", cfg)
    assert code == 0
    rows = read_csv(out / "boundary.csv")
    assert {r["branch"] for r in rows} >= {"upper_plus", "upper_minus"}
    assert (out / "energy_level.csv").exists()


def test_validate_command(tmp_path):
    cfg = sc.shipped("prototype-hybrid")
    cfg["validate"] = {"samples": 200, "seed": 1, "t_end": 2.0}
    code, out = run(tmp_path, "validate", cfg)
    assert code == 0
    doc = json.loads((out / "validate.json").read_text())
    assert doc["passed"] is True
    assert all("max_residual" in c for c in doc["checks"])


def test_exit_code_config(tmp_path, capsys):
    cfg = sc.shipped("prototype-hybrid")
    del cfg["sources"]
    code, _ = run(tmp_path, "cct", cfg)
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "sources" in err["message"]
    assert main(["cct", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_exit_code_unsupported_combination(tmp_path):
    code, _ = run(tmp_path, "boundary", sc.shipped("prototype-two-inv"))
    assert code == 2


def test_exit_code_numeric(tmp_path, capsys):
    cfg = sc.shipped("prototype-hybrid")
    cfg["sources"]["1"]["p_star"] = 5.0
    code, _ = run(tmp_path, "simulate", cfg)
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "numeric"


def test_exit_code_inconclusive(tmp_path):
    cfg = sc.shipped("prototype-hybrid")
    cfg["solver"]["settle"] = {"tol_omega": 1e-30}
    cfg["cct"].update(horizon=1.0, extended_horizon=2.0)
    code, _ = run(tmp_path, "cct", cfg)
    assert code == 4


def test_shipped_name_accepted(tmp_path):
    assert main(["equilibria", "--config", "prototype-smib", "--out", str(tmp_path)]) == 0
