import json

import jsonschema
import numpy as np
import pytest

from hostmix.cli import EXIT_ALL_SKIPPED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from hostmix.config import load_schema, parse_config
from hostmix.dynamics import flow_samples
from hostmix.errors import ConfigInvalid, FileNotFound, ModeFieldMissing, SchemaViolation
from hostmix.network import TEN_HOST_EDGES
from hostmix.simulate import read_trajectory_csv

from conftest import TEN_HOST_INITIAL

PAIR = {"preset": "pair"}
ILLUSTRATIVE = {"kind": "illustrative"}


def minimal(**extra):
    doc = {"network": PAIR, "dynamics": ILLUSTRATIVE, "gamma": 0.25, "horizon": 1.0,
           "initial": {"states": [[2, 2], [12, 12]]}}
    doc.update(extra)
    return doc


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_schema_is_valid_draft_2020_12():
    jsonschema.Draft202012Validator.check_schema(load_schema())


def test_minimal_config_defaults():
    cfg = parse_config(minimal())
    assert cfg.mode == "simulate"
    assert cfg.data["samples"] == 101
    assert cfg.data["integrator"]["rel_tol"] == 1e-8
    assert cfg.data["integrator"]["abs_tol"] == 1e-10
    assert cfg.data["seed"] == 0 and cfg.data["runs"] == 1 and cfg.data["threads"] == 1
    assert cfg.lambda_tot == 1.0
    sim = cfg.sim_config()
    assert sim.samples == 101 and sim.horizon == 1.0


def test_unknown_key_is_rejected():
    doc = minimal()
    doc["gama"] = doc.pop("gamma")
    with pytest.raises(SchemaViolation) as info:
        parse_config(doc)
    assert "gama" in str(info.value)


def test_schema_violation_has_pointer():
    with pytest.raises(SchemaViolation) as info:
        parse_config(minimal(network={"hosts": 2, "edges": [[0, 1, -1.0]]}))
    assert info.value.pointer == "/network/edges/0/2"


def test_ten_host_round_trip():
    doc = {"network": {"hosts": 10, "edges": [[i, j, 1.0] for i, j in TEN_HOST_EDGES]},
           "dynamics": ILLUSTRATIVE, "gamma": 0.02, "lambda_tot": 2500, "horizon": 1.0,
           "initial": {"states": TEN_HOST_INITIAL.tolist()}}
    first = parse_config(doc)
    second = parse_config(json.loads(first.to_json()))
    assert first == second
    assert first.hash() == second.hash()
    assert first.network.edge_count == 25 and first.lambda_tot == pytest.approx(2500)


def test_time_conversion():
    doc = minimal(lambda_tot=4.0)
    del doc["horizon"]
    doc["horizon_star"] = 2.0
    cfg = parse_config(doc)
    assert cfg.horizon == 0.5 and cfg.horizon_star == 2.0


@pytest.mark.parametrize("change, error", [
    ({"mode": "compare"}, ModeFieldMissing),
    ({"mode": "sweep", "comparator": "hflsa"}, ModeFieldMissing),
    ({"mode": "lfa-pair"}, ModeFieldMissing),
    ({"rate_scale": 2.0, "lambda_tot": 3.0}, ConfigInvalid),
    ({"horizon_star": 3.0}, ModeFieldMissing),
])
def test_mode_rules(change, error):
    with pytest.raises(error):
        parse_config(minimal(**change))


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(FileNotFound):
        parse_config(str(tmp_path / "absent.json"))
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(SchemaViolation):
        parse_config(str(tmp_path / "bad.json"))


def test_overrides_revalidate():
    cfg = parse_config(minimal()).with_overrides(seed=9, runs=None)
    assert cfg.data["seed"] == 9 and cfg.data["runs"] == 1
    with pytest.raises(SchemaViolation):
        parse_config(minimal()).with_overrides(runs=0)


def test_shared_dynamics_objects():
    cfg = parse_config(minimal(dynamics=[ILLUSTRATIVE, ILLUSTRATIVE]))
    assert cfg.dynamics[0] is cfg.dynamics[1]


# ---------------------------------------------------------------- command line


def test_validate_config(tmp_path, capsys):
    assert main(["validate-config", write(tmp_path, minimal())]) == EXIT_OK
    assert "valid" in capsys.readouterr().out
    bad = minimal()
    bad["gama"] = 0.2
    assert main(["validate-config", write(tmp_path, bad)]) == EXIT_CONFIG
    assert "gama" in capsys.readouterr().err


def test_simulate_edgeless_is_local_flow(tmp_path, illustrative):
    doc = minimal(network={"hosts": 2, "edges": []}, samples=11, initial={"states": [[4.5, 4.5], [9.5, 9.5]]})
    out = tmp_path / "out"
    assert main(["simulate", write(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    times, states = read_trajectory_csv(out / "trajectory.csv")
    for h, x0 in enumerate(([4.5, 4.5], [9.5, 9.5])):
        assert np.max(np.abs(states[:, h] - flow_samples(illustrative, x0, times))) < 1e-7
    assert (out / "events.csv").read_text() == "time,i,j\n"


def test_manifest_rerun_is_bit_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    doc = minimal(lambda_tot=20.0, seed=17, samples=21)
    assert main(["simulate", write(tmp_path, doc), "--out", str(out1)]) == EXIT_OK
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 17 and manifest["lambda_tot"] == 20.0
    assert main(["run", str(out1 / "manifest.json"), "--out", str(out2)]) == EXIT_OK
    for name in ("trajectory.csv", "events.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_lfa_on_boundary_exits_2(tmp_path, capsys):
    doc = minimal(gamma=0.1, mode="lfa-pair", initial={"basins": [[1, 0, 0, 0], [0, 0, 0, 1]]})
    del doc["horizon"]
    doc["horizon_star"] = 2.0
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "GammaOnBoundary" in err and "0.0999998" in err and "0.3999998" in err


def test_lfa_command_outputs(tmp_path):
    doc = minimal(mode="lfa-full", initial={"basins": [[1, 0, 0, 0], [0, 0, 0, 1]]}, samples=3)
    del doc["horizon"]
    doc["horizon_star"] = 2.0
    out = tmp_path / "o"
    assert main(["lfa", write(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    rows = (out / "basin_probabilities.csv").read_text().splitlines()
    host2_basin2 = [r for r in rows if r.startswith("2,1,2,")]
    assert abs(float(host2_basin2[0].split(",")[3]) - (1 - np.exp(-2))) < 1e-8
    maps = json.loads((out / "transition_maps.json").read_text())
    assert [1, 4, 1, 2] in maps[0]["map"]


def test_compare_hfcsa_ten_hosts(tmp_path):
    doc = {"network": {"preset": "ten-host"}, "dynamics": ILLUSTRATIVE, "gamma": 0.02, "lambda_tot": 2500,
           "mode": "compare", "comparator": "hfcsa", "horizon": 1.0, "samples": 21,
           "initial": {"states": TEN_HOST_INITIAL.tolist()}}
    out = tmp_path / "o"
    assert main(["compare", write(tmp_path, doc), "--runs", "4", "--out", str(out)]) == EXIT_OK
    lines = (out / "error.csv").read_text().splitlines()
    assert lines[0] == "gamma,lambda_tot,error"
    assert float(lines[1].split(",")[2]) > 0
    assert (out / "ensemble_band.csv").exists()


def test_sweep_all_skipped_exits_4(tmp_path):
    doc = minimal(mode="sweep", comparator="lfa-pair", runs=2, samples=3,
                  initial={"basins": [[1, 0, 0, 0], [0, 0, 0, 1]]},
                  sweep={"gamma": [0.1, 0.4], "lambda_tot": [0.025]})
    del doc["horizon"]
    doc["horizon_star"] = 2.0
    out = tmp_path / "o"
    assert main(["sweep", write(tmp_path, doc), "--out", str(out)]) == EXIT_ALL_SKIPPED
    rows = (out / "error_surface.csv").read_text().splitlines()
    assert len(rows) == 3 and all(",true,GammaOnBoundary" in r for r in rows[1:])


def test_numerical_failure_exits_3(tmp_path, capsys):
    growth = {"kind": "glv", "r": [1.0], "alpha": [[0.0]], "M": 2.0}
    doc = minimal(dynamics=growth, horizon=5.0, initial={"states": [[1.0], [1.0]]})
    assert main(["simulate", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
    assert "IntegrationEscape" in capsys.readouterr().err


def test_threads_do_not_change_outputs(tmp_path):
    doc = minimal(mode="compare", comparator="hflsa", lambda_tot=80.0, gamma=0.1, runs=16, samples=11)
    path = write(tmp_path, doc)
    assert main(["compare", path, "--threads", "1", "--out", str(tmp_path / "t1")]) == EXIT_OK
    assert main(["compare", path, "--threads", "8", "--out", str(tmp_path / "t8")]) == EXIT_OK
    for name in ("error.csv", "approximation.csv", "ensemble_band.csv"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t8" / name).read_bytes()
