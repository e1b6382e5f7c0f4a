import csv
import json

import numpy as np
import pytest

from distsip.analysis import CSV_HEADER
from distsip.cli import COMPARE_HEADER, build_setup, main
from distsip.config import ConfigError, load_config, parse_config


def _quad_cfg(tmp_path, **over):
    cfg = {
        "run_id": "t",
        "output": {"dir": str(tmp_path / "out"), "timing": "none"},
        "problem": {"name": "quad_abs_10"},
        "graph": {"kind": "static-cycle", "V": 10},
        "solver": {"K": 20},
        "analysis": {"check_samples": 30, "g0_samples": 30, "validate_horizon": 20},
    }
    for k, v in over.items():
        cfg[k] = v
    return cfg


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_run_writes_outputs(tmp_path):
    path = _write(tmp_path, _quad_cfg(tmp_path))
    assert main(["run", "--config", path, "--quiet"]) == 0
    out = tmp_path / "out"
    with open(out / "run.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 20 * 10
    assert {r[1] for r in rows[1:]} == {"dagd"}
    bounds = (out / "bounds.txt").read_text()
    assert "C1 (with L)" in bounds and "[observed]" in bounds
    assert "max |F(x_bar) - F*|" in (out / "summary.txt").read_text()


def test_run_with_baselines_shares_one_header(tmp_path):
    cfg = _quad_cfg(tmp_path, baseline={"N": [10, 30], "seed": 2})
    assert main(["run", "--config", _write(tmp_path, cfg), "--quiet"]) == 0
    with open(tmp_path / "out" / "run.csv") as fh:
        rows = list(csv.reader(fh))
    assert sum(tuple(r) == CSV_HEADER for r in rows) == 1
    assert [m for m in ("dagd", "dsa-10", "dsa-30") if any(r[1] == m for r in rows)] == \
        ["dagd", "dsa-10", "dsa-30"]


def test_out_flag_overrides_dir(tmp_path):
    path = _write(tmp_path, _quad_cfg(tmp_path))
    assert main(["run", "--config", path, "--out", str(tmp_path / "elsewhere"), "--quiet"]) == 0
    assert (tmp_path / "elsewhere" / "run.csv").exists()


def test_bad_eta_exits_1(tmp_path, capsys):
    cfg = _quad_cfg(tmp_path, graph={"kind": "static-cycle", "V": 10, "eta": 1.5})
    assert main(["run", "--config", _write(tmp_path, cfg)]) == 1
    assert "config.graph.eta" in capsys.readouterr().err


def test_malformed_json_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"run_id": "x",\n "solver": {K: 3}}')
    assert main(["run", "--config", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1


@pytest.mark.parametrize("mutate, field", [
    (lambda c: c["solver"].update(K=1), "config.solver.K"),
    (lambda c: c["graph"].update(V=7), "config.graph.V"),
    (lambda c: c["graph"].update(kind="star"), "config.graph.kind"),
    (lambda c: c["problem"].update(G0=-1), "config.problem"),
    (lambda c: c.update(extra=1), "config"),
])
def test_config_errors_name_field(tmp_path, mutate, field):
    cfg = _quad_cfg(tmp_path)
    mutate(cfg)
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        build_setup(parse_config(cfg))


def test_validate_passes_on_catalog_problem(tmp_path):
    path = _write(tmp_path, _quad_cfg(tmp_path))
    assert main(["validate", "--config", path, "--quiet"]) == 0
    out = tmp_path / "out"
    assert "validation: PASS" in (out / "validation.txt").read_text()
    assert (out / "graph_validation.csv").exists()


def _custom_graph(rows_ok=True):
    a = np.full((10, 10), 0.0)
    for i in range(10):
        a[i, i] = 0.5
        a[i, (i + 1) % 10] += 0.25
        a[i, (i - 1) % 10] += 0.25
    if not rows_ok:
        a[3, 3] = 0.9
    return {"kind": "custom", "eta": 0.25, "matrices": [a.tolist()]}


def test_validate_custom_graph(tmp_path):
    good = _quad_cfg(tmp_path, graph=_custom_graph())
    assert main(["validate", "--config", _write(tmp_path, good), "--quiet"]) == 0
    bad = _quad_cfg(tmp_path, graph=_custom_graph(rows_ok=False))
    assert main(["validate", "--config", _write(tmp_path, bad, "bad.json"), "--quiet"]) == 1


def test_grid_reference_on_high_dimension_exits_1(tmp_path, capsys):
    cfg = {
        "output": {"dir": str(tmp_path / "out")},
        "problem": {"name": "meta_control"},
        "graph": {"kind": "static-cycle", "V": 4},
        "solver": {"K": 10},
        "analysis": {"reference_mode": "grid"},
    }
    assert main(["reference", "--config", _write(tmp_path, cfg)]) == 1
    assert "algorithm" in capsys.readouterr().err


def test_reference_grid_quad(tmp_path):
    cfg = _quad_cfg(tmp_path, analysis={"reference_mode": "grid", "reference_resolution": 201})
    assert main(["reference", "--config", _write(tmp_path, cfg), "--quiet"]) == 0
    assert "mode = grid" in (tmp_path / "out" / "reference.txt").read_text()


def test_certify_exit_codes(tmp_path):
    cfg = {
        "output": {"dir": str(tmp_path / "out")},
        "problem": {"name": "meta_control"},
        "graph": {"kind": "static-cycle", "V": 4},
        "solver": {"K": 3000},
        "analysis": {"certify_samples": 10, "certify_tolerance": 0.0},
    }
    path = _write(tmp_path, cfg)
    zeros = tmp_path / "u0.txt"
    zeros.write_text("0\n" * 100)
    assert main(["certify", "--config", path, "--controls", str(zeros), "--quiet"]) == 3
    assert (tmp_path / "out" / "certification.csv").exists()
    short = tmp_path / "u1.txt"
    short.write_text("0\n" * 3)
    assert main(["certify", "--config", path, "--controls", str(short), "--quiet"]) == 1
    assert main(["certify", "--config", path, "--quiet"]) == 1
    quad = _write(tmp_path, _quad_cfg(tmp_path), "quad.json")
    assert main(["certify", "--config", quad, "--controls", str(zeros), "--quiet"]) == 1


def test_runtime_error_exits_2(tmp_path, capsys):
    cfg = _quad_cfg(tmp_path, problem={"name": "quad_abs_10", "L_G": 0.001})
    cfg["solver"] = {"K": 50, "cap_factor": 1}
    assert main(["run", "--config", _write(tmp_path, cfg)]) == 2
    assert "round k=" in capsys.readouterr().err


def test_compare_output(tmp_path):
    cfg = _quad_cfg(tmp_path, baseline={"N": [20], "seed": 0})
    assert main(["compare", "--config", _write(tmp_path, cfg), "--quiet"]) == 0
    with open(tmp_path / "out" / "compare.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == COMPARE_HEADER
    assert len(rows) == 1 + 2 * 20
    no_base = _quad_cfg(tmp_path)
    assert main(["compare", "--config", _write(tmp_path, no_base, "nb.json"), "--quiet"]) == 1


def test_cli_determinism_across_workers(tmp_path):
    path = _write(tmp_path, _quad_cfg(tmp_path))
    assert main(["run", "--config", path, "--out", str(tmp_path / "a"), "--workers", "1", "--quiet"]) == 0
    assert main(["run", "--config", path, "--out", str(tmp_path / "b"), "--workers", "4", "--quiet"]) == 0
    assert (tmp_path / "a" / "run.csv").read_bytes() == (tmp_path / "b" / "run.csv").read_bytes()


def test_shipped_configs_parse():
    from pathlib import Path
    for p in sorted(Path(__file__).resolve().parents[1].glob("configs/*.json")):
        load_config(p)
