import json

import numpy as np
import pytest

from wickopt.cli import EXIT_CONFIG, EXIT_IO, build_parser, main
from wickopt.grid import read_voxel_file, read_vtk_scalars, unit_cell, write_voxel_file
from wickopt.pipeline import CampaignConfig


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    out = capsys.readouterr().out
    for cmd in ("generate", "reconstruct", "simulate-perm", "simulate-cond", "evaluate", "doe",
                "build-dataset", "train", "optimize", "validate", "export-vtk", "config"):
        assert cmd in out


def test_config_dump_round_trips(capsys, tmp_path):
    code, out = run(capsys, "config", "--smoke", "--dump")
    assert code == 0
    path = tmp_path / "c.toml"
    path.write_text(out)
    code, out = run(capsys, "config", "--config", str(path), "--seed", "5")
    assert code == 0
    assert json.loads(out)["digest"] != CampaignConfig.from_toml(path.read_text()).digest()


def test_bad_config_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("nonsense_key = 3\n")
    assert main(["config", "--config", str(path)]) == EXIT_CONFIG


def test_generate_and_reconstruct(capsys, tmp_path):
    sdf = tmp_path / "sdf.vox"
    assert main(["generate", "--n", "16", "--out", str(sdf)]) == 0
    assert read_voxel_file(sdf).kind == "sdf"
    vox = tmp_path / "s.vox"
    code, out = run(capsys, "reconstruct", "--n", "16", "--seed", "3", "--v", "0.4", "--out", str(vox))
    assert code == 0
    grid = read_voxel_file(vox)
    assert grid.kind == "binary" and grid.data.sum() == round(0.4 * 16 ** 3)
    assert json.loads(out)["seed"] == 3


def test_simulate_and_export(capsys, tmp_path):
    s = np.zeros((10, 10, 10), np.uint8)
    s[:, :, :4] = 1
    vox = tmp_path / "slab.vox"
    write_voxel_file(unit_cell(s, 20.0), vox)
    code, out = run(capsys, "simulate-cond", str(vox))
    assert code == 0
    k = json.loads(out)["k_eff"]
    assert k[0] == pytest.approx(0.4 * 400, rel=1e-6) and k[2] == 0.0
    vtk = tmp_path / "vtk"
    code, out = run(capsys, "simulate-perm", str(vox), "--smoke", "--vtk", str(vtk))
    assert code == 0
    rec = json.loads(out)
    assert rec["k_um2"][0] > 0 and rec["k_um2"][2] == 0.0
    assert (vtk / "speed_x.vtk").exists()
    assert main(["export-vtk", str(vox), "--out", str(tmp_path / "slab.vtk")]) == 0
    dims, _, data = read_vtk_scalars(tmp_path / "slab.vtk")
    assert dims == (10, 10, 10) and data.sum() == s.sum()


def test_missing_input_exit_code(tmp_path):
    assert main(["simulate-cond", str(tmp_path / "nope.vox")]) == EXIT_IO
    assert main(["train", "--smoke", "--out", str(tmp_path)]) == EXIT_IO
    assert main(["train", "--smoke"]) == EXIT_IO


def test_doe_output(capsys, tmp_path):
    code, out = run(capsys, "doe", "--n", "3")
    lines = [json.loads(x) for x in out.splitlines()]
    assert code == 0 and [r["design_id"] for r in lines] == [0, 1, 2]
    assert lines[0]["params"]["sdf_type"] == "Cyl"


def test_evaluate_prints_records(capsys):
    code, out = run(capsys, "evaluate", "--smoke", "--n", "12", "--r", "5", "--v", "0.45")
    assert code == 0
    rows = [json.loads(x) for x in out.splitlines() if x.startswith("{")]
    assert rows and {r.get("orientation") for r in rows} <= {"O1", "O2", "O3", None}
