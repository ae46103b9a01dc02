import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from fpcap import cli
from fpcap.config import ConfigError, config_hash, load, validate

# Frozen from tests/oracles/compute_oracles.py.
EK_DW1_01 = 54.1253945622268


def run(tmp_path, command, cfg, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    return cli.main([command, "--config", str(path), "--out", str(out), "--quiet", *extra]), out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


DW1 = {"model": {"builtin": "double_well_1d"}, "epsilons": [0.1]}
ROT = {"model": {"builtin": "double_well_2d_rot", "gamma": 1.0}, "epsilons": [0.1, 0.05]}


def test_check_passes_for_rotational_model(tmp_path):
    code, out = run(tmp_path, "check", ROT)
    assert code == cli.EXIT_OK
    rows = read_csv(out / "check.csv")
    assert [r["passed"] for r in rows] == ["true", "true"]
    assert float(rows[0]["divergence_residual"]) <= 1e-8


def test_check_fails_for_gradient_perturbation(tmp_path, capsys):
    cfg = {"model": {"builtin": "double_well_2d_rot", "gamma": 1.0, "perturbation": "grad"}, "epsilons": [0.1]}
    code, out = run(tmp_path, "check", cfg)
    assert code == cli.EXIT_CHECK
    row = read_csv(out / "check.csv")[0]
    assert row["passed"] == "false" and float(row["divergence_residual"]) > 1e-3


@pytest.mark.parametrize("cfg, pointer", [
    ({"model": {"builtin": "double_well_1d"}, "epsilons": []}, "/epsilons"),
    ({"model": {"builtin": "double_well_1d"}, "epsilons": [0.5]}, "/epsilons/0"),
    ({"model": {"builtin": "double_well_1d", "colour": 1}, "epsilons": [0.1]}, "/model"),
    ({"model": {"builtin": "double_well_1d"}, "epsilons": [0.1], "mc": {"seed": -1}}, "/mc/seed"),
])
def test_schema_violations_exit_2_with_pointer(tmp_path, capsys, cfg, pointer):
    code, _ = run(tmp_path, "check", cfg)
    assert code == cli.EXIT_CONFIG
    assert f"{pointer}:" in capsys.readouterr().err
    with pytest.raises(ConfigError) as exc:
        validate(cfg)
    assert exc.value.pointer == pointer


def test_unreadable_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["check", "--config", str(bad), "--quiet"]) == cli.EXIT_CONFIG
    assert cli.main(["check", "--config", str(tmp_path / "missing.json"), "--quiet"]) == cli.EXIT_CONFIG


def test_negative_flags_exit_2(tmp_path):
    assert run(tmp_path, "mc", DW1, "--seed", "-3")[0] == cli.EXIT_CONFIG
    assert run(tmp_path, "pde", DW1, "--grid-h", "0")[0] == cli.EXIT_CONFIG


def test_analyze_one_dimensional(tmp_path):
    code, out = run(tmp_path, "analyze", DW1)
    assert code == cli.EXIT_OK
    row = json.loads((out / "analyze.json").read_text())[0]
    assert row["mu"] == 1.0
    assert row["mean_time"] == pytest.approx(EK_DW1_01, rel=1e-12)


def test_analyze_reports_mu_and_reduces_at_gamma_zero(tmp_path):
    code, out = run(tmp_path, "analyze", {"model": {"builtin": "double_well_2d_rot", "gamma": 1.0},
                                          "epsilons": [0.1]})
    assert code == 0
    assert json.loads((out / "analyze.json").read_text())[0]["mu"] == pytest.approx(2 ** 0.5, abs=1e-12)
    zero = json.loads((run(tmp_path / "a", "analyze", {"model": {"builtin": "double_well_2d_rot"},
                                                        "epsilons": [0.1]})[1] / "analyze.json").read_text())
    assert zero[0]["mu"] == 1.0 and zero[0]["beta"] == 1.0


def test_analyze_without_saddle_exits_3(tmp_path):
    code, _ = run(tmp_path, "analyze", {"model": {"builtin": "quadratic"}, "epsilons": [0.1]})
    assert code == cli.EXIT_LANDSCAPE


def test_coarse_grid_exits_4(tmp_path):
    assert run(tmp_path, "pde", DW1, "--grid-h", "0.5")[0] == cli.EXIT_PDE


def test_compare_without_inputs_exits_5(tmp_path, capsys):
    code, _ = run(tmp_path, "compare", DW1)
    assert code == cli.EXIT_PIPELINE
    assert "missing input" in capsys.readouterr().err


def test_compare_with_empty_mc_table_exits_5(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / "mc.json").write_text("[]")
    (out / "landscape.json").write_text("[]")
    assert run(tmp_path, "compare", DW1)[0] == cli.EXIT_PIPELINE


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = dict(DW1, mc={"n_paths": 64, "seed": 7})
    codes = {c: run(tmp, c, cfg)[0] for c in ("pde", "mc", "compare")}
    return codes, tmp / "out", cfg


def test_pipeline_outputs_and_headers(pipeline_run):
    codes, out, _ = pipeline_run
    assert codes == {"pde": 0, "mc": 0, "compare": 0}
    for name in ("pde", "landscape", "mc", "compare"):
        with open(out / f"{name}.csv", newline="") as fh:
            assert next(csv.reader(fh)) == cli.COLUMNS[name]
        assert list(json.loads((out / f"{name}.json").read_text())[0]) == cli.COLUMNS[name]
    assert (out / "samples_eps0p1.csv").read_text().startswith("path_index,hit_time,censored\n")
    for role in ("h", "h_dag", "w"):
        assert (out / "fields" / f"{role}_eps0p1.fpcg").read_bytes()[:4] == b"FPCG"


def test_pde_rows_respect_the_upper_bound(pipeline_run):
    _, out, _ = pipeline_run
    for r in json.loads((out / "pde.json").read_text()):
        assert r["cap_dirichlet"] <= r["J_triv_upper"]
        assert r["cap_dirichlet"] <= r["J_poisson_upper"]


def test_compare_row_is_consistent(pipeline_run):
    _, out, _ = pipeline_run
    row = json.loads((out / "compare.json").read_text())[0]
    mc_row = json.loads((out / "mc.json").read_text())[0]
    assert row["MC_mean"] == mc_row["mean"]
    assert row["ratio_mc_ek"] == pytest.approx(row["MC_mean"] / row["EK_time"], rel=1e-15)
    assert row["pass_mc_ek"] == (0.7 <= row["ratio_mc_ek"] <= 1.3)
    assert row["pass_ci_covers_w"] == (row["MC_ci_lo"] <= row["w_m1_pde"] <= row["MC_ci_hi"])


def test_manifest_records_reproduction_data(pipeline_run):
    _, out, _ = pipeline_run
    man = json.loads((out / "manifest_mc.json").read_text())
    assert man["command"] == "mc" and man["seed"] == 7
    assert man["config_sha256"] == config_hash(man["config"])
    assert set(man["versions"]) == {"fpcap", "numpy", "scipy", "python"}
    assert man["kernel_backend"] in ("cython", "python")
    assert set(man["outputs"]) == {"mc.csv", "mc.json", "samples_eps0p1.csv"}


def test_mc_outputs_are_bit_identical_on_rerun(pipeline_run, tmp_path):
    _, out, cfg = pipeline_run
    code, again = run(tmp_path, "mc", cfg)
    assert code == 0
    for name in ("mc.csv", "mc.json", "samples_eps0p1.csv"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_no_temporary_files_are_left(pipeline_run):
    _, out, _ = pipeline_run
    assert not list(out.rglob("*.tmp"))


def test_console_entry_point(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(ROT))
    res = subprocess.run([sys.executable, "-m", "fpcap.cli", "check", "--config", str(path),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert "divergence residual" in res.stdout


@pytest.mark.parametrize("name", ["double_well_1d", "double_well_2d_rot", "underdamped"])
def test_shipped_configs_validate(name):
    cfg = load(Path(__file__).resolve().parents[1] / "configs" / f"{name}.json")
    assert cfg["epsilons"]
