import re
import sys
from pathlib import Path

import numpy as np
import orjson
import pandas as pd
import pytest
from loguru import logger
from typer.testing import CliRunner

from src.cli import app

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

runner = CliRunner()
# keeps log lines out of stdout for the JSON tests
split_runner = CliRunner(mix_stderr=False)


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def write_config(tmp_path, data):
    path = tmp_path / "run.json"
    path.write_bytes(orjson.dumps(data))
    return path


# --- hydrostatic --------------------------------------------------------------------------


def test_hydrostatic_ideal_gas(tmp_path):
    result = invoke("--config", CONFIGS / "ideal_gas.json", "--out-dir", tmp_path, "hydrostatic", "ideal-gas")
    assert result.exit_code == 0, result.output
    assert "momentum residual" in result.output
    frame = pd.read_csv(tmp_path / "ideal-gas_profile.csv", float_precision="round_trip")
    assert list(frame.columns) == ["y", "rho", "phi", "h_residual"]
    assert len(frame) == 1001
    exact = np.exp(-frame["y"].to_numpy())
    assert np.max(np.abs(frame["phi"].to_numpy() - exact) / exact) <= 1e-8


def test_hydrostatic_degenerate_relation(tmp_path):
    result = invoke("--config", CONFIGS / "catalog.json", "--out-dir", tmp_path, "hydrostatic", "unconstrained")
    assert result.exit_code == 2
    assert "degenerate relation" in result.output
    assert "does not determine" in result.output
    assert not list(tmp_path.iterdir())


def test_hydrostatic_constant_density(tmp_path):
    config = write_config(
        tmp_path,
        {
            "relations": [{"name": "gas", "family": "IdealGas", "c": 1.0}],
            "grid": {"y_min": -2.0, "n_points": 21, "g": 2.0},
            "surface": {"phi0": 1.0},
            "density": {"law": "constant", "rho0": 3.0},
        },
    )
    result = invoke("--config", config, "--out-dir", tmp_path / "out", "hydrostatic", "gas")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(tmp_path / "out" / "gas_profile.csv")
    np.testing.assert_allclose(frame["phi"], 1.0 - 6.0 * frame["y"], rtol=1e-13)


def test_hydrostatic_coupled_solve(tmp_path):
    result = invoke("--config", CONFIGS / "catalog.json", "--out-dir", tmp_path, "hydrostatic", "polytrope")
    assert result.exit_code == 0, result.output
    assert "coupled solve" in result.output


def test_hydrostatic_overflowing_grid(tmp_path):
    config = write_config(
        tmp_path,
        {"relations": [{"name": "gas", "family": "IdealGas", "c": 0.001}], "grid": {"y_min": -10.0, "n_points": 11}},
    )
    result = invoke("--config", config, "--out-dir", tmp_path, "hydrostatic", "gas")
    assert result.exit_code == 2
    assert "truncate the grid" in result.output


def test_unknown_relation(tmp_path):
    result = invoke("--config", CONFIGS / "ideal_gas.json", "--out-dir", tmp_path, "hydrostatic", "nitrogen")
    assert result.exit_code == 2
    assert "unknown relation 'nitrogen'" in result.output


def test_invalid_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"y_min": 1.0}}')
    result = invoke("--config", bad, "hydrostatic", "gas")
    assert result.exit_code == 2
    assert "configuration error" in result.output


# --- cull -------------------------------------------------------------------------------------


def test_cull_fixture(tmp_path):
    result = invoke("--config", CONFIGS / "cull_ideal_gas.json", "--out-dir", tmp_path, "cull")
    assert result.exit_code == 0, result.output
    report = orjson.loads((tmp_path / "cull_report.json").read_bytes())
    assert report["survivors"] == ["ideal-gas-C", "linear-phi", "quadratic-phi"]
    assert report["verdicts"]["ideal-gas-2C"]["ideal-gas-profile"] == "inconsistent"
    assert "survivors (3)" in result.output


def test_cull_with_empty_survivor_set_succeeds(tmp_path):
    config = write_config(
        tmp_path,
        {
            "relations": [{"name": "gas", "family": "IdealGas", "c": 2.0}],
            "grid": {"y_min": -1.0, "n_points": 11},
            "observations": [{"name": "profile", "source": "ideal_gas", "k": 1.0, "c": 1.0}],
        },
    )
    result = invoke("--config", config, "--out-dir", tmp_path, "cull", "--report", "empty")
    assert result.exit_code == 0, result.output
    assert "survivors (0): none" in result.output
    assert orjson.loads((tmp_path / "empty.json").read_bytes())["survivors"] == []


def test_cull_without_candidates(tmp_path):
    config = write_config(
        tmp_path,
        {"observations": [{"name": "profile", "source": "ideal_gas", "k": 1.0, "c": 1.0}], "cull": {"candidates": []}},
    )
    result = invoke("--config", config, "--out-dir", tmp_path, "cull")
    assert result.exit_code == 2
    assert "no candidates" in result.output


def test_cull_without_observations(tmp_path):
    config = write_config(tmp_path, {"relations": [{"name": "gas", "family": "IdealGas", "c": 1.0}]})
    result = invoke("--config", config, "--out-dir", tmp_path, "cull")
    assert result.exit_code == 2
    assert "no observations" in result.output


def test_cull_with_unreadable_observation_file(tmp_path):
    config = write_config(
        tmp_path,
        {
            "relations": [{"name": "gas", "family": "IdealGas", "c": 1.0}],
            "observations": [{"name": "lab", "source": "samples_file", "path": "lab/missing.json"}],
        },
    )
    result = invoke("--config", config, "--out-dir", tmp_path, "cull")
    assert result.exit_code == 2
    assert "missing.json" in result.output


def test_tol_flag_overrides_config(tmp_path):
    args = ["--config", CONFIGS / "cull_ideal_gas.json", "--out-dir", tmp_path, "--tol", "0.9", "cull"]
    result = invoke(*args)
    assert result.exit_code == 0, result.output
    report = orjson.loads((tmp_path / "cull_report.json").read_bytes())
    assert report["tolerance"] == 0.9
    assert "ideal-gas-2C" in report["survivors"]


# --- check-isotropy -------------------------------------------------------------------------


@pytest.mark.parametrize("relation", ["quadratic", "polytrope", "stress-linear", "general"])
def test_isotropic_relations_pass(relation):
    result = invoke("--config", CONFIGS / "catalog.json", "check-isotropy", relation, "--samples", 1000)
    assert result.exit_code == 0, result.output
    assert "max equivariance error" in result.output


def test_anisotropic_relation_is_flagged():
    result = invoke("--config", CONFIGS / "catalog.json", "check-isotropy", "anisotropic", "--samples", 100)
    assert result.exit_code == 3
    assert "isotropy violated" in result.output


def test_isotropy_needs_samples():
    result = invoke("--config", CONFIGS / "catalog.json", "check-isotropy", "quadratic", "--samples", 0)
    assert result.exit_code == 2
    assert "samples must be >= 1" in result.output


def test_isotropy_seed_is_reproducible():
    args = ["--config", CONFIGS / "catalog.json", "--seed", 17, "check-isotropy", "general", "--samples", 50]
    assert invoke(*args).output == invoke(*args).output


def test_isotropy_evaluation_failure(tmp_path):
    config = write_config(
        tmp_path, {"relations": [{"name": "log", "family": "GeneralImplicit", "coefficients": {"alpha1": "log(i1)"}}]}
    )
    result = invoke("--config", config, "check-isotropy", "log", "--samples", 50)
    assert result.exit_code == 2


# --- solve-stress ------------------------------------------------------------------------------


def test_solve_stress_ideal_gas(tmp_path):
    result = invoke("--config", CONFIGS / "ideal_gas.json", "solve-stress", "ideal-gas", "--rho", 2)
    assert result.exit_code == 0, result.output
    assert re.search(r"^xx\s+-2\s*$", result.output, re.M)
    branch = re.search(r"^branch-0: phi = (\S+) \(physical\)$", result.output, re.M)
    assert float(branch.group(1)) == pytest.approx(2.0, rel=1e-14)


def test_solve_stress_quadratic_branches():
    result = invoke("--config", CONFIGS / "catalog.json", "solve-stress", "quadratic", "--rho", 1, "--phi0", 0.9)
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    branches = [line for line in lines if line.startswith("branch-")]
    assert len(branches) == 2
    assert float(branches[0].split("=")[1].split()[0]) == pytest.approx(1.0, abs=1e-12)
    assert float(branches[1].split("=")[1].split()[0]) == pytest.approx(2.0, abs=1e-12)


def test_solve_stress_json():
    result = split_runner.invoke(app, ["--config", str(CONFIGS / "catalog.json"), "solve-stress", "quadratic", "--rho", "1", "--json"])
    assert result.exit_code == 0, result.output
    payload = orjson.loads(result.stdout)
    assert payload["tensor"]["converged"] is True
    assert [b["branch"] for b in payload["branches"]] == ["branch-0", "branch-1"]


def test_solve_stress_gradient_family():
    args = ["--config", CONFIGS / "catalog.json", "solve-stress", "stress-linear", "--rho", 1.5, "--grad", 0.1, 0.2, 0.0]
    result = invoke(*args)
    assert result.exit_code == 0, result.output
    assert "branch-" not in result.output


def test_solve_stress_degenerate_spherical_equation():
    result = split_runner.invoke(app, ["--config", str(CONFIGS / "catalog.json"), "solve-stress", "unconstrained", "--rho", "1", "--json"])
    assert result.exit_code == 0, result.stderr
    payload = orjson.loads(result.stdout)
    assert payload["degenerate"] is True


def test_solve_stress_rejects_negative_density():
    result = invoke("--config", CONFIGS / "ideal_gas.json", "solve-stress", "ideal-gas", "--rho=-1")
    assert result.exit_code == 2
    assert "density must be positive" in result.output


def test_solve_stress_non_convergence(tmp_path):
    config = write_config(
        tmp_path,
        {"relations": [{"name": "no-root", "family": "ImplicitEuler", "coefficients": {"alpha1": "1", "alpha4": "1"}}]},
    )
    result = invoke("--config", config, "--max-iter", 5, "solve-stress", "no-root", "--rho", 1)
    assert result.exit_code == 2
    assert "did not converge" in result.output


def test_default_config_without_flag():
    result = invoke("solve-stress", "anything", "--rho", 1)
    assert result.exit_code == 2
    assert "unknown relation" in result.output
