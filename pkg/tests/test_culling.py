import time

import numpy as np
import pytest

from src.constitutive import ConstitutiveRelation
from src.culling import (
    CandidateSet,
    Observation,
    StressSample,
    Verdict,
    cull,
    evaluate_cell,
    generate_observation,
)
from src.exceptions import DegenerateRelationError, SolverError
from src.hydrostatics import ConstantDensity, HalfSpaceGrid, ideal_gas_profile
from src.tensor3 import SymTensor3


def low_density_samples(c=1.0):
    """Ideal gas states below the density range of the K = 1 profiles."""
    return Observation("low-density", samples=tuple(StressSample.spherical(rho, c * rho) for rho in (0.5, 0.6, 0.7)))


def test_four_candidate_fixture(four_candidates, ideal_gas_solution):
    start = time.perf_counter()
    report = cull(four_candidates, [Observation("profile", ideal_gas_solution)])
    elapsed = time.perf_counter() - start

    assert report.survivors == ["ideal-gas-C", "linear-phi", "quadratic-phi"]
    assert report.verdict("ideal-gas-C", "profile") is Verdict.CONSISTENT
    assert report.verdict("ideal-gas-2C", "profile") is Verdict.INCONSISTENT
    assert report.verdict("linear-phi", "profile").survives
    assert report.verdict("quadratic-phi", "profile") is Verdict.DEGENERATE
    assert elapsed < 1.0


@pytest.mark.parametrize(
    "k, c, y_min",
    [(1.0, 1.0, -5.0), (0.3, 2.0, -0.2), (5.0, 0.5, -1.0), (1e-3, 10.0, -1.0), (2.0, 1.0, -20.0)],
)
def test_doubled_constant_is_always_culled(k, c, y_min):
    grid = HalfSpaceGrid(y_min, 201, 1.0)
    candidates = [ConstitutiveRelation.ideal_gas("C", c), ConstitutiveRelation.ideal_gas("2C", 2 * c)]
    report = cull(candidates, [Observation("profile", ideal_gas_profile(k, c, grid))])
    assert report.survivors == ["C"]


def test_second_observation_shrinks_the_survivors(four_candidates, kinked, ideal_gas_solution):
    candidates = four_candidates + [kinked]
    profile = Observation("profile", ideal_gas_solution)

    one = cull(candidates, [profile])
    two = cull(candidates, [profile, low_density_samples()])

    assert "kinked" in one.survivors
    assert two.verdict("kinked", "low-density") is Verdict.INCONSISTENT
    assert set(two.survivors) < set(one.survivors)
    assert two.survivors == ["ideal-gas-C", "linear-phi", "quadratic-phi"]


def test_raw_samples_with_full_stress(ideal_gas):
    obs = Observation("sheared", samples=(StressSample(1.0, SymTensor3(-1.0, -1.0, -1.0, 0.5, 0.0, 0.0)),))
    cell = evaluate_cell(ideal_gas, obs)
    assert cell.verdict is Verdict.INCONSISTENT
    assert cell.max_residual == 0.5


def test_evaluation_errors_are_recorded(ideal_gas, ideal_gas_solution):
    broken = ConstitutiveRelation.implicit_euler("log", alpha1="log(rho - 2)", alpha2="1")
    report = cull([ideal_gas, broken], [Observation("profile", ideal_gas_solution)])
    cell = report.cell("log", "profile")
    assert cell.verdict is Verdict.EVALUATION_ERROR
    assert "log" in cell.message
    assert report.survivors == ["ideal-gas-C"]


def test_observation_tolerance_override(ideal_gas, ideal_gas_2c, ideal_gas_solution):
    loose = Observation("profile", ideal_gas_solution, tol=1.0)
    assert cull([ideal_gas, ideal_gas_2c], [loose]).survivors == ["ideal-gas-C", "ideal-gas-2C"]


def test_empty_survivor_set_is_a_result(ideal_gas_2c, ideal_gas_solution):
    report = cull([ideal_gas_2c], [Observation("profile", ideal_gas_solution)])
    assert report.survivors == []


def test_report_is_deterministic_and_exportable(four_candidates, ideal_gas_solution):
    observations = [Observation("profile", ideal_gas_solution), low_density_samples()]
    first = cull(four_candidates, observations).to_dict()
    second = cull(four_candidates, observations).to_dict()
    assert first == second
    assert first["candidates"] == [rel.name for rel in four_candidates]
    assert first["verdicts"]["ideal-gas-2C"]["profile"] == "inconsistent"
    assert len(first["cells"]) == 8


def test_render_table(four_candidates, ideal_gas_solution):
    table = cull(four_candidates, [Observation("profile", ideal_gas_solution)]).render_table()
    assert "survives" in table
    for rel in four_candidates:
        assert rel.name in table


def test_input_validation(ideal_gas, ideal_gas_solution):
    profile = Observation("profile", ideal_gas_solution)
    with pytest.raises(ValueError, match="no candidates"):
        cull([], [profile])
    with pytest.raises(ValueError, match="no observations"):
        cull([ideal_gas], [])
    with pytest.raises(ValueError, match="duplicate"):
        CandidateSet([ideal_gas, ideal_gas])
    with pytest.raises(ValueError, match="duplicate"):
        cull([ideal_gas], [profile, profile])
    with pytest.raises(ValueError):
        Observation("empty")
    with pytest.raises(ValueError):
        StressSample.spherical(0.0, 1.0)


# --- generated observations --------------------------------------------------------


def test_generated_ideal_gas_matches_closed_form(ideal_gas):
    grid = HalfSpaceGrid(-5.0, 501, 1.0)
    obs = generate_observation(ideal_gas, grid, 1.0, 0.0, seed=0)
    exact = ideal_gas_profile(1.0, 1.0, grid)
    np.testing.assert_allclose(obs.solution.phi, exact.phi, rtol=1e-8)
    np.testing.assert_allclose(obs.solution.rho, exact.rho, rtol=1e-8)


@pytest.mark.parametrize(
    "rel",
    [
        ConstitutiveRelation.ideal_gas("gas", 2.0),
        ConstitutiveRelation.classical_euler("polytrope", "0.5*rho^2"),
        ConstitutiveRelation.implicit_euler("quadratic-pressure", alpha1="rho + 0.1*rho^2", alpha2="1"),
    ],
    ids=lambda rel: rel.name,
)
def test_noise_free_observation_is_self_consistent(rel):
    obs = generate_observation(rel, HalfSpaceGrid(-1.0, 101, 1.0), 1.5)
    assert cull([rel], [obs]).verdict(rel.name, obs.name) is Verdict.CONSISTENT


def test_noise_is_repeatable(ideal_gas):
    grid = HalfSpaceGrid(-1.0, 101, 1.0)
    a = generate_observation(ideal_gas, grid, 1.0, 0.01, seed=42)
    b = generate_observation(ideal_gas, grid, 1.0, 0.01, seed=42)
    c = generate_observation(ideal_gas, grid, 1.0, 0.01, seed=43)
    clean = generate_observation(ideal_gas, grid, 1.0)
    np.testing.assert_array_equal(a.solution.phi, b.solution.phi)
    np.testing.assert_array_equal(a.solution.rho, b.solution.rho)
    assert not np.array_equal(a.solution.phi, c.solution.phi)
    assert np.max(np.abs(a.solution.rho / clean.solution.rho - 1.0)) <= 0.01


def test_noisy_observation_culls_at_tight_tolerance(ideal_gas):
    obs = generate_observation(ideal_gas, HalfSpaceGrid(-1.0, 101, 1.0), 1.0, 0.01, seed=1)
    assert cull([ideal_gas], [obs]).survivors == []


def test_prescribed_density_observation(ideal_gas):
    obs = generate_observation(ideal_gas, HalfSpaceGrid(-1.0, 11, 1.0), 2.0, density=ConstantDensity(2.0), name="tank")
    assert obs.name == "tank"
    np.testing.assert_allclose(obs.solution.phi, 2.0 - 2.0 * obs.solution.y)


def test_degenerate_relation_cannot_generate(quadratic_phi, small_grid):
    with pytest.raises(DegenerateRelationError, match="does not determine phi from rho"):
        generate_observation(quadratic_phi, small_grid, 1.0)


def test_gradient_family_needs_prescribed_density(small_grid):
    rel = ConstitutiveRelation.stress_linear("plain", alpha1="rho", alpha2="1")
    with pytest.raises(SolverError):
        generate_observation(rel, small_grid, 1.0)


@pytest.mark.parametrize("amplitude", [-0.1, 1.0])
def test_noise_amplitude_range(ideal_gas, small_grid, amplitude):
    with pytest.raises(ValueError):
        generate_observation(ideal_gas, small_grid, 1.0, amplitude)


# --- monotonicity -------------------------------------------------------------------


def random_campaign(seed):
    rng = np.random.default_rng(seed)
    candidates = []
    for k, c in enumerate(rng.choice([0.5, 1.0, 2.0, 4.0], size=3, replace=False)):
        candidates.append(ConstitutiveRelation.ideal_gas(f"gas-{k}", float(c)))
    candidates.append(
        ConstitutiveRelation.implicit_euler(
            "linear-phi", {"A": float(rng.uniform(0.5, 2.0)), "K": float(rng.uniform(0.5, 2.0))},
            alpha1="A*phi*rho/K", alpha2="A*rho/K",
        )
    )
    threshold = float(rng.uniform(0.3, 3.0))
    candidates.append(
        ConstitutiveRelation.implicit_euler(
            "kinked", {"R": threshold}, alpha1="rho + (abs(rho - R) - (rho - R))", alpha2="1"
        )
    )
    candidates.append(ConstitutiveRelation.classical_euler("polytrope", "0.5*rho^2"))

    observations = []
    for j in range(int(rng.integers(2, 5))):
        c = float(rng.choice([0.5, 1.0, 2.0, 4.0]))
        if rng.random() < 0.5:
            k = float(rng.uniform(0.2, 3.0))
            grid = HalfSpaceGrid(float(-rng.uniform(0.1, 3.0)), 51, 1.0)
            observations.append(Observation(f"profile-{j}", ideal_gas_profile(k, c, grid)))
        else:
            rhos = rng.uniform(0.1, 5.0, size=4)
            observations.append(Observation(f"samples-{j}", samples=tuple(StressSample.spherical(float(r), c * float(r)) for r in rhos)))
    return candidates, observations


@pytest.mark.parametrize("seed", range(50))
def test_adding_an_observation_never_enlarges_the_survivors(seed):
    candidates, observations = random_campaign(seed)
    previous = set(cull(candidates, observations[:1]).survivors)
    for m in range(2, len(observations) + 1):
        current = set(cull(candidates, observations[:m]).survivors)
        assert current <= previous
        previous = current
