"""Problem construction, structural validation, and the scenario schema."""

import numpy as np
import pytest

from covsteer import model
from covsteer.errors import (DimensionMismatch, NonPositiveHorizon,
                             NotPositiveDefinite, NotSymmetric, UnknownKey)

from conftest import golden_plant


def finite_doc():
    return {
        "plant": {"A": [[0.0]], "B1": [[1.4142135623730951]],
                  "B2": [[1.0]], "C": [[1.0]]},
        "horizon": {"T": 1.0, "steps": 400},
        "Q": [[0.0]],
        "Sigma0": [[1.0]],
        "SigmaT": [[1.0]],
    }


def test_plant_dimension_checks():
    with pytest.raises(DimensionMismatch):
        model.Plant(A=[[0.0, 1.0]], B1=[[1.0]], B2=[[1.0]], C=[[1.0]])
    with pytest.raises(DimensionMismatch):
        model.Plant(A=[[0.0]], B1=[[1.0], [1.0]], B2=[[1.0]], C=[[1.0]])


def test_plant_shape_properties():
    plant = model.Plant(A=np.zeros((3, 3)), B1=np.ones((3, 2)),
                        B2=np.ones((3, 1)), C=np.eye(3))
    assert (plant.n, plant.m, plant.p) == (3, 2, 1)
    assert np.allclose(plant.noise_cov, np.eye(3))
    assert np.allclose(plant.channel_gap,
                       plant.B1 @ plant.B1.T - plant.B2 @ plant.B2.T)


def test_finite_horizon_symmetry_and_horizon_checks():
    plant = golden_plant()
    with pytest.raises(NonPositiveHorizon):
        model.FiniteHorizonProblem(plant=plant, Q=[[0.0]], horizon_T=0.0,
                                   Sigma0=[[1.0]], SigmaT=[[1.0]])
    plant2 = model.Plant(A=np.zeros((2, 2)), B1=np.eye(2), B2=np.eye(2),
                         C=np.eye(2))
    with pytest.raises(NotSymmetric):
        model.FiniteHorizonProblem(plant=plant2, Q=[[0.0, 1.0], [0.0, 0.0]],
                                   horizon_T=1.0, Sigma0=np.eye(2),
                                   SigmaT=np.eye(2))
    with pytest.raises(DimensionMismatch):
        model.FiniteHorizonProblem(plant=plant2, Q=[[0.0]], horizon_T=1.0,
                                   Sigma0=np.eye(2), SigmaT=np.eye(2))


def test_validate_problem_catches_indefinite_targets():
    plant = golden_plant()
    bad = model.FiniteHorizonProblem(plant=plant, Q=[[0.0]], horizon_T=1.0,
                                     Sigma0=[[1.0]], SigmaT=[[-1.0]])
    report = model.validate_problem(bad)
    assert not report.passed
    with pytest.raises(NotPositiveDefinite):
        model.require_valid(bad)


def test_validate_problem_passes_golden():
    problem = model.scenario_from_dict(finite_doc())
    report = model.validate_problem(problem)
    assert report.passed


def test_scenario_roundtrip_finite():
    problem = model.scenario_from_dict(finite_doc())
    assert isinstance(problem, model.FiniteHorizonProblem)
    assert problem.grid_steps == 400
    assert problem.horizon_T == 1.0
    assert np.allclose(problem.plant.B1, np.sqrt(2.0))


def test_scenario_default_grid_steps():
    doc = finite_doc()
    del doc["horizon"]["steps"]
    problem = model.scenario_from_dict(doc)
    assert problem.grid_steps == model.DEFAULT_GRID_STEPS


def test_scenario_stationary():
    doc = {"plant": finite_doc()["plant"], "stationary": {"Sigma": [[0.5]]}}
    problem = model.scenario_from_dict(doc)
    assert isinstance(problem, model.StationaryProblem)
    assert np.allclose(problem.Sigma, 0.5)


def test_scenario_rejects_unknown_keys_by_name():
    doc = finite_doc()
    doc["extra_section"] = {}
    with pytest.raises(UnknownKey, match="extra_section"):
        model.scenario_from_dict(doc)
    doc = finite_doc()
    doc["plant"]["B3"] = [[1.0]]
    with pytest.raises(UnknownKey, match="B3"):
        model.scenario_from_dict(doc)


def test_scenario_missing_sections():
    doc = finite_doc()
    del doc["SigmaT"]
    with pytest.raises(UnknownKey, match="SigmaT"):
        model.scenario_from_dict(doc)
    with pytest.raises(UnknownKey, match="plant"):
        model.scenario_from_dict({"horizon": {"T": 1.0}})


def test_solver_options_overrides():
    doc = finite_doc()
    doc["solver"] = {"newton_tol": 1e-8}
    opts = model.solver_options_from_dict(doc)
    assert opts.newton_tol == 1e-8
    opts = model.solver_options_from_dict(doc, overrides={"newton_tol": 1e-6})
    assert opts.newton_tol == 1e-6
    doc["solver"]["bogus"] = 1
    with pytest.raises(UnknownKey, match="bogus"):
        model.solver_options_from_dict(doc)


def test_solver_options_bounds():
    with pytest.raises(ValueError):
        model.SolverOptions(newton_tol=0.0)
    with pytest.raises(ValueError):
        model.SolverOptions(max_newton_iters=0)
