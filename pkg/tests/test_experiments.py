import os

import pytest

from app.commands.simulate import load_sim_config
from app.models.simulation import SimConfig
from app.modules.simulation import run_experiment
from app.utils.constants import ALL_EIGEN, ALL_ESTIMATORS, BASELINE_ESTIMATORS, FLAME, STRATIFIED

pytestmark = pytest.mark.slow

WORKERS = os.cpu_count() or 1


def summary_by_method(report, setting=None):
    summary = report.summary
    if setting is not None:
        summary = summary[summary["setting"] == setting]
    return summary.set_index("method")


class TestExperimentOne:
    """Test FLAME against every baseline under additive interference"""

    @pytest.mark.parametrize("preset", ["exp1-s1", "exp1-s2", "exp1-s3", "exp1-s4"])
    def test_flame_has_lowest_mean_error(self, preset):
        """Test FLAME's mean absolute error is below each baseline's"""
        summary = summary_by_method(run_experiment(load_sim_config(preset), workers=WORKERS))
        flame = summary.loc[FLAME, "mean_error"]
        for name in BASELINE_ESTIMATORS:
            assert flame < summary.loc[name, "mean_error"], name


class TestExperimentTwo:
    """Test matching on a unit covariate next to the subgraph counts"""

    def test_flame_median_error(self):
        """Test FLAME's median error is small and below every baseline's"""
        summary = summary_by_method(run_experiment(load_sim_config("exp2-b5"), workers=WORKERS))
        flame = summary.loc[FLAME, "median_error"]
        assert flame <= 0.55
        for name in BASELINE_ESTIMATORS:
            assert flame < summary.loc[name, "median_error"], name


class TestExperimentThree:
    """Test the misspecified interference sweep"""

    def test_error_falls_as_triangles_take_over(self):
        """Test FLAME improves from gamma 0 to gamma 5 and beats stratification at gamma 5"""
        report = run_experiment(load_sim_config("exp3"), workers=WORKERS)
        degree_only = summary_by_method(report, "exp3-gamma0")
        triangles_only = summary_by_method(report, "exp3-gamma5")
        assert triangles_only.loc[FLAME, "mean_error"] < degree_only.loc[FLAME, "mean_error"]
        assert triangles_only.loc[FLAME, "mean_error"] < triangles_only.loc[STRATIFIED, "mean_error"]


class TestNoInterference:
    """Test every estimator without interference"""

    def test_every_estimator_is_accurate(self):
        """Test mean errors stay below 0.5 and every FLAME group is exact"""
        config = SimConfig.model_validate(
            {
                "name": "no-interference",
                "graph": {"model": "er", "n": 50, "q": 0.05},
                "interference": {"kind": "none"},
                "estimators": ALL_ESTIMATORS,
                "replications": 500,
                "seed": 8,
            }
        )
        report = run_experiment(config, workers=WORKERS)
        # an inexact group fails the FLAME replication
        assert [r.error for r in report.records if r.method == FLAME] == [None] * 500
        summary = summary_by_method(report)
        for name in ALL_ESTIMATORS:
            assert summary.loc[name, "mean_error"] < 0.5, name


class TestMatchQuality:
    """Test the graph distance of matched neighborhoods"""

    def test_flame_neighborhoods_closer_than_eigenvector_matches(self):
        """Test FLAME's mean graph distance does not exceed all-eigenvector matching"""
        summary = summary_by_method(run_experiment(load_sim_config("matchqual"), workers=WORKERS))
        assert summary.loc[FLAME, "mean_graph_distance"] <= summary.loc[ALL_EIGEN, "mean_graph_distance"]
