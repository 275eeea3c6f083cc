import json

import numpy as np
import pytest

from histfuse import anova, fusion, montecarlo
from histfuse.errors import ConfigError
from histfuse.montecarlo import SimConfig, simulate, verify_coincidence
from oracles import bliss_exact_variance

N2000 = {"n": 2000, "m": 2000}


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig("nope")
    with pytest.raises(ConfigError):
        SimConfig("bliss", reps=0)
    with pytest.raises(ConfigError):
        SimConfig("bliss", seed=-1)
    with pytest.raises(ConfigError):
        simulate(SimConfig("anova-typeI", reps=10))
    with pytest.raises(ConfigError):
        simulate(SimConfig("anova-typeII", sizes={"n": 100, "m": 102}, reps=2000))
    with pytest.raises(ConfigError):
        simulate(SimConfig("anova-typeII", design=(0.0, 0.3, 0.3, 0.4), reps=2000))
    with pytest.raises(ConfigError):
        simulate(SimConfig("bliss", true_params={"eta1": 1.0}, reps=2000))


@pytest.mark.parametrize("scenario", montecarlo.SCENARIOS)
def test_same_seed_same_report(scenario):
    cfg = SimConfig(scenario, reps=20_000, seed=99)
    a = json.dumps(simulate(cfg, threads=1).to_dict())
    b = json.dumps(simulate(SimConfig(scenario, reps=20_000, seed=99), threads=1).to_dict())
    assert a == b


@pytest.mark.parametrize("scenario", ["anova-typeII", "bliss"])
def test_thread_count_does_not_change_output(scenario):
    reports = [simulate(SimConfig(scenario, reps=30_000, seed=5), threads=t).to_dict() for t in (1, 2, 3)]
    assert reports[0] == reports[1] == reports[2]


def test_different_seed_differs():
    a = simulate(SimConfig("bliss", reps=5000, seed=1), threads=1)
    b = simulate(SimConfig("bliss", reps=5000, seed=2), threads=1)
    assert a.empirical_theta != b.empirical_theta


def test_type_one_exact_variance_and_bias():
    r = simulate(SimConfig("anova-typeI", sizes=N2000, reps=100_000, seed=11))
    exact = 2000 * (1 / 2000 + 10 / 2000)
    assert r.extra["exact_scaled_var_theta"] == pytest.approx(exact)
    assert abs(r.empirical_theta - exact) <= 3 * r.mc_se
    assert abs(r.bias[0]) <= 4 * r.extra["bias_se_theta"]


def test_type_two_balanced():
    r = simulate(SimConfig("anova-typeII", sizes=N2000, reps=100_000, seed=12))
    assert r.asymptotic_theta == pytest.approx(anova.var_theta_B(anova.DesignXi.balanced(), 1.0))
    assert r.empirical_theta == pytest.approx(r.asymptotic_theta, rel=0.05)
    assert r.rel_err < 0.05
    assert r.extra["max_abs_theta_B_minus_C"] <= 1e-10


def test_threearm_matches_closed_form():
    r = simulate(SimConfig("anova-threearm", sizes={"n": 800, "m": 6400}, reps=50_000, seed=3))
    assert r.asymptotic_theta == pytest.approx(anova.var_theta_D(0.0005, 0.0005, 0.999, 1 / 8))
    assert r.rel_err < 0.05


def test_empirical_hierarchy():
    a = simulate(SimConfig("anova-typeI", sizes=N2000, reps=50_000, seed=21))
    b = simulate(SimConfig("anova-typeII", sizes=N2000, reps=50_000, seed=22))
    assert b.empirical_theta <= a.empirical_theta + 3 * a.mc_se


def test_coincidence_contract():
    assert verify_coincidence(SimConfig("anova-typeII", sizes={"n": 400, "m": 400}, reps=10_000)) <= 1e-10
    with pytest.raises(ConfigError):
        verify_coincidence(SimConfig("anova-typeI"))


def test_coincidence_single_hand_built_instance():
    xi = anova.DesignXi(0.1, 0.2, 0.3, 0.4)
    ups = anova.upsilon_of_design(xi)
    cells = np.array([[0.3, 1.1, -0.4, 2.0]])
    hist = anova.AnovaHistorical((0.2, 1.3, 0.5, -0.1), (30, 40, 50, 60), 1.0)
    theta_t, eta_t = montecarlo.current_contrasts(cells)
    joint = fusion.JointEstimate(theta_t, eta_t[0], ups, 250)
    fused = fusion.combine_theta_C(joint, anova.aggregate_historical(hist))
    theta_b = cells[0, 3] - fused.eta.sum()
    assert fused.theta[0] == pytest.approx(theta_b, abs=1e-13)


@pytest.mark.parametrize("seed", [8, 9])
def test_bliss_matches_exact_finite_sample_variance(seed):
    r = simulate(SimConfig("bliss", sizes={"n12": 55, "m1": 30, "m2": 50}, reps=100_000, seed=seed))
    exact = bliss_exact_variance(55, 0, 0, 30, 50, 0.56, 0.7, 0.8)
    assert abs(r.empirical_theta - exact) <= 3 * r.mc_se
    assert r.rejection_rate < 0.01


def test_bliss_converges_when_scaled():
    small = simulate(SimConfig("bliss", sizes={"n12": 55, "m1": 30, "m2": 50}, reps=100_000, seed=8))
    big = simulate(SimConfig("bliss", sizes={"n12": 220, "m1": 120, "m2": 200}, reps=100_000, seed=8))
    assert big.rel_err < small.rel_err


def test_bliss_near_certain_combination():
    # (1 - theta) / theta -> 0: the single-drug arms carry the variance
    r = simulate(SimConfig("bliss", true_params={"theta": 0.999, "eta1": 0.7, "eta2": 0.8},
                           sizes={"n12": 55}, reps=20_000, seed=4))
    inst_terms = (0.3 / 0.7) / 30 + (0.2 / 0.8) / 50
    assert r.asymptotic_theta == pytest.approx(inst_terms + (0.001 / 0.999) / 55)
    assert r.asymptotic_theta - inst_terms < 1e-4


def test_bliss_rejections_are_counted():
    r = simulate(SimConfig("bliss", true_params={"theta": 0.02}, sizes={"n12": 5}, reps=5000, seed=1))
    assert 0.8 < r.rejection_rate < 0.95
    assert r.reps_used == round(5000 * (1 - r.rejection_rate))


def test_report_serialisation():
    r = simulate(SimConfig("anova-typeII", reps=2000, seed=1))
    d = r.to_dict()
    assert "elapsed" not in d and "elapsed" in r.to_dict(timing=True)
    assert d["empirical_scaled_var"]["dim"] == 4
    assert len(d["empirical_scaled_var"]["rows"]) == 4
    assert d["config"]["seed"] == 1
    json.dumps(d)


def test_relative_error_masks_structural_zeros():
    asy = np.array([[2.0, 0.0], [0.0, 1.0]])
    emp = np.array([[2.2, 0.01], [0.01, 1.0]])
    assert montecarlo.relative_error(emp, asy) == pytest.approx(0.1)


def test_variance_se_formula():
    x = np.random.default_rng(0).standard_normal(200_000)
    # for normal data Var(s^2) ~ 2 sigma^4 / N
    assert montecarlo.variance_mc_se(x) == pytest.approx(np.sqrt(2 / x.size), rel=0.02)
