import numpy as np
import pytest

from clsid import lti, simulate, spem
from clsid.optimize import OptimizerConfig


class TestParameterization:
    def test_blackbox_plant(self):
        param = spem.PlantParameterization(spem.BLACKBOX4)
        theta = np.array([-7.0, 13.0, -490.0, -6500.0])
        plant = param.plant(theta)
        assert np.array_equal(plant.den, [1.0, 13.0, -490.0, -6500.0])
        assert param.dim == 4

    def test_graybox_maps_into_blackbox_family(self):
        param = spem.PlantParameterization(spem.GRAYBOX2)
        assert param.dim == 2
        theta_bb = param.to_blackbox(simulate.GRAYBOX_TRUE)
        assert np.allclose(theta_bb, simulate.THETA_TRUE, rtol=0.02)
        plant = param.plant(simulate.GRAYBOX_TRUE)
        assert plant.den.size == 4

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            spem.PlantParameterization("whitebox")


class TestPredictor:
    def test_exact_theta_predicts_noise_free_output(self, noise_free_data):
        # the predictor driven by (u, y) reproduces y when P_hat = P, K_hat = K
        pred = spem.Predictor(simulate.maglev_plant(),
                              simulate.maglev_controller(),
                              noise_free_data.ts)
        y_hat = spem.predict(pred, noise_free_data)
        span = np.ptp(noise_free_data.y)
        # the floor is the hold mismatch at the pulse edges (the record is
        # generated zero-order-hold, the predictor runs first-order-hold)
        assert np.max(np.abs(y_hat - noise_free_data.y)) <= 5e-4 * span

    def test_exact_theta_predicts_under_mismatched_controller(
            self, noise_free_data):
        # Fig. 6 structure: y_hat = P(1 + K_hat P)^-1 (u + K_hat y) equals
        # P u for any stabilizing K_hat when the plant model is exact
        pred = spem.Predictor(simulate.maglev_plant(),
                              simulate.pid_controller(),
                              noise_free_data.ts)
        y_hat = spem.predict(pred, noise_free_data)
        span = np.ptp(noise_free_data.y)
        assert np.max(np.abs(y_hat - noise_free_data.y)) <= 1e-3 * span

    def test_unstable_virtual_loop_rejected(self):
        weak = lti.TransferFunction([0.001], [1.0, 1.0])
        with pytest.raises(ValueError):
            spem.Predictor(simulate.maglev_plant(), weak, 1e-4)


class TestObjective:
    def test_true_theta_is_near_zero_on_noise_free_data(self, noise_free_data):
        param = spem.PlantParameterization(spem.BLACKBOX4)
        k = simulate.maglev_controller()
        j_true = spem.objective(np.asarray(simulate.THETA_TRUE), param, k,
                                noise_free_data)
        j_off = spem.objective(1.05 * np.asarray(simulate.THETA_TRUE), param,
                               k, noise_free_data)
        assert j_true < 0.02 * j_off

    def test_unstable_candidate_gets_margin_penalty(self, noise_free_data):
        param = spem.PlantParameterization(spem.BLACKBOX4)
        k = simulate.maglev_controller()
        # theta with the wrong sign of theta1 flips the loop gain: unstable
        theta_bad = np.asarray(simulate.THETA_TRUE) * np.array([-1, 1, 1, 1])
        j_bad = spem.objective(theta_bad, param, k, noise_free_data)
        j_good = spem.objective(np.asarray(simulate.THETA_TRUE), param, k,
                                noise_free_data)
        assert j_bad >= spem.PENALTY_SCALE
        assert j_good < spem.PENALTY_SCALE
        # penalty grows with the instability margin
        j_worse = spem.objective(2 * theta_bad, param, k, noise_free_data)
        assert j_worse != j_bad

    def test_graybox_identification_smoke(self, noise_free_data):
        # small-budget end-to-end run on the 2-parameter physical model
        param = spem.PlantParameterization(spem.GRAYBOX2)
        opt = OptimizerConfig(bounds=param.default_bounds(), swarm_size=20,
                              max_iterations=40, seed=0,
                              polish_max_evals=800)
        result = spem.identify_spem(param, simulate.maglev_controller(),
                                    noise_free_data, opt)
        assert np.allclose(result.theta_hat, simulate.GRAYBOX_TRUE, rtol=0.05)
