import numpy as np
import pytest

from clsid import lti, simulate

from conftest import rk4_hold_response


class TestModels:
    def test_maglev_plant_structure(self):
        theta = np.array([-7.0, 13.0, -490.0, -6500.0])
        plant = simulate.maglev_plant(theta)
        assert np.array_equal(plant.num, [-7.0])
        assert np.array_equal(plant.den, [1.0, 13.0, -490.0, -6500.0])

    def test_true_plant_is_unstable_controller_stabilizes(self):
        plant = simulate.maglev_plant()
        ctrl = simulate.maglev_controller()
        assert not lti.is_stable(plant)
        assert lti.is_stable(ctrl)
        loop = lti.feedback(lti.tf_to_ss(plant), lti.tf_to_ss(ctrl))
        assert lti.is_stable(loop)

    def test_pid_also_stabilizes_true_plant(self):
        loop = lti.feedback(lti.tf_to_ss(simulate.maglev_plant()),
                            lti.tf_to_ss(simulate.pid_controller()))
        assert lti.is_stable(loop)

    def test_graybox_constants_match_blackbox_theta(self):
        # the physical constants imply the same transfer function family
        from clsid import spem
        param = spem.PlantParameterization("graybox2")
        theta = param.to_blackbox(simulate.GRAYBOX_TRUE)
        assert np.allclose(theta, simulate.THETA_TRUE, rtol=0.02)


class TestClosedLoopSimulation:
    def test_noise_free_matches_rk4_oracle(self, noise_free_spec,
                                           noise_free_data):
        # independent fine-step RK4 on the joint loop ODE, ZOH inputs
        plant = lti.tf_to_ss(noise_free_spec.plant)
        ctrl = lti.tf_to_ss(noise_free_spec.controller)
        A, B, C, D = simulate.closed_loop_matrices(plant, ctrl, 0.0, 0.0)
        joint_y = lti.StateSpace(A, B[:, :1], C[:1, :], D[:1, :1])
        r = noise_free_data.r_y
        y_ref = rk4_hold_response(joint_y, r, noise_free_spec.ts,
                                  hold="zoh", substeps=50)
        span = np.ptp(y_ref)
        assert np.max(np.abs(noise_free_data.y - y_ref)) <= 1e-8 * span

    def test_zero_noise_scales_reproduce_noise_free(self, noise_free_data):
        spec = simulate.maglev_defaults(seed=99)
        spec = simulate.ExperimentSpec(
            plant=spec.plant, controller=spec.controller,
            reference=spec.reference, duration=spec.duration, ts=spec.ts,
            noise=simulate.NoiseSpec(sigma_w=0.0, sigma_xi=0.0, seed=99))
        data = simulate.simulate_closed_loop(spec)
        assert np.array_equal(data.y, noise_free_data.y)
        assert np.array_equal(data.u, noise_free_data.u)

    def test_same_seed_bit_identical(self):
        a = simulate.simulate_closed_loop(simulate.maglev_defaults(seed=3))
        b = simulate.simulate_closed_loop(simulate.maglev_defaults(seed=3))
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.u, b.u)

    def test_different_seeds_differ(self):
        a = simulate.simulate_closed_loop(simulate.maglev_defaults(seed=0))
        b = simulate.simulate_closed_loop(simulate.maglev_defaults(seed=1))
        assert not np.array_equal(a.y, b.y)

    def test_unstable_loop_refused(self):
        spec = simulate.ExperimentSpec(
            plant=simulate.maglev_plant(),
            controller=lti.TransferFunction([0.001], [1.0, 1.0]),
            reference=simulate.PulseReference())
        with pytest.raises(simulate.UnstableLoopError):
            simulate.simulate_closed_loop(spec)

    def test_raw_sample_reference_accepted(self):
        spec = simulate.maglev_defaults(seed=0)
        n = int(round(spec.duration / spec.ts)) + 1
        r = simulate.PulseReference().sample(np.arange(n) * spec.ts)
        from dataclasses import replace
        data_arr = simulate.simulate_closed_loop(replace(spec, reference=r))
        data_pulse = simulate.simulate_closed_loop(spec)
        assert np.array_equal(data_arr.y, data_pulse.y)

    def test_monte_carlo_seeding(self):
        spec = simulate.maglev_defaults(seed=10)
        runs = simulate.monte_carlo_datasets(spec, 3)
        direct = [simulate.simulate_closed_loop(spec.with_seed(10 + i))
                  for i in range(3)]
        for a, b in zip(runs, direct):
            assert np.array_equal(a.y, b.y)
        assert not np.array_equal(runs[0].y, runs[1].y)


class TestCsvRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        data = simulate.simulate_closed_loop(simulate.maglev_defaults(seed=5))
        path = tmp_path / "d.csv"
        simulate.write_csv(path, data)
        back = simulate.read_csv(path)
        assert np.array_equal(back.t, data.t)
        assert np.array_equal(back.r_y, data.r_y)
        assert np.array_equal(back.u, data.u)
        assert np.array_equal(back.y, data.y)
        assert back.ts == pytest.approx(data.ts)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c,d\n0,0,0,0\n1,0,0,0\n")
        with pytest.raises(ValueError):
            simulate.read_csv(path)
