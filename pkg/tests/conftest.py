import numpy as np
import pytest

from clsid import lti, simulate


@pytest.fixture(scope="session")
def true_plant():
    return simulate.maglev_plant(np.asarray(simulate.THETA_TRUE))


@pytest.fixture(scope="session")
def controller_k():
    return simulate.maglev_controller()


@pytest.fixture(scope="session")
def controller_kpid():
    return simulate.pid_controller()


@pytest.fixture(scope="session")
def noise_free_spec():
    return simulate.ExperimentSpec(
        plant=simulate.maglev_plant(np.asarray(simulate.THETA_TRUE)),
        controller=simulate.maglev_controller(),
        reference=simulate.PulseReference(),
        duration=simulate.DEFAULT_DURATION,
        ts=simulate.DEFAULT_TS,
        noise=simulate.NoiseSpec(sigma_w=0.0, sigma_xi=0.0, seed=0))


@pytest.fixture(scope="session")
def noise_free_data(noise_free_spec):
    return simulate.simulate_closed_loop(noise_free_spec)


def rk4_hold_response(ss: lti.StateSpace, u: np.ndarray, ts: float,
                      hold: str = "zoh", substeps: int = 200) -> np.ndarray:
    """Fine-step RK4 integration of a continuous state-space model.

    Independent oracle for the matrix-exponential discretization: the input
    is reconstructed per sample interval as piecewise-constant (``zoh``) or
    piecewise-linear (``foh``) and the ODE is integrated with `substeps`
    fourth-order Runge-Kutta steps per interval.
    """
    A = np.asarray(ss.A, dtype=float)
    B = np.asarray(ss.B, dtype=float).reshape(-1)
    C = np.asarray(ss.C, dtype=float).reshape(-1)
    D = float(np.asarray(ss.D).reshape(()))
    n = u.size
    x = np.zeros(A.shape[0])
    y = np.empty(n)
    h = ts / substeps
    for k in range(n):
        y[k] = C @ x + D * u[k]
        if k == n - 1:
            break
        u0, u1 = u[k], (u[k + 1] if hold == "foh" else u[k])
        slope = (u1 - u0) / ts
        for j in range(substeps):
            t0 = j * h

            def f(xv, dt):
                return A @ xv + B * (u0 + slope * (t0 + dt))

            k1 = f(x, 0.0)
            k2 = f(x + 0.5 * h * k1, 0.5 * h)
            k3 = f(x + 0.5 * h * k2, 0.5 * h)
            k4 = f(x + h * k3, h)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
