"""Closed-loop data generation for the magnetic-levitation benchmark.

The loop is y = P u + sigma_w w, u = K (r_y - y) + sigma_xi xi, with the
reference and both noise sources held constant over each sample interval.
Simulation is exact: the joint closed-loop state space (exogenous inputs
r, w, xi) is ZOH-discretized and stepped at the sample instants.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import lti
from ._filt import dlsim

# Maglev benchmark constants.
THETA_TRUE = np.array([-7.148, 13.34, -494.4, -6593.0])
GRAYBOX_TRUE = np.array([5.187, 177.0])  # (K_i [N/A], K_x [N/m])
COIL_RESISTANCE = 27.03  # ohm
COIL_INDUCTANCE = 2.027  # H
BALL_MASS = 0.358  # kg

DEFAULT_TS = 1e-4
DEFAULT_DURATION = 1.0
DEFAULT_PULSE_START = 0.05
DEFAULT_PULSE_WIDTH = 0.25
DEFAULT_PULSE_HEIGHT = 1e-3
DEFAULT_SIGMA_W = 0.2e-3
DEFAULT_SIGMA_XI = 10.0


class UnstableLoopError(ValueError):
    """Refusing to simulate a divergent closed loop."""


def maglev_plant(theta=THETA_TRUE) -> lti.TransferFunction:
    """Third-order maglev plant theta1 / (p^3 + theta2 p^2 + theta3 p + theta4)."""
    t1, t2, t3, t4 = np.asarray(theta, dtype=float)
    return lti.TransferFunction([t1], [1.0, t2, t3, t4])


def maglev_controller() -> lti.TransferFunction:
    """The benchmark's stabilizing H-infinity controller (stable, order 4)."""
    num = -1.197e8 * np.polymul(np.polymul([1.0, 9.294], [1.0, 13.99]),
                                [1.0, 20.9])
    quad = [1.0, 2 * 121.5, 121.5**2 + 141.1**2]
    den = np.polymul(np.polymul([1.0, 399.9], [1.0, 0.1]), quad)
    return lti.TransferFunction(num, den)


def pid_controller() -> lti.TransferFunction:
    """Mismatched virtual controller: a PID with first-order derivative filter.

    -1798.1 * (1 + 1/(0.1438 p) + 0.1778 p / (1 + 8.6336e-4 p)), realized as a
    proper 2-state transfer function over the common denominator
    p (1 + 8.6336e-4 p).
    """
    kp, ti, td, tau = 1798.1, 0.1438, 0.1778, 8.6336e-4
    den = np.array([tau, 1.0, 0.0])
    num = np.polyadd(
        np.polyadd(np.polymul([tau, 1.0], [1.0, 0.0]),
                   np.polymul([tau, 1.0], [1.0 / ti])),
        np.array([td, 0.0, 0.0]))
    return lti.TransferFunction(-kp * num, den)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_w: float = DEFAULT_SIGMA_W  # output measurement noise scale (m)
    sigma_xi: float = DEFAULT_SIGMA_XI  # input disturbance scale (V)
    seed: int = 0

    def __post_init__(self):
        if self.sigma_w < 0 or self.sigma_xi < 0:
            raise ValueError("noise scales must be nonnegative")


@dataclass(frozen=True)
class PulseReference:
    start: float = DEFAULT_PULSE_START  # s
    width: float = DEFAULT_PULSE_WIDTH  # s
    height: float = DEFAULT_PULSE_HEIGHT  # m

    def sample(self, t: np.ndarray) -> np.ndarray:
        return np.where((t >= self.start) & (t < self.start + self.width),
                        self.height, 0.0)


@dataclass(frozen=True)
class ExperimentSpec:
    plant: lti.TransferFunction
    controller: lti.TransferFunction
    reference: PulseReference
    duration: float = DEFAULT_DURATION
    ts: float = DEFAULT_TS
    noise: NoiseSpec = NoiseSpec()

    def __post_init__(self):
        if self.ts <= 0 or self.duration <= 0:
            raise ValueError("duration and ts must be positive")
        if isinstance(self.reference, PulseReference):
            if self.duration < self.reference.start + self.reference.width:
                raise ValueError("record shorter than the reference pulse")

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(self, noise=replace(self.noise, seed=seed))


@dataclass(frozen=True)
class Dataset:
    t: np.ndarray
    r_y: np.ndarray
    u: np.ndarray
    y: np.ndarray
    ts: float

    def __post_init__(self):
        for name in ("t", "r_y", "u", "y"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.t.size
        if n < 2 or any(getattr(self, f).size != n for f in ("r_y", "u", "y")):
            raise ValueError("dataset vectors must share one length >= 2")

    def __len__(self) -> int:
        return self.t.size


def maglev_defaults(seed: int = 0) -> ExperimentSpec:
    """The benchmark experiment: true plant, true controller, default pulse/noise."""
    return ExperimentSpec(
        plant=maglev_plant(),
        controller=maglev_controller(),
        reference=PulseReference(),
        duration=DEFAULT_DURATION,
        ts=DEFAULT_TS,
        noise=NoiseSpec(seed=seed),
    )


def noise_streams(noise: NoiseSpec, n: int):
    """The held standard-normal streams (w, xi) a given seed produces."""
    rng = np.random.default_rng(noise.seed)
    return rng.standard_normal(n), rng.standard_normal(n)


def closed_loop_matrices(plant: lti.StateSpace, controller: lti.StateSpace,
                         sigma_w: float, sigma_xi: float):
    """Joint loop state space with inputs (r, w, xi) and outputs (y, u)."""
    Ap, Bp, Cp, Dp = plant.A, plant.B, plant.C, float(plant.D[0, 0])
    Ak, Bk, Ck, Dk = controller.A, controller.B, controller.C, float(controller.D[0, 0])
    delta = 1.0 + Dk * Dp
    if abs(delta) < 1e-12:
        raise lti.AlgebraicLoopError("singular plant/controller feedthrough loop")
    np_, nk = plant.n_states, controller.n_states
    # u = Fp xp + Fk xk + g.(r, w, xi)
    Fp = -Dk * Cp / delta
    Fk = Ck / delta
    g = np.array([Dk, -Dk * sigma_w, sigma_xi]) / delta
    Cy = np.hstack([Cp + Dp * Fp, Dp * Fk])
    Dy = np.array([Dp * g[0], Dp * g[1] + sigma_w, Dp * g[2]])
    A = np.block([
        [Ap + Bp @ Fp, Bp @ Fk],
        [-Bk @ Cy[:, :np_].reshape(1, np_), Ak - Bk @ Cy[:, np_:].reshape(1, nk)],
    ])
    B = np.vstack([Bp @ g.reshape(1, 3),
                   Bk @ np.array([[1.0 - Dy[0], -Dy[1], -Dy[2]]])])
    C = np.vstack([Cy, np.hstack([Fp, Fk])])
    D = np.vstack([Dy, g])
    return A, B, C, D


def simulate_closed_loop(spec: ExperimentSpec) -> Dataset:
    """Generate one sampled closed-loop record; bit-identical for equal seeds."""
    plant = lti.tf_to_ss(spec.plant)
    controller = lti.tf_to_ss(spec.controller)
    loop = lti.feedback(plant, controller, "-")
    if not lti.is_stable(loop):
        raise UnstableLoopError("closed loop (plant, controller) is unstable")
    A, B, C, D = closed_loop_matrices(plant, controller,
                                      spec.noise.sigma_w, spec.noise.sigma_xi)
    joint = lti.StateSpace(A, B, C, D)
    disc = lti.discretize(joint, spec.ts, "zoh")
    n = int(round(spec.duration / spec.ts)) + 1
    t = np.arange(n) * spec.ts
    r = (spec.reference.sample(t)
         if isinstance(spec.reference, PulseReference)
         else np.asarray(spec.reference, dtype=float)[:n])
    w, xi = noise_streams(spec.noise, n)
    U = np.column_stack([r, w, xi])
    Y = dlsim(disc.A, disc.B, disc.C, disc.D, U)
    return Dataset(t=t, r_y=r, u=Y[:, 1], y=Y[:, 0], ts=spec.ts)


def monte_carlo_datasets(spec: ExperimentSpec, count: int):
    """``count`` records with seeds seed+0 ... seed+count-1 and one shared reference."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [simulate_closed_loop(spec.with_seed(spec.noise.seed + i))
            for i in range(count)]


def write_csv(path, data: Dataset) -> None:
    """Dataset CSV: header t,r,u,y; full double precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "r", "u", "y"])
        for row in zip(data.t, data.r_y, data.u, data.y):
            writer.writerow([f"{v:.17g}" for v in row])


def read_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "r", "u", "y"]:
            raise ValueError(f"unexpected dataset header {header!r}")
        rows = np.array([[float(v) for v in row] for row in reader])
    ts = rows[1, 0] - rows[0, 0]
    return Dataset(t=rows[:, 0], r_y=rows[:, 1], u=rows[:, 2], y=rows[:, 3], ts=ts)
