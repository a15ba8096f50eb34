"""Stabilized prediction-error identification.

The predictor drives the simulated stable closed loop of a candidate plant
and a virtual controller with u + K_hat*y, so the prediction y_hat stays
bounded even when the candidate plant itself is unstable. The fit minimizes
the 2-norm of y - y_hat; candidates whose loop with the virtual controller
is unstable receive a finite penalty that grows with the instability margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lti, simulate
from ._filt import dlsim
from .optimize import EstimationResult, OptimizerConfig, pso_minimize

PENALTY_SCALE = 1e12

BLACKBOX4 = "blackbox4"
GRAYBOX2 = "graybox2"


class NoStableCandidateError(RuntimeError):
    """Optimizer budget spent without ever entering the stable region."""


@dataclass(frozen=True)
class PlantParameterization:
    """Candidate plant family: 4-parameter black box or 2-parameter gray box.

    blackbox4: theta = (t1, t2, t3, t4), P = t1 / (p^3 + t2 p^2 + t3 p + t4).
    graybox2: theta = (K_i, K_x) with the coil/ball constants fixed; expands
    to the same third-order form.
    """

    kind: str = BLACKBOX4

    def __post_init__(self):
        if self.kind not in (BLACKBOX4, GRAYBOX2):
            raise ValueError(f"unknown parameterization {self.kind!r}")

    @property
    def dim(self) -> int:
        return 4 if self.kind == BLACKBOX4 else 2

    def to_blackbox(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == BLACKBOX4:
            return theta
        ki, kx = theta
        m, el, r = (simulate.BALL_MASS, simulate.COIL_INDUCTANCE,
                    simulate.COIL_RESISTANCE)
        return np.array([-ki / (m * el), r / el, -kx / m, -kx * r / (m * el)])

    def plant(self, theta) -> lti.TransferFunction:
        return simulate.maglev_plant(self.to_blackbox(theta))

    def default_bounds(self) -> tuple:
        if self.kind == BLACKBOX4:
            return tuple((-10.0 * abs(t), 10.0 * abs(t))
                         for t in simulate.THETA_TRUE)
        return ((0.1, 100.0), (1.0, 10000.0))


@dataclass(frozen=True)
class Predictor:
    """A stabilized predictor; constructing one with an unstable (P_hat, K_hat)
    loop raises, so every Predictor instance is usable."""

    p_hat: lti.TransferFunction
    k_hat: lti.TransferFunction
    ts: float

    def __post_init__(self):
        loop = lti.feedback(lti.tf_to_ss(self.p_hat), lti.tf_to_ss(self.k_hat), "-")
        if not lti.is_stable(loop):
            raise ValueError("virtual closed loop (p_hat, k_hat) is unstable")


def _predictor_matrices(p_hat: lti.StateSpace, k_hat: lti.StateSpace):
    """One interconnected realization with inputs (u, y) and output y_hat."""
    Ap, Bp, Cp, Dp = p_hat.A, p_hat.B, p_hat.C, float(p_hat.D[0, 0])
    Ak, Bk, Ck, Dk = k_hat.A, k_hat.B, k_hat.C, float(k_hat.D[0, 0])
    delta = 1.0 + Dp * Dk
    if abs(delta) < 1e-12:
        raise lti.AlgebraicLoopError("singular predictor feedthrough loop")
    np_, nk = p_hat.n_states, k_hat.n_states
    # y_hat = Cyx x + Dyu u + Dyy y
    Cyx = np.hstack([Cp, Dp * Ck]) / delta
    Dyu, Dyy = Dp / delta, Dp * Dk / delta
    # plant input m = u + Ck xk + Dk (y - y_hat)
    Cmx = np.hstack([np.zeros((1, np_)), Ck]) - Dk * Cyx
    Dmu, Dmy = 1.0 - Dk * Dyu, Dk * (1.0 - Dyy)
    A = np.block([
        [Ap + Bp @ Cmx[:, :np_].reshape(1, np_), Bp @ Cmx[:, np_:].reshape(1, nk)],
        [-Bk @ Cyx[:, :np_].reshape(1, np_), Ak - Bk @ Cyx[:, np_:].reshape(1, nk)],
    ])
    B = np.vstack([
        np.hstack([Bp * Dmu, Bp * Dmy]),
        np.hstack([-Bk * Dyu, Bk * (1.0 - Dyy)]),
    ])
    C = Cyx
    D = np.array([[Dyu, Dyy]])
    return A, B, C, D


def predict(pred: Predictor, data: simulate.Dataset) -> np.ndarray:
    """y_hat = P_hat (1 + K_hat P_hat)^-1 (u + K_hat y), FOH-discretized at ts."""
    A, B, C, D = _predictor_matrices(lti.tf_to_ss(pred.p_hat),
                                     lti.tf_to_ss(pred.k_hat))
    disc = lti.discretize(lti.StateSpace(A, B, C, D), pred.ts, "foh")
    U = np.column_stack([data.u, data.y])
    return dlsim(disc.A, disc.B, disc.C, disc.D, U)[:, 0]


def closed_loop_margin(p_hat: lti.TransferFunction,
                       k_hat_ss: lti.StateSpace) -> float:
    """Max real part of the (p_hat, k_hat) negative-feedback loop poles."""
    loop = lti.feedback(lti.tf_to_ss(p_hat), k_hat_ss, "-")
    return float(np.max(np.linalg.eigvals(loop.A).real))


def objective(theta, param: PlantParameterization, k_hat: lti.TransferFunction,
              data: simulate.Dataset, _k_hat_ss: lti.StateSpace | None = None) -> float:
    """J = ||y - y_hat||_2, or a margin-monotone penalty for unstable loops."""
    k_hat_ss = _k_hat_ss if _k_hat_ss is not None else lti.tf_to_ss(k_hat)
    p_hat = param.plant(theta)
    margin = closed_loop_margin(p_hat, k_hat_ss)
    if margin >= -lti.STABILITY_TOL_RE:
        return PENALTY_SCALE * (1.0 + margin)
    pred = Predictor(p_hat, k_hat, data.ts)
    y_hat = predict(pred, data)
    return float(np.linalg.norm(data.y - y_hat))


def identify_spem(param: PlantParameterization, k_hat: lti.TransferFunction,
                  data: simulate.Dataset, opt: OptimizerConfig | None = None
                  ) -> EstimationResult:
    """Fit the parameterized plant by PSO plus Nelder-Mead polish."""
    if opt is None:
        opt = OptimizerConfig(bounds=param.default_bounds())
    k_hat_ss = lti.tf_to_ss(k_hat)

    def cost(theta):
        return objective(theta, param, k_hat, data, _k_hat_ss=k_hat_ss)

    result = pso_minimize(cost, opt, method="spem")
    if result.cost >= PENALTY_SCALE:
        raise NoStableCandidateError(
            "all evaluated candidates had unstable virtual loops")
    return result
