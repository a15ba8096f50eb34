"""Derivative-free optimization: global-best particle swarm plus Nelder-Mead polish.

Shared by the stabilized-PEM, dual-Youla, and gray-box fits. All methods are
deterministic given the seed in :class:`OptimizerConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# constriction-factor standard coefficients
DEFAULT_INERTIA = 0.729
DEFAULT_COGNITIVE = 1.49445
DEFAULT_SOCIAL = 1.49445


@dataclass(frozen=True)
class OptimizerConfig:
    bounds: tuple  # sequence of (lo, hi) per coordinate
    swarm_size: int = 0  # 0 -> max(50, 10*dim)
    max_iterations: int = 0  # 0 -> 200*dim
    inertia: float = DEFAULT_INERTIA
    cognitive: float = DEFAULT_COGNITIVE
    social: float = DEFAULT_SOCIAL
    seed: int = 0
    polish: bool = True
    polish_max_evals: int = 2000
    polish_tol: float = 1e-10
    hint: tuple | None = None  # optional point; 20% of the swarm seeds near it

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"invalid bound [{lo}, {hi}]")
        if self.hint is not None:
            object.__setattr__(self, "hint", tuple(float(h) for h in self.hint))
        dim = len(bounds)
        if self.swarm_size == 0:
            object.__setattr__(self, "swarm_size", max(50, 10 * dim))
        if self.max_iterations == 0:
            object.__setattr__(self, "max_iterations", 200 * dim)
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: np.ndarray
    cost: float
    evaluations: int
    trace: np.ndarray  # best cost after each iteration, non-increasing
    method: str

    def __post_init__(self):
        theta = np.asarray(self.theta_hat, dtype=float)
        trace = np.asarray(self.trace, dtype=float)
        theta.setflags(write=False)
        trace.setflags(write=False)
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "trace", trace)
        if trace.size and np.any(np.diff(trace) > 0):
            raise ValueError("best-cost trace must be non-increasing")
        if trace.size and trace[-1] != self.cost:
            raise ValueError("cost must equal the last trace element")


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Reflect out-of-box coordinates back inside (repeatedly if needed)."""
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lo + y


def nelder_mead(f: Callable[[np.ndarray], float], x0, max_evals: int = 2000,
                tol: float = 1e-10):
    """Standard simplex search (reflect 1, expand 2, contract 0.5, shrink 0.5).

    Terminates when the simplex diameter drops below ``tol`` or the evaluation
    budget is spent. Returns (x_best, f_best, evaluations).
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    simplex = [x0.copy()]
    for i in range(n):
        step = 0.05 * abs(x0[i]) if x0[i] != 0.0 else 0.00025
        xi = x0.copy()
        xi[i] += step
        simplex.append(xi)
    evals = 0

    def ev(x):
        nonlocal evals
        evals += 1
        return float(f(x))

    fs = [ev(x) for x in simplex]
    while evals < max_evals:
        order = np.argsort(fs, kind="stable")
        simplex = [simplex[i] for i in order]
        fs = [fs[i] for i in order]
        diam = max(np.linalg.norm(simplex[i] - simplex[0]) for i in range(1, n + 1))
        if diam < tol:
            break
        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = ev(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = ev(xe)
            if fe < fr:
                simplex[-1], fs[-1] = xe, fe
            else:
                simplex[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            simplex[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = ev(xc)
            if fc < min(fr, fs[-1]):
                simplex[-1], fs[-1] = xc, fc
            else:
                # shrink toward the best vertex
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    fs[i] = ev(simplex[i])
    i = int(np.argmin(fs))
    return simplex[i], fs[i], evals


def pso_minimize(f: Callable[[np.ndarray], float], config: OptimizerConfig,
                 method: str = "pso") -> EstimationResult:
    """Global-best PSO with velocity clamping and reflective bounds.

    ``f`` must return finite values everywhere on the box (use penalties for
    infeasibility). If polishing is enabled, a Nelder-Mead run starts from the
    swarm best, constrained to the box by a quadratic exterior penalty.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    dim = lo.size
    span = hi - lo
    vmax = 0.2 * span

    pos = lo + span * rng.random((config.swarm_size, dim))
    if config.hint is not None:
        n_hint = max(1, config.swarm_size // 5)
        hint = np.asarray(config.hint)
        # one particle sits exactly on the hint; the rest scatter around it
        pos[0] = _reflect(hint[None, :], lo, hi)
        if n_hint > 1:
            scale = np.maximum(0.05 * np.abs(hint), 1e-6 * span)
            pos[1:n_hint] = _reflect(
                hint + scale * rng.standard_normal((n_hint - 1, dim)), lo, hi)
    vel = vmax * (2.0 * rng.random((config.swarm_size, dim)) - 1.0)

    cost = np.array([float(f(p)) for p in pos])
    evals = pos.shape[0]
    pbest = pos.copy()
    pbest_cost = cost.copy()
    g = int(np.argmin(pbest_cost))
    gbest = pbest[g].copy()
    gbest_cost = float(pbest_cost[g])
    trace = [gbest_cost]

    for _ in range(config.max_iterations):
        r1 = rng.random((config.swarm_size, dim))
        r2 = rng.random((config.swarm_size, dim))
        vel = (config.inertia * vel
               + config.cognitive * r1 * (pbest - pos)
               + config.social * r2 * (gbest - pos))
        vel = np.clip(vel, -vmax, vmax)
        pos = _reflect(pos + vel, lo, hi)
        cost = np.array([float(f(p)) for p in pos])
        evals += pos.shape[0]
        improved = cost < pbest_cost
        pbest[improved] = pos[improved]
        pbest_cost[improved] = cost[improved]
        g = int(np.argmin(pbest_cost))
        if pbest_cost[g] < gbest_cost:
            gbest = pbest[g].copy()
            gbest_cost = float(pbest_cost[g])
        trace.append(gbest_cost)

    if config.polish:
        def boxed(x):
            excess = np.maximum(0.0, lo - x) + np.maximum(0.0, x - hi)
            if np.any(excess > 0):
                return gbest_cost + 1e15 * (1.0 + float(np.sum(excess**2)))
            return f(x)

        xp, fp, used = nelder_mead(boxed, gbest, config.polish_max_evals,
                                   config.polish_tol)
        evals += used
        if fp <= gbest_cost:
            gbest, gbest_cost = np.asarray(xp), float(fp)
        trace.append(gbest_cost)

    return EstimationResult(gbest, gbest_cost, evals, np.array(trace), method)
