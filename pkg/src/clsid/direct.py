"""Direct closed-loop identification baselines: ARX, ARMAX, and AIC order selection.

Discrete-time equation-error models with a common order n for all
polynomials:

    A(q) y = B(q) u + e        (ARX)
    A(q) y = B(q) u + C(q) e   (ARMAX)

with A(q) = 1 + a1 q^-1 + ... + an q^-n, B(q) = b1 q^-1 + ... + bn q^-n and
C(q) = 1 + c1 q^-1 + ... + cn q^-n. ARX is solved by linear least squares;
ARMAX by Gauss-Newton on the one-step prediction error with step halving and
reflection of C roots into the unit disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from . import lti
from .simulate import Dataset

ARX = "arx"
ARMAX = "armax"

_GN_MAX_ITER = 100
_GN_LOSS_RTOL = 1e-10


class RankDeficientError(ValueError):
    """Regressor matrix is rank deficient (insufficient excitation)."""


@dataclass(frozen=True)
class PolynomialModel:
    kind: str
    a: np.ndarray  # a_1 ... a_n
    b: np.ndarray  # b_1 ... b_n
    c: np.ndarray  # c_1 ... c_n (ARMAX) or empty (ARX)
    ts: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.kind not in (ARX, ARMAX):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.a.size != self.b.size:
            raise ValueError("a and b must have equal length")
        if self.kind == ARMAX and self.c.size != self.a.size:
            raise ValueError("c must match the common order")

    @property
    def order(self) -> int:
        return self.a.size


def polynomial_to_tf(model: PolynomialModel) -> lti.TransferFunction:
    """The u-to-y transfer function B(q)/A(q) as a discrete system."""
    den = np.concatenate([[1.0], model.a])
    num = model.b  # b1 z^{n-1} + ... + bn after multiplying through by z^n
    return lti.TransferFunction(num, den, lti.DISCRETE, model.ts)


def _regression(data: Dataset, n: int):
    y, u = data.y, data.u
    N = y.size
    if N < 10 * 2 * n:
        raise ValueError(f"need at least {10 * 2 * n} samples for order {n}")
    rows = N - n
    phi = np.empty((rows, 2 * n))
    for i in range(1, n + 1):
        phi[:, i - 1] = -y[n - i:N - i]
        phi[:, n + i - 1] = u[n - i:N - i]
    return phi, y[n:]


def fit_arx(data: Dataset, n: int):
    """Least-squares ARX fit; returns (model, V) with V the mean squared residual."""
    phi, target = _regression(data, n)
    sol, _, rank, _ = scipy.linalg.lstsq(phi, target, lapack_driver="gelsy")
    if rank < 2 * n:
        raise RankDeficientError(
            f"ARX regressor rank {rank} < {2 * n}; data not exciting enough")
    resid = target - phi @ sol
    V = float(np.sum(resid**2)) / data.y.size
    model = PolynomialModel(ARX, sol[:n], sol[n:], np.empty(0), data.ts)
    return model, V


def _reflect_into_unit_disk(c_poly: np.ndarray) -> np.ndarray:
    """Map roots of the monic polynomial outside the unit circle to 1/conj(r)."""
    if c_poly.size <= 1:
        return c_poly
    roots = np.roots(c_poly)
    mags = np.abs(roots)
    if np.all(mags < 1.0):
        return c_poly
    roots = np.where(mags >= 1.0, 1.0 / np.conj(np.where(mags > 0, roots, 1.0)),
                     roots)
    out = np.real(np.poly(roots))
    return out / out[0]


def _armax_residuals(theta: np.ndarray, y, u, n: int):
    a, b, c = theta[:n], theta[n:2 * n], theta[2 * n:]
    A = np.concatenate([[1.0], a])
    B = np.concatenate([[0.0], b])
    C = np.concatenate([[1.0], c])
    # eps = (A y - B u) filtered through 1/C
    eq_err = scipy.signal.lfilter(A, [1.0], y) - scipy.signal.lfilter(B, [1.0], u)
    return scipy.signal.lfilter([1.0], C, eq_err)


def _armax_jacobian(theta: np.ndarray, y, u, eps, n: int):
    c = theta[2 * n:]
    C = np.concatenate([[1.0], c])
    yf = scipy.signal.lfilter([1.0], C, y)
    uf = scipy.signal.lfilter([1.0], C, u)
    ef = scipy.signal.lfilter([1.0], C, eps)
    N = y.size
    J = np.zeros((N, 3 * n))
    for i in range(1, n + 1):
        J[i:, i - 1] = yf[:N - i]            # d eps / d a_i
        J[i:, n + i - 1] = -uf[:N - i]       # d eps / d b_i
        J[i:, 2 * n + i - 1] = -ef[:N - i]   # d eps / d c_i
    return J


def fit_armax(data: Dataset, n: int):
    """Gauss-Newton ARMAX fit initialized from the ARX solution with c = 0."""
    y, u = data.y, data.u
    N = y.size
    arx_model, _ = fit_arx(data, n)
    theta = np.concatenate([arx_model.a, arx_model.b, np.zeros(n)])
    eps = _armax_residuals(theta, y, u, n)
    loss = float(np.sum(eps[n:]**2)) / N
    for _ in range(_GN_MAX_ITER):
        J = _armax_jacobian(theta, y, u, eps, n)
        step, *_ = scipy.linalg.lstsq(J[n:], eps[n:], lapack_driver="gelsy")
        improved = False
        alpha = 1.0
        for _ in range(20):  # step halving keeps the loss non-increasing
            cand = theta - alpha * step
            cand[2 * n:] = _reflect_into_unit_disk(
                np.concatenate([[1.0], cand[2 * n:]]))[1:]
            cand_eps = _armax_residuals(cand, y, u, n)
            if not np.all(np.isfinite(cand_eps)):
                alpha *= 0.5
                continue
            cand_loss = float(np.sum(cand_eps[n:]**2)) / N
            if cand_loss < loss:
                theta, eps = cand, cand_eps
                prev, loss = loss, cand_loss
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        if (prev - loss) < _GN_LOSS_RTOL * max(prev, 1e-300):
            break
    model = PolynomialModel(ARMAX, theta[:n], theta[n:2 * n], theta[2 * n:],
                            data.ts)
    return model, loss


def select_order_aic(data: Dataset, kind: str, n_range):
    """AIC(n) = N ln(V_n) + 2 d_n, d_n = 2n (ARX) or 3n (ARMAX).

    Returns (best n, {n: aic}). Fit failures at individual orders propagate
    only if every order fails.
    """
    n_range = list(n_range)
    if not n_range:
        raise ValueError("n_range must be non-empty")
    fit = fit_arx if kind == ARX else fit_armax
    k = 2 if kind == ARX else 3
    N = data.y.size
    # losses are compared over one common sample range so that the per-order
    # start index k = n does not bias the comparison toward higher orders
    n_common = max(n_range)
    table: dict[int, float] = {}
    last_err = None
    for n in n_range:
        try:
            model, _ = fit(data, n)
        except (RankDeficientError, ValueError) as err:
            last_err = err
            continue
        theta = np.concatenate([model.a, model.b,
                                model.c if model.c.size else np.zeros(n)])
        eps = _armax_residuals(theta, data.y, data.u, n)
        V = float(np.sum(eps[n_common:]**2)) / N
        table[n] = N * np.log(V) + 2.0 * k * n
    if not table:
        raise last_err if last_err is not None else ValueError("no orders fit")
    best = min(table, key=lambda n: (table[n], n))
    return best, table
