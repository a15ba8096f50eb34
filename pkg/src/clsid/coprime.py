"""Doubly-coprime factorization of the controller and the dual-Youla method.

The controller K is factored over the ring of stable proper systems as
K = D_K^-1 N_K (left) and K = Nt_K Dt_K^-1 (right), with Bezout complements
D_0, N_0 satisfying D_0 Dt_K + N_0 Nt_K = 1. Every plant the controller
stabilizes in negative feedback is then (D_0 - Q N_K)^-1 (N_0 + Q D_K) for a
stable Q, which converts closed-loop identification of the plant into
open-loop identification of Q from the filtered signals
alpha = D_K u + N_K y and beta_m = D_0 y - N_0 u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from . import lti, simulate
from ._filt import dlsim
from .direct import _reflect_into_unit_disk
from .optimize import EstimationResult, OptimizerConfig, pso_minimize
from .spem import PENALTY_SCALE, NoStableCandidateError

# Frequency grid on which every factorization is certified.
BEZOUT_GRID = np.logspace(-2, 5, 50)
BEZOUT_TOL = 1e-7

# Pole-placement rule for the factor gains: mirror unstable eigenvalues into
# the left half plane, stretch, and enforce a minimum decay rate. F and L use
# different stretches so the two factor denominators, the controller poles,
# and each other stay root-disjoint; coincident roots would defeat the
# numeric pole-zero cancellations in the Youla algebra.
PLACEMENT_MIN_DECAY_F = 50.0
PLACEMENT_STRETCH_F = 1.2
PLACEMENT_MIN_DECAY_L = 65.0
PLACEMENT_STRETCH_L = 1.56

CANCEL_TOL = 1e-6
# A near-coincident dipole is only removed if that leaves the frequency
# response unchanged to this relative accuracy; rounding debris from the
# fraction arithmetic sits around 1e-13..1e-10 while the weakest dipole that
# still encodes system content observed so far sits above 5e-10.
CANCEL_RESPONSE_TOL = 2e-10
# Relative response accuracy at which the discrete-bridge order search stops
# (commutation error of the hold discretizations sets the attainable floor).
BRIDGE_FIT_TOL = 0.02


@dataclass(frozen=True)
class CoprimeFactors:
    """The six stable systems of a doubly-coprime factorization of K."""

    N_K: lti.StateSpace
    D_K: lti.StateSpace
    Nt_K: lti.StateSpace
    Dt_K: lti.StateSpace
    N_0: lti.StateSpace
    D_0: lti.StateSpace

    def members(self):
        return {"N_K": self.N_K, "D_K": self.D_K, "Nt_K": self.Nt_K,
                "Dt_K": self.Dt_K, "N_0": self.N_0, "D_0": self.D_0}

    def bezout_residual(self, omega=BEZOUT_GRID) -> float:
        d0 = lti.freq_response(self.D_0, omega).value
        n0 = lti.freq_response(self.N_0, omega).value
        dt = lti.freq_response(self.Dt_K, omega).value
        nt = lti.freq_response(self.Nt_K, omega).value
        return float(np.max(np.abs(d0 * dt + n0 * nt - 1.0)))

    def factorization_residual(self, k: lti.TransferFunction,
                               omega=BEZOUT_GRID) -> float:
        kv = lti.freq_response(k, omega).value
        lcf = (lti.freq_response(self.N_K, omega).value
               / lti.freq_response(self.D_K, omega).value)
        rcf = (lti.freq_response(self.Nt_K, omega).value
               / lti.freq_response(self.Dt_K, omega).value)
        return float(max(np.max(np.abs(lcf - kv)), np.max(np.abs(rcf - kv))))


@dataclass(frozen=True)
class YoulaSignals:
    alpha: np.ndarray
    beta_m: np.ndarray
    ts: float

    def __post_init__(self):
        for name in ("alpha", "beta_m"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.alpha.size != self.beta_m.size:
            raise ValueError("alpha and beta_m must have equal length")


def _placement_targets(eigs: np.ndarray, decay: float, stretch: float) -> np.ndarray:
    """Map eigenvalues to placement targets, keeping conjugate pairs paired
    and all targets distinct (single-input placement requires it)."""
    reals = sorted(lam.real for lam in eigs if abs(lam.imag) < 1e-9)
    uppers = sorted((lam for lam in eigs if lam.imag >= 1e-9),
                    key=lambda z: (z.real, z.imag))
    targets: list[complex] = []

    def add(lam_t: complex) -> None:
        while any(abs(lam_t - t) < 1e-6 for t in targets):
            lam_t = complex(lam_t.real - 5.0, lam_t.imag)
        targets.append(lam_t)
        if lam_t.imag > 0:
            targets.append(lam_t.conjugate())

    for re in reals:
        add(complex(min(-stretch * abs(re), -decay), 0.0))
    for lam in uppers:
        add(complex(min(-stretch * abs(lam.real), -decay), lam.imag))
    return np.array(sorted(targets, key=lambda z: (z.real, z.imag)))


def doubly_coprime_factorize(k: lti.TransferFunction) -> CoprimeFactors:
    """State-feedback/observer factorization of a proper controller.

    Gains are placed deterministically by :func:`_placement_targets`; the
    emitted family satisfies the lcf/rcf identities and the Bezout identity
    on the standard grid (checked, raising if violated).
    """
    kss = lti.tf_to_ss(k)
    A, B, C = kss.A, kss.B, kss.C
    D = float(kss.D[0, 0])
    n = kss.n_states
    SS = lti.StateSpace
    if n == 0:
        factors = CoprimeFactors(
            N_K=lti.gain(D), D_K=lti.gain(1.0),
            Nt_K=lti.gain(D), Dt_K=lti.gain(1.0),
            N_0=lti.gain(0.0), D_0=lti.gain(1.0))
    else:
        eigs = np.linalg.eigvals(A)
        targets_f = _placement_targets(eigs, PLACEMENT_MIN_DECAY_F,
                                       PLACEMENT_STRETCH_F)
        targets_l = _placement_targets(eigs, PLACEMENT_MIN_DECAY_L,
                                       PLACEMENT_STRETCH_L)
        try:
            F = -scipy.signal.place_poles(A, B, targets_f).gain_matrix
            L = -scipy.signal.place_poles(A.T, C.T, targets_l).gain_matrix.T
        except ValueError as err:
            raise ValueError(f"realization not stabilizable/detectable: {err}")
        factors = CoprimeFactors(
            N_K=SS(A + L @ C, B + L * D, C, [[D]]),
            D_K=SS(A + L @ C, L, C, [[1.0]]),
            Nt_K=SS(A + B @ F, B, C + D * F, [[D]]),
            Dt_K=SS(A + B @ F, B, F, [[1.0]]),
            N_0=SS(A + L @ C, L, F, [[0.0]]),
            D_0=SS(A + L @ C, -(B + L * D), F, [[1.0]]))
    res = factors.bezout_residual()
    if res > BEZOUT_TOL:
        raise ArithmeticError(f"Bezout residual {res:.3e} exceeds {BEZOUT_TOL}")
    return factors


def _foh_filter(sys: lti.StateSpace, ts: float, signal: np.ndarray) -> np.ndarray:
    disc = lti.discretize(sys, ts, "foh")
    return dlsim(disc.A, disc.B, disc.C, disc.D, signal.reshape(-1, 1))[:, 0]


def youla_signals(data: simulate.Dataset, factors: CoprimeFactors) -> YoulaSignals:
    """alpha = D_K u + N_K y and beta_m = D_0 y - N_0 u, FOH-filtered at ts."""
    alpha = (_foh_filter(factors.D_K, data.ts, data.u)
             + _foh_filter(factors.N_K, data.ts, data.y))
    beta_m = (_foh_filter(factors.D_0, data.ts, data.y)
              - _foh_filter(factors.N_0, data.ts, data.u))
    return YoulaSignals(alpha=alpha, beta_m=beta_m, ts=data.ts)


def _trim_tiny_leading(c: np.ndarray) -> np.ndarray:
    # A genuine leading coefficient is at worst |c[1]| / sum|roots| -- judging
    # it against the next coefficient stays valid however the roots scale.
    c = np.atleast_1d(c)
    while c.size > 1 and abs(c[0]) <= 1e-11 * abs(c[1]):
        c = c[1:]
    return c


def _dipole_response(zeros, poles, gain: float, s: np.ndarray) -> np.ndarray:
    """Evaluate gain * prod(s - z) / prod(s - p) from the factored form."""
    val = np.full(s.shape, gain, dtype=complex)
    for z in zeros:
        val *= s - z
    for p in poles:
        val /= s - p
    return val


def _cancel(num: np.ndarray, den: np.ndarray, tol: float):
    """Remove zero/pole dipoles whose removal preserves the response.

    Root proximity alone is not a safe criterion: a dipole a relative 1e-7
    apart can either be rounding debris from the fraction arithmetic (safe to
    drop) or carry essentially all of the system's deviation from the
    remaining dynamics (its residue, not its width, decides). Each candidate
    pair is therefore only cancelled if doing so leaves the frequency
    response on the standard grid unchanged to within ``tol``.
    """
    num = _trim_tiny_leading(num)
    den = _trim_tiny_leading(den)
    zeros = list(np.roots(num)) if num.size > 1 else []
    poles = list(np.roots(den)) if den.size > 1 else []
    s = 1j * BEZOUT_GRID
    ref = _dipole_response(zeros, poles, num[0] / den[0], s)
    scale = np.maximum(np.abs(ref), 1e-300)
    for p in list(poles):
        if not zeros:
            break
        dist = [abs(p - z) for z in zeros]
        i = int(np.argmin(dist))
        if dist[i] > tol * max(1.0, abs(p)):
            continue
        trial_z = zeros[:i] + zeros[i + 1:]
        trial_p = [q for q in poles if q is not p]
        trial = _dipole_response(trial_z, trial_p, num[0] / den[0], s)
        if np.max(np.abs(trial - ref) / scale) <= CANCEL_RESPONSE_TOL:
            zeros, poles = trial_z, trial_p
    return num[0] * np.real(np.poly(zeros)), den[0] * np.real(np.poly(poles))


def _shift_poly(c: np.ndarray) -> np.ndarray:
    """Coefficients of p(w + 1) given those of p(z), both descending."""
    return np.poly1d(np.asarray(c, dtype=float))(np.poly1d([1.0, 1.0])).coeffs


def _sk_fit(wj: np.ndarray, href: np.ndarray, order: int):
    """Order-(order/order) rational LS fit of href(wj), SK-reweighted.

    Returns (num_w, den_w, max relative error); den is monic, coefficients
    real. Rows are scaled by 1/|href| so the fit is relative, and by the
    previous denominator magnitude (Sanathanan-Koerner) so the linearized
    problem converges toward the true output-error optimum.
    """
    m = wj.size
    # scale the variable so the Vandermonde stays well conditioned
    s = np.exp(np.mean(np.log(np.abs(wj))))
    vj = wj / s
    vand = np.vander(vj, order + 1)  # columns v^order .. v^0
    weight0 = 1.0 / np.abs(href)
    den_prev = np.ones(m)
    best = None
    for _ in range(15):
        wgt = weight0 / np.abs(den_prev)
        # unknowns: num coeffs (order+1), den coeffs without leading 1 (order)
        lhs = np.hstack([vand, -href[:, None] * vand[:, 1:]]) * wgt[:, None]
        rhs = href * (vj ** order) * wgt
        sol, *_ = scipy.linalg.lstsq(
            np.vstack([lhs.real, lhs.imag]),
            np.concatenate([rhs.real, rhs.imag]), lapack_driver="gelsy")
        num_v = sol[:order + 1]
        den_v = np.concatenate([[1.0], sol[order + 1:]])
        den_prev = np.polyval(den_v, vj)
        fit = np.polyval(num_v, vj) / den_prev
        err = float(np.max(np.abs(fit - href) / np.abs(href)))
        if best is None or err < best[2]:
            # undo the variable scaling: coeff of v^k becomes coeff/s^k of w^k
            powers = s ** np.arange(order, -1, -1, dtype=float)
            best = (num_v / powers, den_v / powers, err)
    return best


def _cancel_bridge(num_w: np.ndarray, den_w: np.ndarray):
    """Reduce a discrete-bridge fraction expressed in w = z - 1.

    The hold discretizations of factors and Q do not commute with products,
    so the coincident pole/zero pairs of the exact algebra reopen by a few
    percent of their distance from z = 1; their response distortions cancel
    only jointly, which rules out dropping root pairs one at a time. Instead
    the fraction is evaluated pointwise in w (well conditioned there) and a
    fresh minimal-order rational model is fitted to that response. Returns
    z-domain coefficient arrays.
    """
    num_w = _trim_tiny_leading(num_w)
    den_w = _trim_tiny_leading(den_w)
    max_order = den_w.size - 1
    theta = np.logspace(-4, -1.5, 120)  # omega * ts, dimensionless
    wj = np.exp(1j * theta) - 1.0
    zj = wj + 1.0
    href = np.polyval(num_w, wj) / np.polyval(den_w, wj)
    shift = np.poly1d([1.0, -1.0])  # z - 1
    best = None
    for order in range(1, max_order + 1):
        num, den, _ = _sk_fit(wj, href, order)
        num_z = np.poly1d(num)(shift).coeffs
        den_z = np.poly1d(den)(shift).coeffs
        # score the model as it will actually be evaluated: high orders lose
        # accuracy in the z monomial basis and rule themselves out here
        fit = np.polyval(num_z, zj) / np.polyval(den_z, zj)
        err = float(np.max(np.abs(fit - href) / np.abs(href)))
        if best is None or err < best[1]:
            best = ((num_z, den_z), err)
        if err <= BRIDGE_FIT_TOL:
            break
    return best[0]


def _factor_tfs(factors: CoprimeFactors) -> dict:
    return {name: lti.ss_to_tf(sys) for name, sys in factors.members().items()}


def q_from_plant(plant: lti.TransferFunction, k: lti.TransferFunction,
                 factors: CoprimeFactors) -> lti.TransferFunction:
    """Youla parameter of a plant stabilized by k:
    Q = (D_0 P - N_0)(K P + 1)^-1 D_K^-1, returned minimal.

    Worked as one polynomial fraction: the common denominators of the
    factor pairs cancel symbolically, and the residue is reduced by
    root-matched pole-zero cancellation.
    """
    f = _factor_tfs(factors)
    # All four factors share the observer characteristic polynomial as
    # denominator, so it drops out of the fraction symbolically.
    a0, b0 = f["D_0"].num, f["N_0"].num
    c0, e0 = f["D_K"].num, f["N_K"].num
    pn, pd = plant.num, plant.den
    num = np.polysub(np.polymul(a0, pn), np.polymul(b0, pd))
    den = np.polyadd(np.polymul(c0, pd), np.polymul(e0, pn))
    # For any plant in the parameterized family both combinations carry the
    # exact common factor d*f (the observer and state-feedback characteristic
    # polynomials): with P = (b0 qd + qn c0)/(a0 qd - qn e0) one gets
    # num = qn (a0 c0 + b0 e0) = qn d f and likewise den = qd d f. Dividing
    # the known factor out is far better conditioned than rediscovering it by
    # root matching, so try that first.
    common = np.polymul(f["D_K"].den, f["Dt_K"].den)
    num_q, num_rem = np.polydiv(num, common)
    den_q, den_rem = np.polydiv(den, common)
    scale_n = np.max(np.abs(num)) if num.size else 1.0
    scale_d = np.max(np.abs(den))
    if (np.max(np.abs(num_rem), initial=0.0) <= 1e-9 * scale_n
            and np.max(np.abs(den_rem), initial=0.0) <= 1e-9 * scale_d):
        num, den = _cancel(num_q, den_q, CANCEL_TOL)
    else:
        num, den = _cancel(num, den, CANCEL_TOL)
    return lti.TransferFunction(num, den, plant.domain, plant.ts)


def recover_plant(q_hat: lti.TransferFunction,
                  factors: CoprimeFactors) -> lti.TransferFunction:
    """Plant model (D_0 - Q N_K)^-1 (N_0 + Q D_K) from an identified Q.

    A discrete q_hat is bridged by FOH-discretizing the (continuous) factors
    at its sample period, so all algebra happens in one domain. The result is
    reduced by pole-zero cancellation at tolerance 1e-6.
    """
    fs = factors
    discrete = q_hat.domain == lti.DISCRETE
    if discrete and fs.D_K.domain == lti.CONTINUOUS:
        ts = q_hat.ts
        fs = CoprimeFactors(**{name: lti.discretize(sys, ts, "foh")
                               for name, sys in fs.members().items()})
    f = _factor_tfs(fs)
    # All four factors share one denominator (characteristic polynomial of
    # the common state matrix), which cancels against itself symbolically.
    parts = {"a0": f["D_0"].num, "b0": f["N_0"].num,
             "c0": f["D_K"].num, "e0": f["N_K"].num,
             "qn": q_hat.num, "qd": q_hat.den}
    if discrete:
        # Sampled poles cluster at z = 1, where monomial-basis coefficients
        # lose the value of the polynomial entirely; work in w = z - 1.
        parts = {k: _shift_poly(v) for k, v in parts.items()}
    num = np.polyadd(np.polymul(parts["b0"], parts["qd"]),
                     np.polymul(parts["qn"], parts["c0"]))
    den = np.polysub(np.polymul(parts["a0"], parts["qd"]),
                     np.polymul(parts["qn"], parts["e0"]))
    if discrete:
        num, den = _cancel_bridge(num, den)
    else:
        num, den = _cancel(num, den, CANCEL_TOL)
    if num.size > den.size:
        raise lti.AlgebraicLoopError("(D_0 - Q N_K) has singular feedthrough")
    return lti.TransferFunction(num, den, q_hat.domain, q_hat.ts)


def _oe_hint(signals: YoulaSignals, order: int) -> np.ndarray:
    """Equation-error least-squares start for the output-error fit."""
    a_len, b_len = order, order + 1
    beta, alpha = signals.beta_m, signals.alpha
    N = beta.size
    phi = np.empty((N - order, a_len + b_len))
    for i in range(1, order + 1):
        phi[:, i - 1] = -beta[order - i:N - i]
    for i in range(0, order + 1):
        phi[:, a_len + i] = alpha[order - i:N - i]
    sol, *_ = scipy.linalg.lstsq(phi, beta[order:], lapack_driver="gelsy")
    return sol


def _oe_cost(theta: np.ndarray, signals: YoulaSignals, order: int) -> float:
    den = np.concatenate([[1.0], theta[:order]])
    num = theta[order:]
    if order:
        mags = np.abs(np.roots(den))
        margin = float(np.max(mags)) - 1.0 if mags.size else -1.0
        if margin >= -lti.STABILITY_TOL_MAG:
            return PENALTY_SCALE * (1.0 + margin)
    resid = signals.beta_m - scipy.signal.lfilter(num, den, signals.alpha)
    return float(np.linalg.norm(resid))


def _oe_refine(theta: np.ndarray, signals: YoulaSignals, order: int,
               max_iter: int = 60) -> np.ndarray:
    """Gauss-Newton descent on the output-error cost from a good start.

    The simplex polish stalls on this surface well above the attainable
    residual; a few damped Gauss-Newton steps with the analytic output-error
    Jacobian close the remaining gap. Denominators are kept Schur by root
    reflection into the unit disk.
    """
    alpha, beta = signals.alpha, signals.beta_m
    n_samp = alpha.size
    best = theta.copy()
    best_cost = _oe_cost(best, signals, order)
    for _ in range(max_iter):
        a = np.concatenate([[1.0], best[:order]])
        b = best[order:]
        yhat = scipy.signal.lfilter(b, a, alpha)
        resid = beta - yhat
        af = scipy.signal.lfilter([1.0], a, alpha)
        yf = scipy.signal.lfilter([1.0], a, yhat)
        jac = np.zeros((n_samp, 2 * order + 1))
        for i in range(1, order + 1):
            jac[i:, i - 1] = yf[:n_samp - i]
        for i in range(order + 1):
            jac[i:, order + i] = -af[:n_samp - i] if i else -af
        step, *_ = scipy.linalg.lstsq(jac, resid, lapack_driver="gelsy")
        improved = False
        alpha_ls = 1.0
        for _ in range(20):
            cand = best - alpha_ls * step
            cand[:order] = _reflect_into_unit_disk(
                np.concatenate([[1.0], cand[:order]]))[1:]
            cost = _oe_cost(cand, signals, order)
            if cost < best_cost:
                best, best_cost = cand, cost
                improved = True
                break
            alpha_ls *= 0.5
        if not improved:
            break
    return best


def identify_q(signals: YoulaSignals, order: int,
               opt: OptimizerConfig | None = None) -> lti.TransferFunction:
    """Stable discrete output-error model from alpha to beta_m.

    Parameters are (a_1..a_n, b_0..b_n) of b(q)/a(q); the swarm is seeded
    around an equation-error least-squares hint and unstable candidates are
    penalized, so the returned model is always stable.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    span = float(np.ptp(signals.alpha))
    if not span > 0:
        raise ValueError("alpha is constant; cannot identify Q")
    hint = _oe_hint(signals, order)
    if opt is None:
        width = np.maximum(2.0 * np.abs(hint), 1e-3)
        bounds = tuple((h - w, h + w) for h, w in zip(hint, width))
        opt = OptimizerConfig(bounds=bounds, swarm_size=30, max_iterations=40,
                              hint=tuple(hint), polish_max_evals=4000)
    result = pso_minimize(lambda th: _oe_cost(th, signals, order), opt,
                          method="dual_youla")
    if result.cost >= PENALTY_SCALE:
        raise NoStableCandidateError("no stable Q candidate found")
    theta = _oe_refine(np.asarray(result.theta_hat), signals, order)
    return lti.TransferFunction(theta[order:], np.concatenate([[1.0], theta[:order]]),
                                lti.DISCRETE, signals.ts)
