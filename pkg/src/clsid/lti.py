"""Core SISO LTI types and algebra.

Transfer functions and state-space realizations (continuous or discrete),
stability tests, ZOH/FOH discretization, frequency response, and the
interconnections (series, parallel, feedback) everything else is built on.
All objects are immutable values; every function returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.signal

CONTINUOUS = "continuous"
DISCRETE = "discrete"

# Single source of truth for RH-infinity membership.
STABILITY_TOL_RE = 1e-9
STABILITY_TOL_MAG = 1e-9


class ImproperError(ValueError):
    """Transfer function has numerator degree above denominator degree."""


class AlgebraicLoopError(ValueError):
    """Feedback interconnection has a singular direct-feedthrough loop."""


def _as_coeffs(c) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(c, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficient vector must be 1-D and non-empty")
    return arr


def _trim_leading_zeros(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(c) > 0)
    if nz.size == 0:
        return c[-1:]
    return c[nz[0]:]


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Rational SISO system num(x)/den(x), coefficients in descending powers.

    ``domain`` is "continuous" (variable s) or "discrete" (variable z, with
    sample period ``ts`` in seconds).
    """

    num: np.ndarray
    den: np.ndarray
    domain: str = CONTINUOUS
    ts: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "num", _trim_leading_zeros(_as_coeffs(self.num)))
        object.__setattr__(self, "den", _trim_leading_zeros(_as_coeffs(self.den)))
        if abs(self.den[0]) == 0.0:
            raise ValueError("denominator is identically zero")
        if self.domain not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == DISCRETE:
            if self.ts is None or self.ts <= 0:
                raise ValueError("discrete system requires ts > 0")
        self.num.setflags(write=False)
        self.den.setflags(write=False)

    @property
    def order(self) -> int:
        return self.den.size - 1

    @property
    def is_proper(self) -> bool:
        return self.num.size <= self.den.size

    def normalized(self) -> "TransferFunction":
        """Scale so the leading denominator coefficient is 1."""
        d0 = self.den[0]
        return TransferFunction(self.num / d0, self.den / d0, self.domain, self.ts)

    def __call__(self, x):
        """Evaluate num(x)/den(x) by Horner's rule."""
        return np.polyval(self.num, x) / np.polyval(self.den, x)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """State-space realization (A, B, C, D); n = 0 encodes a pure gain."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    domain: str = CONTINUOUS
    ts: float | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0] if A.size else 0
        A = A.reshape(n, n)
        B = np.asarray(self.B, dtype=float).reshape(n, -1) if n else np.zeros((0, 1))
        C = np.asarray(self.C, dtype=float).reshape(-1, n) if n else np.zeros((1, 0))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if n and B.shape[1] != D.shape[1]:
            raise ValueError("B/D input-count mismatch")
        if n and C.shape[0] != D.shape[0]:
            raise ValueError("C/D output-count mismatch")
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.domain not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == DISCRETE and (self.ts is None or self.ts <= 0):
            raise ValueError("discrete system requires ts > 0")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]


def gain(k: float, domain: str = CONTINUOUS, ts: float | None = None) -> StateSpace:
    """Static gain as an n = 0 realization."""
    return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)),
                      [[float(k)]], domain, ts)


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Controllable-canonical realization of a proper transfer function."""
    if not tf.is_proper:
        raise ImproperError(
            f"numerator degree {tf.num.size - 1} exceeds denominator degree "
            f"{tf.den.size - 1}")
    tf = tf.normalized()
    n = tf.order
    if n == 0:
        return gain(tf.num[0] if tf.num.size else 0.0, tf.domain, tf.ts)
    num = np.concatenate([np.zeros(n + 1 - tf.num.size), tf.num])
    d = num[0]
    # strictly-proper remainder: num(s) - d*den(s)
    rem = num[1:] - d * tf.den[1:]
    A = np.zeros((n, n))
    A[0, :] = -tf.den[1:]
    if n > 1:
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    return StateSpace(A, B, C, [[d]], tf.domain, tf.ts)


def _charpoly_and_numerator(A: np.ndarray, B: np.ndarray, C: np.ndarray):
    """Faddeev-LeVerrier recursion; returns (den coeffs, strictly-proper num)."""
    n = A.shape[0]
    den = np.empty(n + 1)
    den[0] = 1.0
    M = np.eye(n)
    num = np.empty(n)
    for k in range(1, n + 1):
        num[k - 1] = (C @ M @ B).item()
        AM = A @ M
        den[k] = -np.trace(AM) / k
        M = AM + den[k] * np.eye(n)
    return den, num


def ss_to_tf(ss: StateSpace) -> TransferFunction:
    """Transfer function C (xI - A)^-1 B + D via Faddeev-LeVerrier."""
    if ss.B.shape[1] != 1 or ss.C.shape[0] != 1:
        raise ValueError("ss_to_tf requires a SISO realization")
    n = ss.n_states
    d = float(ss.D[0, 0])
    if n == 0:
        return TransferFunction([d], [1.0], ss.domain, ss.ts)
    # balance for conditioning; similarity transform leaves the tf unchanged
    Ab, T = scipy.linalg.matrix_balance(ss.A)
    Tinv_B = scipy.linalg.solve(T, ss.B)
    C_T = ss.C @ T
    den, num_sp = _charpoly_and_numerator(Ab, Tinv_B, C_T)
    num = d * den + np.concatenate([[0.0], num_sp])
    return TransferFunction(num, den, ss.domain, ss.ts)


def poles(sys) -> np.ndarray:
    """Poles (denominator roots / eigenvalues of A), sorted by real part descending."""
    if isinstance(sys, TransferFunction):
        p = np.roots(sys.den)  # companion-matrix eigenvalues
    else:
        p = np.linalg.eigvals(sys.A) if sys.n_states else np.empty(0, complex)
    order = np.argsort(-p.real, kind="stable")
    return p[order]


def is_stable(sys) -> bool:
    """RH-infinity membership at the module-level tolerances."""
    p = poles(sys)
    if p.size == 0:
        return True
    if sys.domain == DISCRETE:
        return bool(np.max(np.abs(p)) < 1.0 - STABILITY_TOL_MAG)
    return bool(np.max(p.real) < -STABILITY_TOL_RE)


def _check_domains(a: StateSpace, b: StateSpace):
    if a.domain != b.domain:
        raise ValueError("cannot interconnect systems from different domains")
    if a.domain == DISCRETE and a.ts != b.ts:
        raise ValueError("cannot interconnect systems with different sample periods")


def series(a: StateSpace, b: StateSpace) -> StateSpace:
    """Cascade: output of ``a`` drives ``b`` (transfer function b*a)."""
    _check_domains(a, b)
    na, nb = a.n_states, b.n_states
    A = np.block([[a.A, np.zeros((na, nb))], [b.B @ a.C, b.A]])
    B = np.vstack([a.B, b.B @ a.D])
    C = np.hstack([b.D @ a.C, b.C])
    D = b.D @ a.D
    return StateSpace(A, B, C, D, a.domain, a.ts)


def parallel(a: StateSpace, b: StateSpace) -> StateSpace:
    """Sum of outputs under a shared input."""
    _check_domains(a, b)
    na, nb = a.n_states, b.n_states
    A = np.block([[a.A, np.zeros((na, nb))], [np.zeros((nb, na)), b.A]])
    B = np.vstack([a.B, b.B])
    C = np.hstack([a.C, b.C])
    D = a.D + b.D
    return StateSpace(A, B, C, D, a.domain, a.ts)


def scale(a: StateSpace, k: float) -> StateSpace:
    """Output scaled by a constant."""
    return StateSpace(a.A, a.B, k * a.C, k * a.D, a.domain, a.ts)


def inverse(a: StateSpace) -> StateSpace:
    """Inverse of a biproper SISO system."""
    d = float(a.D[0, 0])
    if abs(d) < 1e-300:
        raise AlgebraicLoopError("system is strictly proper; inverse is improper")
    dinv = 1.0 / d
    if a.n_states == 0:
        return gain(dinv, a.domain, a.ts)
    A = a.A - a.B @ a.C * dinv
    B = a.B * dinv
    C = -dinv * a.C
    return StateSpace(A, B, C, [[dinv]], a.domain, a.ts)


def feedback(forward: StateSpace, backward: StateSpace, sign: str = "-") -> StateSpace:
    """Closed loop forward/(1 +/- forward*backward), input at the forward summing junction."""
    _check_domains(forward, backward)
    if sign not in ("-", "+"):
        raise ValueError("sign must be '-' or '+'")
    s = -1.0 if sign == "-" else 1.0
    d1 = float(forward.D[0, 0])
    d2 = float(backward.D[0, 0])
    delta = 1.0 - s * d1 * d2
    if abs(delta) < 1e-12:
        raise AlgebraicLoopError("singular algebraic loop (1 +/- D_fwd*D_bwd = 0)")
    n1, n2 = forward.n_states, backward.n_states
    # e = r + s*y2, y1 = C1 x1 + D1 e, y2 = C2 x2 + D2 y1
    # e = (r + s C2 x2 + s D2 C1 x1) / delta
    E1 = s * d2 * forward.C / delta if n1 else np.zeros((1, 0))
    E2 = s * backward.C / delta if n2 else np.zeros((1, 0))
    e_r = 1.0 / delta
    A = np.block([
        [forward.A + forward.B @ E1, forward.B @ E2],
        [backward.B @ (forward.C + d1 * E1), backward.A + backward.B @ (d1 * E2)],
    ])
    B = np.vstack([forward.B * e_r, backward.B * (d1 * e_r)])
    C = np.hstack([forward.C + d1 * E1, d1 * E2])
    D = np.array([[d1 * e_r]])
    return StateSpace(A, B, C, D, forward.domain, forward.ts)


def discretize(sys: StateSpace, ts: float, method: str = "zoh") -> StateSpace:
    """ZOH or FOH (triangle-hold) discrete equivalent of a continuous system."""
    if sys.domain != CONTINUOUS:
        raise ValueError("discretize expects a continuous-time system")
    if ts <= 0:
        raise ValueError("sample period must be positive")
    if method not in ("zoh", "foh"):
        raise ValueError(f"unknown discretization method {method!r}")
    if sys.n_states == 0:
        return StateSpace(sys.A, sys.B, sys.C, sys.D, DISCRETE, ts)
    Ad, Bd, Cd, Dd, _ = scipy.signal.cont2discrete(
        (sys.A, sys.B, sys.C, sys.D), ts, method=method)
    return StateSpace(Ad, Bd, Cd, Dd, DISCRETE, ts)


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Complex response samples over a strictly increasing positive omega grid."""

    omega: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        value = np.asarray(self.value, dtype=complex)
        if omega.shape != value.shape:
            raise ValueError("omega/value length mismatch")
        if omega.size and (np.any(omega <= 0) or np.any(np.diff(omega) <= 0)):
            raise ValueError("omega must be strictly positive and increasing")
        omega.setflags(write=False)
        value.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "value", value)


def _eval_points(sys, omega: np.ndarray) -> np.ndarray:
    if sys.domain == DISCRETE:
        return np.exp(1j * omega * sys.ts)
    return 1j * omega


def freq_response(sys, omega) -> FrequencyResponse:
    """Evaluate on the jw axis (continuous) or unit circle (discrete).

    Evaluation points within 1e-12 of a pole are flagged infinite rather than
    raising.
    """
    omega = np.asarray(omega, dtype=float)
    x = _eval_points(sys, omega)
    p = poles(sys)
    if isinstance(sys, TransferFunction):
        val = np.polyval(sys.num, x) / np.polyval(sys.den, x)
    else:
        n = sys.n_states
        if n == 0:
            val = np.full(x.shape, complex(sys.D[0, 0]))
        else:
            val = np.empty(x.shape, dtype=complex)
            I = np.eye(n)
            for i, xi in enumerate(x):
                sol = np.linalg.solve(xi * I - sys.A, sys.B)
                val[i] = (sys.C @ sol + sys.D)[0, 0]
    if p.size:
        dist = np.min(np.abs(x[:, None] - p[None, :]) /
                      np.maximum(1.0, np.abs(p[None, :])), axis=1)
        val = np.where(dist < 1e-12, np.inf + 0j, val)
    return FrequencyResponse(omega, val)
