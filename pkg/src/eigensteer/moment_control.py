"""Minimum-norm null controls for the linearized system on one time window.

The linearized deviation equation ``y' + A y + p(t) B phi_j = 0`` is steered
to zero at time ``T`` iff

    int_0^T exp(lambda_k s) p(s) ds = <y0, phi_k> / <B phi_j, phi_k>   for all k.

With ``q(s) = exp(lambda_1 s) p(s)`` and ``omega_k = lambda_k - lambda_1`` this
is a moment problem for the family ``exp(omega_k s)``.  We truncate to the
first ``n_ctrl`` modes and return the least-norm ``q`` in the span of the
shifted exponentials ``exp(omega_k (s - T))``, whose values stay in (0, 1] on
the window.  The Gram matrix of that basis is

    G_kl = (1 - exp(-(omega_k + omega_l) T)) / (omega_k + omega_l)

(``T`` on the zero diagonal) and the shifted moments are
``exp(-omega_k T) m_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ControlDomainError, DegenerateCouplingError, SynthesisError

__all__ = [
    "N_CTRL_DEFAULT",
    "N_CTRL_CAP",
    "RIDGE_EPS",
    "MomentProblem",
    "GramSystem",
    "ControlSignal",
    "exp_integral",
    "gram_matrix",
    "build_moment_problem",
    "solve_min_norm",
    "control_l2_norm",
    "control_integral",
    "control_l1_norm_bound",
    "q_norm",
    "empirical_cost",
    "gram_condition",
    "eval_control",
    "zero_control",
]

N_CTRL_DEFAULT = 10
N_CTRL_CAP = 16
RIDGE_EPS = 1e-13


def exp_integral(a, b, T):
    """int_0^T exp(a s + b) ds, elementwise, without cancellation or overflow.

    Both endpoint exponents ``b`` and ``a T + b`` should be moderate; the
    larger one is factored out so only expm1 of a nonpositive argument is used.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    scalar = a.ndim == 0
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    out = T * np.exp(b)
    pos = a > 0
    neg = a < 0
    # a > 0: exp(aT + b) (1 - exp(-aT)) / a ;  a < 0: exp(b) (exp(aT) - 1) / a
    ap = a[pos]
    out[pos] = np.exp(ap * T + b[pos]) * (-np.expm1(-ap * T)) / ap
    an = a[neg]
    out[neg] = np.exp(b[neg]) * np.expm1(an * T) / an
    return float(out[0]) if scalar else out


def gram_matrix(omega, T):
    """Gram matrix of exp(omega_k (s - T)) on [0, T]."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size
    G = np.empty((n, n))
    for k in range(n):
        for l in range(k, n):
            w = omega[k] + omega[l]
            G[k, l] = G[l, k] = T if w == 0 else -math.expm1(-w * T) / w
    return G


@dataclass(frozen=True)
class MomentProblem:
    horizon: float
    frequencies: np.ndarray
    targets: np.ndarray
    shift_lambda: float
    j: int
    couplings: np.ndarray

    @property
    def n(self):
        return self.frequencies.size

    @property
    def shifted_targets(self):
        return np.exp(-self.frequencies * self.horizon) * self.targets


@dataclass(frozen=True)
class GramSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    condition: float


@dataclass(frozen=True)
class ControlSignal:
    """p(s) = exp(-shift_lambda s) sum_k c_k exp(omega_k (s - T)), s = t - window_offset."""

    horizon: float
    shift_lambda: float
    coefficients: np.ndarray
    frequencies: np.ndarray
    window_offset: float = 0.0
    regularized: bool = False
    q_norm_sq: float = 0.0
    residuals: np.ndarray | None = None

    @property
    def t0(self):
        return self.window_offset

    @property
    def t1(self):
        return self.window_offset + self.horizon

    def at_offset(self, offset: float) -> "ControlSignal":
        return ControlSignal(self.horizon, self.shift_lambda, self.coefficients, self.frequencies,
                             offset, self.regularized, self.q_norm_sq, self.residuals)

    def q(self, s):
        s = np.asarray(s, dtype=float)
        basis = np.exp(np.multiply.outer(s - self.horizon, self.frequencies))
        return basis @ self.coefficients

    def __call__(self, t_abs):
        """p at absolute times; no domain check (see :func:`eval_control`)."""
        s = np.asarray(t_abs, dtype=float) - self.window_offset
        return np.exp(-self.shift_lambda * s) * self.q(s)

    @property
    def is_zero(self):
        return not np.any(self.coefficients)


def zero_control(T: float, window_offset: float = 0.0) -> ControlSignal:
    return ControlSignal(T, 0.0, np.zeros(1), np.zeros(1), window_offset)


def eval_control(cs: ControlSignal, t_abs):
    t = np.asarray(t_abs, dtype=float)
    # tolerate roundoff at the window ends
    slack = 1e-12 * max(1.0, abs(cs.t1))
    if np.any(t < cs.t0 - slack) or np.any(t > cs.t1 + slack):
        raise ControlDomainError(f"control defined on [{cs.t0:.17g}, {cs.t1:.17g}], queried at {t_abs}")
    out = cs(np.clip(t, cs.t0, cs.t1))
    return out if out.ndim else float(out)


def build_moment_problem(problem, j: int, y0, T: float, n_ctrl: int = N_CTRL_DEFAULT) -> MomentProblem:
    """Moment data for steering the linearized system from ``y0`` to 0 in time ``T``.

    ``problem`` may be a shifted pair (see ``SpectralProblem.shifted``); the
    exponent shift is always its lowest eigenvalue.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if n_ctrl < 1 or n_ctrl > N_CTRL_CAP:
        raise ValueError(f"n_ctrl must lie in [1, {N_CTRL_CAP}], got {n_ctrl}")
    y0 = np.asarray(y0, dtype=float)
    if y0.size != n_ctrl:
        raise ValueError(f"y0 has {y0.size} coefficients, expected {n_ctrl}")
    lam = problem.eigenvalues(n_ctrl)
    shift = float(lam.min())
    b = problem.b_row(j, n_ctrl)
    zero = np.flatnonzero(b == 0.0)
    if zero.size:
        raise DegenerateCouplingError(j, int(zero[0]) + 1)
    return MomentProblem(
        horizon=float(T),
        frequencies=lam - shift,
        targets=y0 / b,
        shift_lambda=shift,
        j=j,
        couplings=b,
    )


def _factor(G):
    """Cholesky factor, or the ridge-shifted one if G is numerically indefinite."""
    try:
        return linalg.cho_factor(G, lower=True), False
    except linalg.LinAlgError:
        ridge = RIDGE_EPS * np.trace(G) / G.shape[0]
        try:
            return linalg.cho_factor(G + ridge * np.eye(G.shape[0]), lower=True), True
        except linalg.LinAlgError as exc:
            raise SynthesisError("Gram matrix not factorizable even with ridge") from exc


def _residual(G, c, rhs):
    """G c - rhs accumulated in extended precision (where the platform has it)."""
    wide = np.longdouble
    return (G.astype(wide) @ c.astype(wide) - rhs.astype(wide)).astype(float)


def solve_min_norm(mp: MomentProblem, tol_res: float = 1e-8, window_offset: float = 0.0) -> ControlSignal:
    """Least-L2-norm q in the exponential span meeting the truncated moments.

    Residuals are checked on the shifted equations ``G c = exp(-omega T) m``,
    componentwise relative to ``1 + |rhs_k|``.
    """
    G = gram_matrix(mp.frequencies, mp.horizon)
    rhs = mp.shifted_targets
    if not np.any(rhs):
        return ControlSignal(mp.horizon, mp.shift_lambda, np.zeros(mp.n), mp.frequencies, window_offset,
                             residuals=np.zeros(mp.n))
    factor, regularized = _factor(G)
    c = linalg.cho_solve(factor, rhs)
    c = c - linalg.cho_solve(factor, _residual(G, c, rhs))
    res = _residual(G, c, rhs)
    rel = np.abs(res) / (1.0 + np.abs(rhs))
    if np.max(rel) > tol_res:
        kind = "regularized moment residual" if regularized else "moment residual"
        raise SynthesisError(f"{kind} {np.max(rel):.3g} exceeds {tol_res:g}", residuals=res)
    return ControlSignal(
        horizon=mp.horizon,
        shift_lambda=mp.shift_lambda,
        coefficients=c,
        frequencies=mp.frequencies,
        window_offset=window_offset,
        regularized=regularized,
        q_norm_sq=float(c @ G @ c),
        residuals=res,
    )


def q_norm(cs: ControlSignal) -> float:
    """||q||_{L2(0,T)} as sqrt(c^T G c)."""
    G = gram_matrix(cs.frequencies, cs.horizon)
    return math.sqrt(max(float(cs.coefficients @ G @ cs.coefficients), 0.0))


def control_l2_norm(cs: ControlSignal) -> float:
    """||p||_{L2} over the window, from pairwise closed-form exponential integrals."""
    if cs.is_zero:
        return 0.0
    T = cs.horizon
    w = np.add.outer(cs.frequencies, cs.frequencies)
    H = exp_integral(w - 2 * cs.shift_lambda, -w * T, T)
    return math.sqrt(max(float(cs.coefficients @ H @ cs.coefficients), 0.0))


def control_integral(cs: ControlSignal, a: float, b: float) -> float:
    """int_a^b p(t) dt for absolute times inside the window, in closed form."""
    if cs.is_zero or b <= a:
        return 0.0
    s0 = a - cs.window_offset
    rate = cs.frequencies - cs.shift_lambda
    ints = exp_integral(rate, rate * s0 - cs.frequencies * cs.horizon, b - a)
    return float(ints @ cs.coefficients)


def control_l1_norm_bound(cs: ControlSignal) -> float:
    """Upper bound on ||p||_{L1} over the window (triangle inequality on the basis)."""
    if cs.is_zero:
        return 0.0
    T = cs.horizon
    ints = exp_integral(cs.frequencies - cs.shift_lambda, -cs.frequencies * T, T)
    return float(np.abs(cs.coefficients) @ ints)


def empirical_cost(problem, j: int, T: float, n_ctrl: int = N_CTRL_DEFAULT) -> float:
    """Largest minimum-norm ||p|| over unit data in the first ``n_ctrl`` modes.

    Computed as ||L^-1 W||_2 (L the Cholesky factor of the Gram matrix,
    W = diag(exp(-omega_k T) / |b_jk|)) times max(1, exp(-lambda_min T)).
    """
    mp = build_moment_problem(problem, j, np.zeros(n_ctrl), T, n_ctrl)
    G = gram_matrix(mp.frequencies, T)
    (L, _), _ = _factor(G)
    L = np.tril(L)
    W = np.diag(np.exp(-mp.frequencies * T) / np.abs(mp.couplings))
    X = linalg.solve_triangular(L, W, lower=True)
    smax = float(linalg.svdvals(X)[0])
    return max(1.0, math.exp(-mp.shift_lambda * T)) * smax


def gram_condition(frequencies, T: float) -> float:
    """2-norm condition number of the Gram matrix."""
    ev = linalg.eigvalsh(gram_matrix(frequencies, T))
    if ev[0] <= 0:
        return math.inf
    return float(ev[-1] / ev[0])
