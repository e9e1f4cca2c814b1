"""Closed-form constants of the local controllability and control-cost bounds.

Every bound that mixes large exponentials is available in log form
(``log_*``).  The plain versions exponentiate and return ``inf`` when the
value is not representable in binary64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gamma as gamma_fn, gammaincc, logsumexp

from .errors import DegenerateCouplingError, TruncationError

__all__ = [
    "CostModel",
    "Schedule",
    "SteeringConstants",
    "SuffCondConstants",
    "GMResult",
    "compute_D",
    "compute_gamma0",
    "compute_schedule",
    "steering_constants",
    "weighted_sum_identity",
    "induction_exponent",
    "compute_KT",
    "log_KT",
    "compute_suffcond",
    "auto_cost_model",
    "compute_GM",
    "control_norm_bound",
    "log_control_norm_bound",
    "safe_exp",
]

PI2_6 = math.pi ** 2 / 6


def safe_exp(x: float) -> float:
    """exp(x), or inf when it overflows."""
    return math.exp(x) if x < 709.0 else math.inf


@dataclass(frozen=True)
class CostModel:
    """Control-cost hypothesis N(tau) <= exp(nu / tau) for 0 < tau <= T0."""

    nu: float
    T0: float

    def __post_init__(self):
        if not self.nu > 0 or not self.T0 > 0:
            raise ValueError(f"cost model needs nu > 0 and T0 > 0, got {self}")

    def log_bound(self, tau):
        return self.nu / tau


def compute_D(b_norm: float, sigma: float) -> float:
    return 2 * b_norm * math.exp(2 * sigma + 1.5 * b_norm + 0.5) * max(1.0, b_norm)


def compute_gamma0(cost_model: CostModel, D: float) -> float:
    if D <= 0:
        raise ValueError("D must be positive")
    return 2 * cost_model.nu + max(math.log(D), 0.0)


@dataclass(frozen=True)
class Schedule:
    """Window lengths T_n = T1 / n^2 and partial sums tau_n, converging to Tf."""

    T: float
    T0: float
    T1: float
    Tf: float

    def window_length(self, n: int) -> float:
        if n < 1:
            raise ValueError("windows are numbered from 1")
        return self.T1 / n ** 2

    def tau(self, n: int) -> float:
        # sum in increasing order of magnitude is not needed at n <= 1e6
        return math.fsum(self.T1 / m ** 2 for m in range(1, n + 1))

    def windows(self, n_max: int):
        """List of (T_n, tau_n) for n = 1..n_max."""
        out = []
        for n in range(1, n_max + 1):
            out.append((self.window_length(n), self.tau(n)))
        return out


def compute_schedule(T: float, T0: float) -> Schedule:
    if not T > 0 or not T0 > 0:
        raise ValueError("T and T0 must be positive")
    Tf = min(T, PI2_6, PI2_6 * T0)
    T1 = min(6 * T / math.pi ** 2, 1.0, T0)
    return Schedule(T=T, T0=T0, T1=T1, Tf=Tf)


@dataclass(frozen=True)
class SteeringConstants:
    D: float
    Gamma0: float
    T1: float
    Tf: float
    log_RT: float
    cost_model: CostModel
    schedule: Schedule = field(repr=False)

    @property
    def RT(self) -> float:
        return math.exp(self.log_RT)

    def as_dict(self):
        return {
            "D": self.D,
            "Gamma0": self.Gamma0,
            "T1": self.T1,
            "Tf": self.Tf,
            "RT": self.RT,
            "log_RT": self.log_RT,
            "nu": self.cost_model.nu,
            "T0": self.cost_model.T0,
        }


def steering_constants(b_norm: float, sigma: float, cost_model: CostModel, T: float) -> SteeringConstants:
    D = compute_D(b_norm, sigma)
    gamma0 = compute_gamma0(cost_model, D)
    sched = compute_schedule(T, cost_model.T0)
    return SteeringConstants(
        D=D,
        Gamma0=gamma0,
        T1=sched.T1,
        Tf=sched.Tf,
        log_RT=-6 * gamma0 / sched.T1,
        cost_model=cost_model,
        schedule=sched,
    )


def weighted_sum_identity(n: int):
    """Both sides of sum_{j=0}^n j^2/2^j = 2^-n (-n^2 - 4n + 6(2^n - 1))."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    lhs = math.fsum(j * j / 2.0 ** j for j in range(n + 1))
    rhs = 2.0 ** -n * (-n * n - 4 * n + 6 * (2.0 ** n - 1))
    return lhs, rhs


def induction_exponent(n: int) -> int:
    """sum_{j=1}^n 2^(n-j) j^2 - 6 * 2^n, the exponent (in units Gamma0/T1) of the n-th bound."""
    return sum(2 ** (n - j) * j * j for j in range(1, n + 1)) - 6 * 2 ** n


def log_KT(T: float, log_NT: float, b_norm: float, sigma: float) -> float:
    """log K(T), with the cost given as log N(T)."""
    if not T > 0:
        raise ValueError("T must be positive")
    if log_NT == -math.inf:
        return -math.inf
    expo = (4 * sigma + b_norm + 1) * T + 2 * b_norm * math.sqrt(T)
    log_k2 = 2 * math.log(b_norm) + 2 * log_NT + expo + np.logaddexp(0.0, math.log(b_norm) + 2 * log_NT)
    return 0.5 * float(log_k2)


def compute_KT(T: float, NT: float, b_norm: float, sigma: float) -> float:
    if NT < 0:
        raise ValueError("NT must be nonnegative")
    if NT == 0:
        return 0.0
    return safe_exp(log_KT(T, math.log(NT), b_norm, sigma))


@dataclass(frozen=True)
class SuffCondConstants:
    C: float
    M: float
    Cq: float
    Cqa: float
    GammaJ: float
    b: float
    q: float
    alpha: float
    b_jj: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("C", "M", "Cq", "Cqa", "GammaJ", "b", "q", "alpha", "b_jj")}


def compute_suffcond(problem, j: int, C: float = 1.0, b: float | None = None) -> SuffCondConstants:
    """Constants M, C_q, C_{q,alpha} and Gamma_j of the sufficient cost condition.

    ``b`` defaults to the problem's decay constant for index ``j``.
    """
    if C < 1:
        raise ValueError("C must be at least 1")
    lam = problem.eigenvalues(max(2, j))
    lam1, lam2 = lam[0], lam[1]
    alpha = problem.gap_alpha
    q = problem.decay_exponent
    b_jj = problem.b_entry(j, j)
    if b_jj == 0.0:
        raise DegenerateCouplingError(j, j)
    if b is None:
        b = problem.decay_constant(j)
    M = C ** 2 * (1 + 1 / alpha ** 2) ** 2 + 2 * abs(lam1)
    Cq = 2 * (2 * q / math.e) ** (2 * q)
    Cqa = 2 * gamma_fn(2 * q + 1) / (alpha * math.sqrt(lam2 - lam1))
    logs = [
        math.log(3 * M / b_jj ** 2),
        math.log(3 * M * Cq / b ** 2),
        math.log(3 * M * Cqa / b ** 2),
        0.0,
    ]
    two_gamma = M + M ** 2 / 4 + (2 * q + 5) * math.e + max(logs)
    return SuffCondConstants(C=C, M=M, Cq=Cq, Cqa=Cqa, GammaJ=two_gamma / 2, b=b, q=q, alpha=alpha, b_jj=b_jj)


def auto_cost_model(problem, j: int, C: float = 1.0, T0: float | None = None) -> CostModel:
    """Cost model nu = Gamma_j on (0, min(1, 1/alpha^2)] from the sufficient condition.

    A larger ``T0`` is accepted: the cost is nonincreasing in the horizon
    (controls extend by zero), so N(tau) <= exp(nu T0 / (T_base tau)) on
    (0, T0] and the returned rate is scaled accordingly.
    """
    sc = compute_suffcond(problem, j, C)
    base = min(1.0, 1.0 / problem.gap_alpha ** 2)
    if T0 is None:
        return CostModel(nu=sc.GammaJ, T0=base)
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    return CostModel(nu=sc.GammaJ * max(1.0, T0 / base), T0=T0)


class GMResult(NamedTuple):
    value: float
    tail_bound: float
    log_value: float
    log_tail: float

    @property
    def log_total(self) -> float:
        return float(np.logaddexp(self.log_value, self.log_tail))


def _log_upper_gamma(s: float, x: float) -> float:
    """log Gamma(s, x) for s >= 1, switching to a rigorous upper bound when it underflows."""
    reg = gammaincc(s, x)
    if reg > 1e-290:
        return math.log(reg) + math.lgamma(s)
    # Gamma(s,x) <= x^(s-1) e^-x / (1 - (s-1)/x) for x > s - 1
    return (s - 1) * math.log(x) - x - math.log1p(-(s - 1) / x)


def compute_GM(M: float, T: float, problem, j: int, trunc: int, tol: float = 1e-12) -> GMResult:
    """Truncated G_M(T) series plus a rigorous bound on the neglected tail.

    The tail over k > trunc is bounded using the decay condition on the
    couplings, monotonicity of exp(-w T + M sqrt w) past its maximizer and the
    integral comparison enabled by the gap condition.  Raises
    :class:`TruncationError` if the truncation index is not past both
    maximizers or the tail bound exceeds ``tol``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if trunc < j:
        raise ValueError("trunc must be >= j")
    lam = problem.eigenvalues(trunc + 1)
    omega = lam - lam[0]
    b_row = problem.b_row(j, trunc)
    if np.any(b_row == 0.0):
        k = int(np.flatnonzero(b_row == 0.0)[0]) + 1
        raise DegenerateCouplingError(j, k)
    om = omega[:trunc]
    log_terms = -2 * om * T + M * np.sqrt(om) - 2 * np.log(np.abs(b_row))
    prefix = math.log(M) - 4 * math.log(T) + M / T
    log_value = prefix + float(logsumexp(log_terms))

    q = problem.decay_exponent
    wK = float(omega[trunc - 1])
    if wK < max(2 * q / T, (M / (2 * T)) ** 2):
        raise TruncationError(f"trunc={trunc} is below the monotone regime of the tail at T={T}")
    b = problem.decay_constant(j)
    # omega_{k+1} - omega_k >= alpha (sqrt omega_{k+1} + sqrt omega_k) >= 2 alpha sqrt omega_K for k >= K
    gap = 2 * problem.gap_alpha * math.sqrt(wK)
    s = 2 * q + 1
    log_integral = _log_upper_gamma(s, wK * T) - s * math.log(T)
    log_tail = prefix + (-wK * T + M * math.sqrt(wK)) - 2 * math.log(b) - math.log(gap) + log_integral
    if log_tail > math.log(tol):
        raise TruncationError(f"tail bound exp({log_tail:.4g}) exceeds tolerance {tol:g}")
    return GMResult(
        value=safe_exp(log_value),
        tail_bound=safe_exp(log_tail) if log_tail > -745 else 0.0,
        log_value=log_value,
        log_tail=log_tail,
    )


def log_control_norm_bound(Gamma0: float, T: float) -> float:
    if not Gamma0 > 0 or not T > 0:
        raise ValueError("Gamma0 and T must be positive")
    x = 2 * math.pi ** 2 * Gamma0 / (3 * T)
    log_den = x + math.log(-math.expm1(-x)) if x > 30 else math.log(math.expm1(x))
    return -math.pi ** 2 * Gamma0 / T - log_den


def control_norm_bound(Gamma0: float, T: float) -> float:
    """exp(-pi^2 Gamma0 / T) / (exp(2 pi^2 Gamma0 / (3T)) - 1)."""
    lv = log_control_norm_bound(Gamma0, T)
    return math.exp(lv) if lv > -745 else 0.0
