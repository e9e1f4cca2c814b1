"""Galerkin simulation of the bilinear system in the eigenbasis.

The state ``x`` holds eigencoefficients and obeys

    x_k' = -lambda_k x_k - p(t) (B x + f)_k

where ``f`` is an optional fixed forcing vector (``B phi_j`` for the deviation
from an eigensolution).  The stiff diagonal part is integrated exactly and
the coupling by an explicit midpoint rule, composed as a symmetric (Strang)
splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import compute_KT, safe_exp
from .errors import PreconditionError, StiffnessError
from .moment_control import ControlSignal, control_integral, control_l1_norm_bound, exp_integral

__all__ = [
    "DT_MIN",
    "SimConfig",
    "Trajectory",
    "PiecewiseControl",
    "simulate_bilinear",
    "simulate_linear_duhamel",
    "duhamel_terminal",
    "check_apriori_v",
    "check_apriori_w",
    "spillover_check",
    "CheckResult",
]

DT_MIN = 1e-12


@dataclass(frozen=True)
class SimConfig:
    n_sim: int = 30
    dt_max: float = 1e-3
    scheme: str = "strang2"
    tol_step: float = 1e-2
    # for exponential-sum controls: dt * (fastest control rate) <= resolve
    resolve: float = 0.05
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.n_sim < 1:
            raise ValueError("n_sim must be positive")
        if not self.dt_max > 0 or not self.tol_step > 0 or not self.resolve > 0:
            raise ValueError("dt_max, tol_step and resolve must be positive")
        if self.scheme not in ("strang2", "duhamel_linear"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    n_sim: int

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def sup_norm(self) -> float:
        return float(self.norms().max())


class PiecewiseControl:
    """Concatenation of window controls; zero outside every window."""

    def __init__(self, windows=()):
        self.windows = sorted(windows, key=lambda cs: cs.t0)
        self._starts = np.array([cs.t0 for cs in self.windows])

    def __call__(self, t):
        t = float(t)
        i = int(np.searchsorted(self._starts, t, side="right")) - 1
        if i < 0:
            return 0.0
        cs = self.windows[i]
        if t > cs.t1:
            return 0.0
        return float(cs(t))

    @property
    def support_end(self) -> float:
        return self.windows[-1].t1 if self.windows else 0.0

    def integral(self, a, b):
        """int_a^b p(t) dt, exact window by window."""
        total = 0.0
        for cs in self.windows:
            lo, hi = max(a, cs.t0), min(b, cs.t1)
            if hi > lo:
                total += control_integral(cs, lo, hi)
        return total

    def __len__(self):
        return len(self.windows)


def _as_callable(control):
    if control is None:
        return None
    if isinstance(control, ControlSignal):
        return lambda t: float(control(t))
    if callable(control):
        return control
    p0 = float(control)
    return lambda t: p0


def _integral_fn(control):
    """(a, b) -> int_a^b p, exact for exponential-sum controls, None otherwise."""
    if isinstance(control, ControlSignal):
        return lambda a, b: control_integral(control, a, b)
    if isinstance(control, PiecewiseControl):
        return control.integral
    return None


def _control_rate(control) -> float:
    """Fastest exponential rate present in a control (0 if unknown or constant)."""
    if isinstance(control, ControlSignal):
        return _signal_rate(control)
    if isinstance(control, PiecewiseControl):
        return max((_signal_rate(cs) for cs in control.windows), default=0.0)
    return 0.0


def _signal_rate(cs: ControlSignal) -> float:
    if cs.is_zero:
        return 0.0
    active = cs.frequencies[cs.coefficients != 0]
    return float(np.max(np.abs(active - cs.shift_lambda)))


def _forced_flow(lam, cs: ControlSignal, f):
    """Exact flow of x' = -Lambda x - p(t) f between absolute times a and b."""
    rate = cs.frequencies - cs.shift_lambda
    A = lam[:, None] + rate[None, :]

    def step(x, a, b):
        h = b - a
        if h <= 0:
            return x
        # int_a^b exp(-lambda_k (b - s)) p(s) ds, one closed form per (mode, basis term)
        C = -lam[:, None] * h + (rate * (a - cs.window_offset) - cs.frequencies * cs.horizon)[None, :]
        return np.exp(-lam * h) * x - f * (exp_integral(A, C, h) @ cs.coefficients)

    return step


def simulate_bilinear(problem, u0, control, window, cfg: SimConfig = SimConfig(), forcing=None,
                      record: bool = True) -> Trajectory:
    """Integrate x' = -Lambda x - p(t)(B x + forcing) over ``window`` with Strang splitting.

    ``control`` is a ControlSignal, any callable p(t), a constant, or None
    (free evolution, integrated exactly in one step).  ``problem`` may be a
    shifted pair.
    """
    t0, t1 = map(float, window)
    if not t1 >= t0:
        raise ValueError("window must satisfy t0 <= t1")
    n = cfg.n_sim
    x = np.zeros(n)
    u0 = np.asarray(u0, dtype=float)
    m = min(n, u0.size)
    x[:m] = u0[:m]
    lam = problem.eigenvalues(n)
    p = _as_callable(control)

    if p is None or t1 == t0:
        xf = np.exp(-lam * (t1 - t0)) * x
        times = np.array([t0, t1]) if t1 > t0 else np.array([t0])
        states = np.vstack([x, xf]) if t1 > t0 else x[None, :]
        return Trajectory(times, states, n)

    B = problem.b_matrix(n)
    f = np.zeros(n) if forcing is None else np.asarray(forcing, dtype=float)[:n]
    bn = problem.b_norm
    rate = _control_rate(control)
    dt_cap = cfg.dt_max if rate == 0 else min(cfg.dt_max, cfg.resolve / rate)
    exact_forcing = forcing is not None and isinstance(control, ControlSignal)
    flow = _forced_flow(lam, control, f) if exact_forcing else None
    pint = _integral_fn(control) if forcing is not None and not exact_forcing else None
    times = [t0]
    states = [x.copy()]
    t = t0
    span = t1 - t0
    steps = 0
    while t1 - t > 1e-15 * max(1.0, abs(t1)):
        steps += 1
        if steps > cfg.max_steps:
            raise StiffnessError(f"step budget {cfg.max_steps} exhausted at t = {t:.17g} of [{t0:.6g}, {t1:.6g}]")
        pt = p(t)
        dt = min(dt_cap, cfg.tol_step / (bn * (1.0 + abs(pt))))
        if dt < DT_MIN:
            raise StiffnessError(f"step size {dt:.3g} below {DT_MIN:g} at t = {t:.17g} (|p| = {abs(pt):.3g})")
        remaining = t1 - t
        if dt >= remaining or remaining - dt < 1e-9 * span:
            dt = remaining
        pm = p(t + 0.5 * dt)
        if flow is not None:
            # forced diagonal flow is exact; only the coupling -p B x is split off
            x = flow(x, t, t + 0.5 * dt)
            xm = x - 0.5 * dt * pm * (B @ x)
            x = x - dt * pm * (B @ xm)
            x = flow(x, t + 0.5 * dt, t + dt)
        else:
            half = np.exp(-lam * (0.5 * dt))
            x = half * x
            xm = x - 0.5 * dt * pt * (B @ x + f)
            # the forcing part needs only int p, which is exact when available
            fint = dt * pm if pint is None else pint(t, t + dt)
            x = x - dt * pm * (B @ xm) - fint * f
            x = half * x
        t = t1 if dt == remaining else t + dt
        if record or t == t1:
            times.append(t)
            states.append(x.copy())
    return Trajectory(np.array(times), np.array(states), n)


def duhamel_terminal(problem, j: int, y0, control: ControlSignal | None, n_modes: int) -> np.ndarray:
    """Terminal state of y' + A y + p(t) B phi_j = 0 over the control's window, in closed form.

    y_k(T) = exp(-lambda_k T) y0_k - b_jk int_0^T exp(-lambda_k (T - s)) p(s) ds,
    with each integral expanded over the exponential basis of ``control``.
    """
    lam = problem.eigenvalues(n_modes)
    y0 = np.zeros(n_modes) if y0 is None else np.asarray(y0, dtype=float)
    y = np.zeros(n_modes)
    m = min(n_modes, y0.size)
    y[:m] = y0[:m]
    if control is None:
        raise ValueError("control is required (use zero_control for free decay)")
    T = control.horizon
    out = np.exp(-lam * T) * y
    if control.is_zero:
        return out
    b = problem.b_row(j, n_modes)
    om = control.frequencies
    # exponent of the integrand: -lam_k T + (lam_k - shift + omega_l) s - omega_l T
    a = lam[:, None] - control.shift_lambda + om[None, :]
    c = -(lam[:, None] + om[None, :]) * T
    ints = exp_integral(a, c, T)
    return out - b * (ints @ control.coefficients)


def simulate_linear_duhamel(problem, j: int, y0, control: ControlSignal, n_modes: int, t=None):
    """Linear trajectory at times ``t`` (absolute) within the window, or the terminal state."""
    if t is None:
        return duhamel_terminal(problem, j, y0, control, n_modes)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    rows = []
    for ti in ts:
        s = ti - control.t0
        if s <= 0:
            y = np.zeros(n_modes)
            y0a = np.asarray(y0, dtype=float)
            y[: min(n_modes, y0a.size)] = y0a[:n_modes]
            rows.append(y)
            continue
        # restrict the control to [0, s]: re-express the basis relative to the new end point
        scale = np.exp(control.frequencies * (s - control.horizon))
        sub = ControlSignal(s, control.shift_lambda, control.coefficients * scale, control.frequencies,
                            control.t0)
        rows.append(duhamel_terminal(problem, j, y0, sub, n_modes))
    return np.array(rows)


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    margin: float
    lhs: float = 0.0
    rhs: float = 0.0
    precondition_ok: bool = True
    note: str = ""

    def __bool__(self):
        return self.ok


def log_C1(T: float, v0_norm: float, NT: float, b_norm: float, sigma: float) -> float:
    return ((2 * sigma + b_norm) * T + 2 * b_norm * NT * math.sqrt(T) * v0_norm
            + math.log1p(b_norm * NT ** 2))


def check_apriori_v(problem, traj: Trajectory, control, v0_norm: float, NT: float, T: float | None = None) -> CheckResult:
    """sup_t ||v(t)||^2 <= C1(T, ||v0||) ||v0||^2; margin is rhs - lhs (in squared norm)."""
    if T is None:
        T = float(traj.times[-1] - traj.times[0])
    lhs = traj.sup_norm() ** 2
    rhs = safe_exp(log_C1(T, v0_norm, NT, problem.b_norm, problem.sigma)) * v0_norm ** 2
    return CheckResult(ok=lhs <= rhs, margin=rhs - lhs, lhs=lhs, rhs=rhs)


def check_apriori_w(problem, terminal_w_norm: float, v0_norm: float, T: float, NT: float,
                    strict: bool = False) -> CheckResult:
    """||w(T)|| <= K(T) ||v0||^2 under the smallness hypothesis N(T) ||v0|| <= 1.

    A violated hypothesis raises :class:`PreconditionError` in strict mode and is
    recorded in the result otherwise.
    """
    pre = NT * v0_norm <= 1.0
    if not pre and strict:
        raise PreconditionError(f"N(T) ||v0|| = {NT * v0_norm:.3g} > 1")
    K = compute_KT(T, NT, problem.b_norm, problem.sigma)
    rhs = K * v0_norm ** 2
    ok = terminal_w_norm <= rhs
    note = "" if pre else "smallness hypothesis N(T)||v0|| <= 1 violated"
    return CheckResult(ok=ok, margin=rhs - terminal_w_norm, lhs=terminal_w_norm, rhs=rhs,
                       precondition_ok=pre, note=note)


def spillover_check(problem, v0, traj: Trajectory, control: ControlSignal, n_ctrl: int,
                    forced: bool = True) -> CheckResult:
    """Tail modes k > n_ctrl end below free decay plus ||B|| ||p||_L1 sup||x|| (Gronwall form).

    With ``forced`` the forcing p B phi_j adds ||B|| ||p||_L1 (since ||phi_j|| = 1).
    """

    n = traj.n_sim
    if n <= n_ctrl:
        return CheckResult(ok=True, margin=0.0)
    lam = problem.eigenvalues(n)
    T = float(traj.times[-1] - traj.times[0])
    v0 = np.zeros(n) if v0 is None else np.resize(np.asarray(v0, dtype=float), n)
    free = np.linalg.norm(np.exp(-lam[n_ctrl:] * T) * v0[n_ctrl:])
    sup = max(traj.sup_norm(), 0.0)
    growth = max(1.0, math.exp(-float(lam[n_ctrl:].min()) * T))
    rhs = growth * (free + problem.b_norm * control_l1_norm_bound(control) * (sup + float(forced)))
    lhs = float(np.linalg.norm(traj.final[n_ctrl:]))
    return CheckResult(ok=lhs <= rhs, margin=rhs - lhs, lhs=lhs, rhs=rhs)
