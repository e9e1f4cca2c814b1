"""Iterative steering of the bilinear system onto an eigensolution.

Working in the shifted variable ``z = exp(lambda_j t) u`` the target becomes
the steady state ``phi_j`` of ``z' + (A - lambda_j) z + p B z = 0``.  The
deviation ``v = z - phi_j`` is driven to zero window by window: on window
``n`` (length ``T1 / n^2``) the linearized null control for ``v_{n-1}`` is
synthesized and applied to the full nonlinear system, which leaves a residual
of quadratic size.  Repeating makes ``||v_n||`` decay doubly exponentially.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import (
    CostModel,
    SteeringConstants,
    auto_cost_model,
    log_control_norm_bound,
    log_KT,
    steering_constants,
)
from .errors import DecayPhaseError, DivergenceError, PreconditionError
from .moment_control import (
    N_CTRL_DEFAULT,
    build_moment_problem,
    control_l2_norm,
    empirical_cost,
    gram_condition,
    solve_min_norm,
)
from .simulator import (
    CheckResult,
    PiecewiseControl,
    SimConfig,
    check_apriori_v,
    check_apriori_w,
    duhamel_terminal,
    simulate_bilinear,
    spillover_check,
)

__all__ = [
    "SteeringConfig",
    "WindowRecord",
    "SteeringReport",
    "SemiGlobalReport",
    "steer_local",
    "verify_superexponential",
    "control_budget_check",
    "semiglobal_radius",
    "free_decay_time",
    "steer_semiglobal",
    "steer_to_projection",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SteeringConfig:
    n_ctrl: int = N_CTRL_DEFAULT
    n_sim: int | None = None
    tol_final: float = 1e-10
    n_max: int = 12
    strict: bool = False
    cost_model: CostModel | None = None  # None: derived from the sufficient cost condition
    C: float = 1.0
    T0: float | None = None  # horizon of the derived cost model (None: min(1, 1/alpha^2))
    dt_max: float = 1e-3
    tol_step: float = 1e-2
    max_steps: int = 400_000
    check_unshifted: bool = True

    def __post_init__(self):
        if self.n_sim is None:
            object.__setattr__(self, "n_sim", 3 * self.n_ctrl)
        if self.n_sim < self.n_ctrl:
            raise ValueError("n_sim must be at least n_ctrl")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not self.tol_final > 0:
            raise ValueError("tol_final must be positive")

    @property
    def sim(self) -> SimConfig:
        return SimConfig(n_sim=self.n_sim, dt_max=self.dt_max, tol_step=self.tol_step, max_steps=self.max_steps)


def _plain(obj):
    """Recursively replace numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class WindowRecord:
    n: int
    T_n: float
    tau_start: float
    tau_end: float
    v_prev_norm: float
    v_norm: float
    p_norm: float
    N_emp: float
    log_K: float
    contraction_ratio: float
    contraction_ok: bool
    smallness: float
    cost_bound_ok: bool
    gram_condition: float
    regularized: bool
    apriori_v: CheckResult
    apriori_w: CheckResult
    spillover: CheckResult
    linear_terminal_norm: float
    flags: list = field(default_factory=list)

    @property
    def K(self) -> float:
        return math.exp(self.log_K) if self.log_K < 709 else math.inf

    def as_dict(self):
        d = asdict(self)
        d["K"] = self.K
        return _plain(d)


@dataclass
class SteeringReport:
    problem: str
    j: int
    T: float
    windows: list
    constants: SteeringConstants
    v0_norm: float
    final_v_norm: float
    final_error: float
    Tf: float
    status: str
    config: SteeringConfig
    inside_guarantee: bool
    t_start: float = 0.0
    unshifted_error: float | None = None
    unshifted_discrepancy: float | None = None
    flags: list = field(default_factory=list)

    @property
    def windows_used(self) -> int:
        return len(self.windows)

    @property
    def total_p_sq(self) -> float:
        return math.fsum(w.p_norm ** 2 for w in self.windows)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def as_dict(self):
        cfg = asdict(self.config)
        cm = self.config.cost_model
        cfg["cost_model"] = None if cm is None else {"nu": cm.nu, "T0": cm.T0}
        return _plain({
            "problem": self.problem,
            "j": self.j,
            "T": self.T,
            "t_start": self.t_start,
            "status": self.status,
            "windows_used": self.windows_used,
            "v0_norm": self.v0_norm,
            "final_v_norm": self.final_v_norm,
            "final_error": self.final_error,
            "Tf": self.Tf,
            "total_p_sq": self.total_p_sq,
            "inside_guarantee": self.inside_guarantee,
            "unshifted_error": self.unshifted_error,
            "unshifted_discrepancy": self.unshifted_discrepancy,
            "flags": list(self.flags),
            "constants": self.constants.as_dict(),
            "config": cfg,
            "windows": [w.as_dict() for w in self.windows],
        })


def _pad(u0, n):
    u0 = np.asarray(u0, dtype=float).ravel()
    if u0.size > n and np.any(u0[n:]):
        raise ValueError(f"initial datum has nonzero coefficients beyond n_sim = {n}")
    out = np.zeros(n)
    m = min(n, u0.size)
    out[:m] = u0[:m]
    return out


def _cost_model(shifted, j, cfg):
    return cfg.cost_model if cfg.cost_model is not None else auto_cost_model(shifted, j, cfg.C, cfg.T0)


def steer_local(problem, j: int, u0, T: float, cfg: SteeringConfig = SteeringConfig(), t_start: float = 0.0):
    """Steer ``u0`` onto psi_j within the horizon ``T``.

    Returns ``(control, report)``; ``control`` is a :class:`PiecewiseControl`
    in absolute time (windows start at ``t_start``) and vanishes after the last
    window.  Errors are measured at ``T_f`` in the original coordinates.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    n_sim = cfg.n_sim
    if j > cfg.n_ctrl:
        raise ValueError("target index j must not exceed n_ctrl")
    lam_j = problem.eigenvalue(j)
    shifted = problem.shifted(lam_j)
    cm = _cost_model(shifted, j, cfg)
    consts = steering_constants(shifted.b_norm, shifted.sigma, cm, T)
    sched = consts.schedule
    Tf = consts.Tf

    z0 = _pad(u0, n_sim)
    e_j = np.zeros(n_sim)
    e_j[j - 1] = 1.0
    v = z0 - e_j
    v0_norm = float(np.linalg.norm(v))
    inside = v0_norm == 0 or math.log(v0_norm) < consts.log_RT
    flags = []
    if not inside:
        msg = f"||u0 - phi_j|| = {v0_norm:.3g} is outside the guaranteed radius exp({consts.log_RT:.6g})"
        if cfg.strict:
            raise PreconditionError(msg)
        flags.append("outside_guarantee")
        log.info(msg)

    forcing = shifted.b_row(j, n_sim)
    sim = cfg.sim
    windows = []
    controls = []
    status = "n_max"
    bad_streak = 0
    v_norm = v0_norm
    tau = 0.0

    if v0_norm <= cfg.tol_final:
        status = "converged"
    else:
        for n in range(1, cfg.n_max + 1):
            T_n = sched.window_length(n)
            tau_prev, tau = tau, sched.tau(n)
            v_prev, v_prev_norm = v, v_norm
            mp = build_moment_problem(shifted, j, v_prev[: cfg.n_ctrl], T_n, cfg.n_ctrl)
            cs = solve_min_norm(mp, window_offset=t_start + tau_prev)
            traj = simulate_bilinear(shifted, v_prev, cs, (t_start + tau_prev, t_start + tau), sim,
                                     forcing=forcing)
            v = traj.final
            v_norm = float(np.linalg.norm(v))

            N_emp = empirical_cost(shifted, j, T_n, cfg.n_ctrl)
            lK = log_KT(T_n, math.log(N_emp), shifted.b_norm, shifted.sigma)
            ratio = v_norm / v_prev_norm ** 2
            contraction_ok = v_norm == 0 or math.log(v_norm) <= lK + 2 * math.log(v_prev_norm)
            p_norm = control_l2_norm(cs)
            y = duhamel_terminal(shifted, j, v_prev, cs, n_sim)
            w_norm = float(np.linalg.norm(v - y))
            chk_w = check_apriori_w(shifted, w_norm, v_prev_norm, T_n, N_emp, strict=cfg.strict)
            chk_v = check_apriori_v(shifted, traj, cs, v_prev_norm, N_emp, T_n)
            spill = spillover_check(shifted, v_prev, traj, cs, cfg.n_ctrl)
            smallness = N_emp * v_prev_norm
            cost_ok = math.log(p_norm) <= cm.nu / T_n + math.log(v_prev_norm) if p_norm > 0 else True
            wflags = []
            if cs.regularized:
                wflags.append("regularized")
            if not chk_w.precondition_ok:
                wflags.append("smallness_violated")
            if not contraction_ok:
                wflags.append("contraction_violated")
            rec = WindowRecord(
                n=n, T_n=T_n, tau_start=tau_prev, tau_end=tau,
                v_prev_norm=v_prev_norm, v_norm=v_norm, p_norm=p_norm, N_emp=N_emp, log_K=lK,
                contraction_ratio=ratio, contraction_ok=contraction_ok, smallness=smallness,
                cost_bound_ok=cost_ok, gram_condition=gram_condition(mp.frequencies, T_n),
                regularized=cs.regularized, apriori_v=chk_v, apriori_w=chk_w, spillover=spill,
                linear_terminal_norm=float(np.linalg.norm(y)), flags=wflags,
            )
            windows.append(rec)
            controls.append(cs)
            log.debug("window %d: T_n=%.4g |v|=%.3e -> %.3e |p|=%.3e", n, T_n, v_prev_norm, v_norm, p_norm)

            if v_norm <= cfg.tol_final:
                status = "converged"
                break
            bad_streak = bad_streak + 1 if v_norm > v_prev_norm else 0
            if bad_streak >= 2:
                report = SteeringReport(problem.name, j, T, windows, consts, v0_norm, v_norm, math.nan, Tf,
                                        "diverged", cfg, inside, t_start, flags=flags)
                raise DivergenceError(f"no contraction in windows {n - 1} and {n}", report=report)

    # free evolution (p = 0) from the end of the last window to T_f
    lam_s = shifted.eigenvalues(n_sim)
    vf = np.exp(-lam_s * (Tf - tau)) * v
    final_v = float(np.linalg.norm(vf))
    final_err = math.exp(-lam_j * Tf) * final_v
    control = PiecewiseControl(controls)
    report = SteeringReport(problem.name, j, T, windows, consts, v0_norm, final_v, final_err, Tf, status, cfg,
                            inside, t_start, flags=flags)
    if cfg.check_unshifted:
        # replay in the original coordinates with the same control
        u = z0
        for cs in controls:
            u = simulate_bilinear(problem, u, cs, (cs.t0, cs.t1), sim, record=False).final
        lam = problem.eigenvalues(n_sim)
        u = np.exp(-lam * (Tf - tau)) * u
        # the replay starts at t_start in unshifted time: compare e^{-lam_j Tf} (phi_j + v(Tf))
        target = math.exp(-lam_j * Tf) * e_j
        report.unshifted_error = float(np.linalg.norm(u - target))
        report.unshifted_discrepancy = float(np.linalg.norm(u - math.exp(-lam_j * Tf) * (e_j + vf)))
    return control, report


@dataclass(frozen=True)
class EnvelopeCheck:
    ok: bool
    vacuous: bool
    log_slack: list
    empirical_ok: bool
    log_log_slopes: list

    def __bool__(self):
        return self.ok


def verify_superexponential(report: SteeringReport, Gamma0: float | None = None, T1: float | None = None) -> EnvelopeCheck:
    """Check ||v_n|| <= (exp(6 Gamma0 / T1) ||v0||)^(2^n) at every recorded window.

    Slack is reported in log form.  When the base is >= 1 the envelope is
    vacuous (it holds trivially) and ``vacuous`` is set.  The empirical
    envelope ``E_n = K(T_n) E_{n-1}^2`` built from the recorded K values is
    checked as well.
    """
    c = report.constants
    Gamma0 = c.Gamma0 if Gamma0 is None else Gamma0
    T1 = c.T1 if T1 is None else T1
    if report.v0_norm == 0:
        return EnvelopeCheck(True, False, [], True, [])
    log_base = 6 * Gamma0 / T1 + math.log(report.v0_norm)
    slack = []
    for w in report.windows:
        lhs = math.log(w.v_norm) if w.v_norm > 0 else -math.inf
        slack.append(2.0 ** w.n * log_base - lhs)
    ok = all(s >= 0 for s in slack)
    log_E = math.log(report.v0_norm)
    emp_ok = True
    for w in report.windows:
        log_E = w.log_K + 2 * log_E
        if w.v_norm > 0 and math.log(w.v_norm) > log_E:
            emp_ok = False
    norms = [report.v0_norm] + [w.v_norm for w in report.windows]
    loglog = [math.log(-math.log(x)) for x in norms if 0 < x < 1]
    slopes = list(np.diff(loglog)) if len(loglog) > 1 else []
    return EnvelopeCheck(ok, log_base >= 0, slack, emp_ok, [float(s) for s in slopes])


@dataclass(frozen=True)
class BudgetCheck:
    ok: bool
    total: float
    log_bound: float
    log_slack: float

    def __bool__(self):
        return self.ok


def control_budget_check(report: SteeringReport, Gamma0: float | None = None, Tf: float | None = None) -> BudgetCheck:
    """sum_n ||p_n||^2 against the square of the closed-form control-norm bound (log form)."""
    Gamma0 = report.constants.Gamma0 if Gamma0 is None else Gamma0
    Tf = report.Tf if Tf is None else Tf
    total = report.total_p_sq
    log_bound = 2 * log_control_norm_bound(Gamma0, Tf)
    if total == 0:
        return BudgetCheck(True, 0.0, log_bound, math.inf)
    slack = log_bound - math.log(total)
    return BudgetCheck(slack >= 0 and math.isfinite(total), total, log_bound, slack)


# -- semi-global phase --------------------------------------------------------------


def semiglobal_radius(problem, cfg: SteeringConfig = SteeringConfig()) -> float:
    """log r_1 = log R_{T=1} - log(sqrt 2) for the pair shifted to lambda_1 = 0."""
    shifted = problem.shifted(problem.eigenvalue(1))
    cm = _cost_model(shifted, 1, cfg)
    consts = steering_constants(shifted.b_norm, shifted.sigma, cm, 1.0)
    return consts.log_RT - 0.5 * math.log(2.0)


def free_decay_time(R: float, log_r1: float, lambda2: float) -> float:
    """t_R = log(R^2 / r_1^2) / (2 lambda_2), or 0 when R <= r_1."""
    log_R = math.log(R)
    if log_R <= log_r1:
        return 0.0
    return (2 * log_R - 2 * log_r1) / (2 * lambda2)


@dataclass
class SemiGlobalReport:
    t_R: float
    T_R: float
    log_r1: float
    log_post_decay_norm: float
    local: SteeringReport | None
    final_error: float
    scale: float = 1.0
    unscaled_error: float | None = None

    def as_dict(self):
        return {
            "t_R": self.t_R,
            "T_R": self.T_R,
            "log_r1": self.log_r1,
            "log_post_decay_norm": self.log_post_decay_norm,
            "final_error": self.final_error,
            "scale": self.scale,
            "unscaled_error": self.unscaled_error,
            "local": None if self.local is None else self.local.as_dict(),
        }


def steer_semiglobal(problem, u0, R: float, cfg: SteeringConfig = SteeringConfig(), r1: float | None = None):
    """Free decay on [0, t_R] followed by a local steering phase of length 1.

    ``r1`` overrides the default radius R_{T=1}/sqrt(2), which is usually far
    below binary64 range for realistic constants.
    """
    if problem.sigma > 0 and cfg.strict:
        raise PreconditionError("semi-global steering needs sigma = 0")
    n_sim = cfg.n_sim
    u = _pad(u0, n_sim)
    lam1 = problem.eigenvalue(1)
    lam = problem.eigenvalues(n_sim) - lam1
    log_r1 = semiglobal_radius(problem, cfg) if r1 is None else math.log(r1)
    gamma = u[0]
    if gamma != 1.0 and not math.log(abs(gamma - 1.0)) < log_r1:
        raise PreconditionError(f"|<u0, phi_1> - 1| = {abs(gamma - 1.0):.3g} is not below r_1")
    perp = u.copy()
    perp[0] = 0.0
    perp_norm = float(np.linalg.norm(perp))
    if perp_norm > R:
        raise PreconditionError(f"||u0 - <u0,phi_1> phi_1|| = {perp_norm:.3g} exceeds R = {R:g}")

    t_R = free_decay_time(R, log_r1, float(lam[1]))
    # decay in the shifted coordinates, tracked in log form to survive underflow
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(perp)) - lam * t_R
    log_perp = float(np.logaddexp.reduce(2 * log_abs)) / 2 if perp_norm > 0 else -math.inf
    v1 = gamma - 1.0
    log_v = float(np.logaddexp(2 * math.log(abs(v1)) if v1 else -math.inf, 2 * log_perp)) / 2
    if t_R > 0 and not log_v < log_r1 + 0.5 * math.log(2.0):
        raise DecayPhaseError(f"post-decay log-norm {log_v:.6g} not below log(sqrt2 r_1) = "
                              f"{log_r1 + 0.5 * math.log(2.0):.6g}", log_norm=log_v)
    z = np.exp(-lam * t_R) * u  # shifted state at t_R
    control, local = steer_local(problem, 1, z, 1.0, cfg, t_start=t_R)
    T_R = t_R + 1.0
    # the local phase ends at t_R + T_f <= T_R; the rest is free decay of the target itself
    final_error = math.exp(-lam1 * (t_R + local.Tf)) * local.final_v_norm
    rep = SemiGlobalReport(t_R=t_R, T_R=T_R, log_r1=log_r1, log_post_decay_norm=log_v, local=local,
                           final_error=final_error)
    return control, rep


def steer_to_projection(problem, u0, R: float, cfg: SteeringConfig = SteeringConfig(), r1: float | None = None):
    """Steer ``u0`` onto <u0, phi_1> psi_1 by rescaling to the unit ray.

    Requires the cone condition ||u0 - <u0,phi_1> phi_1|| <= R |<u0,phi_1>|.
    The rescaled control is replayed on the unscaled datum and the terminal
    error against <u0,phi_1> psi_1(T_R) is stored as ``unscaled_error``.
    """
    n_sim = cfg.n_sim
    u = _pad(u0, n_sim)
    gamma = float(u[0])
    perp = u.copy()
    perp[0] = 0.0
    perp_norm = float(np.linalg.norm(perp))
    if perp_norm > R * abs(gamma) * (1 + 1e-14):
        raise PreconditionError(f"cone condition violated: {perp_norm:.6g} > R |gamma| = {R * abs(gamma):.6g}")
    if gamma == 0.0:
        # the cone condition forces u0 = 0, which the zero control keeps at 0
        return PiecewiseControl([]), SemiGlobalReport(0.0, 1.0, math.nan, -math.inf, None, 0.0, scale=0.0,
                                                      unscaled_error=0.0)
    control, rep = steer_semiglobal(problem, u / gamma, R, cfg, r1=r1)
    rep.scale = gamma
    # replay the unscaled system: free decay, then the controlled windows, then free decay to T_R
    lam = problem.eigenvalues(n_sim)
    sim = cfg.sim
    x = np.exp(-lam * rep.t_R) * u
    t = rep.t_R
    for cs in control.windows:
        x = simulate_bilinear(problem, x, cs, (cs.t0, cs.t1), sim, record=False).final
        t = cs.t1
    x = np.exp(-lam * (rep.T_R - t)) * x
    target = np.zeros(n_sim)
    target[0] = gamma * math.exp(-lam[0] * rep.T_R)
    rep.unscaled_error = float(np.linalg.norm(x - target))
    rep.final_error = abs(gamma) * rep.final_error
    return control, rep
