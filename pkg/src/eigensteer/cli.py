"""Command-line front end: ``eigensteer <subcommand> [options]``.

Exit codes: 0 success/converged, 1 failed checks (``verify``), 2 window cap
reached, 3 divergence or numerical breakdown, 4 violated precondition,
64 usage error, 74 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__
from .constants import (
    auto_cost_model,
    compute_GM,
    compute_KT,
    compute_suffcond,
    CostModel,
    steering_constants,
    weighted_sum_identity,
    induction_exponent,
)
from .errors import (
    ConfigError,
    DecayPhaseError,
    DivergenceError,
    EigensteerError,
    PreconditionError,
)
from .moment_control import (
    N_CTRL_CAP,
    build_moment_problem,
    empirical_cost,
    gram_condition,
    solve_min_norm,
)
from .simulator import SimConfig, duhamel_terminal, simulate_bilinear
from .spectral_problems import GALLERY, get_problem, verify_decay, verify_gap
from .steering import (
    SteeringConfig,
    control_budget_check,
    steer_local,
    steer_semiglobal,
    steer_to_projection,
    verify_superexponential,
)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_NMAX = 2
EXIT_DIVERGED = 3
EXIT_PRECONDITION = 4
EXIT_USAGE = 64
EXIT_IO = 74

log = logging.getLogger("eigensteer")


# -- run configuration --------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    problem: str = "dirichlet-x2"
    j: int = 1
    u0: str = "eigen+eps:2:1e-3"
    T: float = 1.0
    nctrl: int = 10
    nsim: int = 0  # 0: three times nctrl
    tol: float = 1e-10
    nmax: int = 12
    strict: bool = False
    mode: str = "local"  # local | semiglobal | projection
    R: float = 1.0
    r1: float = 0.0  # 0: derived radius
    nu: str = "auto"
    T0: float = 0.3  # cost-model horizon; 0 selects min(1, 1/alpha^2)
    C: float = 1.0
    dt: float = 1e-3
    p: float = 0.0  # constant control for `simulate`
    samples: int = 101
    tgrid: str = "0.05,0.1,0.2,0.5,1.0"
    out: str = ""
    csv: str = ""

    @property
    def n_sim(self) -> int:
        return self.nsim or 3 * self.nctrl

    def validate(self):
        if self.problem not in GALLERY:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(GALLERY)}")
        for name in ("j", "nctrl", "nmax", "samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.nsim < 0:
            raise ConfigError("nsim must be nonnegative")
        if self.nctrl > N_CTRL_CAP:
            raise ConfigError(f"nctrl is capped at {N_CTRL_CAP}")
        for name in ("T", "tol", "dt", "R", "C"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.C < 1:
            raise ConfigError("C must be at least 1")
        if self.r1 < 0 or self.T0 < 0:
            raise ConfigError("r1 and T0 must be nonnegative")
        if self.mode not in ("local", "semiglobal", "projection"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.nu != "auto":
            try:
                nu = float(self.nu)
            except ValueError:
                raise ConfigError(f"nu must be 'auto' or a number, got {self.nu!r}") from None
            if not nu > 0:
                raise ConfigError("nu must be positive")
            if not self.T0 > 0:
                raise ConfigError("an explicit nu needs an explicit T0")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(name, text, line=None):
    kind = type(getattr(RunConfig(), name))
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {name}", line=line) from None


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        values[key] = _convert(key, value, lineno)
    return RunConfig(**values)


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def parse_u0(text: str, j: int, n: int) -> np.ndarray:
    """``eigen+eps:k:eps[:k:eps...]`` gives phi_j + sum eps phi_k; otherwise a comma list."""
    u = np.zeros(n)
    text = text.strip()
    if text.startswith("eigen+eps"):
        parts = text.split(":")[1:]
        if len(parts) % 2:
            raise ConfigError(f"u0 preset needs index/amplitude pairs: {text!r}")
        if j > n:
            raise ConfigError("j exceeds the simulation size")
        u[j - 1] = 1.0
        for k, eps in zip(parts[::2], parts[1::2]):
            try:
                k, eps = int(k), float(eps)
            except ValueError:
                raise ConfigError(f"bad u0 preset {text!r}") from None
            if not 1 <= k <= n:
                raise ConfigError(f"u0 mode {k} outside 1..{n}")
            u[k - 1] += eps
        return u
    try:
        coeffs = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"u0 must be a preset or a comma-separated list, got {text!r}") from None
    if len(coeffs) > n:
        if any(coeffs[n:]):
            raise ConfigError(f"u0 has nonzero coefficients beyond {n} modes")
        coeffs = coeffs[:n]
    u[: len(coeffs)] = coeffs
    return u


# -- output helpers -----------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def fmt(x) -> str:
    return f"{float(x):.16e}"


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text: str, path: str):
    if path and path != "-":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _header():
    return {"version": __version__}


# -- subcommands --------------------------------------------------------------------


def _cost_model(cfg: RunConfig, problem, j):
    if cfg.nu == "auto":
        return None, auto_cost_model(problem, j, cfg.C, cfg.T0 or None)
    cm = CostModel(float(cfg.nu), cfg.T0)
    return cm, cm


def cmd_gallery(cfg, args):
    rows = []
    for pid in GALLERY:
        p = get_problem(pid)
        rows.append({
            "id": pid,
            "sigma": p.sigma,
            "alpha": p.gap_alpha,
            "b_norm": p.b_norm,
            "decay_b": p.decay_b,
            "decay_exponent": p.decay_exponent,
            "index_origin": p.index_origin,
            "lambda_1": p.eigenvalue(1),
        })
    if args.json:
        _emit(to_json({**_header(), "problems": rows}), cfg.out)
    else:
        lines = [f"{'id':<14} {'alpha':>10} {'sigma':>6} {'q':>5} {'b':>10} {'origin':>6}"]
        for r in rows:
            lines.append(f"{r['id']:<14} {r['alpha']:>10.6f} {r['sigma']:>6g} {r['decay_exponent']:>5g} "
                         f"{r['decay_b']:>10.6f} {r['index_origin']:>6d}")
        _emit("\n".join(lines) + "\n", cfg.out)
    return EXIT_OK


def constants_record(cfg: RunConfig) -> dict:
    problem = get_problem(cfg.problem)
    j = cfg.j
    sc = compute_suffcond(problem, j, cfg.C)
    _, cm = _cost_model(cfg, problem, j)
    tc = steering_constants(problem.b_norm, problem.sigma, cm, cfg.T)
    shifted = problem.shifted(problem.eigenvalue(j))
    _, cm_s = _cost_model(cfg, shifted, j)
    tc_s = steering_constants(shifted.b_norm, shifted.sigma, cm_s, cfg.T)
    rec = {**_header(), "problem": cfg.problem, "j": j, "T": cfg.T, "C": cfg.C}
    rec.update(sc.as_dict())
    rec.update(tc.as_dict())
    rec["steering"] = {**compute_suffcond(shifted, j, cfg.C).as_dict(), **tc_s.as_dict(),
                       "lambda_shift": problem.eigenvalue(j)}
    return rec


def cmd_constants(cfg, args):
    _emit(to_json(constants_record(cfg)), cfg.out)
    return EXIT_OK


def cmd_cost(cfg, args):
    problem = get_problem(cfg.problem)
    sc = compute_suffcond(problem, cfg.j, cfg.C)
    try:
        grid = [float(t) for t in cfg.tgrid.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad tgrid {cfg.tgrid!r}") from None
    rows = []
    for T in grid:
        if not T > 0:
            raise ConfigError("tgrid values must be positive")
        mp = build_moment_problem(problem, cfg.j, np.zeros(cfg.nctrl), T, cfg.nctrl)
        N = empirical_cost(problem, cfg.j, T, cfg.nctrl)
        log_bound = sc.GammaJ / T
        rows.append([T, N, math.exp(log_bound) if log_bound < 709 else math.inf, log_bound,
                     gram_condition(mp.frequencies, T)])
    _emit(rows_to_csv(["T", "empirical_cost", "bound", "log_bound", "gram_condition"], rows), cfg.csv or cfg.out)
    return EXIT_OK


def _thin(times, states, limit=2000):
    n = len(times)
    if n <= limit:
        return times, states
    idx = np.unique(np.r_[np.linspace(0, n - 1, limit).round().astype(int), n - 1])
    return times[idx], states[idx]


def cmd_simulate(cfg, args):
    problem = get_problem(cfg.problem)
    n = cfg.n_sim
    u0 = parse_u0(cfg.u0, cfg.j, n)
    sim = SimConfig(n_sim=n, dt_max=cfg.dt)
    grid = np.linspace(0.0, cfg.T, cfg.samples)
    control = cfg.p if cfg.p != 0 else None
    states = [u0]
    x = u0
    for a, b in zip(grid[:-1], grid[1:]):
        x = simulate_bilinear(problem, x, control, (a, b), sim, record=False).final
        states.append(x)
    states = np.array(states)
    norms = np.linalg.norm(states, axis=1)
    header = ["t"] + [f"coeff_{k}" for k in range(1, n + 1)] + ["norm"]
    rows = [[t, *s, nv] for t, s, nv in zip(grid, states, norms)]
    _emit(rows_to_csv(header, rows), cfg.csv or cfg.out)
    return EXIT_OK


def _steering_config(cfg: RunConfig, problem):
    explicit, _ = _cost_model(cfg, problem.shifted(problem.eigenvalue(cfg.j)), cfg.j)
    return SteeringConfig(
        n_ctrl=cfg.nctrl, n_sim=cfg.n_sim, tol_final=cfg.tol, n_max=cfg.nmax, strict=cfg.strict,
        cost_model=explicit, C=cfg.C, T0=cfg.T0 or None, dt_max=cfg.dt,
    )


def _trajectory_rows(problem, u0, control, t_end, sim, j_target, scale=1.0):
    """Replay in original coordinates; rows t, p, error, coeffs..., norm."""
    lam = problem.eigenvalues(sim.n_sim)
    lam_t = lam[j_target - 1]
    times = [0.0]
    states = [u0]
    x = u0
    t = 0.0
    for cs in control.windows:
        if cs.t0 > t:
            x = np.exp(-lam * (cs.t0 - t)) * x
            times.append(cs.t0)
            states.append(x)
        tr = simulate_bilinear(problem, x, cs, (cs.t0, cs.t1), sim)
        times.extend(tr.times[1:])
        states.extend(tr.states[1:])
        x = tr.final
        t = cs.t1
    if t_end > t:
        for s in np.linspace(t, t_end, 11)[1:]:
            times.append(s)
            states.append(np.exp(-lam * (s - t)) * x)
    times, states = _thin(np.array(times), np.array(states))
    rows = []
    for ti, si in zip(times, states):
        target = np.zeros_like(si)
        target[j_target - 1] = scale * math.exp(-lam_t * ti)
        rows.append([ti, control(ti), float(np.linalg.norm(si - target)), *si, float(np.linalg.norm(si))])
    header = ["t", "p", "error"] + [f"coeff_{k}" for k in range(1, sim.n_sim + 1)] + ["norm"]
    return header, rows


def cmd_steer(cfg, args):
    problem = get_problem(cfg.problem)
    n = cfg.n_sim
    if n < cfg.nctrl:
        raise ConfigError("nsim must be at least nctrl")
    u0 = parse_u0(cfg.u0, cfg.j, n)
    scfg = _steering_config(cfg, problem)
    r1 = cfg.r1 or None
    code = EXIT_OK
    try:
        if cfg.mode == "local":
            control, rep = steer_local(problem, cfg.j, u0, cfg.T, scfg)
            local = rep
            t_end, j_target, scale = rep.Tf, cfg.j, 1.0
            body = rep.as_dict()
        else:
            if cfg.j != 1:
                raise ConfigError("semi-global modes steer onto the first eigensolution (j = 1)")
            fn = steer_semiglobal if cfg.mode == "semiglobal" else steer_to_projection
            control, rep = fn(problem, u0, cfg.R, scfg, r1=r1)
            local = rep.local
            t_end, j_target = rep.T_R, 1
            scale = rep.scale
            body = rep.as_dict()
    except DivergenceError as exc:
        body = {"status": "diverged", "error": str(exc)}
        if exc.report is not None:
            body = {**exc.report.as_dict(), "error": str(exc)}
        _emit(to_json({**_header(), "mode": cfg.mode, "report": body}), cfg.out)
        return EXIT_DIVERGED
    except (PreconditionError, DecayPhaseError) as exc:
        _emit(to_json({**_header(), "mode": cfg.mode, "report": {"status": "precondition", "error": str(exc)}}),
              cfg.out)
        return EXIT_PRECONDITION
    if local is not None:
        env = verify_superexponential(local)
        budget = control_budget_check(local)
        body["checks"] = {
            "superexponential_ok": env.ok,
            "superexponential_vacuous": env.vacuous,
            "empirical_envelope_ok": env.empirical_ok,
            "budget_ok": budget.ok,
            "budget_log_slack": budget.log_slack,
        }
        if local.status != "converged":
            code = EXIT_NMAX
    _emit(to_json({**_header(), "mode": cfg.mode, "config": _clean(vars_of(cfg)), "report": body}), cfg.out)
    if cfg.csv:
        header, rows = _trajectory_rows(problem, u0, control, t_end, scfg.sim, j_target, scale)
        _emit(rows_to_csv(header, rows), cfg.csv)
    return code


def vars_of(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}


# -- verify -------------------------------------------------------------------------


def quadrature_b_matrix(problem, n):
    """<B phi_j, phi_k> for j, k <= n by adaptive vector quadrature of the eigenfunctions."""
    from scipy.integrate import quad_vec

    def integrand(x):
        phi = np.array([problem.eigenfunction(k, x) for k in range(1, n + 1)])
        return np.outer(phi, phi) * (problem.potential(x) * problem.measure(x))

    lo, hi = problem.domain
    return quad_vec(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=2000)[0]


def verification_checks():
    """(name, callable returning (ok, detail)) for the invariant table."""
    checks = []

    def add(name):
        def deco(fn):
            checks.append((name, fn))
            return fn
        return deco

    for pid in GALLERY:
        @add(f"coupling oracle j,k<=40 [{pid}]")
        def _(pid=pid):
            p = get_problem(pid)
            err = float(np.abs(p.b_matrix(40) - quadrature_b_matrix(p, 40)).max())
            return err <= 1e-10, f"max abs err {err:.2e}"

        @add(f"gap >= alpha - 1e-12, K=100 [{pid}]")
        def _(pid=pid):
            p = get_problem(pid)
            g = verify_gap(p, 100)
            return g >= p.gap_alpha - 1e-12, f"min gap {g:.15g} vs alpha {p.gap_alpha:.15g}"

        @add(f"diagonal couplings nonzero, j<=40 [{pid}]")
        def _(pid=pid):
            p = get_problem(pid)
            m = min(abs(p.b_entry(j, j)) for j in range(1, 41))
            return m > 0, f"min |b_jj| {m:.3g}"

    @add("decay constant positive [dirichlet-x2, j=1, K=40]")
    def _():
        b = verify_decay(get_problem("dirichlet-x2"), 1, 40)
        return b > 0, f"b ~ {b:.6g}"

    @add("weighted-sum identity n<=60")
    def _():
        worst = max(abs(l - r) / max(abs(r), 1e-300) for l, r in (weighted_sum_identity(n) for n in range(1, 61)))
        return worst <= 1e-14, f"max rel diff {worst:.2e}"

    @add("induction exponent telescopes n<=20")
    def _():
        ok = all(induction_exponent(n) == -(n * n + 4 * n + 6) for n in range(1, 21))
        return ok, "sum 2^(n-j) j^2 = 6 2^n - n^2 - 4n - 6"

    @add("K(tau) <= exp(Gamma0/tau) [dirichlet-x2]")
    def _():
        p = get_problem("dirichlet-x2")
        cm = auto_cost_model(p, 1)
        tc = steering_constants(p.b_norm, p.sigma, cm, 1.0)
        taus = np.geomspace(1e-3, tc.T1, 100)
        from .constants import log_KT
        worst = max(log_KT(t, cm.nu / t, p.b_norm, p.sigma) - tc.Gamma0 / t for t in taus)
        return worst <= 0, f"max log slack {-worst:.4g}"

    @add("empirical cost <= exp(Gamma_j/T) [dirichlet-x2, j=1]")
    def _():
        p = get_problem("dirichlet-x2")
        g = compute_suffcond(p, 1).GammaJ
        worst = max(math.log(empirical_cost(p, 1, T, 10)) - g / T for T in (0.05, 0.1, 0.2, 0.5, 1.0))
        return worst <= 0, f"max log(N/bound) {worst:.4g}"

    @add("G_M total <= exp(2 Gamma_j / T), tail < 1e-12 [dirichlet-x2]")
    def _():
        p = get_problem("dirichlet-x2")
        sc = compute_suffcond(p, 1)
        worst = -math.inf
        tail = -math.inf
        for T in np.arange(1, 11) / 10:
            r = compute_GM(sc.M, T, p, 1, 200)
            worst = max(worst, r.log_total - 2 * sc.GammaJ / T)
            tail = max(tail, r.log_tail)
        return worst <= 0 and tail < math.log(1e-12), f"max log slack {-worst:.4g}, max log tail {tail:.4g}"

    @add("moment synthesis via Duhamel <= 1e-7 [dirichlet-x2]")
    def _():
        p = get_problem("dirichlet-x2")
        worst = 0.0
        for T in (0.1, 0.5, 1.0):
            for k in range(10):
                y = np.zeros(10)
                y[k] = 1.0
                cs = solve_min_norm(build_moment_problem(p, 1, y, T, 10))
                worst = max(worst, float(np.linalg.norm(duhamel_terminal(p, 1, y, cs, 10))))
        return worst <= 1e-7, f"max terminal norm {worst:.2e}"

    @add("strang2 order 2 (constant p)")
    def _():
        from scipy.linalg import expm

        p = get_problem("dirichlet-x2")
        u0 = np.array([1.0, 0.5, 0.2, 0.1])
        ref = expm(-(np.diag(p.eigenvalues(4)) + 3.0 * p.b_matrix(4)) * 0.5) @ u0
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            tr = simulate_bilinear(p, u0, 3.0, (0, 0.5), SimConfig(n_sim=4, dt_max=dt, tol_step=10))
            errs.append(np.linalg.norm(tr.final - ref))
        ratios = [errs[0] / errs[1], errs[1] / errs[2]]
        return all(3.5 <= r <= 4.5 for r in ratios), "ratios " + ", ".join(f"{r:.3f}" for r in ratios)

    @add("local steering desk run [dirichlet-x2, j=1]")
    def _():
        p = get_problem("dirichlet-x2")
        u0 = np.zeros(30)
        u0[[0, 1, 4]] = [1.0, 1e-3, 1e-4]
        _, rep = steer_local(p, 1, u0, 1.0, SteeringConfig(T0=0.3))
        ok = rep.converged and rep.final_error <= 1e-8 and all(w.contraction_ok for w in rep.windows)
        return ok, f"{rep.status} in {rep.windows_used} windows, error {rep.final_error:.2e}"

    return checks


def cmd_verify(cfg, args):
    results = []
    for name, fn in verification_checks():
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except EigensteerError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail, time.perf_counter() - t))
        log.info("verify %s: %s (%.2fs)", name, "pass" if ok else "FAIL", results[-1][3])
    width = max(len(r[0]) for r in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for name, ok, detail, _ in results:
        lines.append(f"{name:<{width}}  {'PASS' if ok else 'FAIL':<6}  {detail}")
    n_fail = sum(not r[1] for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    _emit("\n".join(lines) + "\n", cfg.out)
    return EXIT_OK if n_fail == 0 else EXIT_CHECKS_FAILED


# -- argument parsing ---------------------------------------------------------------


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_COMMANDS = {
    "steer": cmd_steer,
    "simulate": cmd_simulate,
    "cost": cmd_cost,
    "constants": cmd_constants,
    "gallery": cmd_gallery,
    "verify": cmd_verify,
}


def build_parser():
    parser = _Parser(prog="eigensteer", description="Bilinear steering onto eigensolutions.")
    parser.add_argument("--version", action="version", version=f"eigensteer {__version__}")
    parser.add_argument("--log", metavar="FILE", help="sidecar log file (timestamps go here only)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *names):
        p.add_argument("--config", metavar="FILE", help="key = value config file")
        opts = {
            "problem": dict(help="gallery id"),
            "j": dict(type=int, help="target eigen-index"),
            "u0": dict(help="eigen+eps:k:eps[:k:eps...] or comma-separated coefficients"),
            "T": dict(type=float, help="horizon"),
            "nctrl": dict(type=int),
            "nsim": dict(type=int),
            "tol": dict(type=float, help="terminal tolerance on ||v||"),
            "nmax": dict(type=int, help="window cap"),
            "mode": dict(choices=["local", "semiglobal", "projection"]),
            "R": dict(type=float, help="radius for semi-global modes"),
            "r1": dict(type=float, help="override of the local radius r_1"),
            "nu": dict(help="cost rate or 'auto'"),
            "T0": dict(type=float, help="cost-model horizon"),
            "C": dict(type=float, help="constant of the biorthogonal estimate (>= 1)"),
            "dt": dict(type=float, help="maximal time step"),
            "p": dict(type=float, help="constant control"),
            "samples": dict(type=int, help="output samples"),
            "tgrid": dict(help="comma-separated horizons"),
            "out": dict(help="output path (default stdout)"),
            "csv": dict(help="CSV output path"),
        }
        for name in names:
            p.add_argument(f"--{name}", dest=name, default=None, **opts[name])

    p = sub.add_parser("steer", help="run the steering algorithm")
    common(p, "problem", "j", "u0", "T", "nctrl", "nsim", "tol", "nmax", "mode", "R", "r1", "nu", "T0", "C", "dt",
           "out", "csv")
    p.add_argument("--strict", dest="strict", action="store_true", default=None)
    p = sub.add_parser("simulate", help="simulate the bilinear system")
    common(p, "problem", "j", "u0", "T", "nsim", "dt", "p", "samples", "out", "csv")
    p = sub.add_parser("cost", help="empirical control cost over a horizon grid (CSV)")
    common(p, "problem", "j", "nctrl", "C", "tgrid", "out", "csv")
    p = sub.add_parser("constants", help="constants record (JSON)")
    common(p, "problem", "j", "T", "nu", "T0", "C", "out")
    p = sub.add_parser("gallery", help="list gallery problems")
    common(p, "out")
    p.add_argument("--json", action="store_true")
    p = sub.add_parser("verify", help="run the invariant suite")
    common(p, "out")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in _FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides).validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"eigensteer: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.log:
        try:
            handler = logging.FileHandler(args.log, encoding="utf-8")
        except OSError as exc:
            sys.stderr.write(f"eigensteer: cannot open log file: {exc}\n")
            return EXIT_IO
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root = logging.getLogger("eigensteer")
        root.addHandler(handler)
        root.setLevel(logging.INFO)
    try:
        cfg = resolve_config(args)
        log.info("command %s with config %s", args.command, vars_of(cfg))
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        sys.stderr.write(f"eigensteer: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"eigensteer: I/O error: {exc}\n")
        return EXIT_IO
    except (PreconditionError, DecayPhaseError) as exc:
        sys.stderr.write(f"eigensteer: precondition violated: {exc}\n")
        return EXIT_PRECONDITION
    except EigensteerError as exc:
        sys.stderr.write(f"eigensteer: {type(exc).__name__}: {exc}\n")
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
