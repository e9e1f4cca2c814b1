import math

import numpy as np
import pytest

from eigensteer.constants import (
    CostModel,
    auto_cost_model,
    compute_D,
    compute_GM,
    compute_KT,
    compute_gamma0,
    compute_schedule,
    compute_suffcond,
    control_norm_bound,
    induction_exponent,
    log_control_norm_bound,
    log_KT,
    steering_constants,
    weighted_sum_identity,
)
from eigensteer.errors import DegenerateCouplingError, TruncationError
from eigensteer.spectral_problems import get_problem

E = math.e


def test_D_examples():
    assert compute_D(1.0, 0.0) == pytest.approx(2 * E ** 2, rel=1e-15)
    assert compute_D(1.0, 1.0) == pytest.approx(2 * E ** 4, rel=1e-15)
    assert compute_D(2.0, 0.0) > compute_D(1.0, 0.0)


def test_gamma0_examples():
    assert compute_gamma0(CostModel(1.0, 1.0), 1.0) == 2.0
    assert compute_gamma0(CostModel(1.0, 1.0), E) == pytest.approx(3.0, rel=1e-15)
    assert compute_gamma0(CostModel(0.5, 1.0), 0.1) == 1.0
    with pytest.raises(ValueError):
        compute_gamma0(CostModel(1.0, 1.0), 0.0)


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(0.0, 1.0)
    with pytest.raises(ValueError):
        CostModel(1.0, -1.0)


def test_schedule_examples():
    s = compute_schedule(1.0, 1.0)
    assert s.Tf == 1.0 and s.T1 == pytest.approx(6 / math.pi ** 2, rel=1e-15)
    s = compute_schedule(10.0, 1.0)
    assert s.Tf == pytest.approx(math.pi ** 2 / 6) and s.T1 == 1.0
    assert s.tau(3) == pytest.approx(49 / 36 * s.T1, rel=1e-15)


@pytest.mark.parametrize("T,T0", [(1.0, 1.0), (1.0, 0.3), (0.5, 0.1), (10.0, 1.0)])
def test_schedule_properties(T, T0):
    s = compute_schedule(T, T0)
    taus = [tau for _, tau in s.windows(40)]
    assert all(b > a for a, b in zip(taus, taus[1:]))
    assert taus[-1] < s.Tf <= T
    assert s.Tf == pytest.approx(math.pi ** 2 / 6 * s.T1, rel=1e-14)
    assert s.window_length(5) == s.T1 / 25
    with pytest.raises(ValueError):
        s.window_length(0)


def test_steering_constants_consistency():
    cm = CostModel(2.0, 1.0)
    c = steering_constants(1.0, 0.0, cm, 1.0)
    assert c.Gamma0 == pytest.approx(2 * 2.0 + math.log(2 * E ** 2), rel=1e-15)
    assert c.log_RT == -6 * c.Gamma0 / c.T1
    assert c.RT == pytest.approx(math.exp(-6 * c.Gamma0 / c.T1), rel=1e-15)
    # realistic constants put R_T far below the binary64 range; the log stays usable
    p = get_problem("dirichlet-x2")
    big = steering_constants(p.b_norm, p.sigma, auto_cost_model(p, 1), 1.0)
    assert big.RT == 0.0 and math.isfinite(big.log_RT)
    assert set(c.as_dict()) >= {"Gamma0", "RT", "T1", "Tf", "D", "log_RT"}


def test_weighted_sum_identity():
    assert weighted_sum_identity(0) == (0.0, 0.0)
    lhs, rhs = weighted_sum_identity(2)
    assert lhs == 1.5 and rhs == 1.5
    for n in range(60):
        lhs, rhs = weighted_sum_identity(n)
        assert lhs == pytest.approx(rhs, rel=1e-14, abs=1e-15)
    assert weighted_sum_identity(200)[0] == pytest.approx(6.0, rel=1e-15)


def test_induction_exponent_closed_form():
    for n in range(1, 30):
        assert induction_exponent(n) == -(n * n + 4 * n + 6)


def test_KT_examples():
    assert compute_KT(1.0, 0.0, 1.0, 0.0) == 0.0
    assert compute_KT(1.0, 1.0, 1.0, 0.0) == pytest.approx(math.sqrt(2) * E ** 2, rel=1e-14)
    with pytest.raises(ValueError):
        compute_KT(1.0, -1.0, 1.0, 0.0)


def test_KT_below_exp_gamma0_over_tau():
    cm = CostModel(1.5, 1.0)
    g0 = compute_gamma0(cm, compute_D(1.0, 0.0))
    for tau in np.arange(1, 11) / 10:
        assert log_KT(tau, cm.nu / tau, 1.0, 0.0) <= g0 / tau


def test_log_KT_handles_huge_costs():
    lk = log_KT(0.01, 5000.0, 1.0, 0.0)
    assert math.isfinite(lk) and lk > 5000


def test_suffcond_dirichlet_examples():
    p = get_problem("dirichlet-x2")
    sc = compute_suffcond(p, 1, C=1.0)
    assert sc.M == pytest.approx((1 + 1 / math.pi ** 2) ** 2 + 2 * math.pi ** 2, rel=1e-15)
    assert sc.Cq == pytest.approx(2 * (3 / E) ** 3, rel=1e-14)
    assert sc.Cqa == pytest.approx(2 * 6 / (math.pi * math.sqrt(3 * math.pi ** 2)), rel=1e-14)
    # frozen reference for the default run
    assert sc.GammaJ == pytest.approx(79.55697896664643, rel=1e-12)


def test_suffcond_grows_with_C():
    p = get_problem("dirichlet-x2")
    assert compute_suffcond(p, 1, C=2.0).GammaJ > compute_suffcond(p, 1, C=1.0).GammaJ
    with pytest.raises(ValueError):
        compute_suffcond(p, 1, C=0.5)


def test_suffcond_rejects_zero_diagonal():
    import dataclasses

    p = dataclasses.replace(get_problem("dirichlet-x2"), b_entry_fn=lambda j, k: 0.0 if j == k else 1.0)
    with pytest.raises(DegenerateCouplingError):
        compute_suffcond(p, 1)


def test_auto_cost_model_extension_is_monotone():
    p = get_problem("dirichlet-x2")
    base = auto_cost_model(p, 1)
    assert base.T0 == pytest.approx(1 / math.pi ** 2)
    ext = auto_cost_model(p, 1, T0=0.3)
    assert ext.T0 == 0.3
    assert ext.nu == pytest.approx(base.nu * 0.3 / base.T0)
    # a shorter horizon than the base keeps the base rate
    assert auto_cost_model(p, 1, T0=0.05).nu == base.nu
    with pytest.raises(ValueError):
        auto_cost_model(p, 1, T0=0.0)


def test_GM_examples():
    p = get_problem("dirichlet-x2")
    r = compute_GM(1.0, 1.0, p, 1, 200)
    assert r.tail_bound < 1e-12
    # small M: the k = j term dominates and equals the single summand
    r = compute_GM(1e-9, 1.0, p, 1, 200)
    b11 = p.b_entry(1, 1)
    first = math.log(1e-9) + 1e-9 - 2 * math.log(abs(b11))
    assert r.log_value == pytest.approx(first, abs=1e-6)


def test_GM_bound_on_grid():
    p = get_problem("dirichlet-x2")
    sc = compute_suffcond(p, 1)
    for T in np.arange(1, 11) / 10:
        assert compute_GM(sc.M, T, p, 1, 200).log_total <= 2 * sc.GammaJ / T


def test_GM_truncation_errors():
    p = get_problem("dirichlet-x2")
    with pytest.raises(TruncationError):
        compute_GM(20.0, 0.1, p, 1, 3)
    with pytest.raises(ValueError):
        compute_GM(1.0, 0.0, p, 1, 200)


def test_control_norm_bound_examples():
    assert control_norm_bound(1.0, math.pi ** 2) == pytest.approx(E ** -1 / (E ** (2 / 3) - 1), rel=1e-14)
    assert control_norm_bound(1.0, 1e-3) < 1e-100
    vals = [log_control_norm_bound(1.0, T) for T in np.linspace(0.05, 10, 50)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
