import json
import math

import numpy as np
import pytest

from reinsgame.closedform import INFINITY, cost_reinsurer_K, kappa, phi, purchase_time
from reinsgame.model import GameState, Interval, ParameterError, PremiumPath, ReinsuranceLaw
from reinsgame.regions import (
    coordinates,
    equilibrium_for,
    generate_premium,
    perturb_law,
    startup_time,
    swapped_law,
)
from reinsgame.simulate import McConfig
from reinsgame.verify import (
    Deviation,
    check_hjb,
    check_insurer_equilibrium,
    check_reinsurer_equilibrium,
    default_deviations,
    default_h_values,
    hjb_grid,
    sensitivity_sweep,
    time_selection_oracle,
)

from helpers import base_params, params_at

SMALL = dict(nx=9, nt=41, ny=5)
MC = McConfig(n_paths=20_000, n_steps=400, seed=21)


def premium_for(q):
    return generate_premium(equilibrium_for(q).law, q.insurer, q.horizon)


# --------------------------------------------------------------------- HJB

def test_hjb_pure_waiting():
    q = base_params()
    c = PremiumPath.constant(1.0, 1.0)  # above 1/theta_I = 0.5
    rep = check_hjb(c, q, hjb_grid(q, **SMALL))
    assert max(rep.residuals().values()) < 1e-10
    assert rep.fd_max_error < 1e-6
    assert rep.passed()


def test_hjb_purchasing_from_crossing():
    q = base_params()
    c = PremiumPath.constant(float(kappa(0.0, q.insurer, q.horizon)) / 2, 1.0)
    rep = check_hjb(c, q, hjb_grid(q, **SMALL))
    assert rep.v1_gradient < 1e-10
    assert rep.v4 < 1e-10
    assert rep.passed()


@pytest.mark.parametrize("r,d", [(0.9, -0.1), (0.52, -0.1), (1.05, -0.1), (2.0, 0.1), (0.5, 0.1)])
def test_hjb_equilibrium_premiums(r, d):
    q = params_at(r, d)
    rep = check_hjb(premium_for(q), q, hjb_grid(q, **SMALL))
    assert rep.passed(), rep.to_dict()


def test_hjb_terminal_exact():
    q = base_params()
    for level in (0.2, 0.5, 0.9):
        rep = check_hjb(PremiumPath.constant(level, 1.0), q, hjb_grid(q, nx=5, nt=3, ny=3))
        assert rep.v2_terminal < 1e-14 and rep.v5 < 1e-14


def test_hjb_report_serializes():
    q = base_params()
    rep = check_hjb(PremiumPath.constant(1.0, 1.0), q, hjb_grid(q, nx=3, nt=5, ny=2))
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["passed"] is True and d["grid"]["x"][2] == 3
    assert all(v >= 0 for v in rep.residuals().values())


# ------------------------------------------------------------ reinsurer phi

@pytest.mark.parametrize("r,d,T", [(0.9, -0.1, 1.0), (0.52, -0.1, 1.0), (1.05, -0.1, 1.0),
                                   (2.0, 0.1, 1.0), (0.5, 0.1, 1.0), (1.05, -0.1, 20.0)])
def test_table_laws_pass_and_perturbations_fail(r, d, T):
    q = params_at(r, d, T=T)
    law = equilibrium_for(q).law
    assert check_reinsurer_equilibrium(law, q).passed
    assert not check_reinsurer_equilibrium(perturb_law(law), q).passed


def test_region_iv_startup_is_stationary_point():
    q = params_at(0.52, -0.1)
    eq = equilibrium_for(q)
    assert eq.label == "IV"
    t_star = startup_time(coordinates(q), q.reinsurer.b_R, 1.0)
    assert eq.law.purchasing[0].start == t_star
    assert abs(phi(t_star, q)[1]) < 1e-12
    rep = check_reinsurer_equilibrium(eq.law, q)
    assert rep.passed and {c.id.split(":")[0] for c in rep.conditions} == {"a", "d"}


def test_region_i_only_b_applies():
    q = params_at(2.0, -0.1)
    law = equilibrium_for(q).law
    rep = check_reinsurer_equilibrium(law, q)
    assert [c.id for c in rep.conditions] == ["b:W0"]
    assert rep.passed
    assert phi(1.0, q)[0] == pytest.approx(1 - 1 / 2.0)


def test_region_i_swapped_fails_d():
    q = params_at(2.0, -0.1)
    rep = check_reinsurer_equilibrium(swapped_law(equilibrium_for(q).law), q)
    assert not rep.passed
    assert rep.worst.id.startswith("d:")


def test_reinsurer_report_contents():
    q = params_at(1.05, -0.1, T=20.0)
    rep = check_reinsurer_equilibrium(equilibrium_for(q).law, q, n_grid=2000)
    d = rep.to_dict()
    assert d["details"]["n_grid"] == 2000 and not d["details"]["low_resolution"]
    assert "PASS" in rep.text()
    assert check_reinsurer_equilibrium(equilibrium_for(q).law, q, n_grid=2).details["low_resolution"]


def test_reinsurer_rejects_mismatched_T():
    with pytest.raises(ParameterError):
        check_reinsurer_equilibrium(ReinsuranceLaw(2.0, ()), base_params())


def test_interior_point_purchase():
    q = params_at(0.52, -0.1)
    law = ReinsuranceLaw(1.0, (Interval(0.5, 0.5),))
    ids = [c.id for c in check_reinsurer_equilibrium(law, q).conditions]
    assert "d:P1:slope" in ids and "a:W0" in ids


# ------------------------------------------------------------ oracle

def test_oracle_region_iii_buys_now():
    q = params_at(0.9, -0.1)
    o = time_selection_oracle(0.0, 0.3, 1.0, q, n_grid=400)
    assert o.candidate == 0.0
    assert o.condition_a == 0.0
    assert o.argmin <= o.h
    assert o.passed


def test_oracle_region_i_no_sale():
    q = params_at(2.0, -0.1)
    o = time_selection_oracle(0.0, 0.3, 1.0, q, n_grid=400)
    assert o.candidate == INFINITY and o.argmin == INFINITY
    assert np.all(o.k_values > o.k_never)
    assert o.passed


def test_oracle_region_v_buys_at_T():
    q = params_at(0.5, 0.1)
    o = time_selection_oracle(0.0, 0.3, 1.0, q, n_grid=400)
    assert o.candidate == 1.0
    assert abs(o.argmin - 1.0) <= o.h
    assert o.passed


def test_oracle_full_coverage_flat():
    q = params_at(0.9, -0.1)
    o = time_selection_oracle(0.0, 1.0, 1.0, q, n_grid=50)
    assert np.ptp(o.k_values) == 0.0 and o.k_never == o.k_values[0]


def test_oracle_rejects_tiny_grid():
    with pytest.raises(ParameterError):
        time_selection_oracle(0.0, 0.0, 0.0, base_params(), n_grid=1)


# ------------------------------------------------------------ insurer

def test_default_family():
    names = [d.name for d in default_deviations()]
    assert names == ["lump:q=0.25", "lump:q=0.5", "lump:q=1", "rate:q=0.25", "rate:q=0.5",
                     "rate:q=1", "none"]
    assert default_h_values(0.0, 2.0) == [0.2, 0.1, 0.05, 0.025]
    with pytest.raises(ParameterError):
        from reinsgame.verify import deviation_control
        deviation_control(Deviation("jump", 1.0), GameState(0, 0, 0), 0.1,
                          PremiumPath.constant(0.1, 1.0), base_params(), 0.01)


@pytest.mark.parametrize("r,d", [(0.9, -0.1), (0.52, -0.1), (1.05, -0.1), (2.0, 0.1), (0.5, 0.1)])
def test_equilibrium_strategy_passes(r, d):
    q = params_at(r, d)
    rep = check_insurer_equilibrium(GameState(1.0, 0.0, 0.2, 0.0), premium_for(q), q, MC)
    assert rep.passed, rep.text()


def test_self_deviation_is_exactly_zero():
    q = params_at(0.9, -0.1)  # buys everything at t
    rep = check_insurer_equilibrium(GameState(1.0, 0.0, 0.2, 0.0), premium_for(q), q, MC,
                                    deviations=[Deviation("lump", 1.0)])
    rows = rep.details["quotients"]["lump:q=1"]
    assert all(r["diff"] == 0.0 and r["quotient"] == 0.0 for r in rows)


def test_immediate_lump_in_waiting_region_costs():
    q = params_at(0.5, 0.1)  # waits until T
    rep = check_insurer_equilibrium(GameState(1.0, 0.0, 0.2, 0.0), premium_for(q), q, MC,
                                    deviations=[Deviation("lump", 1.0)])
    assert all(r["diff"] > 0 for r in rep.details["quotients"]["lump:q=1"])


def test_terminal_condition():
    q = base_params()
    # theta c(T) > 1: buying is strictly worse, the equilibrium does not buy
    c = PremiumPath.constant(0.8, 1.0)
    rep = check_insurer_equilibrium(GameState(1.0, 1.0, 0.2), c, q, MC)
    (b,) = rep.conditions
    assert b.id == "b:terminal" and b.passed
    gap = (q.insurer.theta_I * 0.8 - 1) * 0.8
    assert gap > 0


def test_rejects_non_equilibrium_premium():
    # a zero premium on [0, 0.5) makes the threshold rule buy at 0, but a
    # later purchase at the same (zero) price removes more exposure
    q = params_at(0.9, -0.1)
    c_wait = generate_premium(ReinsuranceLaw(1.0, (Interval(0.5, 1.0),)), q.insurer, q.horizon)
    cheap = PremiumPath(c_wait.grid, np.where(c_wait.grid < 0.5, 0.0, c_wait.values))
    rep = check_insurer_equilibrium(GameState(1.0, 0.0, 0.2, 0.0), cheap, q, MC)
    assert not rep.passed
    failed = {f.id for f in rep.failures()}
    assert "a:none" in failed and "a:lump:q=1" not in failed


def _differences(rows):
    return [(r["h"], r["diff"], r["joint_se"]) for r in rows]


@pytest.mark.parametrize("r,d", [(0.52, -0.1), (0.5, 0.1)])
def test_differences_converge(r, d):
    q = params_at(r, d)
    hs = [0.1 / 2 ** k for k in range(5)]
    rep = check_insurer_equilibrium(GameState(1.0, 0.0, 0.2, 0.0), premium_for(q), q, MC,
                                    h_values=hs)
    for name, rows in rep.details["quotients"].items():
        pts = _differences(rows)
        steps = [(h1, abs(d1 - d2), math.hypot(s1, s2))
                 for (h1, d1, s1), (_, d2, s2) in zip(pts, pts[1:])]
        if not steps:
            continue
        C = steps[0][1] / steps[0][0]
        for h, gap, se in steps[1:]:
            assert gap <= 3 * se + 2 * C * h + 1e-12, (name, steps)


# ------------------------------------------------------------ sensitivity

def test_sensitivity_monotone_and_constant():
    q = params_at(1.05, -0.1)
    c = premium_for(q)
    for name, values in [("theta_I", np.linspace(1.0, 1.2, 5)), ("b_I", np.linspace(0.05, 0.15, 5)),
                         ("rho_I", np.linspace(0.05, 0.25, 5))]:
        ps = [p for _, p in sensitivity_sweep(q, name, values, c)]
        assert all(a <= b for a, b in zip(ps, ps[1:])), (name, ps)
    for name, values in [("a_I", [-1, 0, 1, 2, 3]), ("sigma_I", [0.1, 0.2, 0.3, 0.4, 0.5]),
                         ("gamma_I", [0.1, 1, 2, 5, 10])]:
        ps = {p for _, p in sensitivity_sweep(q, name, values, c)}
        assert len(ps) == 1


def test_sensitivity_rejects_reinsurer_param():
    with pytest.raises(ParameterError):
        sensitivity_sweep(base_params(), "b_R", [0.1], PremiumPath.constant(0.1, 1.0))
