"""Independent checks of the equilibrium claims.

* ``check_hjb``: residuals of the extended HJB system for the closed forms.
* ``check_insurer_equilibrium``: Monte Carlo perturbation test for the insurer.
* ``check_reinsurer_equilibrium``: sign/monotonicity conditions on the intent
  function for a given division of ``[0, T]``.
* ``time_selection_oracle``: brute-force minimisation of the reinsurer cost K.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .closedform import (
    INFINITY,
    cost_reinsurer_K,
    g_function,
    phi,
    purchase_time,
    purchasing_pieces,
    value_insurer,
)
from .model import (
    GameParameters,
    GameState,
    Interval,
    ParameterError,
    PremiumPath,
    ReinsuranceLaw,
)
from .regions import equilibrium_for, generate_premium
from .simulate import (
    ControlPath,
    McConfig,
    mv_terms,
    objectives_from_terminal,
    uncontrolled_terminal,
)

PHI_MARGIN_TOL = -1e-10
HJB_TOL = 1e-8
FD_TOL = 1e-6
FD_STEP = 1e-5


def _fmt_time(t: float):
    return "inf" if t == INFINITY else float(t)


@dataclass(frozen=True)
class ConditionResult:
    id: str
    passed: bool
    margin: float
    location: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EquilibriumReport:
    conditions: tuple[ConditionResult, ...]
    details: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def worst(self) -> ConditionResult | None:
        return min(self.conditions, key=lambda c: c.margin, default=None)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def to_dict(self) -> dict:
        w = self.worst
        return {
            "passed": self.passed,
            "worst": asdict(w) if w else None,
            "conditions": [asdict(c) for c in self.conditions],
            "details": self.details,
        }

    def text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.id}: margin={c.margin:.3e} {c.location}"
                 for c in self.conditions]
        return "\n".join(lines)


# ---------------------------------------------------------------- HJB residuals


@dataclass(frozen=True)
class HjbGrid:
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def describe(self) -> dict:
        return {
            "x": [float(self.x.min()), float(self.x.max()), int(self.x.size)],
            "t": [float(self.t.min()), float(self.t.max()), int(self.t.size)],
            "y": [float(self.y.min()), float(self.y.max()), int(self.y.size)],
        }


def hjb_grid(params: GameParameters, nx: int = 100, nt: int = 200, ny: int = 20,
             x_window: tuple[float, float] = (-5.0, 5.0)) -> HjbGrid:
    T, y_bar = params.horizon.T, params.horizon.y_bar
    return HjbGrid(np.linspace(*x_window, nx), np.linspace(0.0, T, nt),
                   np.linspace(0.0, y_bar, ny))


@dataclass(frozen=True)
class ResidualReport:
    """Largest absolute residual of each HJB condition on the grid.

    ``v1_purchasing_inequality`` is informational only: how far the
    interior expression of the variational inequality falls below zero on
    the purchasing region. It is not part of ``passed``.
    """

    v1_interior: float
    v1_gradient: float
    v2_terminal: float
    v3: float
    v4: float
    v5: float
    fd_max_error: float
    n_points: int
    n_fd_skipped: int
    grid: dict
    v1_purchasing_inequality: float = 0.0

    def residuals(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("v1_interior", "v1_gradient", "v2_terminal",
                                              "v3", "v4", "v5")}

    def passed(self, tol: float = HJB_TOL, fd_tol: float = FD_TOL) -> bool:
        return max(self.residuals().values()) <= tol and self.fd_max_error <= fd_tol

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed()
        return d


def _coefficients(t: float, c: PremiumPath, params: GameParameters, pieces):
    """Ansatz coefficients at ``t`` and their time derivatives (right limits)."""
    I, H = params.insurer, params.horizon
    tau = H.T - t
    e = math.exp(-I.b_I * tau)
    prem = I.theta_I * math.exp(I.rho_I * tau) * c(t)
    u1, du1 = e, I.b_I * e
    if e - prem > 0:
        u2, du2 = e - prem, I.b_I * e + I.rho_I * prem
    else:
        u2, du2 = 0.0, 0.0
    drift, ddrift = I.a_I / I.b_I * -math.expm1(-I.b_I * tau), -I.a_I * e
    var = I.gamma_I * I.sigma_I ** 2 / (4 * I.b_I) * -math.expm1(-2 * I.b_I * tau)
    dvar = -0.5 * I.gamma_I * I.sigma_I ** 2 * e * e
    u3, du3 = -u2 * H.y_bar + drift + var, -du2 * H.y_bar + ddrift + dvar
    p = purchase_time(t, c, I, H, pieces)
    buying = p == t
    if p == INFINITY:
        v2, dv2 = 0.0, 0.0
    else:
        v2 = math.exp(-I.b_I * (H.T - p))
        dv2 = I.b_I * v2 if buying else 0.0
    v3, dv3 = -v2 * H.y_bar + drift, -dv2 * H.y_bar + ddrift
    return dict(u1=u1, u2=u2, u3=u3, du1=du1, du2=du2, du3=du3, v1=u1, v2=v2, v3=v3,
                dv1=du1, dv2=dv2, dv3=dv3, prem=prem, buying=buying, p=p)


def _fd_derivatives(x: float, t: float, y: float, c, params: GameParameters, h: float):
    I, H = params.insurer, params.horizon

    def V(x_, t_, y_):
        return value_insurer(GameState(x_, t_, y_), c, I, H)

    def g(x_, t_, y_):
        return g_function(GameState(x_, t_, y_), c, I, H)

    out = {}
    for name, f in (("V", V), ("g", g)):
        out[name + "_x"] = (f(x + h, t, y) - f(x - h, t, y)) / (2 * h)
        out[name + "_t"] = (f(x, t + h, y) - f(x, t - h, y)) / (2 * h)
        lo, hi = max(y - h, 0.0), min(y + h, H.y_bar)
        out[name + "_y"] = (f(x, t, hi) - f(x, t, lo)) / (hi - lo)
    return out


def check_hjb(c: PremiumPath, params: GameParameters, grid: HjbGrid | None = None,
              fd_points: int = 5) -> ResidualReport:
    """Residuals of the HJB system for the closed-form ``V^I`` and ``g``.

    Derivatives are analytic. Finite differences (central, step 1e-5 times
    T in t) cross-check them at ``fd_points`` (x, y) pairs per time; times
    whose difference stencil straddles a premium jump or a change between
    waiting and purchasing are skipped and counted.
    """
    I, H = params.insurer, params.horizon
    T, y_bar = H.T, H.y_bar
    grid = grid or hjb_grid(params)
    X, Y = np.meshgrid(grid.x, grid.y, indexing="ij")
    pieces = purchasing_pieces(c, I, H)
    res = dict(v1_interior=0.0, v1_gradient=0.0, v3=0.0, v4=0.0, info=0.0)
    fd_err, skipped = 0.0, 0
    h_t = FD_STEP * T
    fx = grid.x[np.linspace(0, grid.x.size - 1, fd_points).astype(int)]
    fy = grid.y[np.linspace(0, grid.y.size - 1, fd_points).astype(int)]

    for t in grid.t:
        if t >= T:
            continue
        k = _coefficients(t, c, params, pieces)
        Vt = k["du1"] * X + k["du2"] * Y + k["du3"]
        Vx = k["u1"]
        gt = k["dv1"] * X + k["dv2"] * Y + k["dv3"]
        drift = I.a_I - I.b_I * X
        AV = Vt + drift * Vx
        Ag = gt + drift * k["v1"]
        interior = AV + 0.5 * I.gamma_I * I.sigma_I ** 2 * k["v1"] ** 2
        grad = k["prem"] - k["u1"] + k["u2"]
        if k["buying"]:
            # equality where coverage is left to buy
            res["v1_gradient"] = max(res["v1_gradient"], abs(grad))
            res["v4"] = max(res["v4"], abs(k["v1"] - k["v2"]))
            res["info"] = max(res["info"], float(np.max(np.maximum(-interior, 0.0))))
        else:
            res["v1_gradient"] = max(res["v1_gradient"], max(-grad, 0.0))
            res["v1_interior"] = max(res["v1_interior"], float(np.max(np.abs(interior))))
            res["v3"] = max(res["v3"], float(np.max(np.abs(Ag))))

        # finite-difference cross-check
        lo, hi = t - h_t, t + h_t
        same_cell = int(c.cell_index(lo)) == int(c.cell_index(hi)) if lo >= 0 else False
        same_side = same_cell and (
            (purchase_time(lo, c, I, H, pieces) == lo) == k["buying"] == (
                purchase_time(hi, c, I, H, pieces) == hi)
            and (k["buying"] or purchase_time(lo, c, I, H, pieces) == k["p"]))
        if not same_side:
            skipped += 1
            continue
        for x in fx:
            for y in fy:
                fd = _fd_derivatives(float(x), float(t), float(y), c, params, FD_STEP)
                ana = {
                    "V_x": k["u1"], "V_y": k["u2"],
                    "V_t": k["du1"] * x + k["du2"] * y + k["du3"],
                    "g_x": k["v1"], "g_y": k["v2"],
                    "g_t": k["dv1"] * x + k["dv2"] * y + k["dv3"],
                }
                fd_t = _fd_derivatives(float(x), float(t), float(y), c, params, h_t)
                fd["V_t"], fd["g_t"] = fd_t["V_t"], fd_t["g_t"]
                fd_err = max(fd_err, max(abs(ana[n] - fd[n]) for n in ana))

    # terminal conditions
    cT = c(T)
    gap = max(1.0 - I.theta_I * cT, 0.0)
    ind = 1.0 if I.theta_I * cT <= 1.0 else 0.0
    v2 = v5 = 0.0
    for x in grid.x:
        for y in grid.y:
            s = GameState(float(x), T, float(y))
            v2 = max(v2, abs(value_insurer(s, c, I, H) - (x - (y_bar - y) * gap)))
            v5 = max(v5, abs(g_function(s, c, I, H) - (x - (y_bar - y) * ind)))

    return ResidualReport(
        v1_interior=res["v1_interior"], v1_gradient=res["v1_gradient"], v2_terminal=v2,
        v3=res["v3"], v4=res["v4"], v5=v5, fd_max_error=fd_err,
        n_points=int(grid.x.size * grid.t.size * grid.y.size), n_fd_skipped=skipped,
        grid=grid.describe(), v1_purchasing_inequality=res["info"])


# ---------------------------------------------------- reinsurer phi conditions


def _mesh(iv: Interval, base: np.ndarray) -> np.ndarray:
    lo = base >= iv.start if iv.start_closed else base > iv.start
    hi = base <= iv.end if iv.end_closed else base < iv.end
    pts = [base[lo & hi]]
    for e, closed in ((iv.start, iv.start_closed), (iv.end, iv.end_closed)):
        if closed:
            pts.append(np.array([e]))
    out = np.unique(np.concatenate(pts))
    return out if out.size else np.array([0.5 * (iv.start + iv.end)])


def check_reinsurer_equilibrium(law: ReinsuranceLaw, params: GameParameters,
                                n_grid: int = 2000,
                                margin_tol: float = PHI_MARGIN_TOL) -> EquilibriumReport:
    """Intent-function conditions for a division of ``[0, T]``.

    (a) waiting piece (t1, t2) followed by a purchase at t2: phi >= phi(t2);
    (b) last waiting piece ending at T: phi >= 0;
    (c) purchasing [t1, t2] followed by waiting (t2, t3) and more purchasing:
        phi' >= 0 on [t1, t2] and phi(t2) <= phi(t3);
    (d) purchasing [t1, t2] with t2 = T or followed by the last waiting
        piece: phi' >= 0 on [t1, T] and phi(t2) <= 0.
    An isolated purchase at T is checked by its endpoint comparison only;
    at an interior isolated point phi' >= 0 is checked at the point.
    """
    T = params.horizon.T
    if law.T != T:
        raise ParameterError("law and parameters disagree on T")
    base = np.linspace(0.0, T, max(n_grid, 2))
    segs = law.segments()
    conds: list[ConditionResult] = []

    def add(cid: str, margin: float, where: float, iv: Interval):
        conds.append(ConditionResult(cid, bool(margin >= margin_tol), float(margin),
                                     {"t": float(where), "piece": str(iv)}))

    def worst(vals: np.ndarray, ts: np.ndarray) -> tuple[float, float]:
        i = int(np.argmin(vals))
        return float(vals[i]), float(ts[i])

    for k, (kind, iv) in enumerate(segs):
        nxt = segs[k + 1] if k + 1 < len(segs) else None
        if kind == "W":
            ts = _mesh(iv, base)
            f, _ = phi(ts, params)
            if nxt is None:
                m, w = worst(np.asarray(f), ts)
                add(f"b:W{k}", m, w, iv)
            else:
                t2 = iv.end
                m, w = worst(np.asarray(f) - phi(t2, params)[0], ts)
                add(f"a:W{k}", m, w, iv)
            continue

        t1, t2 = iv.start, iv.end
        last_w = nxt is not None and nxt[0] == "W" and k + 2 >= len(segs)
        if nxt is None or last_w:
            f2 = phi(t2, params)[0]
            if iv.is_point and t2 == T:
                add(f"d:P{k}", -f2, t2, iv)
                continue
            span = Interval(t1, T)
            ts = _mesh(span, base) if not iv.is_point else np.array([t1])
            _, fp = phi(ts, params)
            m, w = worst(np.atleast_1d(fp), np.atleast_1d(ts))
            add(f"d:P{k}:slope", m, w, iv)
            add(f"d:P{k}:level", -f2, t2, iv)
        else:
            t3 = nxt[1].end
            ts = _mesh(iv, base) if not iv.is_point else np.array([t1])
            _, fp = phi(ts, params)
            m, w = worst(np.atleast_1d(fp), np.atleast_1d(ts))
            add(f"c:P{k}:slope", m, w, iv)
            add(f"c:P{k}:level", phi(t3, params)[0] - phi(t2, params)[0], t2, iv)

    if not conds:
        raise ParameterError("law covers no part of [0, T]")
    return EquilibriumReport(tuple(conds), {"law": str(law), "n_grid": int(n_grid),
                                            "low_resolution": bool(n_grid < 10)})


# -------------------------------------------------------- time-selection oracle


@dataclass(frozen=True)
class OracleResult:
    argmin: float
    k_min: float
    candidate: float
    k_candidate: float
    k_now: float
    k_never: float
    condition_a: float
    condition_b: float
    h: float
    passed: bool
    grid: np.ndarray = field(repr=False, compare=False, default=None)
    k_values: np.ndarray = field(repr=False, compare=False, default=None)

    def to_dict(self) -> dict:
        return {
            "argmin": _fmt_time(self.argmin), "k_min": self.k_min,
            "candidate": _fmt_time(self.candidate), "k_candidate": self.k_candidate,
            "k_now": self.k_now, "k_never": self.k_never,
            "condition_a": self.condition_a, "condition_b": self.condition_b,
            "h": self.h, "passed": self.passed,
        }


def selected_time_margins(t: float, y: float, z: float, p: float, h: float,
                          params: GameParameters) -> tuple[float, float]:
    """Margins of the two equilibrium selected-time conditions at ``p``:
    (a) ``K(t) - K(p)`` and (b) ``[K(max(p, t+h)) - K(p)] / h``."""
    T = params.horizon.T
    kp = cost_reinsurer_K(t, y, z, p, params)
    a = cost_reinsurer_K(t, y, z, t, params) - kp
    ph = p if p == INFINITY else max(p, min(t + h, T))
    b = (cost_reinsurer_K(t, y, z, ph, params) - kp) / h
    return a, b


def time_selection_oracle(t: float, y: float, z: float, params: GameParameters,
                          n_grid: int = 4000, markup: float = 0.1,
                          tol: float = 1e-12) -> OracleResult:
    """Brute-force the reinsurer's choice of purchase time.

    The candidate is the purchase time induced by the equilibrium premium
    (first listed law where two are given).
    """
    if n_grid < 2:
        raise ParameterError("n_grid must be at least 2")
    I, H = params.insurer, params.horizon
    T = H.T
    grid = np.linspace(t, T, n_grid)
    ks = np.array([cost_reinsurer_K(t, y, z, float(p), params) for p in grid])
    k_never = cost_reinsurer_K(t, y, z, INFINITY, params)
    i = int(np.argmin(ks))
    if k_never < ks[i]:
        argmin, k_min = INFINITY, k_never
    else:
        argmin, k_min = float(grid[i]), float(ks[i])
    law = equilibrium_for(params).law
    c = generate_premium(law, I, H, markup)
    cand = purchase_time(t, c, I, H)
    h = (T - t) / (n_grid - 1) if T > t else 1.0
    a, b = selected_time_margins(t, y, z, cand, h, params)
    scale = tol * max(1.0, abs(k_min))
    return OracleResult(argmin, k_min, cand, cost_reinsurer_K(t, y, z, cand, params),
                        float(ks[0]), k_never, a, b, h,
                        bool(a >= -scale and b >= -scale / h), grid, ks)


# ----------------------------------------------------- insurer perturbation test


DEFAULT_FRACTIONS = (0.25, 0.5, 1.0)


def default_h_values(t: float, T: float) -> list[float]:
    return [f * (T - t) for f in (0.1, 0.05, 0.025, 0.0125)]


@dataclass(frozen=True)
class Deviation:
    """A strategy used on ``[t, t+h)`` before reverting to the equilibrium.

    ``kind`` is ``lump`` (buy ``q`` of the remaining coverage at t), ``rate``
    (buy ``q`` spread evenly over the simulation steps in the window) or
    ``none`` (buy nothing in the window).
    """

    kind: str
    q: float = 0.0

    @property
    def name(self) -> str:
        return self.kind if self.kind == "none" else f"{self.kind}:q={self.q:g}"


def default_deviations(fractions: Sequence[float] = DEFAULT_FRACTIONS) -> list[Deviation]:
    return ([Deviation("lump", q) for q in fractions]
            + [Deviation("rate", q) for q in fractions] + [Deviation("none")])


def _snap_to_nodes(times: np.ndarray, grid: np.ndarray, tol: float) -> np.ndarray:
    # step times t + j*step drift from the premium nodes by a few ulps, which
    # would move a purchase into the previous (cheaper) premium cell
    i = np.clip(np.searchsorted(grid, times), 1, grid.size - 1)
    near = np.where(times - grid[i - 1] < grid[i] - times, grid[i - 1], grid[i])
    return np.where(np.abs(near - times) <= tol, near, times)


def deviation_control(dev: Deviation, state: GameState, h: float, c: PremiumPath,
                      params: GameParameters, step: float) -> ControlPath:
    """Control of the deviation on [t, t+h) followed by the equilibrium."""
    I, H = params.insurer, params.horizon
    t, rest = state.t, H.y_bar - state.y
    if dev.kind == "lump":
        head = ControlPath.lump(t, dev.q * rest)
    elif dev.kind == "rate":
        m = max(1, int(round(h / step)))
        times = _snap_to_nodes(t + step * np.arange(m), c.grid, 1e-9 * H.T)
        head = ControlPath(times, [dev.q * rest / m] * m)
    elif dev.kind == "none":
        head = ControlPath()
    else:
        raise ParameterError(f"unknown deviation kind {dev.kind!r}")
    left = rest - head.total
    if left <= 1e-15 * max(1.0, H.y_bar):
        return head
    p = purchase_time(min(t + h, H.T), c, I, H)
    return head.then(ControlPath.lump(p, left))


def check_insurer_equilibrium(state: GameState, c: PremiumPath, params: GameParameters,
                              mc: McConfig, deviations: Sequence[Deviation] | None = None,
                              h_values: Sequence[float] | None = None, workers: int = 1,
                              n_sigma: float = 3.0) -> EquilibriumReport:
    """Perturbation test for the insurer's threshold strategy.

    For each deviation and window h, ``D_h = J(deviation) - J(equilibrium)``
    is estimated on shared noise paths. Since purchases are deterministic in
    time they shift X_T by a constant, so most of the noise cancels. The
    quotient passes if ``D_h / h >= -(n_sigma * SE_h + floor) / h``, where
    ``floor = 1e-12 max(1, |J|)`` absorbs floating-point rounding. The
    terminal condition is checked in closed form.
    """
    I, H = params.insurer, params.horizon
    T, t = H.T, state.t
    state.check(H)
    conds: list[ConditionResult] = []
    details: dict = {"quotients": {}}

    # terminal comparison: buying u at T against the equilibrium choice
    cT = c(T)
    u_eq = H.y_bar if I.theta_I * cT <= 1.0 else state.y
    us = np.linspace(state.y, H.y_bar, 21)
    term = (I.theta_I * cT - 1.0) * (us - u_eq)
    j = int(np.argmin(term))
    conds.append(ConditionResult("b:terminal", bool(term[j] >= 0), float(term[j]),
                                 {"u": float(us[j]), "t": T}))

    if t < T and H.y_bar > state.y:
        h_values = list(h_values) if h_values is not None else default_h_values(t, T)
        deviations = list(deviations) if deviations is not None else default_deviations()
        step = (T - t) / mc.n_steps
        x0, z0 = uncontrolled_terminal(state, params, mc, workers)
        p_eq = purchase_time(t, c, I, H)
        eq_ctrl = ControlPath.lump(p_eq, H.y_bar - state.y)
        eq = objectives_from_terminal(x0, z0, eq_ctrl, c, params, mc, p_eq)
        x_eq = x0 - eq_ctrl.x_shift(I.b_I, T)
        psi_eq = mv_terms(x_eq, I.gamma_I) + I.theta_I * eq_ctrl.premium(c, I.rho_I, T)
        j_eq = eq.j_insurer.mean
        details["j_equilibrium"] = j_eq
        details["purchase_time"] = _fmt_time(p_eq)
        for dev in deviations:
            rows = []
            best = (math.inf, None)
            for h in h_values:
                if dev.kind == "none" and not p_eq < t + h:
                    continue  # identical to the equilibrium on this window
                ctrl = deviation_control(dev, state, h, c, params, step)
                res = objectives_from_terminal(x0, z0, ctrl, c, params, mc, t)
                x = x0 - ctrl.x_shift(I.b_I, T)
                psi = mv_terms(x, I.gamma_I) + I.theta_I * ctrl.premium(c, I.rho_I, T)
                diff = res.j_insurer.mean - j_eq
                se = float(np.std(psi - psi_eq, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
                tol = n_sigma * se + 1e-12 * max(1.0, abs(j_eq))
                margin = (diff + tol) / h
                rows.append({"h": h, "diff": diff, "quotient": diff / h, "joint_se": se,
                             "tol": tol})
                if margin < best[0]:
                    best = (margin, h)
            details["quotients"][dev.name] = rows
            if best[1] is not None:
                conds.append(ConditionResult(f"a:{dev.name}", bool(best[0] >= 0), float(best[0]),
                                             {"t": t, "h": best[1]}))
    return EquilibriumReport(tuple(conds), details)


# ------------------------------------------------------------------ sensitivity


def sensitivity_sweep(base: GameParameters, param: str, values: Sequence[float],
                      c: PremiumPath) -> list[tuple[float, float]]:
    """Purchase time from t = 0 as one insurer parameter varies."""
    names = {"a_I", "b_I", "sigma_I", "gamma_I", "theta_I", "rho_I"}
    if param not in names:
        raise ParameterError(f"{param} is not an insurer parameter")
    out = []
    for v in values:
        p = base.replace(**{param: float(v)})
        out.append((float(v), purchase_time(0.0, c, p.insurer, p.horizon)))
    return out

