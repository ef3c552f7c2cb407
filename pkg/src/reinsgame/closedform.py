"""Closed-form objects of the game: threshold, purchase time, value functions.

Purchase times are plain floats with ``math.inf`` standing for "never".
``inf`` is a distinct IEEE value, so ``p < math.inf`` is an exact test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    GameParameters,
    GameState,
    Horizon,
    InsurerParams,
    ParameterError,
    PremiumPath,
)

INFINITY = math.inf

# relative slack in c <= kappa, so values generated as kappa(t) compare as equal
CROSS_RTOL = 1e-12


def _check_time(t, T):
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(t) > T):
        raise ParameterError(f"t={t} outside [0, {T}]")


def kappa(t, insurer: InsurerParams, horizon: Horizon):
    """Highest premium rate at which the insurer buys at time ``t``."""
    _check_time(t, horizon.T)
    k = insurer.b_I + insurer.rho_I
    return np.exp(-k * (horizon.T - np.asarray(t, dtype=float))) / insurer.theta_I


def kappa_inverse(v, insurer: InsurerParams, horizon: Horizon):
    """Time at which kappa equals ``v`` (requires b_I + rho_I != 0, v > 0)."""
    k = insurer.b_I + insurer.rho_I
    return horizon.T + np.log(insurer.theta_I * np.asarray(v, dtype=float)) / k


@dataclass(frozen=True)
class PurchasingPieces:
    """Per-cell subsets of ``{c <= kappa}``.

    Cell ``i`` covers ``[grid[i], grid[i+1])``; inside it the purchasing set is
    ``[lo[i], hi[i])`` or ``[lo[i], hi[i]]`` when ``hi_closed[i]``, and empty
    where ``~nonempty[i]``. ``terminal`` tells whether ``T`` itself is in it.
    """

    lo: np.ndarray
    hi: np.ndarray
    hi_closed: np.ndarray
    nonempty: np.ndarray
    terminal: bool


def purchasing_pieces(c: PremiumPath, insurer: InsurerParams,
                      horizon: Horizon) -> PurchasingPieces:
    """Solve ``c(t) <= kappa(t)`` exactly on every cell of the premium grid.

    On a cell the premium is a constant ``v`` and kappa is a monotone
    exponential, so the solution set is an interval with an explicit endpoint.
    """
    T = horizon.T
    if abs(c.T - T) > 1e-9 * T:
        raise ParameterError(f"premium grid ends at {c.T}, horizon is {T}")
    g = c.grid
    a, b = g[:-1], g[1:]
    v = c.values[:-1]
    k = insurer.b_I + insurer.rho_I
    theta = insurer.theta_I
    slack = 1.0 + CROSS_RTOL
    n = a.size
    lo, hi = a.copy(), b.copy()
    hi_closed = np.zeros(n, dtype=bool)

    if k == 0.0:
        nonempty = v <= slack / theta
    else:
        ka, kb = kappa(a, insurer, horizon), kappa(b, insurer, horizon)
        with np.errstate(divide="ignore"):
            tau = T + np.log(theta * v) / k  # exact crossing; +-inf where v == 0
        if k > 0:
            # kappa increasing: a tie at the left end buys the whole cell,
            # otherwise buying starts at the exact crossing
            whole = v <= ka * slack
            lo = np.where(whole, a, np.maximum(a, tau))
            nonempty = whole | (tau < b)
        else:
            # kappa decreasing: a tie at the right end buys the whole cell,
            # otherwise buying stops (inclusive) at the crossing
            whole = v <= kb * slack
            nonempty = whole | (v <= ka * slack)
            hi = np.where(whole, b, np.clip(tau, a, b))
            hi_closed = ~whole
    terminal = bool(c.values[-1] <= kappa(T, insurer, horizon) * (1.0 + CROSS_RTOL))
    return PurchasingPieces(lo, hi, hi_closed, nonempty, terminal)


def purchase_time(t: float, c: PremiumPath, insurer: InsurerParams,
                  horizon: Horizon, pieces: PurchasingPieces | None = None) -> float:
    """First time ``tau >= t`` with ``c(tau) <= kappa(tau)``; ``inf`` if none.

    When the purchasing set starts with an open end the infimum is returned.
    """
    T = horizon.T
    _check_time(t, T)
    if pieces is None:
        pieces = purchasing_pieces(c, insurer, horizon)
    if t == T:
        return T if pieces.terminal else INFINITY
    i0 = int(c.cell_index(t))
    lo = np.maximum(pieces.lo[i0:], t)
    hi = pieces.hi[i0:]
    ok = pieces.nonempty[i0:] & ((lo < hi) | (pieces.hi_closed[i0:] & (lo <= hi)))
    idx = np.flatnonzero(ok)
    if idx.size:
        return float(lo[idx[0]])
    return T if pieces.terminal else INFINITY


@dataclass(frozen=True)
class AnsatzCoefficients:
    """The six time coefficients of ``V = u1 x + u2 y + u3``, ``g = v1 x + v2 y + v3``."""

    c: PremiumPath
    insurer: InsurerParams
    horizon: Horizon

    def _tau(self, t):
        _check_time(t, self.horizon.T)
        return self.horizon.T - t

    def u1(self, t: float) -> float:
        return math.exp(-self.insurer.b_I * self._tau(t))

    v1 = u1

    def u2(self, t: float) -> float:
        p = self.insurer
        tau = self._tau(t)
        return max(math.exp(-p.b_I * tau) - p.theta_I * math.exp(p.rho_I * tau) * self.c(t), 0.0)

    def _drift_term(self, tau: float) -> float:
        p = self.insurer
        return p.a_I / p.b_I * -math.expm1(-p.b_I * tau)

    def u3(self, t: float) -> float:
        p = self.insurer
        tau = self._tau(t)
        var = p.gamma_I * p.sigma_I ** 2 / (4.0 * p.b_I) * -math.expm1(-2.0 * p.b_I * tau)
        return -self.u2(t) * self.horizon.y_bar + self._drift_term(tau) + var

    def purchase_time(self, t: float) -> float:
        return purchase_time(t, self.c, self.insurer, self.horizon)

    def v2(self, t: float) -> float:
        p = self.purchase_time(t)
        if p == INFINITY:
            return 0.0
        return math.exp(-self.insurer.b_I * (self.horizon.T - p))

    def v3(self, t: float) -> float:
        return -self.v2(t) * self.horizon.y_bar + self._drift_term(self._tau(t))


def ansatz(c: PremiumPath, insurer: InsurerParams, horizon: Horizon) -> AnsatzCoefficients:
    return AnsatzCoefficients(c, insurer, horizon)


def value_insurer(state: GameState, c: PremiumPath, insurer: InsurerParams,
                  horizon: Horizon) -> float:
    """Closed-form insurer value ``V^I(x, t, y)`` as written in the source model.

    The variance term carries ``gamma sigma^2 / (4b)``; the mean-variance
    objective itself has ``gamma sigma^2 / (2b)`` (see ``insurer_objective``).
    """
    state.check(horizon)
    p = insurer
    tau = horizon.T - state.t
    e = math.exp(-p.b_I * tau)
    gap = max(e - p.theta_I * math.exp(p.rho_I * tau) * c(state.t), 0.0)
    return (e * state.x - gap * (horizon.y_bar - state.y)
            + p.a_I / p.b_I * -math.expm1(-p.b_I * tau)
            + p.gamma_I * p.sigma_I ** 2 / (4.0 * p.b_I) * -math.expm1(-2.0 * p.b_I * tau))


def g_function(state: GameState, c: PremiumPath, insurer: InsurerParams,
               horizon: Horizon, p: float | None = None) -> float:
    """Expected terminal exposure under the insurer's threshold strategy."""
    state.check(horizon)
    if p is None:
        p = purchase_time(state.t, c, insurer, horizon)
    b = insurer.b_I
    tau = horizon.T - state.t
    ceiling = 0.0 if p == INFINITY else math.exp(-b * (horizon.T - p)) * (horizon.y_bar - state.y)
    return math.exp(-b * tau) * state.x - ceiling + insurer.a_I / b * -math.expm1(-b * tau)


def ou_variance(b: float, sigma: float, tau: float) -> float:
    """Variance of an OU process after time ``tau`` from a fixed start."""
    return sigma ** 2 / (2.0 * b) * -math.expm1(-2.0 * b * tau)


def j_insurer_lump(state: GameState, s: float, c: PremiumPath, insurer: InsurerParams,
                   horizon: Horizon) -> float:
    """Insurer objective when the remaining coverage is bought in one lump at ``s``."""
    state.check(horizon)
    if not state.t <= s <= horizon.T:
        raise ParameterError(f"lump time {s} outside [{state.t}, {horizon.T}]")
    p = insurer
    tau = horizon.T - state.t
    rest = horizon.y_bar - state.y
    return (math.exp(-p.b_I * tau) * state.x
            - math.exp(-p.b_I * (horizon.T - s)) * rest
            + p.a_I / p.b_I * -math.expm1(-p.b_I * tau)
            + p.gamma_I * ou_variance(p.b_I, p.sigma_I, tau)
            + p.theta_I * math.exp(p.rho_I * (horizon.T - s)) * c(s) * rest)


def insurer_objective(state: GameState, c: PremiumPath, insurer: InsurerParams,
                      horizon: Horizon) -> float:
    """Mean-variance objective ``J^I`` of the threshold strategy, in closed form.

    Equals ``value_insurer`` plus ``gamma sigma^2 (1 - e^{-2b(T-t)}) / (4b)``
    whenever the purchase happens at a premium equal to kappa.
    """
    p = purchase_time(state.t, c, insurer, horizon)
    if p == INFINITY:
        tau = horizon.T - state.t
        return (g_function(state, c, insurer, horizon, p=p)
                + insurer.gamma_I * ou_variance(insurer.b_I, insurer.sigma_I, tau))
    return j_insurer_lump(state, p, c, insurer, horizon)


def cost_reinsurer_K(t: float, y: float, z: float, p: float,
                     params: GameParameters) -> float:
    """Reinsurer objective when the insurer buys ``y_bar - y`` at time ``p``
    for premium kappa(p); ``p = inf`` means no sale."""
    T = params.horizon.T
    _check_time(t, T)
    if p != INFINITY and not t <= p <= T:
        raise ParameterError(f"purchase time {p} outside [{t}, {T}]")
    R = params.reinsurer
    tau = T - t
    out = (z * math.exp(-R.b_R * tau)
           + R.a_R / R.b_R * -math.expm1(-R.b_R * tau)
           + R.gamma_R * ou_variance(R.b_R, R.sigma_R, tau))
    if p != INFINITY:
        out += phi(p, params)[0] * (params.horizon.y_bar - y)
    return out


def phi(t, params: GameParameters):
    """Intent function and its time derivative, ``(phi(t), phi'(t))``."""
    T = params.horizon.T
    _check_time(t, T)
    I, R = params.insurer, params.reinsurer
    s = T - np.asarray(t, dtype=float)
    ratio = R.theta_R / I.theta_I
    rate = I.b_I - R.rho_R + I.rho_I
    e1 = np.exp(-R.b_R * s)
    e2 = np.exp(-rate * s)
    val = e1 - ratio * e2
    der = R.b_R * e1 - ratio * rate * e2
    if np.ndim(val) == 0:
        return float(val), float(der)
    return val, der
