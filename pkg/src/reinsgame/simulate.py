"""Monte Carlo engine for the controlled OU exposures and both objectives.

The uncontrolled terminal values are sampled with exact OU transitions.
Reinsurance purchases are deterministic in time, and OU dynamics are
linear, so a purchase of size A at time s shifts X_T by exactly
``-A e^{-b_I (T-s)}`` and Z_T by ``+A e^{-b_R (T-s)}``. This is the same
as splitting the step grid at s, and it lets any number of strategies
share one set of noise paths (common random numbers).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .closedform import INFINITY, purchase_time
from .model import (
    GameParameters,
    GameState,
    Horizon,
    InsurerParams,
    ParameterError,
    PremiumPath,
    ReinsuranceLaw,
)

# paths are generated in fixed blocks, each with its own seeded streams,
# so the output does not depend on how blocks are spread over threads
BLOCK_SIZE = 8192
INSURER_STREAM, REINSURER_STREAM = 0, 1


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    n_steps: int = 400
    seed: int = 12345

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ParameterError("n_paths and n_steps must be at least 1")
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int

    def z_score(self, reference: float) -> float:
        return z_score(self.mean - reference, self.std_error)


def z_score(diff: float, se: float, atol: float = 1e-10) -> float:
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) <= atol else math.copysign(INFINITY, diff)


@dataclass(frozen=True)
class ControlPath:
    """Deterministic purchase schedule: amounts bought at the given times."""

    times: tuple[float, ...] = ()
    amounts: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "amounts", tuple(float(a) for a in self.amounts))
        if len(self.times) != len(self.amounts):
            raise ParameterError("times and amounts differ in length")
        if any(a < 0 for a in self.amounts):
            raise ParameterError("purchases must be nonnegative (irreversible)")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ParameterError("purchase times must be sorted")

    @classmethod
    def lump(cls, s: float, amount: float) -> ControlPath:
        if s == INFINITY or amount <= 0:
            return cls()
        return cls((s,), (amount,))

    @property
    def total(self) -> float:
        return math.fsum(self.amounts)

    def then(self, other: ControlPath) -> ControlPath:
        return ControlPath(self.times + other.times, self.amounts + other.amounts)

    def x_shift(self, b: float, T: float) -> float:
        """Effect on the terminal value of an OU process with reversion ``b``."""
        return math.fsum(a * math.exp(-b * (T - s)) for s, a in zip(self.times, self.amounts))

    def premium(self, c: PremiumPath, rho: float, T: float) -> float:
        """Discounted premium ``sum e^{rho (T-s)} c(s) amount``."""
        return math.fsum(math.exp(rho * (T - s)) * c(s) * a
                         for s, a in zip(self.times, self.amounts))


def generate_strategy(state: GameState, law: ReinsuranceLaw | None, c: PremiumPath,
                      insurer: InsurerParams, horizon: Horizon) -> ControlPath:
    """Insurer's control from ``state``: buy all remaining coverage at p(t; c).

    If a law is given it must be the one the premium induces; a mismatch in
    the first purchasing instant is reported as an error.
    """
    state.check(horizon)
    p = purchase_time(state.t, c, insurer, horizon)
    if law is not None:
        q = law.first_purchase(state.t)
        if (p == INFINITY) != (q == INFINITY) or (p != INFINITY and abs(p - q) > 1e-9 * horizon.T):
            raise ParameterError(
                f"law purchases first at {q}, premium path implies {p}; "
                "not the time-only law of this premium")
    return ControlPath.lump(p, horizon.y_bar - state.y)


def _block_sizes(n_paths: int) -> list[int]:
    full, rest = divmod(n_paths, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _ou_terminal(rng: np.random.Generator, x0: float, a: float, b: float, sigma: float,
                 dt: float, n_steps: int, n: int) -> np.ndarray:
    m = a / b
    decay = math.exp(-b * dt)
    sd = sigma * math.sqrt(-math.expm1(-2.0 * b * dt) / (2.0 * b))
    x = np.full(n, float(x0))
    for _ in range(n_steps):
        x = m + (x - m) * decay + sd * rng.standard_normal(n)
    return x


def uncontrolled_terminal(state: GameState, params: GameParameters, mc: McConfig,
                          workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Terminal ``(X_T, Z_T)`` samples without reinsurance, in path order."""
    T = params.horizon.T
    state.check(params.horizon)
    tau = T - state.t
    n_steps = mc.n_steps if tau > 0 else 0
    dt = tau / mc.n_steps
    I, R = params.insurer, params.reinsurer

    def run(job):
        j, n = job
        rng_i = np.random.Generator(np.random.PCG64(np.random.SeedSequence([mc.seed, j, INSURER_STREAM])))
        rng_r = np.random.Generator(np.random.PCG64(np.random.SeedSequence([mc.seed, j, REINSURER_STREAM])))
        return (_ou_terminal(rng_i, state.x, I.a_I, I.b_I, I.sigma_I, dt, n_steps, n),
                _ou_terminal(rng_r, state.z, R.a_R, R.b_R, R.sigma_R, dt, n_steps, n))

    jobs = list(enumerate(_block_sizes(mc.n_paths)))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


@dataclass(frozen=True)
class PathSample:
    X_T: np.ndarray
    Z_T: np.ndarray
    premium_paid: np.ndarray


@dataclass(frozen=True)
class SimulatedObjectives:
    j_insurer: McEstimate
    j_reinsurer: McEstimate
    mean_XT: McEstimate
    var_XT: McEstimate
    premium_cost: McEstimate
    purchase_time_used: float
    mean_ZT: McEstimate | None = None
    var_ZT: McEstimate | None = None
    paths: PathSample | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if k == "paths":
                continue
            if k == "purchase_time_used":
                v = "inf" if v == INFINITY else v
            out[k] = v
        return out


def _centred(x: np.ndarray) -> np.ndarray:
    # shift by a sample value so a constant sample has exactly zero spread
    return x - x[0]


def _mean(x: np.ndarray, mc: McConfig) -> McEstimate:
    n = x.size
    u = _centred(x)
    se = float(np.std(u, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(float(x[0] + np.mean(u)), se, n, mc.seed)


def _variance(x: np.ndarray, mc: McConfig) -> McEstimate:
    n = x.size
    if n < 2:
        return McEstimate(0.0, 0.0, n, mc.seed)
    u = _centred(x)
    dev = u - np.mean(u)
    s2 = float(np.var(u, ddof=1))
    m4 = float(np.mean(dev ** 4))
    return McEstimate(s2, math.sqrt(max(m4 - s2 ** 2, 0.0) / n), n, mc.seed)


def mv_terms(x: np.ndarray, gamma: float) -> np.ndarray:
    """Per-path ``x + gamma (x - mean)^2``, whose mean estimates ``E + gamma Var``."""
    u = _centred(x)
    return x + gamma * (u - np.mean(u)) ** 2


def objectives_from_terminal(x0: np.ndarray, z0: np.ndarray, control: ControlPath,
                             c: PremiumPath, params: GameParameters, mc: McConfig,
                             purchase: float, keep_paths: bool = False) -> SimulatedObjectives:
    """Apply a deterministic control to uncontrolled terminal samples."""
    I, R = params.insurer, params.reinsurer
    T = params.horizon.T
    x = x0 - control.x_shift(I.b_I, T)
    z = z0 + control.x_shift(R.b_R, T)
    prem_i = control.premium(c, I.rho_I, T)
    prem_r = control.premium(c, R.rho_R, T)
    n = x.size

    mean_x, var_x = _mean(x, mc), _variance(x, mc)
    mean_z, var_z = _mean(z, mc), _variance(z, mc)
    prem = McEstimate(prem_i, 0.0, n, mc.seed)
    j_i = McEstimate(mean_x.mean + I.gamma_I * var_x.mean + I.theta_I * prem_i,
                     _mean(mv_terms(x, I.gamma_I), mc).std_error, n, mc.seed)
    j_r = McEstimate(mean_z.mean + R.gamma_R * var_z.mean - R.theta_R * prem_r,
                     _mean(mv_terms(z, R.gamma_R), mc).std_error, n, mc.seed)
    paths = PathSample(x, z, np.full(n, prem_i)) if keep_paths else None
    return SimulatedObjectives(j_i, j_r, mean_x, var_x, prem, purchase, mean_z, var_z, paths)


def simulate(state: GameState, c: PremiumPath, params: GameParameters, mc: McConfig,
             control: ControlPath | None = None, workers: int = 1,
             keep_paths: bool = False) -> SimulatedObjectives:
    """Estimate both objectives under the insurer's strategy (or ``control``)."""
    if control is None:
        control = generate_strategy(state, None, c, params.insurer, params.horizon)
        p = purchase_time(state.t, c, params.insurer, params.horizon)
    else:
        p = control.times[0] if control.times else INFINITY
    x0, z0 = uncontrolled_terminal(state, params, mc, workers)
    return objectives_from_terminal(x0, z0, control, c, params, mc, p, keep_paths)


def derived_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def variance_profile(state: GameState, purchase_times, params: GameParameters,
                     mc: McConfig, c: PremiumPath | None = None,
                     workers: int = 1) -> list[McEstimate]:
    """Terminal-variance estimates for a lump purchase at each given time.

    Each time gets its own derived seed, so the estimates are independent.
    """
    T = params.horizon.T
    if c is None:
        c = PremiumPath.constant(0.0, T)
    out = []
    for k, s in enumerate(purchase_times):
        if not state.t <= s <= T:
            raise ParameterError(f"purchase time {s} outside [{state.t}, {T}]")
        sub = McConfig(mc.n_paths, mc.n_steps, derived_seed(mc.seed, k))
        ctrl = ControlPath.lump(s, params.horizon.y_bar - state.y)
        res = simulate(state, c, params, sub, control=ctrl, workers=workers)
        out.append(res.var_XT)
    return out


def write_paths_csv(paths: PathSample, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path_index", "X_T", "Z_T", "premium_paid"])
        for i, (x, z, p) in enumerate(zip(paths.X_T, paths.Z_T, paths.premium_paid)):
            w.writerow([i, repr(float(x)), repr(float(z)), repr(float(p))])
