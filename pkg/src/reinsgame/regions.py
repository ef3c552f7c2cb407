"""Preference coordinates, the eight equilibrium regions, and premium generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .closedform import kappa, purchasing_pieces
from .model import (
    GameParameters,
    Horizon,
    InsurerParams,
    Interval,
    ParameterError,
    PremiumPath,
    ReinsuranceLaw,
)

LABELS = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII")
AREA_LABELS = ("I", "II", "III", "IV", "V", "VIII")
KINDS = {"VI": "line", "VII": "point"}

# d is treated as exactly 0 below this fraction of the larger rate sum
D_SNAP_RTOL = 1e-12
# default relative width of the sliver cells placed after law endpoints
SLIVER_RTOL = 1e-10


class RegionTieError(RuntimeError):
    """No region, or more than one, matched a point of the (d, r) plane."""


@dataclass(frozen=True)
class PreferenceCoordinates:
    r: float
    d: float

    def __post_init__(self):
        if not self.r > 0:
            raise ParameterError("r must be positive")


@dataclass(frozen=True)
class RegionLabel:
    label: str
    kind: str
    near_boundary: bool = False

    def __str__(self) -> str:
        return f"region {self.label} ({self.kind})"


@dataclass(frozen=True)
class EquilibriumLaws:
    """Equilibrium laws for one region.

    ``arbitrary`` is set for the point region, where every division of
    ``[0, T]`` is an equilibrium and ``laws`` holds only a canonical choice.
    """

    label: str
    laws: tuple[ReinsuranceLaw, ...]
    arbitrary: bool = False

    @property
    def law(self) -> ReinsuranceLaw:
        return self.laws[0]


def coordinates(params: GameParameters) -> PreferenceCoordinates:
    I, R = params.insurer, params.reinsurer
    r = I.theta_I / R.theta_R
    kI, kR = I.b_I + I.rho_I, R.b_R + R.rho_R
    d = kI - kR
    if abs(d) <= D_SNAP_RTOL * max(abs(kI), abs(kR)):
        d = 0.0
    if abs(r - 1.0) <= D_SNAP_RTOL:
        r = 1.0
    return PreferenceCoordinates(r=r, d=d)


def region_tests(r: float, d: float, b_R: float, T: float) -> dict[str, bool]:
    """Membership of ``(d, r)`` in each region, inequalities as defined.

    The region with a cut-off time only (II) is taken without the points of
    the region with both start-up and cut-off times (VIII), which it would
    otherwise contain; this makes the eight sets disjoint.
    """
    B = 1.0 + d / b_R
    E = math.exp(-T * d)
    BE = B * E
    viii = 1.0 < r < BE and d < 0
    return {
        "I": r > 1 and r > E,
        "II": r > 1 and r <= E and not viii,
        "III": r <= 1 and r >= BE and d < 0,
        "IV": r <= 1 and r < BE and r >= B,
        "V": r < B and r < 1,
        "VI": r == 1 and d > 0,
        "VII": d == 0 and r == 1,
        "VIII": viii,
    }


def _match(r: float, d: float, b_R: float, T: float) -> str:
    hits = [k for k, v in region_tests(r, d, b_R, T).items() if v]
    if len(hits) != 1:
        raise RegionTieError(f"(d={d!r}, r={r!r}) matches {hits or 'no region'}")
    return hits[0]


def classify(coords: PreferenceCoordinates, b_R: float, T: float) -> RegionLabel:
    """Region containing ``(d, r)``.

    ``near_boundary`` is set when a relative nudge of 1e-12 in ``r`` or ``d``
    would change the answer, i.e. the label rests on a floating-point tie.
    """
    if not (b_R > 0 and T > 0):
        raise ParameterError("b_R and T must be positive")
    label = _match(coords.r, coords.d, b_R, T)
    near = False
    for dr in (-1, 1):
        for dd in (-1, 1):
            r2 = coords.r * (1 + dr * D_SNAP_RTOL)
            d2 = coords.d + dd * D_SNAP_RTOL * max(abs(coords.d), b_R)
            try:
                near |= _match(r2, d2, b_R, T) != label
            except RegionTieError:
                near = True
    return RegionLabel(label, KINDS.get(label, "area"), near)


def classify_params(params: GameParameters) -> RegionLabel:
    return classify(coordinates(params), params.reinsurer.b_R, params.horizon.T)


def startup_time(coords: PreferenceCoordinates, b_R: float, T: float) -> float:
    """Stationary point of the intent function (``phi'(t*) = 0``)."""
    return T + math.log(b_R * coords.r / (b_R + coords.d)) / coords.d


def cutoff_time(coords: PreferenceCoordinates, T: float) -> float:
    """Zero of the intent function (``phi(t_c) = 0``)."""
    return T + math.log(coords.r) / coords.d


def _clip(t: float, T: float) -> float:
    return min(max(t, 0.0), T)


def equilibrium_law(label: RegionLabel | str, coords: PreferenceCoordinates,
                    b_R: float, T: float) -> EquilibriumLaws:
    """Reinsurer's equilibrium law(s) for a region."""
    lab = label.label if isinstance(label, RegionLabel) else str(label)
    full = Interval(0.0, T)
    terminal = Interval(T, T)
    if lab == "I":
        laws = [ReinsuranceLaw(T, ())]
    elif lab == "II":
        laws = [ReinsuranceLaw(T, (Interval(0.0, _clip(cutoff_time(coords, T), T)),))]
    elif lab == "III":
        laws = [ReinsuranceLaw(T, (full,))]
    elif lab == "IV":
        laws = [ReinsuranceLaw(T, (Interval(_clip(startup_time(coords, b_R, T), T), T),))]
    elif lab == "V":
        laws = [ReinsuranceLaw(T, (terminal,))]
    elif lab == "VI":
        laws = [ReinsuranceLaw(T, (terminal,)), ReinsuranceLaw(T, ())]
    elif lab == "VII":
        return EquilibriumLaws(lab, (ReinsuranceLaw(T, (terminal,)),), arbitrary=True)
    elif lab == "VIII":
        a = _clip(startup_time(coords, b_R, T), T)
        b = _clip(cutoff_time(coords, T), T)
        laws = [ReinsuranceLaw(T, (Interval(a, b),))]
    else:
        raise ParameterError(f"unknown region label {lab!r}")
    return EquilibriumLaws(lab, tuple(laws))


def equilibrium_for(params: GameParameters) -> EquilibriumLaws:
    coords = coordinates(params)
    b_R, T = params.reinsurer.b_R, params.horizon.T
    return equilibrium_law(classify(coords, b_R, T), coords, b_R, T)


def premium_grid(law: ReinsuranceLaw, n: int = 2001,
                 sliver: float = SLIVER_RTOL) -> np.ndarray:
    """Uniform grid on ``[0, T]`` refined at the law's endpoints.

    A sliver point is added after every endpoint where the cell on its right
    must be classified differently from the endpoint itself, and after every
    purchasing start so that the premium there is kappa to ~1e-10 relative.
    """
    T = law.T
    eps = sliver * T
    pts = [np.linspace(0.0, T, n)]
    extra = []
    for iv in law.purchasing:
        extra += [iv.start, iv.end]
        if iv.start < T:
            extra.append(iv.start + eps)
        if iv.end < T and iv.end_closed:
            extra.append(iv.end + eps)
    pts.append(np.clip(np.array(extra, dtype=float), 0.0, T))
    return np.unique(np.concatenate(pts))


def generate_premium(law: ReinsuranceLaw, insurer: InsurerParams, horizon: Horizon,
                     markup: float = 0.1, n: int = 2001) -> PremiumPath:
    """Equilibrium premium: kappa on the purchasing region, kappa*(1+markup) elsewhere.

    On a cell the step value is the smaller kappa endpoint for purchasing
    cells and the larger one (with markup) for waiting cells, so the
    insurer's threshold rule recovers the law exactly.
    """
    if not markup > 0:
        raise ParameterError("markup must be positive")
    if abs(law.T - horizon.T) > 1e-12 * horizon.T:
        raise ParameterError("law and horizon disagree on T")
    g = premium_grid(law, n)
    k = kappa(g, insurer, horizon)
    buy = np.array([law.contains(t) for t in g[:-1]])
    vals = np.where(buy, np.minimum(k[:-1], k[1:]),
                    np.maximum(k[:-1], k[1:]) * (1.0 + markup))
    last = k[-1] if law.contains(horizon.T) else k[-1] * (1.0 + markup)
    return PremiumPath(g, np.append(vals, last))


def insurer_law(c: PremiumPath, insurer: InsurerParams, horizon: Horizon) -> ReinsuranceLaw:
    """Division ``P = {t : c(t) <= kappa(t)}`` induced by the premium path."""
    T = horizon.T
    pc = purchasing_pieces(c, insurer, horizon)
    out: list[list] = []  # [start, end, end_closed]
    for i in np.flatnonzero(pc.nonempty):
        lo, hi, hc = float(pc.lo[i]), float(pc.hi[i]), bool(pc.hi_closed[i])
        if lo == hi and not hc:
            continue
        if out and out[-1][1] == lo:
            out[-1][1], out[-1][2] = hi, hc
        else:
            out.append([lo, hi, hc])
    if pc.terminal:
        if out and out[-1][1] == T:
            out[-1][2] = True
        else:
            out.append([T, T, True])
    return ReinsuranceLaw(T, tuple(Interval(a, b, True, hc) for a, b, hc in out))


CURVES = ("r=1", "r=exp(-Td)", "r=1+d/bR", "r=(1+d/bR)exp(-Td)", "d=0")


def boundary_curves(b_R: float, T: float, d_range: tuple[float, float],
                    n: int = 201) -> list[tuple[str, float, float]]:
    """Sampled region boundaries as ``(curve, d, r)`` rows with ``r > 0``."""
    if n < 2:
        raise ParameterError("n must be at least 2")
    d_lo, d_hi = map(float, d_range)
    if not d_lo < d_hi:
        raise ParameterError("d range must be increasing")
    d = np.linspace(d_lo, d_hi, n)
    B = 1.0 + d / b_R
    E = np.exp(-T * d)
    curves = {
        "r=1": np.ones_like(d),
        "r=exp(-Td)": E,
        "r=1+d/bR": B,
        "r=(1+d/bR)exp(-Td)": B * E,
    }
    rows = []
    for name, r in curves.items():
        rows += [(name, float(x), float(y)) for x, y in zip(d, r) if y > 0]
    r_max = max(max((y for _, _, y in rows), default=1.0), 1.0)
    rows += [("d=0", 0.0, float(y)) for y in np.linspace(0.0, r_max, n + 1)[1:]]
    return rows


def region_samples(b_R: float, T: float, d_range: tuple[float, float],
                   r_range: tuple[float, float], n: int = 101) -> list[tuple[float, float, str]]:
    """Labels on an ``n x n`` lattice of the (d, r) plane."""
    rows = []
    for d in np.linspace(*d_range, n):
        for r in np.linspace(*r_range, n):
            if r > 0:
                rows.append((float(d), float(r),
                             classify(PreferenceCoordinates(float(r), float(d)), b_R, T).label))
    return rows


def write_curves_csv(rows: Iterable[tuple[str, float, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "d", "r"])
        for name, d, r in rows:
            w.writerow([name, repr(d), repr(r)])


def write_law_csv(law: ReinsuranceLaw, path: str | Path) -> None:
    """Both purchasing and waiting pieces, in time order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["interval_index", "start", "start_closed", "end", "end_closed", "kind"])
        for i, (kind, iv) in enumerate(law.segments()):
            w.writerow([i, repr(iv.start), str(iv.start_closed).lower(), repr(iv.end),
                        str(iv.end_closed).lower(), "purchasing" if kind == "P" else "waiting"])


def read_law_csv(path: str | Path, T: float) -> ReinsuranceLaw:
    def flag(s: str) -> bool:
        if s.strip().lower() not in ("true", "false"):
            raise ParameterError(f"bad endpoint flag {s!r}")
        return s.strip().lower() == "true"

    ivs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["kind"] == "purchasing":
                ivs.append(Interval(float(row["start"]), float(row["end"]),
                                    flag(row["start_closed"]), flag(row["end_closed"])))
    return ReinsuranceLaw(T, tuple(ivs))


def write_premium_csv(c: PremiumPath, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "c"])
        for t, v in zip(c.grid, c.values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_premium_csv(path: str | Path) -> PremiumPath:
    ts, vs = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ts.append(float(row["t"]))
            vs.append(float(row["c"]))
    return PremiumPath(ts, vs)


def perturb_law(law: ReinsuranceLaw, frac: float = 0.05) -> ReinsuranceLaw:
    """Move one endpoint of the law by ``frac * T`` into the neighbouring region.

    The first endpoint strictly inside ``(0, T)`` is pushed later (or earlier
    when later would empty its interval). Laws without such an endpoint get
    a purchasing window ``[T - frac T, T]`` (no purchase, or a terminal one)
    or a waiting window ``[0, frac T)`` (purchase throughout).
    """
    T = law.T
    delta = frac * T
    ivs = list(law.purchasing)
    for i, iv in enumerate(ivs):
        for which in ("start", "end"):
            e = getattr(iv, which)
            if not 0.0 < e < T or iv.is_point:
                continue
            for s in (delta, -delta):
                a = _clip(iv.start + s, T) if which == "start" else iv.start
                b = _clip(iv.end + s, T) if which == "end" else iv.end
                if b <= a:
                    continue
                cand = ivs[:i] + [Interval(a, b, iv.start_closed, iv.end_closed)] + ivs[i + 1:]
                try:
                    return ReinsuranceLaw(T, tuple(cand))
                except ParameterError:
                    continue
    if not ivs or (len(ivs) == 1 and ivs[0].is_point and ivs[0].start == T):
        return ReinsuranceLaw(T, (Interval(T - delta, T),))
    if len(ivs) == 1 and ivs[0].start == 0.0 and ivs[0].end == T:
        return ReinsuranceLaw(T, (Interval(delta, T),))
    raise ParameterError(f"no endpoint of {law} can be perturbed")


def swapped_law(law: ReinsuranceLaw) -> ReinsuranceLaw:
    """Exchange the waiting and purchasing regions."""
    return ReinsuranceLaw(law.T, law.waiting)


def law_summary(law: ReinsuranceLaw) -> dict:
    return {
        "purchasing": [[iv.start, iv.end, iv.start_closed, iv.end_closed] for iv in law.purchasing],
        "text": str(law),
    }

