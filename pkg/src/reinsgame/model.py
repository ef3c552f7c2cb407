"""Parameter and state types shared across the package."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable

import numpy as np


class ParameterError(ValueError):
    """Raised when a model constant or state violates its constraints."""


@dataclass(frozen=True)
class InsurerParams:
    a_I: float
    b_I: float
    sigma_I: float
    gamma_I: float
    theta_I: float
    rho_I: float


@dataclass(frozen=True)
class ReinsurerParams:
    a_R: float
    b_R: float
    sigma_R: float
    gamma_R: float
    theta_R: float
    rho_R: float


@dataclass(frozen=True)
class Horizon:
    T: float
    y_bar: float


PARAMETER_FIELDS = (
    "a_I", "b_I", "sigma_I", "gamma_I", "theta_I", "rho_I",
    "a_R", "b_R", "sigma_R", "gamma_R", "theta_R", "rho_R",
    "T", "y_bar",
)

# checked in this order; the first failure is reported
_POSITIVE = (
    "b_I", "sigma_I", "gamma_I", "theta_I",
    "b_R", "sigma_R", "gamma_R", "theta_R",
    "T", "y_bar",
)


@dataclass(frozen=True)
class GameParameters:
    """The insurer, reinsurer and horizon constants of one game."""

    insurer: InsurerParams
    reinsurer: ReinsurerParams
    horizon: Horizon

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GameParameters:
        missing = [k for k in PARAMETER_FIELDS if k not in data]
        if missing:
            raise ParameterError(f"missing parameter(s): {', '.join(missing)}")
        vals = {}
        for k in PARAMETER_FIELDS:
            v = data[k]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParameterError(f"{k} must be a number, got {v!r}")
            vals[k] = float(v)
        return validate(cls(
            InsurerParams(**{f.name: vals[f.name] for f in fields(InsurerParams)}),
            ReinsurerParams(**{f.name: vals[f.name] for f in fields(ReinsurerParams)}),
            Horizon(T=vals["T"], y_bar=vals["y_bar"]),
        ))

    def to_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for part in (self.insurer, self.reinsurer, self.horizon):
            for f in fields(part):
                out[f.name] = getattr(part, f.name)
        return out

    def get(self, name: str) -> float:
        return self.to_dict()[name]

    def replace(self, **changes: float) -> GameParameters:
        """Copy with some flat fields changed (e.g. ``theta_I=3.0``)."""
        d = self.to_dict()
        unknown = set(changes) - set(d)
        if unknown:
            raise ParameterError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        d.update(changes)
        return GameParameters.from_dict(d)


def validate(params: GameParameters) -> GameParameters:
    """Return ``params`` unchanged if every constraint holds.

    Raises ParameterError naming the first violated constraint.
    """
    d = params.to_dict()
    for k in PARAMETER_FIELDS:
        if not math.isfinite(d[k]):
            raise ParameterError(f"{k} must be finite")
    for k in _POSITIVE:
        if not d[k] > 0:
            raise ParameterError(f"{k} must be positive")
    return params


def load_parameters(path: str | Path) -> tuple[GameParameters, dict[str, Any]]:
    """Read a parameter JSON file.

    Returns the validated parameters and any extra (non-parameter) keys,
    which the CLI treats as run options.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ParameterError("parameter file must hold a JSON object")
    extras = {k: v for k, v in data.items() if k not in PARAMETER_FIELDS}
    return GameParameters.from_dict(data), extras


@dataclass(frozen=True)
class GameState:
    """Insurer exposure x, time t, accumulated reinsurance y, reinsurer exposure z."""

    x: float
    t: float
    y: float
    z: float = 0.0

    def check(self, horizon: Horizon) -> GameState:
        if not 0.0 <= self.t <= horizon.T:
            raise ParameterError(f"t={self.t} outside [0, {horizon.T}]")
        if not 0.0 <= self.y <= horizon.y_bar:
            raise ParameterError(f"y={self.y} outside [0, {horizon.y_bar}]")
        return self


class PremiumPath:
    """Right-continuous step function of time on ``[0, T]``.

    ``values[i]`` holds on ``[grid[i], grid[i+1])``; the last value is the
    premium at ``T`` itself.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Iterable[float], values: Iterable[float]):
        g = np.array(grid, dtype=float)
        v = np.array(values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ParameterError("grid and values must be 1-d arrays of equal length >= 2")
        if g[0] != 0.0:
            raise ParameterError("premium grid must start at 0")
        if not np.all(np.diff(g) > 0):
            raise ParameterError("premium grid must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ParameterError("premium values must be finite and nonnegative")
        g.flags.writeable = False
        v.flags.writeable = False
        self.grid = g
        self.values = v

    @classmethod
    def constant(cls, value: float, T: float, n: int = 2001) -> PremiumPath:
        g = np.linspace(0.0, T, n)
        return cls(g, np.full(n, float(value)))

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def cell_index(self, t):
        """Index of the grid cell containing ``t`` (``n-1`` at ``T``)."""
        idx = np.searchsorted(self.grid, t, side="right") - 1
        return np.clip(idx, 0, self.grid.size - 1)

    def __call__(self, t):
        out = self.values[self.cell_index(t)]
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self) -> str:
        return f"PremiumPath(n={self.grid.size}, T={self.T})"


@dataclass(frozen=True, order=True)
class Interval:
    start: float
    end: float
    start_closed: bool = True
    end_closed: bool = True

    def __post_init__(self):
        if self.end < self.start:
            raise ParameterError(f"interval end {self.end} before start {self.start}")
        if self.start == self.end and not (self.start_closed and self.end_closed):
            raise ParameterError("a degenerate interval must be closed on both sides")

    @property
    def is_point(self) -> bool:
        return self.start == self.end

    def contains(self, t: float) -> bool:
        lo = t >= self.start if self.start_closed else t > self.start
        hi = t <= self.end if self.end_closed else t < self.end
        return lo and hi

    def __str__(self) -> str:
        if self.is_point:
            return f"{{{self.start:g}}}"
        return (f"{'[' if self.start_closed else '('}{self.start:g}, "
                f"{self.end:g}{']' if self.end_closed else ')'}")


@dataclass(frozen=True)
class ReinsuranceLaw:
    """A division of ``[0, T]`` into purchasing intervals and their complement."""

    T: float
    purchasing: tuple[Interval, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "purchasing", tuple(self.purchasing))
        prev = None
        for iv in self.purchasing:
            if iv.start < 0 or iv.end > self.T:
                raise ParameterError(f"interval {iv} not within [0, {self.T}]")
            if prev is not None:
                touching = prev.end == iv.start and not (prev.end_closed and iv.start_closed)
                if prev.end > iv.start or (prev.end == iv.start and not touching):
                    raise ParameterError(f"intervals {prev} and {iv} overlap or are unsorted")
            prev = iv

    def contains(self, t: float) -> bool:
        """True if ``t`` lies in the purchasing region."""
        return any(iv.contains(t) for iv in self.purchasing)

    @property
    def waiting(self) -> tuple[Interval, ...]:
        """The complement of the purchasing region in ``[0, T]``."""
        out = []
        cur, cur_closed = 0.0, True
        for iv in self.purchasing:
            if iv.start > cur or (iv.start == cur and cur_closed and not iv.start_closed):
                out.append(Interval(cur, iv.start, cur_closed, not iv.start_closed))
            cur, cur_closed = iv.end, not iv.end_closed
        if cur < self.T or (cur == self.T and cur_closed):
            out.append(Interval(cur, self.T, cur_closed, True))
        return tuple(out)

    def segments(self) -> list[tuple[str, Interval]]:
        """Waiting ('W') and purchasing ('P') pieces in time order."""
        segs = [("P", iv) for iv in self.purchasing] + [("W", iv) for iv in self.waiting]
        return sorted(segs, key=lambda s: (s[1].start, not s[1].start_closed))

    def first_purchase(self, t: float) -> float:
        """Earliest purchasing instant at or after ``t`` (``inf`` if none)."""
        for iv in self.purchasing:
            if iv.contains(t):
                return t
            # for an open start this is the infimum of the purchase instants
            if iv.start >= t and iv.end > t:
                return iv.start
        return math.inf

    def approx_equal(self, other: ReinsuranceLaw, tol: float) -> bool:
        """Same interval structure with endpoints within ``tol``; flags ignored."""
        if len(self.purchasing) != len(other.purchasing):
            return False
        return all(abs(a.start - b.start) <= tol and abs(a.end - b.end) <= tol
                   for a, b in zip(self.purchasing, other.purchasing))

    def __str__(self) -> str:
        p = " U ".join(str(iv) for iv in self.purchasing) or "{}"
        w = " U ".join(str(iv) for iv in self.waiting) or "{}"
        return f"W={w}, P={p}"
