"""Parameter builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from reinsgame.model import GameParameters, GameState
from reinsgame.regions import PreferenceCoordinates, classify

BASE = dict(
    a_I=0.05, b_I=0.1, sigma_I=0.3, gamma_I=1.0, theta_I=2.0, rho_I=0.05,
    a_R=0.05, b_R=0.2, sigma_R=0.25, gamma_R=1.0, theta_R=1.0, rho_R=0.05,
    T=1.0, y_bar=1.0,
)


def base_params(**changes) -> GameParameters:
    return GameParameters.from_dict({**BASE, **changes})


def params_at(r: float, d: float, T: float = 1.0, b_R: float = 0.2, **changes) -> GameParameters:
    """Parameters with preference coordinates ``(r, d)``; rho_I absorbs d."""
    p = {**BASE, "T": T, "b_R": b_R, **changes}
    p["theta_I"] = r * p["theta_R"]
    p["rho_I"] = d + b_R + p["rho_R"] - p["b_I"]
    return GameParameters.from_dict(p)


def _robust(r: float, d: float, b_R: float, T: float, label: str) -> bool:
    # stay clear of boundaries so endpoint formulas are well conditioned
    for dr in (-1e-3, 0.0, 1e-3):
        for dd in (-1e-3, 0.0, 1e-3):
            lab = classify(PreferenceCoordinates(r * (1 + dr), d + dd * b_R), b_R, T)
            if lab.label != label:
                return False
    return True


def sample_region_params(rng: np.random.Generator, label: str) -> GameParameters:
    """Random parameters whose (d, r) lies inside the named area region.

    Region VIII uses the long horizon T = 20, b_R = 0.2. The insurer's rate
    sum b_I + rho_I is kept positive so that kappa is increasing.
    """
    if label == "VIII":
        T, b_R = 20.0, 0.2
    else:
        T, b_R = float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.2, 3.0))
    for _ in range(100_000):
        d = float(rng.uniform(-2.0 * b_R, 1.5 * b_R))
        r = float(np.exp(rng.uniform(np.log(0.1), np.log(4.0))))
        if _robust(r, d, b_R, T, label):
            break
    else:
        raise RuntimeError(f"could not sample region {label}")
    theta_R = float(rng.uniform(0.5, 2.0))
    b_I = float(rng.uniform(0.05, 0.6))
    rho_R = float(rng.uniform(-0.05, 0.1))
    # keep b_I + rho_I = d + b_R + rho_R positive
    rho_R = max(rho_R, -d - b_R + float(rng.uniform(0.02, 0.2)))
    p = dict(
        a_I=float(rng.uniform(0.0, 0.1)), b_I=b_I, sigma_I=float(rng.uniform(0.1, 0.5)),
        gamma_I=float(rng.uniform(0.5, 2.0)), theta_I=r * theta_R,
        rho_I=d + b_R + rho_R - b_I,
        a_R=float(rng.uniform(0.0, 0.1)), b_R=b_R, sigma_R=float(rng.uniform(0.1, 0.5)),
        gamma_R=float(rng.uniform(0.5, 2.0)), theta_R=theta_R, rho_R=rho_R,
        T=T, y_bar=float(rng.uniform(0.5, 2.0)),
    )
    return GameParameters.from_dict(p)


def sample_state(rng: np.random.Generator, params: GameParameters) -> GameState:
    return GameState(x=float(rng.uniform(0.0, 2.0)), t=0.0,
                     y=float(rng.uniform(0.0, 0.5 * params.horizon.y_bar)),
                     z=float(rng.uniform(0.0, 2.0)))
