"""Equilibrium engine for a Stackelberg reinsurance game with irreversible purchases."""

from .model import (
    GameParameters,
    GameState,
    Horizon,
    InsurerParams,
    Interval,
    ParameterError,
    PremiumPath,
    ReinsuranceLaw,
    ReinsurerParams,
    load_parameters,
    validate,
)

__all__ = [
    "GameParameters",
    "GameState",
    "Horizon",
    "InsurerParams",
    "Interval",
    "ParameterError",
    "PremiumPath",
    "ReinsuranceLaw",
    "ReinsurerParams",
    "load_parameters",
    "validate",
]
__version__ = "0.1.0"
