"""Price forecasters for the simulation loop, plus forecast-quality metrics.

Three deterministic baselines ship: *persistence* repeats the last observed
row, *drift* extrapolates each asset's least-squares trend over a lookback
window, and *oracle* copies the true future (testing only).  Anything that
maps an observed history window to a positive price matrix can stand in —
the engine only consumes the returned rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DimensionMismatchError

__all__ = [
    "METHOD_PERSISTENCE",
    "METHOD_DRIFT",
    "METHOD_ORACLE",
    "ForecastConfig",
    "Forecast",
    "InsufficientHistoryError",
    "forecast",
    "mape",
    "exclude_scenario",
]

METHOD_PERSISTENCE = "persistence"
METHOD_DRIFT = "drift"
METHOD_ORACLE = "oracle"
_METHODS = (METHOD_PERSISTENCE, METHOD_DRIFT, METHOD_ORACLE)

DEFAULT_LOOKBACK = 48
DEFAULT_MAPE_THRESHOLD = 10.0


class InsufficientHistoryError(ValueError):
    """Not enough observed (or, for the oracle, future) rows to forecast."""


@dataclass(frozen=True, slots=True)
class ForecastConfig:
    method: str = METHOD_PERSISTENCE
    lookback: int = DEFAULT_LOOKBACK
    horizon: int = 1

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ValueError(f"unknown forecast method {self.method!r}")
        if self.lookback < 1:
            raise ValueError("lookback must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


@dataclass(frozen=True, slots=True)
class Forecast:
    """Predicted prices for the next ``horizon`` periods (cents; drift keeps
    fractional cents rather than losing trend information to rounding)."""

    values: np.ndarray
    method: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionMismatchError("forecast values must be (horizon x assets)")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("forecast prices must be positive and finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]


def forecast(prices, t_index: int, config: ForecastConfig) -> Forecast:
    """Forecast rows ``t_index+1 .. t_index+horizon`` of a price panel.

    ``prices`` is the scenario's full price matrix; only rows up to and
    including ``t_index`` count as observed (the oracle method peeks past
    that line, which is exactly its point).  Requires ``lookback`` observed
    rows regardless of method, so method swaps never change data demands.
    """
    panel = np.asarray(prices, dtype=np.float64)
    if panel.ndim != 2:
        raise DimensionMismatchError("price panel must be 2-D (periods x assets)")
    if t_index < 0 or t_index >= panel.shape[0]:
        raise IndexError(f"t_index {t_index} outside the panel")
    observed = panel[: t_index + 1]
    if observed.shape[0] < config.lookback:
        raise InsufficientHistoryError(
            f"need {config.lookback} observed rows, have {observed.shape[0]}"
        )

    horizon = config.horizon
    if config.method == METHOD_PERSISTENCE:
        values = np.tile(observed[-1], (horizon, 1))
    elif config.method == METHOD_DRIFT:
        window = observed[-config.lookback :]
        steps = np.arange(window.shape[0], dtype=np.float64)
        # per-asset least-squares line, extrapolated 1..horizon steps ahead
        slope, intercept = np.polyfit(steps, window, deg=1)
        future_steps = steps[-1] + np.arange(1, horizon + 1, dtype=np.float64)
        values = np.outer(future_steps, slope) + intercept
        values = np.maximum(values, 1.0)  # floor at one cent
    else:  # oracle
        if t_index + 1 + horizon > panel.shape[0]:
            raise InsufficientHistoryError(
                f"oracle forecast needs {horizon} future rows after index {t_index}"
            )
        values = panel[t_index + 1 : t_index + 1 + horizon].copy()
    return Forecast(values=values, method=config.method)


def mape(predicted, realized) -> float:
    """Mean absolute percent error over all cells, in percent."""
    pred = np.asarray(predicted, dtype=np.float64)
    real = np.asarray(realized, dtype=np.float64)
    if pred.shape != real.shape:
        raise DimensionMismatchError(f"shape mismatch: {pred.shape} vs {real.shape}")
    if np.any(real <= 0):
        raise ValueError("realized prices must be positive")
    return float(np.mean(np.abs(pred - real) / real) * 100.0)


def exclude_scenario(mean_mape: float, threshold: float = DEFAULT_MAPE_THRESHOLD) -> bool:
    """A scenario is excluded when its mean forecast MAPE strictly exceeds
    the threshold (default 10%)."""
    if mean_mape < 0:
        raise ValueError("mean MAPE cannot be negative")
    return mean_mape > threshold
