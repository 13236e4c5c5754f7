"""Squeezed-light resource: OPO noise budget, Stokes noise state, optical loss.

All variances are linear and relative to the shot-noise level (SNL), so a
coherent probe has variance 1 on every Stokes component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ThresholdExceededError

__all__ = [
    "OpoBudget",
    "StokesNoiseState",
    "opo_noise",
    "pump_parameter",
    "apply_optical_loss",
    "db_to_lin",
    "lin_to_db",
    "db_lin_convert",
    "coherent_state",
    "squeezed_state",
    "state_from_opo",
    "with_power",
]


def _check_unit_interval(name, value):
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class OpoBudget:
    """Efficiency chain and operating point of a sub-threshold OPO.

    Attributes
    ----------
    eta : float
        Detector quantum efficiency.
    epsilon : float
        Interference visibility between squeezed vacuum and local oscillator.
    zeta : float
        Propagation (transmission) efficiency.
    rho : float
        Cavity escape efficiency.
    x : float
        Pump parameter, ``sqrt(P_pump / P_threshold)``; must be below 1.
    omega : float
        Normalized detuning (analysis frequency over cavity half-linewidth).
    """

    eta: float
    epsilon: float
    zeta: float
    rho: float
    x: float
    omega: float = 0.0

    def __post_init__(self):
        for name in ("eta", "epsilon", "zeta", "rho"):
            _check_unit_interval(name, getattr(self, name))
        if self.x >= 1.0:
            raise ThresholdExceededError(f"pump parameter x={self.x!r} is at or above threshold")
        if self.x < 0.0:
            raise DomainError(f"pump parameter x must be >= 0, got {self.x!r}")
        if self.omega < 0.0:
            raise DomainError(f"omega must be >= 0, got {self.omega!r}")

    @property
    def total_efficiency(self):
        return self.eta * self.epsilon**2 * self.zeta * self.rho


@dataclass(frozen=True)
class StokesNoiseState:
    """Noise of the bright polarization state on the squeezed/anti-squeezed axes.

    ``s2_var_rel_snl`` is the squeezing factor xi^2 seen by the polarimeter.
    """

    s2_var_rel_snl: float
    s3_var_rel_snl: float
    power_mw: float = 0.0

    def __post_init__(self):
        if not (self.s2_var_rel_snl > 0 and self.s3_var_rel_snl > 0):
            raise DomainError("Stokes variances must be positive")
        if self.power_mw < 0:
            raise DomainError(f"power_mw must be >= 0, got {self.power_mw!r}")

    @property
    def xi2(self):
        return self.s2_var_rel_snl

    @property
    def uncertainty_product(self):
        return self.s2_var_rel_snl * self.s3_var_rel_snl

    @property
    def is_coherent(self):
        return self.s2_var_rel_snl == 1.0 and self.s3_var_rel_snl == 1.0


def opo_noise(budget: OpoBudget) -> tuple[float, float]:
    """Squeezed and anti-squeezed quadrature noise of the OPO output.

    Returns ``(r_minus, r_plus)`` as linear variances relative to the SNL::

        R(+/-) = 1 +/- eta eps^2 zeta rho * 4x / ((1 -/+ x)^2 + 4 Omega^2)
    """
    gain = budget.total_efficiency * 4.0 * budget.x
    detune = 4.0 * budget.omega**2
    r_minus = 1.0 - gain / ((1.0 + budget.x) ** 2 + detune)
    r_plus = 1.0 + gain / ((1.0 - budget.x) ** 2 + detune)
    return r_minus, r_plus


def pump_parameter(p_pump_mw: float, p_threshold_mw: float) -> float:
    """Pump parameter ``x = sqrt(P / P_th)`` for a sub-threshold OPO."""
    if p_threshold_mw <= 0:
        raise DomainError(f"threshold power must be positive, got {p_threshold_mw!r}")
    if p_pump_mw < 0:
        raise DomainError(f"pump power must be >= 0, got {p_pump_mw!r}")
    if p_pump_mw >= p_threshold_mw:
        raise ThresholdExceededError(
            f"pump power {p_pump_mw} mW is at or above threshold {p_threshold_mw} mW"
        )
    return math.sqrt(p_pump_mw / p_threshold_mw)


def apply_optical_loss(state: StokesNoiseState, transmission: float) -> StokesNoiseState:
    """Beam-splitter loss: each variance v -> T v + (1 - T), power -> T P."""
    _check_unit_interval("transmission", transmission)
    t = transmission
    return StokesNoiseState(
        s2_var_rel_snl=t * state.s2_var_rel_snl + (1.0 - t),
        s3_var_rel_snl=t * state.s3_var_rel_snl + (1.0 - t),
        power_mw=t * state.power_mw,
    )


def lin_to_db(value):
    arr = np.asarray(value, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("dB conversion needs strictly positive linear values")
    out = 10.0 * np.log10(arr)
    return float(out) if out.ndim == 0 else out


def db_to_lin(value):
    out = 10.0 ** (np.asarray(value, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def db_lin_convert(value, direction: str):
    """Convert between linear ratios and dB; ``direction`` is ``"to_db"`` or ``"to_lin"``."""
    if direction == "to_db":
        return lin_to_db(value)
    if direction == "to_lin":
        return db_to_lin(value)
    raise ValueError(f"direction must be 'to_db' or 'to_lin', got {direction!r}")


def coherent_state(power_mw: float = 0.0) -> StokesNoiseState:
    return StokesNoiseState(1.0, 1.0, power_mw)


def squeezed_state(squeezing_db: float, power_mw: float = 0.0,
                   anti_squeezing_db: float | None = None) -> StokesNoiseState:
    """State with ``squeezing_db`` on S2.

    Without an explicit anti-squeezing level the state is taken to be minimum
    uncertainty, s3 = 1 / s2.
    """
    s2 = db_to_lin(squeezing_db)
    s3 = 1.0 / s2 if anti_squeezing_db is None else db_to_lin(anti_squeezing_db)
    return StokesNoiseState(s2, s3, power_mw)


def state_from_opo(budget: OpoBudget, power_mw: float = 0.0) -> StokesNoiseState:
    r_minus, r_plus = opo_noise(budget)
    return StokesNoiseState(r_minus, r_plus, power_mw)


def with_power(state: StokesNoiseState, power_mw: float) -> StokesNoiseState:
    return replace(state, power_mw=power_mw)
