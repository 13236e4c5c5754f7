"""Balanced polarimeter: Faraday angle to differential voltage plus shot noise."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import DomainError
from .spin_dynamics import STREAM_SHOT, TimeTrace, segment_rng

__all__ = [
    "ELEMENTARY_CHARGE",
    "PolarimeterSpec",
    "responsivity_from_efficiency",
    "snl_psd",
    "squeezed_background_psd",
    "signal_gain",
    "polarimeter_trace",
]

ELEMENTARY_CHARGE = constants.e


def responsivity_from_efficiency(quantum_efficiency, wavelength_m=795e-9):
    """Photodiode responsivity in A/W, eta * q * lambda / (h c)."""
    return quantum_efficiency * constants.e * wavelength_m / (constants.h * constants.c)


@dataclass(frozen=True)
class PolarimeterSpec:
    gain_v_per_a: float = 1e4
    responsivity_a_per_w: float = 0.6028
    bandwidth_hz: float = 5e6

    def __post_init__(self):
        for name in ("gain_v_per_a", "responsivity_a_per_w", "bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")


def snl_psd(probe_power_mw: float, spec: PolarimeterSpec) -> float:
    """One-sided shot-noise voltage PSD 2 G^2 q R P in V^2/Hz."""
    if probe_power_mw < 0:
        raise DomainError("probe power must be >= 0")
    return (2.0 * spec.gain_v_per_a**2 * ELEMENTARY_CHARGE
            * spec.responsivity_a_per_w * probe_power_mw * 1e-3)


def squeezed_background_psd(snl_psd_value: float, xi2: float) -> float:
    if not xi2 > 0:
        raise DomainError(f"squeezing factor must be positive, got {xi2!r}")
    return xi2 * snl_psd_value


def signal_gain(probe_power_mw: float, spec: PolarimeterSpec) -> float:
    """Volts per radian of Faraday rotation in the small-angle limit (2 G R P)."""
    return 2.0 * spec.gain_v_per_a * spec.responsivity_a_per_w * probe_power_mw * 1e-3


def polarimeter_trace(theta: TimeTrace, probe_power_mw: float, xi2: float,
                      spec: PolarimeterSpec, seed: int | None, segment: int = 0,
                      extra_noise_psd: float = 0.0) -> TimeTrace:
    """Differential output V(t) = G R P sin(2 theta) + n(t).

    ``n`` is white Gaussian noise whose one-sided PSD is the squeezed shot-noise
    background (plus ``extra_noise_psd`` for classical noise, zero by
    default).  The unit-variance draws depend only on ``(seed, segment)``, so
    two calls differing only in ``xi2`` share the noise realization up to the
    scale factor sqrt(xi2).  ``seed=None`` gives the noiseless response.
    """
    if not xi2 > 0:
        raise DomainError(f"squeezing factor must be positive, got {xi2!r}")
    if extra_noise_psd < 0:
        raise DomainError("extra_noise_psd must be >= 0")
    power_w = probe_power_mw * 1e-3
    volts = spec.gain_v_per_a * spec.responsivity_a_per_w * power_w * np.sin(2.0 * theta.samples)
    if seed is not None:
        psd = squeezed_background_psd(snl_psd(probe_power_mw, spec), xi2) + extra_noise_psd
        sigma = math.sqrt(psd * theta.sample_rate_hz / 2.0)
        volts = volts + sigma * segment_rng(seed, segment, STREAM_SHOT).standard_normal(volts.size)
    return TimeTrace(volts, theta.sample_rate_hz, seed, theta.lineage + ("polarimeter",))
