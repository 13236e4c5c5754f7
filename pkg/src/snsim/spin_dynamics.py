"""Atomic spin noise: Larmor precession, linewidth law and stochastic traces.

Units follow the lab conventions used in the configuration files: fields in
microtesla, gyromagnetic ratios in kHz/uT, linewidths in kHz, densities in
units of 1e11 cm^-3, lengths in mm and probe powers in mW.  Frequencies
returned by functions in this module are in Hz unless the name says otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import DomainError, PreconditionError

__all__ = [
    "IsotopeSpec",
    "EnsembleSpec",
    "ProbeGeometry",
    "TimeTrace",
    "RB85",
    "RB87",
    "NATURAL_RB",
    "DENSITY_BY_TEMPERATURE",
    "larmor_frequency",
    "linewidth",
    "isotope_linewidth",
    "t2_from_linewidth",
    "linewidth_from_t2",
    "analytic_sn_psd",
    "spin_rotation_variance",
    "theta_autocorrelation",
    "segment_rng",
    "simulate_spin_trace",
    "MIN_OVERSAMPLING",
    "MIN_T2_MULTIPLE",
]

# sample rate / highest Larmor frequency, and record length / T2
MIN_OVERSAMPLING = 8.0
MIN_T2_MULTIPLE = 50.0

# independent random streams per averaging segment
STREAM_SPIN = 0
STREAM_SHOT = 1


@dataclass(frozen=True)
class IsotopeSpec:
    name: str
    gamma: float  # kHz/uT
    abundance: float
    gamma0_khz: float | None = None  # per-isotope intrinsic linewidth override

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"{self.name}: gyromagnetic ratio must be positive")
        if not (0.0 <= self.abundance <= 1.0):
            raise DomainError(f"{self.name}: abundance must lie in [0, 1]")
        if self.gamma0_khz is not None and self.gamma0_khz < 0:
            raise DomainError(f"{self.name}: gamma0_khz must be >= 0")


# F=3 and F=2 ground-state g_F * mu_B / h
RB85 = IsotopeSpec("85Rb", 4.665, 0.7217)
RB87 = IsotopeSpec("87Rb", 6.998, 0.2783)
NATURAL_RB = (RB85, RB87)

# vapor cell temperature (deg C) -> number density (1e11 cm^-3)
DENSITY_BY_TEMPERATURE = {20.0: 0.08, 45.0: 0.94, 50.0: 1.48, 65.0: 5.36}


@dataclass(frozen=True)
class EnsembleSpec:
    """Vapor cell and its homogeneous broadening law.

    ``coupling`` is the phenomenological constant k in
    ``var(theta) = k * n0 * length_mm / beam_area_mm2`` (rad^2 per
    1e11 cm^-3 * mm^-1).
    """

    length_mm: float
    radius_mm: float
    n0: float
    gamma0_khz: float
    alpha_khz_per_mw: float
    beta_khz_per_1e11cm3: float
    isotopes: tuple[IsotopeSpec, ...] = NATURAL_RB
    coupling: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "isotopes", tuple(self.isotopes))
        for name in ("length_mm", "radius_mm", "n0", "gamma0_khz",
                     "alpha_khz_per_mw", "beta_khz_per_1e11cm3", "coupling"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if not self.isotopes:
            raise DomainError("ensemble needs at least one isotope")
        total = sum(iso.abundance for iso in self.isotopes)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"isotope abundances sum to {total!r}, expected 1")


@dataclass(frozen=True)
class ProbeGeometry:
    power_mw: float
    beam_area_mm2: float
    field_ut: float

    def __post_init__(self):
        if not self.power_mw >= 0:
            raise DomainError("power_mw must be >= 0")
        if not self.beam_area_mm2 > 0:
            raise DomainError("beam_area_mm2 must be > 0")
        if not self.field_ut >= 0:
            raise DomainError("field_ut must be >= 0")


@dataclass(frozen=True, eq=False)
class TimeTrace:
    samples: np.ndarray
    sample_rate_hz: float
    seed: int | None = None
    lineage: tuple = field(default=())

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate_hz > 0:
            raise PreconditionError("sample_rate_hz must be > 0")
        if samples.ndim != 1 or samples.size < 2:
            raise PreconditionError("a trace needs at least two samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz

    @property
    def times(self):
        return np.arange(self.samples.size) / self.sample_rate_hz


def larmor_frequency(field_ut: float, isotope: IsotopeSpec) -> float:
    """Larmor frequency in Hz for a transverse field in microtesla."""
    if field_ut < 0:
        raise DomainError("field_ut must be >= 0")
    return field_ut * isotope.gamma * 1e3


def linewidth(power_mw: float, n0: float, ensemble: EnsembleSpec) -> float:
    """FWHM in kHz from the broadening law Gamma0 + alpha P + beta N0."""
    if power_mw < 0 or n0 < 0:
        raise DomainError("power and density must be >= 0")
    return (ensemble.gamma0_khz + ensemble.alpha_khz_per_mw * power_mw
            + ensemble.beta_khz_per_1e11cm3 * n0)


def isotope_linewidth(power_mw, ensemble, isotope):
    gamma0 = ensemble.gamma0_khz if isotope.gamma0_khz is None else isotope.gamma0_khz
    return (gamma0 + ensemble.alpha_khz_per_mw * power_mw
            + ensemble.beta_khz_per_1e11cm3 * ensemble.n0)


def t2_from_linewidth(fwhm_khz: float) -> float:
    """Transverse relaxation time in microseconds, T2 = 1 / (pi FWHM)."""
    if not fwhm_khz > 0:
        raise DomainError(f"FWHM must be positive, got {fwhm_khz!r}")
    return 1e3 / (math.pi * fwhm_khz)


def linewidth_from_t2(t2_us: float) -> float:
    """Inverse of :func:`t2_from_linewidth`; FWHM in kHz."""
    if not t2_us > 0:
        raise DomainError(f"T2 must be positive, got {t2_us!r}")
    return 1e3 / (math.pi * t2_us)


def analytic_sn_psd(freq, center, fwhm, peak_amplitude):
    """Lorentzian spin-noise line with maximum ``peak_amplitude`` at ``center``."""
    if not fwhm > 0:
        raise DomainError("fwhm must be positive")
    u = (np.asarray(freq, dtype=float) - center) / (0.5 * fwhm)
    return peak_amplitude / (1.0 + u * u)


def spin_rotation_variance(ensemble: EnsembleSpec, probe: ProbeGeometry) -> float:
    """Stationary variance of the Faraday angle in rad^2 (k N0 L / A)."""
    return ensemble.coupling * ensemble.n0 * ensemble.length_mm / probe.beam_area_mm2


def theta_autocorrelation(lag_s, ensemble: EnsembleSpec, probe: ProbeGeometry):
    """Analytic autocorrelation of the simulated Faraday angle."""
    lag = np.abs(np.asarray(lag_s, dtype=float))
    var = spin_rotation_variance(ensemble, probe)
    out = np.zeros_like(lag)
    for iso in ensemble.isotopes:
        t2 = t2_from_linewidth(isotope_linewidth(probe.power_mw, ensemble, iso)) * 1e-6
        nu = larmor_frequency(probe.field_ut, iso)
        out += var * iso.abundance * np.exp(-lag / t2) * np.cos(2 * np.pi * nu * lag)
    return out


def segment_rng(seed: int, segment: int = 0, stream: int = STREAM_SPIN) -> np.random.Generator:
    """Counter-based generator for one averaging segment and noise stream.

    The stream depends only on ``(seed, segment, stream)``, never on the order
    in which segments are evaluated.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(segment, stream))
    return np.random.Generator(np.random.PCG64(ss))


def check_sampling(ensemble, probe, duration_s, sample_rate_hz):
    nu_max = max(larmor_frequency(probe.field_ut, iso) for iso in ensemble.isotopes)
    if sample_rate_hz < MIN_OVERSAMPLING * nu_max:
        raise PreconditionError(
            f"sample rate {sample_rate_hz:g} Hz is below {MIN_OVERSAMPLING:g} x the "
            f"highest Larmor frequency ({nu_max:g} Hz)"
        )
    t2_max = max(
        t2_from_linewidth(isotope_linewidth(probe.power_mw, ensemble, iso)) * 1e-6
        for iso in ensemble.isotopes
    )
    if duration_s < MIN_T2_MULTIPLE * t2_max * (1 - 1e-12):
        raise PreconditionError(
            f"duration {duration_s:g} s is shorter than {MIN_T2_MULTIPLE:g} T2 "
            f"({MIN_T2_MULTIPLE * t2_max:g} s)"
        )


def simulate_spin_trace(ensemble: EnsembleSpec, probe: ProbeGeometry, duration_s: float,
                        sample_rate_hz: float, seed: int, segment: int = 0) -> TimeTrace:
    """Faraday-angle trace theta(t) in radians.

    Each isotope contributes the real part of a complex Ornstein-Uhlenbeck
    process rotating at its Larmor frequency and decaying at 1/T2.  The
    process is advanced with its exact one-step transition, so the sampled
    autocorrelation is var * abundance * exp(-|tau|/T2) cos(2 pi nu_L tau)
    regardless of the step size, and every record starts in the stationary
    state.
    """
    check_sampling(ensemble, probe, duration_s, sample_rate_hz)
    n = int(round(duration_s * sample_rate_hz))
    if n < 2:
        raise PreconditionError("trace would have fewer than two samples")
    rng = segment_rng(seed, segment, STREAM_SPIN)
    dt = 1.0 / sample_rate_hz
    var = spin_rotation_variance(ensemble, probe)
    theta = np.zeros(n)
    for iso in ensemble.isotopes:
        # draw unconditionally so each isotope keeps its place in the stream
        w = rng.standard_normal((2, n))
        var_i = var * iso.abundance
        if var_i == 0.0:
            continue
        t2 = t2_from_linewidth(isotope_linewidth(probe.power_mw, ensemble, iso)) * 1e-6
        nu = larmor_frequency(probe.field_ut, iso)
        decay = math.exp(-dt / t2)
        step = decay * complex(math.cos(2 * math.pi * nu * dt), math.sin(2 * math.pi * nu * dt))
        drive = (w[0] + 1j * w[1]) * math.sqrt(var_i * (1.0 - decay * decay))
        drive[0] = (w[0, 0] + 1j * w[1, 0]) * math.sqrt(var_i)
        theta += lfilter([1.0], [1.0, -step], drive).real
    return TimeTrace(theta, sample_rate_hz, seed, ("spin", segment))
