"""End-to-end measurement chain: spins -> polarimeter -> spectrum -> fit.

Each averaging record is simulated independently from its own counter-based
sub-seed, so the averaged spectrum does not depend on how many workers
evaluate the records or in which order they finish.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .analysis import (
    LorentzianFit,
    RegressionResult,
    broadening_regression,
    compute_snr,
    fit_lorentzian,
)
from .config import ExperimentConfig, SweepSpec
from .detection import polarimeter_trace, signal_gain, snl_psd, squeezed_background_psd
from .errors import InitializationError
from .quantum_optics import StokesNoiseState, coherent_state
from .spectral import Spectrum, average_spectra, normalize_to_snl, welch_psd
from .spin_dynamics import (
    MIN_T2_MULTIPLE,
    isotope_linewidth,
    larmor_frequency,
    simulate_spin_trace,
    spin_rotation_variance,
    t2_from_linewidth,
)

__all__ = [
    "ScenarioResult",
    "SweepPoint",
    "SweepResult",
    "record_duration",
    "predicted_snr_db",
    "calibrate_coupling",
    "simulate_spectra",
    "analyze_spectrum",
    "run_simulation",
    "run_pair",
    "run_sweep",
    "apply_sweep_value",
    "sweep_point_seed",
]

log = logging.getLogger(__name__)

# spawn-key namespace of per-point seeds, distinct from record indices
SWEEP_SEED_KEY = 1 << 20


@dataclass(frozen=True)
class ScenarioResult:
    state: StokesNoiseState
    spectrum: Spectrum
    snl_psd: float
    fit: LorentzianFit
    target_hz: float | None = None

    @property
    def peak_index(self) -> int:
        """Fitted line nearest the expected first-isotope center (or the first line)."""
        if self.target_hz is None:
            return 0
        return int(np.argmin([abs(p.center_hz - self.target_hz) for p in self.fit.peaks]))

    @property
    def snr_db(self) -> float:
        return compute_snr(self.fit, self.peak_index)

    @property
    def fwhm_khz(self) -> float:
        return self.fit.peaks[self.peak_index].fwhm_hz / 1e3

    @property
    def normalized(self) -> Spectrum:
        return normalize_to_snl(self.spectrum, self.snl_psd)


def n_fit_peaks(config: ExperimentConfig) -> int:
    return min(len(config.ensemble.isotopes), 2)


def record_duration(config: ExperimentConfig) -> float:
    """Length in seconds of each simulated averaging record."""
    acq = config.acquisition
    if acq.duration_s is not None:
        return acq.duration_s
    widths = [isotope_linewidth(config.probe.power_mw, config.ensemble, iso)
              for iso in config.ensemble.isotopes]
    t2_max = t2_from_linewidth(min(widths)) * 1e-6
    fs = acq.sample_rate_hz
    # Hann ENBW is 1.5 bins; both windows are covered by this bound
    n_rbw = 1.5 * fs / (min(widths) * 1e3 / 10.0)
    n_t2 = MIN_T2_MULTIPLE * t2_max * fs
    n = 2 ** math.ceil(math.log2(max(n_rbw, n_t2, 2.0)))
    return n / fs


def predicted_snr_db(config: ExperimentConfig, isotope_index: int = 0,
                     xi2: float | None = None) -> float:
    """Analytic peak-over-floor ratio of one isotope's line, in dB.

    The Faraday-angle PSD of an isotope peaks at 2 var_i T2 (one-sided), the
    polarimeter converts angle to volts with gain 2 G R P, and the floor is
    xi^2 times the shot-noise PSD.
    """
    iso = config.ensemble.isotopes[isotope_index]
    xi2 = config.xi2 if xi2 is None else xi2
    var_i = spin_rotation_variance(config.ensemble, config.probe) * iso.abundance
    t2 = t2_from_linewidth(isotope_linewidth(config.probe.power_mw, config.ensemble, iso)) * 1e-6
    peak = signal_gain(config.probe.power_mw, config.polarimeter) ** 2 * 2.0 * var_i * t2
    floor = squeezed_background_psd(snl_psd(config.probe.power_mw, config.polarimeter), xi2)
    return 10.0 * math.log10(peak / floor)


def calibrate_coupling(config: ExperimentConfig, target_snr_db: float,
                       isotope_index: int = 0) -> float:
    """Coupling constant k that makes :func:`predicted_snr_db` hit ``target_snr_db``."""
    unit = dataclasses.replace(config.ensemble, coupling=1.0)
    base = predicted_snr_db(dataclasses.replace(config, ensemble=unit), isotope_index)
    return 10.0 ** ((target_snr_db - base) / 10.0)


def _record_spectra(config, xi2s, duration, index):
    acq = config.acquisition
    theta = simulate_spin_trace(config.ensemble, config.probe, duration,
                                acq.sample_rate_hz, config.seed, segment=index)
    out = []
    for xi2 in xi2s:
        volts = polarimeter_trace(theta, config.probe.power_mw, xi2, config.polarimeter,
                                  config.seed, segment=index)
        out.append(welch_psd(volts, acq.segment_len, acq.overlap, acq.window))
    return out


def simulate_spectra(config: ExperimentConfig, xi2s: Sequence[float],
                     workers: int = 1) -> list[Spectrum]:
    """Averaged absolute spectra, one per squeezing factor, from shared records.

    All squeezing factors see the same spin trace and the same unit-variance
    shot-noise draws, differing only in the noise scale.
    """
    duration = record_duration(config)
    n = config.acquisition.n_averages

    def job(i):
        return _record_spectra(config, xi2s, duration, i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_record = list(pool.map(job, range(n)))
    else:
        per_record = [job(i) for i in range(n)]
    return [average_spectra([rec[k] for rec in per_record]) for k in range(len(xi2s))]


def expected_lines(config: ExperimentConfig, xi2: float | None = None):
    """Floor and (center, fwhm, height) of each line predicted by the model."""
    xi2 = config.xi2 if xi2 is None else xi2
    floor = squeezed_background_psd(snl_psd(config.probe.power_mw, config.polarimeter), xi2)
    lines = []
    for k, iso in enumerate(config.ensemble.isotopes[:2]):
        snr = 10.0 ** (predicted_snr_db(config, k, xi2) / 10.0) if config.ensemble.coupling else 0.1
        lines.append((larmor_frequency(config.probe.field_ut, iso),
                      isotope_linewidth(config.probe.power_mw, config.ensemble, iso) * 1e3,
                      snr * floor))
    return floor, lines


def analyze_spectrum(spectrum: Spectrum, n_peaks: int, hint=None) -> LorentzianFit:
    """Fit ``n_peaks`` lines with automatic initialization.

    If the second line is not detectable a single line is fitted.  If no line
    is detectable and ``hint`` (as returned by :func:`expected_lines`) is
    given, the fit starts from the model prediction instead.
    """
    try:
        return fit_lorentzian(spectrum, n_peaks)
    except InitializationError as exc:
        first_error = exc
    if n_peaks > 1:
        try:
            fit = fit_lorentzian(spectrum, 1)
        except InitializationError:
            pass
        else:
            log.warning("falling back to a single-peak fit: %s", first_error)
            return dataclasses.replace(
                fit, diagnostics=fit.diagnostics + (f"single-peak fallback: {first_error}",))
    if hint is None:
        raise first_error
    floor, lines = hint
    log.warning("no line detected automatically; starting from the model prediction")
    fit = fit_lorentzian(spectrum, 1, (floor, lines[:1]))
    return dataclasses.replace(
        fit, diagnostics=fit.diagnostics + (f"model-guided start: {first_error}",))


def _results(config, states, workers):
    spectra = simulate_spectra(config, [s.s2_var_rel_snl for s in states], workers)
    snl = snl_psd(config.probe.power_mw, config.polarimeter)
    target = larmor_centers(config)[0]
    return [ScenarioResult(state, spec, snl,
                           analyze_spectrum(spec, n_fit_peaks(config),
                                            expected_lines(config, state.s2_var_rel_snl)),
                           target)
            for state, spec in zip(states, spectra)]


def run_simulation(config: ExperimentConfig, workers: int = 1) -> ScenarioResult:
    return _results(config, [config.optical_state()], workers)[0]


def run_pair(config: ExperimentConfig, workers: int = 1) -> tuple[ScenarioResult, ScenarioResult]:
    """Coherent-probe reference and the configured probe on identical records."""
    pcs = coherent_state(config.probe.power_mw)
    pcs_result, pss_result = _results(config, [pcs, config.optical_state()], workers)
    return pcs_result, pss_result


def apply_sweep_value(config: ExperimentConfig, variable: str, value: float) -> ExperimentConfig:
    if variable == "power":
        return dataclasses.replace(config, probe=dataclasses.replace(config.probe, power_mw=value))
    if variable == "density":
        return dataclasses.replace(config, ensemble=dataclasses.replace(config.ensemble, n0=value))
    raise ValueError(f"unknown sweep variable {variable!r}")


def sweep_point_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th sweep point, derived from the sweep seed.

    Points are independent acquisitions; sharing one seed would make their
    fit errors move together and tilt the whole sweep coherently.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(SWEEP_SEED_KEY, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class SweepPoint:
    value: float
    config: ExperimentConfig
    pcs: ScenarioResult
    pss: ScenarioResult


@dataclass(frozen=True)
class SweepResult:
    variable: str
    points: tuple[SweepPoint, ...]
    regression_pcs: RegressionResult
    regression_pss: RegressionResult

    def summary_rows(self):
        for p in self.points:
            yield (p.value, p.pcs.snr_db, p.pss.snr_db, p.pcs.fwhm_khz, p.pss.fwhm_khz)


def run_sweep(config: ExperimentConfig, sweep: SweepSpec, workers: int = 1) -> SweepResult:
    """Coherent and squeezed runs at every sweep value plus linewidth regressions."""
    configs = [dataclasses.replace(apply_sweep_value(config, sweep.variable, v),
                                   seed=sweep_point_seed(config.seed, i))
               for i, v in enumerate(sweep.values)]

    def job(cfg):
        return run_pair(cfg, workers=1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(job, configs))
    else:
        pairs = [job(cfg) for cfg in configs]
    points = tuple(SweepPoint(v, cfg, pcs, pss)
                   for v, cfg, (pcs, pss) in zip(sweep.values, configs, pairs))
    reg_pcs = broadening_regression([(p.value, p.pcs.fwhm_khz) for p in points])
    reg_pss = broadening_regression([(p.value, p.pss.fwhm_khz) for p in points])
    return SweepResult(sweep.variable, points, reg_pcs, reg_pss)


def larmor_centers(config: ExperimentConfig) -> list[float]:
    return [larmor_frequency(config.probe.field_ut, iso) for iso in config.ensemble.isotopes]
