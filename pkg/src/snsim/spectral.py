"""Averaged-periodogram PSD estimation in the style of an FFT signal analyzer."""
from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import DataError, DomainError, PreconditionError
from .spin_dynamics import TimeTrace

__all__ = [
    "ABSOLUTE",
    "DB_REL_SNL",
    "Spectrum",
    "welch_psd",
    "normalize_to_snl",
    "average_spectra",
    "equivalent_noise_bandwidth",
    "spectrum_to_csv",
    "spectrum_from_csv",
    "write_spectrum_csv",
    "read_spectrum_csv",
]

ABSOLUTE = "absolute"
DB_REL_SNL = "db_rel_snl"
UNITS = (ABSOLUTE, DB_REL_SNL)
WINDOWS = {"rect": "boxcar", "hann": "hann"}
CSV_HEADER = ("freq_hz", "psd", "unit", "rbw_hz", "n_averages")


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs_hz: np.ndarray
    psd: np.ndarray
    unit: str = ABSOLUTE
    rbw_hz: float = 1.0
    n_averages: int = 1

    def __post_init__(self):
        freqs = np.asarray(self.freqs_hz, dtype=float)
        psd = np.asarray(self.psd, dtype=float)
        for arr in (freqs, psd):
            arr.setflags(write=False)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "psd", psd)
        if self.unit not in UNITS:
            raise PreconditionError(f"unknown spectrum unit {self.unit!r}")
        if freqs.ndim != 1 or freqs.shape != psd.shape:
            raise PreconditionError("freqs and psd must be 1-D arrays of equal length")
        if freqs.size > 1 and not np.all(np.diff(freqs) > 0):
            raise PreconditionError("frequencies must be strictly ascending")
        if not self.rbw_hz > 0:
            raise PreconditionError("rbw_hz must be > 0")
        if int(self.n_averages) < 1:
            raise PreconditionError("n_averages must be >= 1")
        object.__setattr__(self, "n_averages", int(self.n_averages))

    def __len__(self):
        return self.freqs_hz.size

    @property
    def bin_width_hz(self):
        return float(self.freqs_hz[1] - self.freqs_hz[0])

    def integrated_power(self):
        """Integral of an absolute PSD over frequency (rectangle rule on the bins)."""
        if self.unit != ABSOLUTE:
            raise PreconditionError("integrated power needs an absolute spectrum")
        return float(np.sum(self.psd) * self.bin_width_hz)

    def scaled(self, factor):
        if self.unit != ABSOLUTE:
            raise PreconditionError("only absolute spectra can be rescaled")
        return Spectrum(self.freqs_hz, self.psd * factor, self.unit, self.rbw_hz, self.n_averages)


@functools.lru_cache(maxsize=16)
def _window(window: str, segment_len: int) -> np.ndarray:
    w = signal.get_window(WINDOWS[window], segment_len)
    w.flags.writeable = False
    return w


def equivalent_noise_bandwidth(window: str, segment_len: int) -> float:
    """Equivalent noise bandwidth of the window in bins."""
    w = _window(window, segment_len)
    return float(segment_len * np.sum(w**2) / np.sum(w) ** 2)


def welch_psd(trace: TimeTrace, segment_len: int | None = None, overlap_fraction: float = 0.5,
              window: str = "hann") -> Spectrum:
    """One-sided averaged modified periodogram of ``trace``.

    The mean of each segment is removed and the window power is corrected for,
    so the summed PSD times the bin width reproduces the trace variance.
    """
    n = len(trace)
    segment_len = n if segment_len is None else int(segment_len)
    if segment_len > n:
        raise PreconditionError(f"segment length {segment_len} exceeds trace length {n}")
    if segment_len < 2:
        raise PreconditionError("segment length must be at least 2")
    if not (0.0 <= overlap_fraction <= 0.9):
        raise PreconditionError("overlap fraction must lie in [0, 0.9]")
    if window not in WINDOWS:
        raise PreconditionError(f"window must be one of {sorted(WINDOWS)}")
    noverlap = int(math.floor(overlap_fraction * segment_len))
    freqs, psd = signal.welch(
        trace.samples, fs=trace.sample_rate_hz, window=_window(window, segment_len),
        nperseg=segment_len, noverlap=noverlap, detrend="constant",
        return_onesided=True, scaling="density", average="mean",
    )
    step = segment_len - noverlap
    n_segments = 1 + (n - segment_len) // step
    rbw = equivalent_noise_bandwidth(window, segment_len) * trace.sample_rate_hz / segment_len
    return Spectrum(freqs, psd, ABSOLUTE, rbw, n_segments)


def normalize_to_snl(spectrum: Spectrum, snl_psd_value: float) -> Spectrum:
    """Express an absolute spectrum in dB relative to the shot-noise PSD."""
    if spectrum.unit != ABSOLUTE:
        raise PreconditionError("spectrum is already normalized")
    if not snl_psd_value > 0:
        raise DomainError("SNL reference must be positive")
    bad = np.flatnonzero(~(spectrum.psd > 0))
    if bad.size:
        raise DomainError(
            f"{bad.size} non-positive PSD bins (first at {spectrum.freqs_hz[bad[0]]:g} Hz)"
        )
    db = 10.0 * np.log10(spectrum.psd / snl_psd_value)
    return Spectrum(spectrum.freqs_hz, db, DB_REL_SNL, spectrum.rbw_hz, spectrum.n_averages)


def average_spectra(spectra: Sequence[Spectrum]) -> Spectrum:
    """Bin-wise mean in linear power units, weighted by each input's averaging count.

    dB spectra are converted to linear ratios before averaging.
    """
    if not spectra:
        raise PreconditionError("nothing to average")
    first = spectra[0]
    for s in spectra[1:]:
        if (s.unit != first.unit or s.freqs_hz.shape != first.freqs_hz.shape
                or not np.array_equal(s.freqs_hz, first.freqs_hz)):
            raise PreconditionError("spectra must share unit and frequency grid")
        if not math.isclose(s.rbw_hz, first.rbw_hz, rel_tol=1e-12):
            raise PreconditionError("spectra must share the resolution bandwidth")
    weights = np.array([s.n_averages for s in spectra], dtype=float)
    stack = np.stack([s.psd for s in spectra])
    if first.unit == DB_REL_SNL:
        stack = 10.0 ** (stack / 10.0)
    mean = (weights[:, None] * stack).sum(axis=0) / weights.sum()
    if first.unit == DB_REL_SNL:
        mean = 10.0 * np.log10(mean)
    return Spectrum(first.freqs_hz, mean, first.unit, first.rbw_hz, int(weights.sum()))


def spectrum_to_csv(spectrum: Spectrum, comment: str = "snsim spectrum") -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    rbw = repr(float(spectrum.rbw_hz))
    for f, p in zip(spectrum.freqs_hz.tolist(), spectrum.psd.tolist()):
        writer.writerow((repr(f), repr(p), spectrum.unit, rbw, spectrum.n_averages))
    return buf.getvalue()


def spectrum_from_csv(text: str) -> Spectrum:
    """Parse the CSV written by :func:`spectrum_to_csv`; errors carry line numbers."""
    lines = text.splitlines()
    header_seen = False
    freqs, psd = [], []
    unit = rbw = n_avg = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if not header_seen:
            if tuple(fields) != CSV_HEADER:
                raise DataError(f"line {lineno}: expected header {','.join(CSV_HEADER)}")
            header_seen = True
            continue
        if len(fields) != len(CSV_HEADER):
            raise DataError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(fields)}")
        try:
            f, p, r, k = float(fields[0]), float(fields[1]), float(fields[3]), int(fields[4])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if unit is None:
            unit, rbw, n_avg = fields[2], r, k
        elif (fields[2], r, k) != (unit, rbw, n_avg):
            raise DataError(f"line {lineno}: unit/rbw/n_averages differ from earlier rows")
        freqs.append(f)
        psd.append(p)
    if not header_seen:
        raise DataError("missing CSV header")
    if len(freqs) < 2:
        raise DataError(f"line {len(lines)}: spectrum needs at least two rows")
    try:
        return Spectrum(np.array(freqs), np.array(psd), unit, rbw, n_avg)
    except PreconditionError as exc:
        raise DataError(str(exc)) from None


def write_spectrum_csv(spectrum: Spectrum, path, comment: str = "snsim spectrum") -> None:
    Path(path).write_text(spectrum_to_csv(spectrum, comment))


def read_spectrum_csv(path) -> Spectrum:
    return spectrum_from_csv(Path(path).read_text())
