"""Physics extraction from spectra: Lorentzian fits, SNR, broadening regression."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import DataError, DomainError, InitializationError, PreconditionError
from .spectral import ABSOLUTE, Spectrum
from .spin_dynamics import IsotopeSpec

__all__ = [
    "LorentzianPeak",
    "LorentzianFit",
    "RegressionResult",
    "lorentzian_model",
    "initial_guess",
    "fit_lorentzian",
    "compute_snr",
    "broadening_regression",
    "field_from_larmor",
    "abundance_ratio",
    "fit_to_dict",
    "MAX_ITERATIONS",
    "COST_RTOL",
]

log = logging.getLogger(__name__)

MAX_ITERATIONS = 200
COST_RTOL = 1e-10
# detection threshold for auto-initialized peaks, in noise standard deviations
DETECTION_SIGMA = 5.0
MIN_PEAK_SEPARATION_BINS = 3
# a resolved line spans several bins, so single-bin maxima are never candidates
SMOOTHING_WIDTHS = (3, 7, 15, 31, 63, 127, 255)
# relative FWHM starts tried by the fit; the best is chosen by Whittle likelihood
WIDTH_STARTS = (1.0, 2.0, 0.5)
# averaged-periodogram scatter is proportional to the PSD level itself, so
# after an unweighted pass each bin is reweighted by 1 / model
REWEIGHT_PASSES = 2


@dataclass(frozen=True)
class LorentzianPeak:
    center_hz: float
    fwhm_hz: float
    amplitude: float
    center_stderr: float = float("nan")
    fwhm_stderr: float = float("nan")
    amplitude_stderr: float = float("nan")

    @property
    def area(self):
        return 0.5 * math.pi * self.amplitude * self.fwhm_hz


@dataclass(frozen=True)
class LorentzianFit:
    peaks: tuple[LorentzianPeak, ...]
    floor: float
    residual_norm: float
    converged: bool
    floor_stderr: float = float("nan")
    iterations: int = 0
    diagnostics: tuple[str, ...] = field(default=())

    def model(self, freqs):
        return lorentzian_model(freqs, self.floor, [(p.center_hz, p.fwhm_hz, p.amplitude)
                                                     for p in self.peaks])


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    stderr: float
    intercept_stderr: float
    n_points: int


def lorentzian_model(freqs, floor, peaks):
    """Flat floor plus a sum of Lorentzians given as (center, fwhm, amplitude)."""
    f = np.asarray(freqs, dtype=float)
    out = np.full_like(f, floor)
    for center, fwhm, amp in peaks:
        u = (f - center) / (0.5 * fwhm)
        out += amp / (1.0 + u * u)
    return out


def _moving_average(y, width):
    if width <= 1:
        return y.copy()
    kernel = np.ones(width) / width
    pad = width // 2
    padded = np.pad(y, pad, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def initial_guess(freqs, psd, n_peaks):
    """Floor, centers, widths and heights for the LM start.

    The floor is the median bin (the lines cover a small part of the span).
    The excess over the floor is smoothed with boxcars of increasing width
    and the width giving the most significant maximum is kept, a matched
    filter for lines of unknown width.  Significance is the smoothed height
    over the robust scatter of the smoothed excess, which accounts for the
    bin-to-bin correlation left by the analysis window.  Widths come from
    half-power crossings around each accepted maximum.

    Returns ``(floor, [(center, fwhm, amplitude), ...], diagnostics)``.
    """
    freqs = np.asarray(freqs, dtype=float)
    y = np.asarray(psd, dtype=float)
    df = freqs[1] - freqs[0]
    floor = float(np.median(y))
    excess = y - floor

    best = None
    for width in SMOOTHING_WIDTHS:
        if width > max(1, y.size // 8):
            break
        smooth = _moving_average(excess, width)
        sigma = 1.4826 * float(np.median(np.abs(smooth - np.median(smooth))))
        idx, _ = find_peaks(smooth, distance=max(MIN_PEAK_SEPARATION_BINS, width))
        if idx.size == 0:
            continue
        score = smooth[idx] / sigma if sigma > 0 else np.where(smooth[idx] > 0, np.inf, 0.0)
        top = float(np.max(score))
        if best is None or top > best[0]:
            best = (top, width, smooth, idx, score)
        if sigma == 0:
            break
    if best is None:
        raise InitializationError("spectrum has no local maxima")
    _, width, smooth, idx, score = best
    keep = score > DETECTION_SIGMA
    idx, score = idx[keep], score[keep]
    if idx.size < n_peaks:
        raise InitializationError(
            f"requested {n_peaks} peaks but only {idx.size} maxima exceed "
            f"{DETECTION_SIGMA:g} noise sigma (best smoothing {width} bins)"
        )
    diagnostics = []
    order = np.argsort(smooth[idx])[::-1][:n_peaks]
    chosen = np.sort(idx[order])
    if chosen.size > 1 and np.min(np.diff(chosen)) < MIN_PEAK_SEPARATION_BINS:
        msg = "candidate maxima closer than 3 bins; merged into a single peak"
        log.warning(msg)
        diagnostics.append(msg)
        chosen = np.array([idx[order[0]]])
    guesses = []
    for i in chosen:
        half = 0.5 * smooth[i]
        lo = i
        while lo > 0 and smooth[lo] > half:
            lo -= 1
        hi = i
        while hi < smooth.size - 1 and smooth[hi] > half:
            hi += 1
        # boxcar of W bins on a Lorentzian of width G: half-power width about
        # sqrt(G^2 + W^2), peak reduced by (G / W) arctan(W / G)
        box = (width - 1) * df
        seen = (hi - lo) * df
        fwhm = max(math.sqrt(max(seen**2 - box**2, 0.25 * box**2)), 2.0 * df)
        amp = float(smooth[i]) * (box / fwhm / math.atan(box / fwhm) if box > 0 else 1.0)
        guesses.append((float(freqs[i]), float(fwhm), amp))
    return floor, guesses, tuple(diagnostics)


def _pack(floor, peaks):
    p = [floor]
    for c, w, a in peaks:
        p.extend((c, w, a))
    return np.array(p, dtype=float)


def _residual_and_jacobian(p, x, y, wt):
    n_peaks = (p.size - 1) // 3
    model = np.full_like(x, p[0])
    jac = np.empty((x.size, p.size))
    jac[:, 0] = 1.0
    for k in range(n_peaks):
        c, w, a = p[1 + 3 * k: 4 + 3 * k]
        u = 2.0 * (x - c) / w
        d = 1.0 / (1.0 + u * u)
        model += a * d
        jac[:, 1 + 3 * k] = 4.0 * a * u * d * d / w
        jac[:, 2 + 3 * k] = 2.0 * a * u * u * d * d / w
        jac[:, 3 + 3 * k] = d
    return (model - y) * wt, jac * wt[:, None]


def _levenberg_marquardt(p, x, y, wt):
    r, jac = _residual_and_jacobian(p, x, y, wt)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    iterations = 0
    while iterations < MAX_ITERATIONS:
        iterations += 1
        if cost == 0.0:
            converged = True
            break
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            r_new, jac_new = _residual_and_jacobian(p_new, x, y, wt)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill direction left at machine precision
            converged = True
            break
        decrease = (cost - cost_new) / cost
        small_step = np.all(np.abs(step) <= 1e-13 * (np.abs(p) + 1e-13))
        p, r, jac, cost = p_new, r_new, jac_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if decrease < COST_RTOL or small_step:
            converged = True
            break
    return p, r, jac, cost, converged, iterations


def _weighted_fit(p0, x, yy):
    wt = np.ones_like(yy)
    p, r, jac, cost, converged, iterations = _levenberg_marquardt(p0, x, yy, wt)
    for _ in range(REWEIGHT_PASSES):
        model = r / wt + yy
        if not converged or not np.all(model > 0):
            break
        wt = 1.0 / model
        p, r, jac, cost, converged, n_iter = _levenberg_marquardt(p, x, yy, wt)
        iterations += n_iter
    model = r / wt + yy
    if cost == 0.0:
        score = -np.inf
    elif np.all(model > 0) and np.all(yy >= 0):
        # Whittle negative log-likelihood of the averaged periodogram
        score = float(np.sum(yy / model + np.log(model)))
    else:
        score = float(cost)
    return p, r, jac, cost, wt, converged, iterations, score


def fit_lorentzian(spectrum: Spectrum, n_peaks: int = 1, init_guess=None) -> LorentzianFit:
    """Least-squares fit of a flat floor plus ``n_peaks`` Lorentzians.

    Works in linear PSD units on the positive-frequency bins.  An unweighted
    pass is followed by passes weighted with the inverse of the previous
    model, which matches the chi-squared scatter of averaged periodograms.  ``init_guess``
    is ``(floor, [(center_hz, fwhm_hz, amplitude), ...])``; without it the
    start is found by :func:`initial_guess`, and the fit is repeated from
    wider and narrower starting widths, keeping the solution with the lowest
    Whittle likelihood.  Standard errors come from the
    Gauss-Newton curvature of the final weighted cost at the optimum, scaled by
    the residual variance.
    """
    if spectrum.unit != ABSOLUTE:
        raise PreconditionError("fit_lorentzian needs a spectrum in absolute units")
    if n_peaks not in (1, 2):
        raise PreconditionError("n_peaks must be 1 or 2")
    if not np.all(np.isfinite(spectrum.psd)):
        raise DataError("spectrum contains non-finite bins")
    mask = spectrum.freqs_hz > 0
    freqs = spectrum.freqs_hz[mask]
    y = spectrum.psd[mask]
    if freqs.size < 3 * n_peaks + 2:
        raise PreconditionError("too few bins for the requested model")

    diagnostics = ()
    if init_guess is None:
        floor0, peaks0, diagnostics = initial_guess(freqs, y, n_peaks)
    else:
        floor0, peaks0 = init_guess
        peaks0 = [tuple(map(float, pk)) for pk in peaks0]
        if len(peaks0) != n_peaks:
            raise PreconditionError("init_guess must list one (center, fwhm, amplitude) per peak")

    # work in dimensionless coordinates for conditioning
    f0 = 0.5 * (freqs[0] + freqs[-1])
    fs = 0.5 * (freqs[-1] - freqs[0])
    ys = float(np.median(np.abs(y))) or float(np.max(np.abs(y))) or 1.0
    x = (freqs - f0) / fs
    yy = y / ys

    best = None
    starts = WIDTH_STARTS if init_guess is None else (1.0,)
    for scale in starts:
        p0 = _pack(floor0 / ys, [((c - f0) / fs, scale * w / fs, a / ys) for c, w, a in peaks0])
        run = _weighted_fit(p0, x, yy)
        if best is None or run[-1] < best[-1]:
            best = run
        if run[-1] == -np.inf:
            break
    p, r, jac, cost, wt, converged, iterations, _ = best

    dof = max(x.size - p.size, 1)
    try:
        cov = np.linalg.inv(jac.T @ jac) * (cost / dof)
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        err = np.full(p.size, np.nan)

    peaks = []
    for k in range((p.size - 1) // 3):
        c, w, a = p[1 + 3 * k: 4 + 3 * k]
        ec, ew, ea = err[1 + 3 * k: 4 + 3 * k]
        # the model depends on w only through w^2
        peaks.append(LorentzianPeak(
            center_hz=float(c * fs + f0), fwhm_hz=float(abs(w) * fs), amplitude=float(a * ys),
            center_stderr=float(ec * fs), fwhm_stderr=float(ew * fs),
            amplitude_stderr=float(ea * ys),
        ))
    peaks.sort(key=lambda pk: pk.center_hz)
    if not converged:
        diagnostics = diagnostics + (f"no convergence after {MAX_ITERATIONS} iterations",)
    return LorentzianFit(
        peaks=tuple(peaks),
        floor=float(p[0] * ys),
        residual_norm=float(math.sqrt(np.mean((r / wt) ** 2)) * ys),
        converged=converged,
        floor_stderr=float(err[0] * ys),
        iterations=iterations,
        diagnostics=diagnostics,
    )


def compute_snr(fit: LorentzianFit, peak_index: int = 0) -> float:
    """Peak height above the floor over the floor, in dB."""
    if not fit.floor > 0:
        raise DomainError(f"fitted floor must be positive, got {fit.floor!r}")
    amp = fit.peaks[peak_index].amplitude
    if not amp > 0:
        raise DomainError(f"peak amplitude must be positive, got {amp!r}")
    return 10.0 * math.log10(amp / fit.floor)


def broadening_regression(points: Sequence[tuple[float, float]]) -> RegressionResult:
    """Ordinary least-squares line through (abscissa, fwhm_khz) points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise PreconditionError("need at least three (abscissa, fwhm) points")
    x, y = pts[:, 0], pts[:, 1]
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if not sxx > 1e-300 or np.unique(x).size < 2:
        raise PreconditionError("abscissae are degenerate; slope is undetermined")
    slope = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (intercept + slope * x)
    s2 = float(resid @ resid) / (x.size - 2)
    stderr = math.sqrt(s2 / sxx)
    intercept_stderr = math.sqrt(s2 * (1.0 / x.size + xm * xm / sxx))
    return RegressionResult(slope, intercept, stderr, intercept_stderr, int(x.size))


def field_from_larmor(center_hz: float, isotope: IsotopeSpec) -> float:
    """Transverse field in microtesla from a fitted Larmor frequency."""
    if not center_hz > 0:
        raise DomainError("center frequency must be positive")
    return center_hz / (isotope.gamma * 1e3)


def abundance_ratio(fit: LorentzianFit) -> float:
    """Area ratio of the lower-frequency peak to the higher-frequency peak."""
    if len(fit.peaks) < 2:
        raise PreconditionError("abundance ratio needs a two-peak fit")
    low, high = fit.peaks[0], fit.peaks[1]
    return (low.amplitude * low.fwhm_hz) / (high.amplitude * high.fwhm_hz)


def _num(value):
    value = float(value)
    return value if math.isfinite(value) else None


def fit_to_dict(fit: LorentzianFit, peak_index: int = 0) -> dict:
    """JSON-ready fit report."""
    try:
        snr = compute_snr(fit, peak_index)
    except (DomainError, IndexError):
        snr = None
    return {
        "peaks": [
            {
                "center_hz": _num(pk.center_hz),
                "fwhm_hz": _num(pk.fwhm_hz),
                "amplitude": _num(pk.amplitude),
                "stderrs": {
                    "center_hz": _num(pk.center_stderr),
                    "fwhm_hz": _num(pk.fwhm_stderr),
                    "amplitude": _num(pk.amplitude_stderr),
                },
            }
            for pk in fit.peaks
        ],
        "floor": _num(fit.floor),
        "snr_db": snr,
        "residual_norm": _num(fit.residual_norm),
        "converged": fit.converged,
    }
