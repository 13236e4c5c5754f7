import math

import numpy as np
import pytest
from scipy import constants

from snsim.detection import (
    PolarimeterSpec,
    polarimeter_trace,
    responsivity_from_efficiency,
    signal_gain,
    snl_psd,
    squeezed_background_psd,
)
from snsim.errors import DomainError
from snsim.spectral import welch_psd
from snsim.spin_dynamics import TimeTrace

SPEC = PolarimeterSpec()
FS = 1.0e6


def _zeros(n=1 << 16):
    return TimeTrace(np.zeros(n), FS)


def test_snl_value():
    # 2 G^2 q R P with G = 1e4 V/A, R = 0.6028 A/W, P = 4 mW
    assert snl_psd(4.0, SPEC) == pytest.approx(7.73e-14, rel=1e-3)
    assert snl_psd(0.0, SPEC) == 0.0


def test_snl_doubles_per_power_doubling():
    ratio_db = 10 * math.log10(snl_psd(8.0, SPEC) / snl_psd(4.0, SPEC))
    assert ratio_db == pytest.approx(3.0103, abs=1e-4)


def test_squeezed_background():
    assert squeezed_background_psd(2.0, 0.5) == 1.0
    with pytest.raises(DomainError):
        squeezed_background_psd(2.0, 0.0)


def test_responsivity():
    # ideal detector at 795 nm
    assert responsivity_from_efficiency(1.0) == pytest.approx(795e-9 * constants.e / (constants.h * constants.c))
    assert responsivity_from_efficiency(0.94) == pytest.approx(0.6028, abs=2e-3)


def test_noise_variance_matches_psd():
    out = polarimeter_trace(_zeros(), 4.0, 1.0, SPEC, seed=1).samples
    expected = snl_psd(4.0, SPEC) * FS / 2
    # variance estimator of n Gaussian samples has relative sd sqrt(2/n)
    assert out.var() == pytest.approx(expected, rel=3 * math.sqrt(2 / out.size))
    assert abs(out.mean()) <= 3 * math.sqrt(expected / out.size)


def test_noise_spectrum_is_snl():
    out = polarimeter_trace(_zeros(), 4.0, 1.0, SPEC, seed=2)
    spec = welch_psd(out, segment_len=1024)
    assert np.median(spec.psd[1:-1]) / snl_psd(4.0, SPEC) == pytest.approx(1.0, abs=0.05)


def test_tone_amplitude():
    t = np.arange(1 << 12) / FS
    theta0 = 1e-6
    theta = TimeTrace(theta0 * np.sin(2 * np.pi * (FS / 4) * t), FS)
    out = polarimeter_trace(theta, 6.0, 1.0, SPEC, seed=None).samples
    assert np.max(np.abs(out)) == pytest.approx(signal_gain(6.0, SPEC) * theta0, rel=1e-6)
    assert signal_gain(6.0, SPEC) == pytest.approx(2 * 1e4 * 0.6028 * 6e-3)


def test_squeezing_scales_noise_only():
    rng = np.random.default_rng(0)
    theta = TimeTrace(1e-5 * rng.standard_normal(1 << 14), FS)
    clean = polarimeter_trace(theta, 6.0, 1.0, SPEC, seed=None).samples
    pcs = polarimeter_trace(theta, 6.0, 1.0, SPEC, seed=9, segment=3).samples
    pss = polarimeter_trace(theta, 6.0, 0.25, SPEC, seed=9, segment=3).samples
    np.testing.assert_array_equal(polarimeter_trace(theta, 6.0, 0.25, SPEC, seed=None).samples, clean)
    np.testing.assert_allclose(pss - clean, 0.5 * (pcs - clean), rtol=1e-9, atol=1e-18)


def test_extra_noise_hook():
    base = polarimeter_trace(_zeros(), 4.0, 1.0, SPEC, seed=4).samples
    noisy = polarimeter_trace(_zeros(), 4.0, 1.0, SPEC, seed=4,
                              extra_noise_psd=snl_psd(4.0, SPEC)).samples
    np.testing.assert_allclose(noisy, math.sqrt(2) * base)


def test_rejects_invalid_inputs():
    with pytest.raises(DomainError):
        polarimeter_trace(_zeros(), 4.0, 0.0, SPEC, seed=1)
    with pytest.raises(DomainError):
        PolarimeterSpec(gain_v_per_a=0.0)
    with pytest.raises(DomainError):
        snl_psd(-1.0, SPEC)
