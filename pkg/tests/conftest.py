import pytest

from snsim.spin_dynamics import EnsembleSpec, ProbeGeometry, larmor_frequency, RB85

# A small, fast scenario: 85Rb at 100 kHz, 87Rb at 150 kHz, 5 kHz lines,
# unit Faraday-angle variance.
FIELD_100KHZ = 100.0 / RB85.gamma
FS = 2.0e6
N_RECORD = 8192


@pytest.fixture
def ensemble():
    return EnsembleSpec(length_mm=1.0, radius_mm=5.0, n0=1.0, gamma0_khz=5.0,
                        alpha_khz_per_mw=0.0, beta_khz_per_1e11cm3=0.0, coupling=1.0)


@pytest.fixture
def probe():
    return ProbeGeometry(power_mw=1.0, beam_area_mm2=1.0, field_ut=FIELD_100KHZ)
