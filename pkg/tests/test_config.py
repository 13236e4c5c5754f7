import json

import pytest

from snsim.config import (
    SWEEP_PRESETS,
    SqueezedSource,
    config_from_dict,
    config_to_dict,
    dump_config,
    list_presets,
    load_config,
    load_preset,
    load_sweep_preset,
    preset_description,
    sweep_from_dict,
    sweep_to_dict,
)
from snsim.errors import ConfigError
from snsim.quantum_optics import StokesNoiseState


@pytest.mark.parametrize("name", [p for p in list_presets() if p not in SWEEP_PRESETS])
def test_preset_round_trip(name, tmp_path):
    cfg = load_preset(name)
    assert config_from_dict(config_to_dict(cfg)) == cfg
    path = tmp_path / "c.json"
    dump_config(cfg, path)
    assert load_config(path) == cfg
    assert preset_description(name)


@pytest.mark.parametrize("name", SWEEP_PRESETS)
def test_sweep_preset_round_trip(name):
    sc = load_sweep_preset(name)
    assert sweep_from_dict(sweep_to_dict(sc)) == sc
    assert len(sc.sweep.values) >= 3


def test_optics_union():
    assert isinstance(load_preset("fig6a-pcs").optics, StokesNoiseState)
    pss = load_preset("fig6a-pss")
    assert isinstance(pss.optics, SqueezedSource)
    assert pss.xi2 == pytest.approx(10 ** (-0.37), rel=1e-3)


def test_unknown_key_names_the_field():
    data = config_to_dict(load_preset("fig6a-pcs"))
    data["probe"]["powr_mw"] = 3.0
    with pytest.raises(ConfigError, match="probe.powr_mw"):
        config_from_dict(data)


def test_invalid_value_names_the_field():
    data = config_to_dict(load_preset("fig6a-pcs"))
    data["acquisition"]["n_averages"] = 0
    with pytest.raises(ConfigError, match="n_averages"):
        config_from_dict(data)
    data = config_to_dict(load_preset("fig6a-pcs"))
    data["ensemble"]["n0"] = "dense"
    with pytest.raises(ConfigError, match="ensemble.n0"):
        config_from_dict(data)


def test_sweep_needs_three_distinct_values():
    data = sweep_to_dict(load_sweep_preset("fig5a"))
    data["sweep"]["values"] = [1.0]
    with pytest.raises(ConfigError, match="sweep.values"):
        sweep_from_dict(data)
    data["sweep"]["values"] = [2.0, 2.0, 2.0]
    with pytest.raises(ConfigError):
        sweep_from_dict(data)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_preset("fig99")


def test_dump_is_json():
    text = dump_config(load_preset("fig7-pss"))
    assert json.loads(text)["probe"]["field_ut"] == 34.6
