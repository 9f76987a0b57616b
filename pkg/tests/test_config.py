import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from micromix.config import ConfigError, load_config, parse_config, preset_path
from micromix.geometry import DeviceKind
from micromix.lamination import MapKind

PRESETS = ["fig4_snr", "fig4_sgm", "fig6_sweep", "fig7_redox_05M", "fig7_redox_10M"]


def test_minimal_config_defaults():
    cfg = parse_config('[geometry]\ndevice_kind = "SNR"\n')
    assert cfg["geometry"]["unit_pitch_um"] == 610.0
    assert cfg["geometry"]["units"] == 10
    fluid = cfg.fluid()
    assert fluid.density == 998.0 and fluid.viscosity == 1e-3
    assert cfg.network().length == pytest.approx(6100.0)
    assert cfg.conditions().reynolds == pytest.approx(1.66, abs=0.01)
    assert cfg["diagnostics"]["view_axis"] == "auto"


def test_missing_unit_suffix_names_key_and_line():
    with pytest.raises(ConfigError) as err:
        parse_config("[run]\nmode = \"cfd\"\n\n[flow]\nflow_rate = 10\n")
    assert err.value.key == "flow_rate" and err.value.line == 5
    assert "flow_rate_ul_min" in str(err.value)


def test_range_error():
    with pytest.raises(ConfigError) as err:
        parse_config("[geometry]\nunits = 0\n")
    assert err.value.key == "units" and err.value.line == 2


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as err:
        parse_config("[geometry]\nunits = 3\ncolour = 1\n")
    assert err.value.key == "colour" and err.value.line == 3
    with pytest.raises(ConfigError) as err:
        parse_config("[nope]\nx = 1\n")
    assert err.value.line == 1


def test_conflicting_and_wrong_types():
    with pytest.raises(ConfigError):
        parse_config("[flow]\nflow_rate_ul_min = 10\nreynolds = 1\n")
    with pytest.raises(ConfigError):
        parse_config('[geometry]\nunits = "three"\n')
    with pytest.raises(ConfigError):
        parse_config("[geometry\n")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.toml")


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_echo_round_trip(name):
    cfg = load_config(preset_path(name))
    echo = cfg.to_toml()
    again = parse_config(echo)
    assert again == cfg
    assert again.to_toml() == echo


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset_path("fig99")


@settings(max_examples=40, deadline=None)
@given(units=st.integers(1, 20), spacing=st.floats(1.0, 50.0),
       rate=st.floats(0.1, 100.0), kind=st.sampled_from(["SNR", "SGM", "PLAIN"]))
def test_echo_round_trip_property(units, spacing, rate, kind):
    text = (f'[geometry]\ndevice_kind = "{kind}"\nunits = {units}\nspacing_um = {spacing!r}\n'
            f"[flow]\nflow_rate_ul_min = {rate!r}\n")
    cfg = parse_config(text)
    assert parse_config(cfg.to_toml()) == cfg


def test_with_value_and_builders():
    cfg = parse_config("[flow]\nflow_rate_ul_min = 10\n[chemistry]\npeclet = 200\n")
    re1 = cfg.with_value("flow.reynolds", 1.0)
    assert "flow_rate_ul_min" not in re1["flow"]
    assert re1.conditions().reynolds == pytest.approx(1.0)
    assert cfg.peclet() == pytest.approx(200.0)
    u = cfg.conditions().mean_velocity
    assert cfg.diffusivity() == pytest.approx(u * 100e-6 / 200.0)
    assert cfg.with_value("geometry.units", 3.0)["geometry"]["units"] == 3
    with pytest.raises(ConfigError):
        cfg.with_value("geometry.units", 0)
    with pytest.raises(ConfigError):
        cfg.with_value("geometry.bogus", 1)
    sgm = cfg.with_value("geometry.device_kind", "SGM")
    assert sgm.network().device_kind == DeviceKind.SGM
    red = cfg.with_value("reduced.map_kind", "SGM_rotation").reduced()
    assert red.map_kind is MapKind.SGM_ROTATION and red.sgm_angle == pytest.approx(math.pi / 3)
    system = cfg.with_value("chemistry.mode", "fast").reaction_system()
    assert system.c_a0 == pytest.approx(350.0) and system.c_b0 == pytest.approx(500.0)
