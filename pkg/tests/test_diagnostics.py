import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from micromix.diagnostics import (DiagnosticsError, MixingCurve, StationProfile,
                                  cross_section_pattern, default_stations, default_view_axis,
                                  graylevel_projection, mixing_curve, mixing_index, mixing_length,
                                  reaction_length, residence_period, station_profile)
from micromix.flow import FlowConditions, plug_flow, solve_flow
from micromix.geometry import UnitParams, build_plain_network, build_snr_network, voxelize
from micromix.transport import (ReactionSystem, SpeciesFields, solve_fast_reaction,
                                solve_passive_scalar)


def _pe_diffusivity(flow, pe):
    return flow.conditions.mean_velocity * 100e-6 / pe


def _uniform(grid, value=0.5):
    c = np.where(grid.fluid, value, 0.0)
    return SpeciesFields(grid, "passive", {"c": c}, None, None, {"c": (1.0, 0.0)})


def _profile(values, weights=None):
    v = np.asarray(values, float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, float)
    return StationProfile(0.0, v, w)


# mixing index

def test_mixing_index_examples():
    assert mixing_index(_profile([0.5] * 8)) == pytest.approx(1.0)
    assert mixing_index(_profile([0, 0, 1, 1])) == pytest.approx(0.0, abs=1e-12)
    assert mixing_index(_profile([0.25, 0.75, 0.25, 0.75])) == pytest.approx(0.5)


@pytest.mark.parametrize("value", [0.0, 1.0])
def test_mixing_index_degenerate_contrast(value):
    with pytest.raises(DiagnosticsError, match="degenerate inlet contrast"):
        mixing_index(_profile([value] * 4))


def test_profile_rejects_bad_weights():
    with pytest.raises(DiagnosticsError):
        _profile([0.1, 0.2], [0.0, 0.0])
    with pytest.raises(DiagnosticsError):
        _profile([0.1, 0.2], [1.0, -1.0])
    with pytest.raises(DiagnosticsError):
        _profile([], [])


_vals = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=40)


@settings(max_examples=200, deadline=None)
@given(_vals, st.data())
def test_mixing_index_bounded_and_relabel_invariant(values, data):
    w = data.draw(st.lists(st.floats(0.01, 10.0), min_size=len(values), max_size=len(values)))
    v = np.array(values)
    mean = float((np.array(w) * v).sum() / sum(w))
    assume(1e-6 < mean < 1 - 1e-6)
    m = mixing_index(_profile(v, w))
    assert 0.0 <= m <= 1.0
    assert mixing_index(_profile(1.0 - v, w)) == pytest.approx(m, abs=1e-9)


# mixing length

def _curve(pts):
    return MixingCurve(tuple(pts))


def test_mixing_length_examples():
    assert mixing_length(_curve([(3.5, 0.85), (4.0, 0.95)])) == pytest.approx(3.75)
    assert mixing_length(_curve([(0.0, 0.1), (1.0, 0.5), (2.0, 0.8)])) is None
    assert mixing_length(_curve([(0.5, 0.1), (1.0, 0.5)]), threshold=0.0) == 0.5


def test_mixing_length_hysteresis():
    # a dip below threshold - 0.01 after the first crossing disqualifies it
    pts = [(0.0, 0.5), (1.0, 0.92), (2.0, 0.85), (3.0, 0.95)]
    assert mixing_length(_curve(pts)) == pytest.approx(2.0 + 0.05 / 0.10)
    # a small wiggle inside the band does not
    pts = [(0.0, 0.5), (1.0, 0.92), (2.0, 0.895), (3.0, 0.95)]
    assert mixing_length(_curve(pts)) == pytest.approx(0.4 / 0.42)


def test_mixing_length_empty_curve():
    with pytest.raises(DiagnosticsError):
        mixing_length(_curve([]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_mixing_length_non_decreasing_in_threshold(ms, t1, t2):
    lo, hi = sorted((t1, t2))
    curve = _curve([(0.1 * i, m) for i, m in enumerate(ms)])
    l_lo, l_hi = mixing_length(curve, lo), mixing_length(curve, hi)
    if l_hi is not None:
        assert l_lo is not None
        assert l_lo <= l_hi + 1e-12


# curves on solved fields

def test_segregated_inlet_and_domain_errors(snr_flow):
    grid, flow = snr_flow
    f = solve_passive_scalar(flow, grid, _pe_diffusivity(flow, 200))
    curve = mixing_curve(f, flow, default_stations(grid.network))
    assert curve.values[0] < 0.1
    assert np.all((curve.values >= 0) & (curve.values <= 1))
    with pytest.raises(DiagnosticsError):
        mixing_curve(f, flow, [0.0, 100.0])
    with pytest.raises(DiagnosticsError):
        cross_section_pattern(f, -1.0)


def test_flux_weighted_not_below_area_weighted(snr_flow):
    grid, flow = snr_flow
    f = solve_passive_scalar(flow, grid, _pe_diffusivity(flow, 200))
    last = default_stations(grid.network)[-1]
    mf = mixing_index(station_profile(f, flow, last, "flux"))
    ma = mixing_index(station_profile(f, flow, last, "area"))
    assert mf >= ma - 0.05


def test_plain_duct_zero_diffusivity_monotone(duct_flow):
    grid, flow = duct_flow
    f = solve_passive_scalar(flow, grid, 0.0)
    m = mixing_curve(f, flow, np.arange(0.0, 0.4, 0.05)).values
    assert np.all(np.diff(m) >= -1e-12)


# reaction length

def test_reaction_length_requires_reaction(duct_flow):
    grid, flow = duct_flow
    with pytest.raises(DiagnosticsError, match="no reaction present"):
        reaction_length(_uniform(grid), flow, [0.0, 0.1])


def test_reaction_length_zero_oxidant_first_station(snr_flow):
    grid, flow = snr_flow
    system = ReactionSystem.redox(0.35, 0.5, 1e-9)
    f = solve_fast_reaction(flow, grid, system)
    zero = SpeciesFields(grid, "fast", {**f.concentrations, "I2": np.zeros(grid.dims)},
                         f.mixture_fraction, system, f.inlet_values)
    assert reaction_length(zero, flow, [0.2, 0.4, 0.6]) == 0.2


def test_reaction_length_non_increasing_in_reductant(snr_flow):
    grid, flow = snr_flow
    d = _pe_diffusivity(flow, 200)
    stations = np.arange(0.0, grid.network.length / 1000.0, 0.05)
    lengths = []
    for cb in (0.5, 1.0, 2.0):
        f = solve_fast_reaction(flow, grid, ReactionSystem.redox(0.35, cb, d))
        L = reaction_length(f, flow, stations)
        lengths.append(math.inf if L is None else L)
    assert lengths[0] >= lengths[1] >= lengths[2]
    assert lengths[2] < math.inf


# residence period

def test_residence_period_examples():
    assert residence_period(3.6, 0.01667) == pytest.approx(0.216, abs=1e-3)
    assert residence_period(2.4, 0.01667) == pytest.approx(0.144, abs=1e-3)
    assert residence_period(2.0, 0.01) == pytest.approx(2 * residence_period(1.0, 0.01))
    with pytest.raises(ValueError):
        residence_period(1.0, 0.0)


# patterns and projection

def test_pattern_at_inlet_is_two_bands(snr_flow):
    grid, flow = snr_flow
    f = solve_passive_scalar(flow, grid, _pe_diffusivity(flow, 200))
    img = cross_section_pattern(f, 0.0)
    vals = img.compressed()
    assert img.shape == (grid.dims[2], grid.dims[0])
    assert np.mean((vals < 30) | (vals > 225)) > 0.8
    assert (vals > 225).any() and (vals < 30).any()


def test_pattern_mixed_is_constant_gray(duct_flow):
    grid, _ = duct_flow
    img = cross_section_pattern(_uniform(grid), 0.2)
    assert np.all(img.compressed() == 128)


def test_pattern_mirror_symmetric(duct_flow):
    # the plain duct and its split inlet are symmetric about the mid-height plane
    grid, flow = duct_flow
    f = solve_passive_scalar(flow, grid, _pe_diffusivity(flow, 100))
    img = cross_section_pattern(f, 0.3).astype(int)
    assert np.abs(img - img[::-1]).max() <= 1


def test_projection_unmixed_and_mixed():
    p = UnitParams()
    grid = voxelize(build_plain_network(p, 200.0), 10.0)
    flow = plug_flow(grid, FlowConditions.from_total(10.0))
    unmixed = solve_passive_scalar(flow, grid, 0.0)
    proj = graylevel_projection(unmixed, flow)
    assert proj.view_axis == "z"
    assert np.allclose(proj.std, proj.std[0], rtol=1e-5)  # steady-solve tolerance
    assert proj.length is None
    mixed = graylevel_projection(_uniform(grid), flow)
    assert np.allclose(mixed.std, 0.0)


def test_projection_tracks_mixing_length():
    net = build_snr_network(UnitParams(), 3)
    grid = voxelize(net, 10.0)
    assert default_view_axis(grid) == "x"
    flow = solve_flow(grid, FlowConditions.from_total(10.0))
    f = solve_passive_scalar(flow, grid, _pe_diffusivity(flow, 200))
    L = mixing_curve(f, flow, default_stations(net)).mixing_length
    proj = graylevel_projection(f, flow)
    assert L is not None and proj.length is not None
    assert abs(proj.length - L) <= 0.3 * L
