import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from micromix.lamination import (CrossField, MapKind, ReducedConfig, area_mixing_index, diffuse,
                                 dominant_wavelength, evolve, predict_curve, sgm_rotation_map,
                                 snr_map, striation_count)

_even = st.sampled_from([2, 4, 6, 8, 16, 32])


@st.composite
def fields(draw, sizes=_even):
    n = draw(sizes)
    return CrossField(draw(arrays(np.float64, (n, n), elements=st.floats(0.0, 1.0))))


def _smooth(n=64):
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    return CrossField(0.5 + 0.25 * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y))


# field type

def test_cross_field_validation():
    with pytest.raises(ValueError):
        CrossField(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        CrossField(np.zeros((4, 6)))
    with pytest.raises(ValueError):
        CrossField(np.full((4, 4), 1.5))


def test_config_validation():
    with pytest.raises(ValueError):
        ReducedConfig(unit_count=0)
    with pytest.raises(ValueError):
        ReducedConfig(fourier_per_unit=-1.0)
    assert ReducedConfig(map_kind="SGM_rotation").map_kind is MapKind.SGM_ROTATION


def test_default_fourier_number():
    fo = ReducedConfig.fourier_number(1e-9, 610.0, 0.01667, 100.0)
    assert fo == pytest.approx(3.66e-3, rel=1e-2)
    assert ReducedConfig().fourier_per_unit == pytest.approx(fo, rel=2e-2)


# baker map

def test_snr_map_half_half_example():
    out = snr_map(CrossField.half_half(8)).values
    assert np.all(out[:, :4] == 1.0) and np.all(out[:, 4:] == 0.0)


@settings(max_examples=100, deadline=None)
@given(fields())
def test_snr_map_is_exact_permutation(f):
    g = snr_map(f)
    sg, sf = np.sort(g.values, axis=None), np.sort(f.values, axis=None)
    # identical histograms, so order-canonical mean and variance agree bitwise
    assert np.array_equal(sg, sf)
    assert sg.mean() == sf.mean() and sg.var() == sf.var()
    idx = CrossField(np.arange(f.n * f.n, dtype=float).reshape(f.n, f.n) / (f.n * f.n))
    perm = snr_map(idx).values
    assert len(np.unique(perm)) == f.n * f.n


@settings(max_examples=100, deadline=None)
@given(fields())
def test_snr_map_matches_pullback_formula(f):
    # f_new(x, y) = f(x/2, 2y) below the midline, f(1/2 + x/2, 2y - 1) above
    n = f.n
    g = snr_map(f).values
    for i in range(n):
        for j in range(n):
            src_i = i // 2 + (n // 2 if j >= n // 2 else 0)
            src_j = 2 * (j % (n // 2)) + i % 2
            assert g[i, j] == f.values[src_i, src_j]


def test_snr_map_odd_grid_rejected():
    class Odd:
        values = np.zeros((3, 3))
    with pytest.raises(ValueError):
        snr_map(Odd())


@pytest.mark.parametrize("k", range(1, 7))
def test_striation_doubling(k):
    f = CrossField.half_half(128)
    for _ in range(k):
        f = snr_map(f)
    assert striation_count(f) == 2 ** k - 1
    assert dominant_wavelength(f) == pytest.approx(2.0 ** (1 - k))


def test_striation_count_examples():
    assert striation_count(CrossField.half_half(16, "y")) == 1
    assert striation_count(CrossField(np.full((16, 16), 0.5))) == 0
    assert dominant_wavelength(CrossField(np.full((16, 16), 0.5))) is None


# rotation

@settings(max_examples=50, deadline=None)
@given(fields(st.sampled_from([8, 16, 32])), st.floats(-2 * math.pi, 2 * math.pi))
def test_rotation_conserves_mean_and_bounds(f, angle):
    g = sgm_rotation_map(f, angle)
    assert g.mean() == pytest.approx(f.mean(), abs=1e-12)
    assert g.values.min() >= 0.0 and g.values.max() <= 1.0


def test_rotation_identities():
    f = _smooth()
    assert np.array_equal(sgm_rotation_map(f, 0.0).values, f.values)
    assert np.abs(sgm_rotation_map(f, 2 * math.pi).values - f.values).max() <= 1e-6
    h = CrossField.half_half(32)
    swapped = sgm_rotation_map(h, math.pi).values
    assert np.abs(swapped - (1.0 - h.values)).max() <= 1e-6


# diffusion

def test_diffuse_zero_is_identity():
    f = _smooth()
    assert np.array_equal(diffuse(f, 0.0).values, f.values)
    with pytest.raises(ValueError):
        diffuse(f, -0.1)


def test_diffuse_eigenmode_decay():
    n = 64
    y = (np.arange(n) + 0.5) / n
    f = CrossField(np.tile(0.5 + 0.5 * np.cos(np.pi * y), (n, 1)))
    fo = 0.01
    g = diffuse(f, fo).values
    amp = (g[0] - 0.5) / (0.5 * np.cos(np.pi * y))
    assert np.allclose(amp, math.exp(-math.pi ** 2 * fo), rtol=1e-2)


@settings(max_examples=50, deadline=None)
@given(fields(st.sampled_from([4, 8, 16])), st.floats(0.0, 0.05))
def test_diffuse_conserves_mean_and_reduces_variance(f, fo):
    g = diffuse(f, fo)
    assert g.mean() == pytest.approx(f.mean(), abs=1e-12)
    assert g.values.var() <= f.values.var() + 1e-15


# predicted curves

def test_zero_fourier_keeps_segregation():
    c = predict_curve(ReducedConfig(10, 0.0, MapKind.SNR, resolution=64))
    assert np.allclose(c.values, 0.0, atol=1e-12)
    assert c.mixing_length is None


def test_snr_reaches_threshold_and_resolves():
    c64 = predict_curve(ReducedConfig(10, 0.01, MapKind.SNR, resolution=64))
    c128 = predict_curve(ReducedConfig(10, 0.01, MapKind.SNR, resolution=128))
    assert c64.values.max() >= 0.9
    assert c64.mixing_length is not None
    assert np.abs(c64.values - c128.values).max() < 0.02


def test_default_config_resolves():
    c64 = predict_curve(ReducedConfig(resolution=64))
    c128 = predict_curve(ReducedConfig(resolution=128))
    assert np.abs(c64.values - c128.values).max() < 0.02


def test_snr_beats_rotation_from_unit_three():
    snr = predict_curve(ReducedConfig(10, 0.01, MapKind.SNR))
    sgm = predict_curve(ReducedConfig(10, 0.01, MapKind.SGM_ROTATION))
    assert np.all(snr.values[2:] >= sgm.values[2:])


@pytest.mark.parametrize("kind", list(MapKind))
def test_curve_monotone_and_positioned(kind):
    cfg = ReducedConfig(8, 0.005, kind, resolution=32)
    c = predict_curve(cfg)
    assert np.all(np.diff(c.values) >= -1e-12)
    assert np.allclose(c.y, 0.61 * np.arange(1, 9))
    frames = list(evolve(cfg))
    assert len(frames) == 8
    assert area_mixing_index(frames[-1]) == pytest.approx(c.values[-1])
