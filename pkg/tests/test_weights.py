import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermalab.errors import CalibrationError, InputError
from thermalab.weights import (WeightFunction, calibrate, cp_from_pointset, delta_weight, fejer_closed_form,
                               fejer_weight, fourier, generic_weight, pointset_closed_form, poisson_pointset)


def test_fejer_two_atoms():
    w = fejer_weight(2, 1.0)
    assert w.atoms == [(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]
    x = np.linspace(-7, 7, 101)
    assert np.allclose(fourier(w, x), np.cos(x / 2) ** 2, atol=1e-15)
    assert abs(fourier(w, np.pi)) < 1e-15


def test_fejer_closed_form_n32():
    w = fejer_weight(32, 0.37)
    x = np.linspace(-40, 40, 4001)
    direct = np.array([sum(wj * np.exp(-1j * xe * tj) for tj, wj in w.atoms) for xe in x[::40]])
    assert np.max(np.abs(fourier(w, x[::40]) - direct)) < 1e-12
    assert np.max(np.abs(fourier(w, x) - fejer_closed_form(32, 0.37, x))) < 1e-12


def test_two_point_set():
    s = 0.7
    w = cp_from_pointset([0.0, s])
    assert np.allclose(w.times, [-s, 0, s]) and np.allclose(w.weights, [0.25, 0.5, 0.25])
    x = np.linspace(-10, 10, 51)
    assert np.allclose(fourier(w, x).real, np.cos(x * s / 2) ** 2, atol=1e-14)


def test_poisson_cp_nonnegative():
    z = poisson_pointset(1.0, 40, 3)
    w = cp_from_pointset(z)
    x = np.linspace(0, 50, 10_000)
    vals = fourier(w, x)
    assert vals.real.min() >= -1e-12
    assert np.max(np.abs(vals.real - pointset_closed_form(z, x))) < 1e-12


def test_poisson_mean_spacing():
    z = poisson_pointset(0.5, 10_000, 9)
    gaps = np.diff(np.concatenate(([0.0], z)))
    assert abs(gaps.mean() - 0.5) < 3 * 0.5 / np.sqrt(10_000)


@pytest.mark.parametrize("seed", range(5))
def test_poisson_secondary_maxima(seed):
    z = poisson_pointset(1.0, 20, seed)
    x = np.linspace(0.3, 10 * 2 * np.pi, 20_000)
    vals = pointset_closed_form(z, x)
    # skip the central lobe: start past the first local minimum
    first_min = np.argmax(np.diff(vals) > 0)
    assert vals[first_min:].max() < 0.5


def test_calibration_fejer64():
    # the in-band minimum sits at the band edge: (sin(0.32) / (64 sin(0.005)))^2
    cal = calibrate(fejer_weight(64, 1.0), 0.01, 4.0)
    assert cal.W == pytest.approx(0.96633735999, abs=1e-10)
    assert cal.W == pytest.approx(float(fejer_closed_form(64, 1.0, 0.01)), abs=1e-12)
    assert calibrate(fejer_weight(64, 1.0), 0.005, 4.0).W >= 0.99
    zero = 2 * np.pi / 64
    with pytest.raises(CalibrationError):
        calibrate(fejer_weight(64, 1.0), zero, 4.0)


def test_weight_validation():
    with pytest.raises(InputError):
        WeightFunction(np.array([0.0]), np.array([0.5]))
    with pytest.raises(InputError):
        WeightFunction(np.array([0.0, 1.0]), np.array([1.5, -0.5]))
    with pytest.raises(InputError):
        fejer_weight(0)
    with pytest.raises(InputError):
        fejer_weight(4).shifted(1.0)


def test_generic_merges_and_shifts():
    w = generic_weight([0.0, 1.0, 1.0 + 1e-14])
    assert len(w.times) == 2 and w.weights[1] == pytest.approx(2 / 3)
    assert np.allclose(w.shifted(2.0).times, w.times + 2)
    assert delta_weight(3.0).atoms == [(3.0, 1.0)]


def test_json_roundtrip():
    w = cp_from_pointset([0.0, 0.4, 1.3])
    back = WeightFunction.from_json(w.to_json())
    assert back == w and back.points == w.points


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=12))
def test_pointset_autocorrelation_is_cp(points):
    w = cp_from_pointset(points)
    x = np.linspace(-15, 15, 301)
    assert fourier(w, x).real.min() >= -1e-12
    assert abs(fourier(w, 0.0) - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 80), st.floats(0.05, 3.0))
def test_fejer_matches_closed_form(n, s):
    # phase rounding in the atom sum grows like |x t_max| * eps; the grid keeps that below 1e-12
    x = np.linspace(-30, 30, 257)
    assert np.max(np.abs(fourier(fejer_weight(n, s), x) - fejer_closed_form(n, s, x))) < 1e-12
