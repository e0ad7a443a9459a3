import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import naive_dft
from frekoo import spectral
from frekoo.exceptions import InvalidConfigError, InvalidInputError, ShapeError
from frekoo.spectral import (FrequencyMask, SpectralDecomposer, Spectrum, decompose, dft_forward,
                             lowpass_operator, select_top_frequencies, spectral_magnitudes)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def trajectories(min_t=2, max_t=32, max_d=8):
    shape = st.tuples(st.integers(min_t, max_t), st.integers(1, max_d))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


# forward transform

def test_constant_column_is_dc_only():
    c = 2.5
    coeffs = dft_forward(np.full((4, 1), c)).coeffs
    assert coeffs[0, 0] == pytest.approx(4 * c)
    assert np.all(np.abs(coeffs[1:]) < 1e-12)


def test_single_step_is_single_bin():
    s = dft_forward([[3.25]])
    assert s.n_freq == 1
    assert s.coeffs[0, 0] == 3.25


def test_matches_naive_sum(rng):
    theta = rng.standard_normal((16, 3))
    assert np.max(np.abs(dft_forward(theta).coeffs - naive_dft(theta))) < 1e-10


def test_one_based_time_index_only_rotates_phase(rng):
    theta = rng.standard_normal((11, 4))
    ours = dft_forward(theta).coeffs
    shifted = naive_dft(theta, one_based=True)
    assert np.max(np.abs(np.abs(ours) - np.abs(shifted))) < 1e-10
    phase = np.exp(-2j * np.pi * np.arange(ours.shape[0]) / 11)[:, None]
    assert np.max(np.abs(ours * phase - shifted)) < 1e-10
    for tau in (0.3, 0.6):
        a = select_top_frequencies(spectral_magnitudes(Spectrum(ours, 11)), tau)
        b = select_top_frequencies(np.abs(shifted).mean(axis=1), tau)
        assert a.selected == b.selected


@pytest.mark.parametrize("t", [1, 2, 3, 8, 9, 32])
def test_bin_count(t):
    assert dft_forward(np.ones((t, 2))).n_freq == t // 2 + 1 == spectral.n_freq_bins(t)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_rejected(bad):
    theta = np.ones((4, 2))
    theta[1, 1] = bad
    with pytest.raises(InvalidInputError):
        dft_forward(theta)


def test_three_dimensional_rejected():
    with pytest.raises(ShapeError):
        dft_forward(np.ones((2, 2, 2)))


# magnitudes

def test_magnitudes_hand_case():
    m = spectral_magnitudes(Spectrum(np.array([[3 + 4j], [0], [1]]), 4))
    np.testing.assert_allclose(m, [5.0, 0.0, 1.0])


def test_magnitudes_zero():
    assert np.all(spectral_magnitudes(Spectrum(np.zeros((5, 3), complex), 8)) == 0)


def test_magnitudes_mean_of_moduli(rng):
    c = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
    oracle = [sum(abs(c[f, d]) for d in range(4)) / 4 for f in range(9)]
    assert np.max(np.abs(spectral_magnitudes(Spectrum(c, 16)) - oracle)) < 1e-12


# selection

def test_select_ceiling_and_order():
    mask = select_top_frequencies([5, 3, 1], 0.5)
    assert mask.q == 2 and mask.selected == (0, 1)


def test_select_all():
    assert select_top_frequencies([1, 7, 3, 2], 1.0).selected == (0, 1, 2, 3)


def test_select_tie_break_toward_lower_index():
    assert select_top_frequencies([2, 2, 2, 1], 0.5).selected == (0, 1)


def test_select_picks_largest_not_lowest():
    assert select_top_frequencies([0.1, 4, 0.2, 3], 0.5).selected == (1, 3)


def test_tau_zero_warns_and_selects_nothing():
    with pytest.warns(RuntimeWarning):
        mask = select_top_frequencies([1, 2, 3], 0.0)
    assert mask.selected == () and mask.q == 0


@pytest.mark.parametrize("tau", [-0.1, 1.01, float("nan")])
def test_tau_out_of_range(tau):
    with pytest.raises(InvalidConfigError):
        select_top_frequencies([1, 2], tau)


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=17), st.floats(0.01, 1))
def test_selection_invariants(mags, tau):
    mask = select_top_frequencies(mags, tau)
    n = len(mags)
    assert mask.q == math.ceil(tau * n)
    chosen = set(mask.selected)
    rest = [mags[i] for i in range(n) if i not in chosen]
    if rest and chosen:
        assert min(mags[i] for i in chosen) >= max(rest)
    # ties at the boundary go to the lower index
    for i in chosen:
        for j in range(n):
            if j not in chosen and mags[j] == mags[i]:
                assert i < j


# decomposition

def test_tau_one_keeps_everything(rng):
    theta = rng.standard_normal((10, 3))
    d = decompose(theta, 1.0)
    assert np.max(np.abs(d.low - theta)) < 1e-9
    assert np.max(np.abs(d.high)) < 1e-9


def test_pure_cosine_has_no_residual():
    t = np.arange(16)
    theta = (3.0 * np.cos(2 * np.pi * t / 16))[:, None]
    d = decompose(theta, 0.2)  # q = 2 of 9 bins
    assert 1 in d.mask.selected
    assert np.max(np.abs(d.high)) < 1e-9


def test_random_reconstruction(rng):
    theta = rng.standard_normal((12, 5))
    d = decompose(theta, 0.4)
    assert np.max(np.abs(d.low + d.high - theta)) / np.max(np.abs(theta)) < 1e-6


def test_decompose_needs_two_steps():
    with pytest.raises(InvalidInputError):
        decompose(np.ones((1, 3)), 0.5)


def test_mask_size_mismatch():
    with pytest.raises(ShapeError):
        decompose(np.ones((6, 2)), 0.5, mask=FrequencyMask((0,), 3, 0.5))


def test_outputs_are_real(rng):
    d = decompose(rng.standard_normal((7, 2)), 0.5)
    assert d.low.dtype == np.float64 and d.high.dtype == np.float64


@settings(max_examples=60, deadline=None)
@given(trajectories(), st.sampled_from([0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0]))
def test_reconstruction_property(theta, tau):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = decompose(theta, tau)
    assert np.max(np.abs(theta - d.low - d.high)) / (1 + np.max(np.abs(theta))) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(trajectories(), st.floats(0.05, 1.0))
def test_lowpass_idempotent(theta, tau):
    d = decompose(theta, tau)
    again = decompose(d.low, tau, mask=d.mask)
    scale = 1 + np.max(np.abs(theta))
    assert np.max(np.abs(again.low - d.low)) / scale < 1e-6
    assert np.max(np.abs(again.high)) / scale < 1e-6


@settings(max_examples=60, deadline=None)
@given(trajectories(), st.floats(0.05, 1.0))
def test_energy_partition(theta, tau):
    d = decompose(theta, tau)
    full = np.abs(dft_forward(theta).coeffs) ** 2
    b = d.mask.as_array()[:, None]
    low = np.abs(dft_forward(d.low).coeffs) ** 2
    high = np.abs(dft_forward(d.high).coeffs) ** 2
    np.testing.assert_allclose(low + high, full, rtol=1e-9, atol=1e-9 * (1 + full.max()))
    np.testing.assert_allclose(low * (1 - b), 0, atol=1e-9 * (1 + full.max()))


@settings(max_examples=40, deadline=None)
@given(trajectories(max_t=20), st.floats(0.05, 1.0))
def test_lowpass_operator_matches_decompose(theta, tau):
    d = decompose(theta, tau)
    p = lowpass_operator(theta.shape[0], d.mask)
    np.testing.assert_allclose(p @ theta, d.low, atol=1e-9 * (1 + np.max(np.abs(theta))))


def test_lowpass_operator_is_a_projection(rng):
    mask = decompose(rng.standard_normal((9, 3)), 0.5).mask
    p = lowpass_operator(9, mask)
    np.testing.assert_allclose(p @ p, p, atol=1e-12)
    np.testing.assert_allclose(p, p.T, atol=1e-12)


# estimator wrapper

def test_decomposer_roundtrip(rng):
    theta = rng.standard_normal((9, 4))
    dec = SpectralDecomposer(tau=0.5).fit(theta)
    low, high = dec.transform(theta), dec.transform_residual(theta)
    np.testing.assert_allclose(dec.inverse_transform(low, high), theta, atol=1e-12)
    assert dec.mask_.q == 3 and dec.n_features_in_ == 4
    assert dec.get_params() == {"tau": 0.5}


def test_decomposer_reuses_fitted_mask(rng):
    a, b = rng.standard_normal((8, 2)), rng.standard_normal((8, 2))
    dec = SpectralDecomposer(tau=0.4).fit(a)
    np.testing.assert_allclose(dec.transform(b), decompose(b, 0.4, mask=dec.mask_).low)


def test_decomposer_length_mismatch(rng):
    dec = SpectralDecomposer().fit(rng.standard_normal((8, 2)))
    with pytest.raises(ShapeError):
        dec.transform(rng.standard_normal((9, 2)))


def test_dump_columns(tmp_path, rng):
    theta = rng.standard_normal((5, 3))
    d = decompose(theta, 0.5)
    path = tmp_path / "dump.csv"
    spectral.write_decomposition_dump(path, theta, d)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,mean_raw,mean_low,mean_high,mean_reconstructed"
    assert len(lines) == 6
    row = [float(x) for x in lines[1].split(",")]
    assert row[0] == 1
    assert row[1] == pytest.approx(theta[0].mean())
    assert row[2] + row[3] == pytest.approx(row[1])
