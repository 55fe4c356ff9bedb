import hypothesis
import hypothesis.strategies as st
import numpy as np
import pytest

from qcharge import ramsey
from qcharge.config import RAMSEY_REFERENCE
from qcharge.errors import FitError, ParameterError
from qcharge.model import RamseyTrace


TAU = np.linspace(0, 10e-6, 501)


@pytest.fixture
def reference_trace():
    return ramsey.synth_ramsey(RAMSEY_REFERENCE['f1'], RAMSEY_REFERENCE['f2'],
                               RAMSEY_REFERENCE['t2'], TAU, noise_sigma=0.02, seed=1)


def test_ramsey_signal_at_zero_delay():
    assert ramsey.ramsey_signal(0.0, 4e6, 6e6, 1e-6, 0.3, 0.7, 0.1) == pytest.approx(1.1)


def test_synth_ramsey_is_seeded():
    a = ramsey.synth_ramsey(4e6, 6e6, 1.4e-6, TAU, noise_sigma=0.1, seed=3)
    b = ramsey.synth_ramsey(4e6, 6e6, 1.4e-6, TAU, noise_sigma=0.1, seed=3)
    c = ramsey.synth_ramsey(4e6, 6e6, 1.4e-6, TAU, noise_sigma=0.1, seed=4)
    np.testing.assert_array_equal(a.i_quadrature, b.i_quadrature)
    assert not np.allclose(a.i_quadrature, c.i_quadrature)


def test_synth_ramsey_noise_averages_down():
    clean = ramsey.ramsey_signal(TAU, 4e6, 6e6, 1.4e-6)
    trace = ramsey.synth_ramsey(4e6, 6e6, 1.4e-6, TAU, noise_sigma=0.5, seed=0,
                                repetitions=100)
    assert np.std(trace.i_quadrature - clean) == pytest.approx(0.05, rel=0.15)


def test_synth_ramsey_rejects_bad_input():
    with pytest.raises(ParameterError):
        ramsey.synth_ramsey(4e6, 4e6, 1e-6, TAU)
    with pytest.raises(ParameterError):
        ramsey.synth_ramsey(4e6, 6e6, 0.0, TAU)
    with pytest.raises(ParameterError):
        ramsey.synth_ramsey(4e6, 6e6, 1e-6, [])
    with pytest.raises(ParameterError):
        ramsey.synth_ramsey(4e6, 6e6, 1e-6, TAU, weights=(-0.1, 0.5))


def test_fft_resolution():
    trace = ramsey.synth_ramsey(4e6, 6e6, 1.4e-6, np.arange(100) * 0.1e-6)
    spectrum = ramsey.fft_magnitude(trace, pad_factor=8)
    assert spectrum.n_padded == 800
    assert spectrum.resolution == pytest.approx(12.5e3)
    assert spectrum.magnitude[0] == pytest.approx(0.0, abs=1e-9)


def test_fft_requires_uniform_sampling():
    tau = np.concatenate([np.linspace(0, 1e-6, 10), [2e-6, 5e-6]])
    trace = RamseyTrace(tau, np.cos(tau * 1e7))
    with pytest.raises(ParameterError):
        ramsey.fft_magnitude(trace)
    with pytest.raises(ParameterError):
        ramsey.fft_magnitude(RamseyTrace([0, 1e-7, 2e-7], [1, 0, 1]))


def test_parseval_unpadded(reference_trace):
    spectrum = ramsey.fft_magnitude(reference_trace, pad_factor=1)
    assert ramsey.spectral_energy(spectrum) == \
        pytest.approx(ramsey.trace_energy(reference_trace), rel=1e-9)


def test_parseval_even_length():
    trace = ramsey.synth_ramsey(4e6, 6e6, 1.4e-6, np.arange(500) * 20e-9, noise_sigma=0.1)
    spectrum = ramsey.fft_magnitude(trace, pad_factor=1)
    assert ramsey.spectral_energy(spectrum) == pytest.approx(ramsey.trace_energy(trace), rel=1e-9)


def test_reference_peaks(reference_trace):
    spectrum = ramsey.fft_magnitude(reference_trace)
    peaks = ramsey.find_spectral_peaks(spectrum, 2, snr_min=8)
    np.testing.assert_allclose(peaks, [4e6, 6e6], atol=12.5e3)


def test_lorentzian_fit_centers(reference_trace):
    spectrum = ramsey.fft_magnitude(reference_trace)
    result = ramsey.fit_lorentzian_peaks(spectrum, 2)
    np.testing.assert_allclose(result.centers, [4e6, 6e6], atol=12.5e3)
    # The magnitude line is broader than the 1 / (2 pi t2) power line.
    gamma = 1 / (2 * np.pi * 1.4e-6)
    assert np.all((result.widths > 0.8 * gamma) & (result.widths < 2.5 * gamma))
    assert result.flags == []


def test_lorentzian_fit_reports_missing_peaks():
    trace = ramsey.synth_ramsey(4e6, 4.0001e6, 1.4e-6, TAU)
    spectrum = ramsey.fft_magnitude(trace)
    with pytest.raises(FitError):
        ramsey.fit_lorentzian_peaks(spectrum, 2, guesses=[4e6])
    with pytest.raises(ParameterError):
        ramsey.fit_lorentzian_peaks(spectrum, 0)


def test_quadruplet():
    trace = ramsey.synth_ramsey(4.0e6, 6.0e6, 3e-6, TAU, noise_sigma=0.01, seed=2)
    trace2 = ramsey.synth_ramsey(4.6e6, 6.6e6, 3e-6, TAU, noise_sigma=0.01, seed=3)
    combined = RamseyTrace(TAU, trace.i_quadrature + trace2.i_quadrature)
    spectrum = ramsey.fft_magnitude(combined)
    result = ramsey.fit_lorentzian_peaks(spectrum, 4)
    np.testing.assert_allclose(result.centers, [4.0e6, 4.6e6, 6.0e6, 6.6e6], atol=50e3)
    pairs = ramsey.pair_doublets(result.centers)
    assert len(pairs) == 2
    assert pairs[0][0] == pytest.approx(4.0e6, abs=50e3)
    assert pairs[0][1] == pytest.approx(6.0e6, abs=50e3)


def test_pair_doublets_needs_even_count():
    assert ramsey.pair_doublets([3, 1]) == [(1, 3)]
    with pytest.raises(ParameterError):
        ramsey.pair_doublets([1, 2, 3])


@pytest.mark.parametrize('splitting, expected', [
    (None, [(1.0, 3.0), (1.2, 3.2)]),
    (2.0, [(1.0, 3.0), (1.2, 3.2)]),
    (0.2, [(1.0, 1.2), (3.0, 3.2)]),
])
def test_pair_doublets_follows_splitting(splitting, expected):
    pairs = ramsey.pair_doublets([3.2, 1.0, 3.0, 1.2], splitting)
    np.testing.assert_allclose(pairs, expected)


def test_time_domain_fit(reference_trace):
    result = ramsey.time_domain_fit(reference_trace)
    assert result.f1 == pytest.approx(4e6, abs=5e3)
    assert result.f2 == pytest.approx(6e6, abs=5e3)
    assert result.t2 == pytest.approx(1.4e-6, rel=0.05)
    assert result.detuning == pytest.approx(5e6, abs=5e3)
    assert result.splitting == pytest.approx(2e6, abs=1e4)
    assert result.flags == []


def test_time_domain_fit_single_frequency():
    # 20 kHz apart is unresolved in a 10 us trace.
    trace = ramsey.synth_ramsey(5e6, 5.02e6, 3e-6, TAU, noise_sigma=0.01, seed=0)
    result = ramsey.time_domain_fit(trace)
    assert any(flag.startswith('single-frequency') for flag in result.flags)
    assert result.f1 == pytest.approx(5.01e6, abs=50e3)
    assert result.f1 == result.f2


def test_time_domain_fit_needs_four_periods():
    tau = np.linspace(0, 1e-6, 201)
    trace = ramsey.synth_ramsey(2e6, 20e6, 5e-6, tau, weights=(1.0, 0.5))
    with pytest.raises(ParameterError):
        ramsey.time_domain_fit(trace)


@hypothesis.settings(max_examples=20, deadline=None)
@hypothesis.given(
    f1=st.floats(min_value=2e6, max_value=8e6),
    separation=st.floats(min_value=2e6, max_value=8e6),
    t2=st.floats(min_value=2e-6, max_value=5e-6),
)
def test_fourier_peaks_recover_frequencies(f1, separation, t2):
    f2 = f1 + separation
    trace = ramsey.synth_ramsey(f1, f2, t2, TAU)
    spectrum = ramsey.fft_magnitude(trace)
    peaks = ramsey.find_spectral_peaks(spectrum, 2)
    np.testing.assert_allclose(peaks, [f1, f2], atol=spectrum.resolution)


def test_ng_splitting_relation():
    assert ramsey.ng_to_splitting(2e6, 0.0, level=3) == pytest.approx(2e6)
    assert ramsey.ng_to_splitting(2e6, 0.5, level=3) == pytest.approx(-2e6)
    assert ramsey.ng_to_splitting(2e6, 0.0, level=0) == pytest.approx(-2e6)


@hypothesis.given(st.floats(min_value=0.0, max_value=0.5))
def test_splitting_inverts(n_g):
    splitting = ramsey.ng_to_splitting(2e6, n_g)
    recovered, err = ramsey.splitting_to_ng(0.0, splitting, 2e6)
    assert recovered == pytest.approx(n_g, abs=1e-6)
    assert np.isnan(err)


def test_splitting_to_ng_error_bar():
    n_g, err = ramsey.splitting_to_ng(0.0, 2e6, 2e6, sigma=0.14e6)
    assert n_g == 0.0
    assert err == pytest.approx(0.0599, abs=5e-4)


def test_splitting_to_ng_rejects_large_splitting():
    assert ramsey.splitting_to_ng(0.0, 2.05e6, 2e6)[0] == 0.0
    with pytest.raises(ParameterError):
        ramsey.splitting_to_ng(0.0, 2.5e6, 2e6)
    with pytest.raises(ParameterError):
        ramsey.splitting_to_ng(0.0, 1e6, 0.0)
