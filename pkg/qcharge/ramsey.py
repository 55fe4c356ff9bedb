'''
Ramsey traces of a parity-split transition and their spectral analysis
'''
import logging
log = logging.getLogger(__name__)

from lmfit import Model
from lmfit.models import ConstantModel, LorentzianModel
import numpy as np

from qcharge import util
from qcharge.config import FFT_PAD_FACTOR
from qcharge.errors import FitError, ParameterError
from qcharge.model import Peak, PeakFit, RamseyFit, RamseyTrace, SpectrumEstimate


def ramsey_signal(tau, f1, f2, t2, w1=0.5, w2=0.5, offset=0.0):
    '''
    Two-frequency Ramsey fringe

    I(tau) = exp(-tau / t2) (w1 cos(2 pi f1 tau) + w2 cos(2 pi f2 tau)) + offset
    '''
    tau = np.asarray(tau, dtype=float)
    envelope = np.exp(-tau / t2)
    return envelope * (w1 * np.cos(2 * np.pi * f1 * tau)
                       + w2 * np.cos(2 * np.pi * f2 * tau)) + offset


def synth_ramsey(f1, f2, t2, tau, noise_sigma=0.0, weights=(0.5, 0.5), seed=0,
                 repetitions=1):
    '''
    Synthetic Ramsey trace with additive Gaussian readout noise

    The noise of `repetitions` averaged shots scales as
    noise_sigma / sqrt(repetitions).
    '''
    tau = np.asarray(tau, dtype=float)
    if len(tau) == 0:
        raise ParameterError('At least one delay is required')
    if f1 == f2:
        raise ParameterError('f1 and f2 must differ')
    if not t2 > 0:
        raise ParameterError('t2 must be positive')
    w1, w2 = weights
    if w1 < 0 or w2 < 0:
        raise ParameterError('Weights must be non-negative')
    if noise_sigma < 0:
        raise ParameterError('noise_sigma must be non-negative')
    i_quadrature = ramsey_signal(tau, f1, f2, t2, w1, w2)
    if noise_sigma > 0:
        rng = util.make_rng(seed, 'ramsey')
        i_quadrature = i_quadrature + rng.normal(0, noise_sigma / np.sqrt(repetitions), len(tau))
    return RamseyTrace(tau, i_quadrature, repetitions)


def fft_magnitude(trace, pad_factor=FFT_PAD_FACTOR):
    '''
    Magnitude of the zero-padded real FFT of a mean-removed trace

    The padded length is `pad_factor` times the number of samples. No window
    is applied.
    '''
    if pad_factor < 1:
        raise ParameterError('pad_factor must be at least 1')
    n = len(trace.tau)
    if n < 4:
        raise ParameterError('At least four samples are needed for a spectrum')
    dt = util.uniform_spacing(trace.tau)
    if dt is None:
        raise ParameterError('Ramsey delays must be uniformly spaced for the FFT')
    y = trace.i_quadrature - np.mean(trace.i_quadrature)
    n_padded = pad_factor * n
    magnitude = np.abs(np.fft.rfft(y, n_padded))
    frequency = np.fft.rfftfreq(n_padded, dt)
    return SpectrumEstimate(frequency=frequency, magnitude=magnitude, n_samples=n,
                            n_padded=n_padded, dt=dt, mean_removed=True, window='none')


def spectral_energy(spectrum):
    '''
    Energy of the time-domain signal recovered from its one-sided spectrum
    '''
    m2 = spectrum.magnitude ** 2
    if spectrum.n_padded % 2 == 0:
        total = m2[0] + 2 * m2[1:-1].sum() + m2[-1]
    else:
        total = m2[0] + 2 * m2[1:].sum()
    return total / spectrum.n_padded


def trace_energy(trace):
    y = trace.i_quadrature - np.mean(trace.i_quadrature)
    return float(np.dot(y, y))


def find_spectral_peaks(spectrum, n_peaks, snr_min=None):
    '''
    Frequencies of the most prominent peaks, in ascending order

    If `snr_min` is given, only peaks whose prominence exceeds `snr_min`
    times the robust noise level of the spectrum are returned.
    '''
    prominence = None
    if snr_min is not None:
        prominence = snr_min * util.robust_noise(spectrum.magnitude)
    i = util.find_prominent_peaks(spectrum.magnitude, n_peaks, prominence)
    return spectrum.frequency[i]


def _fit_window(frequency, centers, resolution):
    span = max(np.ptp(centers), 50 * resolution)
    lo, hi = min(centers) - span, max(centers) + span
    return (frequency >= lo) & (frequency <= hi)


def fit_lorentzian_peaks(spectrum, n_peaks, guesses=None, fit_range=None):
    '''
    Fit a sum of `n_peaks` Lorentzians plus a constant baseline

    Parameters
    ----------
    spectrum : SpectrumEstimate
    n_peaks : int
    guesses : array of float
        Initial peak centers (Hz). Found with `find_spectral_peaks` if
        omitted.
    fit_range : (float, float)
        Frequency range to fit. Defaults to a window around the peaks.

    Returns
    -------
    fit : PeakFit
        Peaks sorted by center. Widths are half widths at half maximum. The
        'overlap' flag is set when two centers are closer than one bin.
    '''
    if n_peaks < 1:
        raise ParameterError('At least one peak is required')
    f, y = spectrum.frequency, spectrum.magnitude
    resolution = f[1] - f[0]
    if guesses is None:
        guesses = find_spectral_peaks(spectrum, n_peaks)
    guesses = np.sort(np.asarray(guesses, dtype=float))
    if len(guesses) != n_peaks:
        raise FitError(f'Found {len(guesses)} candidate peaks, expected {n_peaks}')

    if fit_range is None:
        mask = _fit_window(f, guesses, resolution)
    else:
        mask = (f >= fit_range[0]) & (f <= fit_range[1])
    x, y = f[mask], y[mask]
    if len(x) < 3 * n_peaks + 1:
        raise FitError('Too few spectral points in the fit window')

    model = ConstantModel(prefix='bg_')
    params = model.make_params()
    params['bg_c'].set(value=float(np.median(y)))
    width = 3 * resolution
    for k, center in enumerate(guesses):
        peak = LorentzianModel(prefix=f'p{k}_')
        height = float(np.interp(center, x, y))
        params.update(peak.make_params())
        params[f'p{k}_center'].set(value=center, min=x[0], max=x[-1])
        params[f'p{k}_sigma'].set(value=width, min=resolution / 10)
        params[f'p{k}_amplitude'].set(value=height * np.pi * width, min=0)
        model = model + peak

    result = model.fit(y, params, x=x)
    if not result.success:
        raise FitError(f'Lorentzian fit failed: {result.message}')

    peaks = []
    for k in range(n_peaks):
        p = result.params
        err = p[f'p{k}_center'].stderr
        peaks.append(Peak(center=p[f'p{k}_center'].value, width=p[f'p{k}_sigma'].value,
                          amplitude=p[f'p{k}_amplitude'].value,
                          center_err=np.nan if err is None else float(err)))
    peaks.sort(key=lambda p: p.center)

    flags = []
    centers = np.array([p.center for p in peaks])
    if np.any(np.diff(centers) < resolution):
        flags.append('overlap: peak centers closer than one frequency bin')
        log.warning('Fitted peaks overlap within one frequency bin')
    rms = float(np.sqrt(np.mean(result.residual ** 2)))
    return PeakFit(peaks=peaks, baseline=result.params['bg_c'].value, rms=rms, flags=flags)


def time_domain_fit(trace, guess=None, pad_factor=FFT_PAD_FACTOR):
    '''
    Fit the two-frequency Ramsey model directly to the trace

    Starting values come from the Fourier peaks unless `guess` (a dict with
    any of f1, f2, t2, w1, w2, offset) is given. If the two frequencies are
    not resolved within the trace span the single-frequency model is fit
    and the result is flagged.
    '''
    span = trace.span
    if span <= 0:
        raise ParameterError('Trace span must be positive')
    spectrum = fft_magnitude(trace, pad_factor)
    # Secondary peaks weaker than a quarter of the strongest are treated as noise.
    prominence = 0.25 * np.max(spectrum.magnitude)
    i = util.find_prominent_peaks(spectrum.magnitude, 2, prominence)
    if len(i) == 0:
        raise FitError('No spectral peak found in the Ramsey trace')
    peaks = spectrum.frequency[i]
    amplitude = float(np.max(np.abs(trace.i_quadrature - np.mean(trace.i_quadrature))))

    single = len(peaks) < 2 or abs(peaks[1] - peaks[0]) < 1 / span
    try:
        start = fit_lorentzian_peaks(spectrum, 1 if single else 2, guesses=peaks[:1] if single else peaks)
        centers, widths = start.centers, start.widths
    except FitError:
        centers = peaks[:1] if single else peaks
        widths = np.full(len(centers), 1 / span)

    initial = {
        'f1': centers[0],
        'f2': centers[0] if single else centers[1],
        't2': 1 / (2 * np.pi * np.mean(widths)),
        'w1': amplitude if single else amplitude / 2,
        'w2': 0.0 if single else amplitude / 2,
        'offset': float(np.mean(trace.i_quadrature)),
    }
    if guess is not None:
        initial.update(guess)

    min_f = min(initial['f1'], initial['f2'])
    if min_f * span < 4:
        raise ParameterError('The trace must cover at least four periods of the lower frequency')

    model = Model(ramsey_signal, independent_vars=['tau'])
    params = model.make_params(**initial)
    params['t2'].set(min=0)
    params['f1'].set(min=0)
    params['f2'].set(min=0)
    flags = []
    if single:
        params['f2'].set(expr='f1')
        params['w2'].set(value=0.0, vary=False)
        flags.append('single-frequency: f1 and f2 not resolved within the trace span')
        log.warning('Ramsey frequencies unresolved; fitting a single frequency')

    result = model.fit(trace.i_quadrature, params, tau=trace.tau)
    if not result.success:
        raise FitError(f'Ramsey fit failed: {result.message}')
    p = result.params
    f1, f2, w1, w2 = p['f1'].value, p['f2'].value, p['w1'].value, p['w2'].value
    if f2 < f1:
        f1, f2, w1, w2 = f2, f1, w2, w1
    stderr = {k: (np.nan if v.stderr is None else float(v.stderr)) for k, v in p.items()}
    return RamseyFit(f1=f1, f2=f2, t2=p['t2'].value, w1=w1, w2=w2, offset=p['offset'].value,
                     rms=float(np.sqrt(np.mean(result.residual ** 2))), stderr=stderr,
                     flags=flags)


def pair_doublets(frequencies, splitting=None):
    '''
    Group sorted peak frequencies into parity doublets

    A second splitting (a two-level system coupled to the qubit) turns the
    two parity peaks into 2k peaks. When it is smaller than the parity
    splitting the doublets are the lower and upper halves paired index by
    index, e.g. (f_a, f_c), (f_b, f_d). When it is larger, neighbouring
    peaks form the doublets, (f_a, f_b), (f_c, f_d). Without an expected
    `splitting` the first arrangement is used; otherwise the arrangement
    whose pair spacings lie closest to `splitting` wins.
    '''
    f = np.sort(np.asarray(frequencies, dtype=float))
    if len(f) % 2:
        raise ParameterError('An even number of peaks is needed to form doublets')
    half = len(f) // 2
    halves = list(zip(f[:half], f[half:]))
    if splitting is None or half < 2:
        return halves
    adjacent = list(zip(f[0::2], f[1::2]))

    def mismatch(pairs):
        return sum(abs((hi - lo) - abs(splitting)) for lo, hi in pairs)

    if mismatch(adjacent) < mismatch(halves):
        return adjacent
    return halves


def ng_to_splitting(delta_f, n_g, level=3):
    '''
    Parity splitting f_odd - f_even of transition f_{level,level+1}
    '''
    return (-1) ** (level + 1) * delta_f * np.cos(2 * np.pi * np.asarray(n_g))


def splitting_to_ng(f_even, f_odd, delta_f, sigma=0.0, level=3, tolerance=0.05):
    '''
    Offset charge in [0, 1/2] from a parity-split pair of frequencies

    Parameters
    ----------
    f_even, f_odd : float
        Frequencies of the even and odd parity peaks.
    delta_f : float
        Charge dispersion of the transition (same units).
    sigma : float
        Uncertainty of the splitting, used for the error bar.
    level : int
        Lower level of the transition; sets the sign convention.
    tolerance : float
        Splittings up to (1 + tolerance) delta_f are clipped to the physical
        range; larger ones mean the dispersion is mis-calibrated.

    Returns
    -------
    n_g : float
    n_g_err : float
        Half-width of the interval of n_g consistent with the splitting
        +/- sigma; NaN when sigma is not positive.
    '''
    if not delta_f > 0:
        raise ParameterError('delta_f must be positive')
    ratio = (-1) ** (level + 1) * (f_odd - f_even) / delta_f
    if abs(ratio) > 1 + tolerance:
        raise ParameterError(f'Splitting {abs(f_odd - f_even):g} exceeds the charge dispersion '
                             f'{delta_f:g}; the dispersion is mis-calibrated')
    n_g = np.arccos(np.clip(ratio, -1, 1)) / (2 * np.pi)
    if sigma <= 0:
        return float(n_g), np.nan
    delta = sigma / delta_f
    lo = np.arccos(np.clip(ratio + delta, -1, 1)) / (2 * np.pi)
    hi = np.arccos(np.clip(ratio - delta, -1, 1)) / (2 * np.pi)
    return float(n_g), float(max(n_g - lo, hi - n_g))
