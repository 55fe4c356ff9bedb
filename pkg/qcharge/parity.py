'''
Quasiparticle parity switching from single-shot telegraph traces
'''
import logging
log = logging.getLogger(__name__)

from lmfit import Model
import numpy as np
from skimage.filters import threshold_otsu

from qcharge import util
from qcharge.config import AUTOCORR_MIN_SAMPLES
from qcharge.errors import FitError, ParameterError
from qcharge.model import Autocorrelation, AutocorrFit, TelegraphTrace


def switching_rates(gamma_ps, imbalance=0.5):
    '''
    Transition rates (even -> odd, odd -> even) for a switching rate and the
    stationary even-parity probability `imbalance`

    The rates are 2 gamma (1 - p) and 2 gamma p so that the parity
    autocorrelation decays as exp(-2 gamma t) for any imbalance.
    '''
    return 2 * gamma_ps * (1 - imbalance), 2 * gamma_ps * imbalance


def _switch_times(rate_eo, rate_oe, even, duration, rng):
    # Alternating exponential holding times, starting from the initial state.
    rates = (rate_eo, rate_oe) if even else (rate_oe, rate_eo)
    times = []
    elapsed = 0.0
    n_chunk = int(duration * (rate_eo + rate_oe) / 2) + 64
    while elapsed <= duration:
        scale = np.empty(n_chunk)
        scale[0::2] = 1 / rates[0]
        scale[1::2] = 1 / rates[1]
        chunk = elapsed + np.cumsum(rng.exponential(scale))
        times.append(chunk)
        elapsed = chunk[-1]
        # Keep the alternation aligned across chunks.
        if n_chunk % 2:
            rates = rates[::-1]
    return np.concatenate(times)


def simulate_telegraph(gamma_ps, imbalance=0.5, levels=(1.0, -1.0), mean_interval=12e-6,
                       n_samples=1_000_000, jitter=1.0, noise_sigma=0.0, seed=0):
    '''
    Sample a two-state Markov parity process at jittered times

    Parameters
    ----------
    gamma_ps : float
        Parity switching rate (Hz). The autocorrelation decays as
        exp(-2 gamma_ps t).
    imbalance : float
        Stationary probability of even parity.
    levels : (float, float)
        Readout values for even and odd parity.
    mean_interval : float
        Mean time between samples (s).
    n_samples : int
    jitter : float
        Fraction of each interval drawn from an exponential distribution; 0
        gives regular sampling.
    noise_sigma : float
        Gaussian readout noise added to each sample.
    seed : int or Generator

    Returns
    -------
    trace : TelegraphTrace
        `truth` holds the simulated parity (True for even).
    '''
    if gamma_ps < 0:
        raise ParameterError('gamma_ps must be non-negative')
    if not 0 < imbalance < 1:
        raise ParameterError('imbalance must lie strictly between 0 and 1')
    if not 0 <= jitter <= 1:
        raise ParameterError('jitter must lie in [0, 1]')
    if mean_interval <= 0 or n_samples < 2:
        raise ParameterError('Need a positive interval and at least two samples')
    if gamma_ps * mean_interval >= 0.5:
        raise ParameterError(
            f'Sampling interval {mean_interval:g} s is too long for gamma_ps={gamma_ps:g} Hz; '
            'switching would be aliased')

    rng = util.make_rng(seed, 'telegraph')
    intervals = mean_interval * ((1 - jitter) + jitter * rng.exponential(1.0, n_samples - 1))
    t = np.concatenate(([0.0], np.cumsum(intervals)))
    even0 = rng.random() < imbalance

    if gamma_ps == 0:
        even = np.full(n_samples, even0)
    else:
        rate_eo, rate_oe = switching_rates(gamma_ps, imbalance)
        switches = _switch_times(rate_eo, rate_oe, even0, t[-1], rng)
        n_switches = np.searchsorted(switches, t, side='right')
        even = (n_switches % 2 == 0) == even0

    values = np.where(even, levels[0], levels[1]).astype(float)
    if noise_sigma > 0:
        values += rng.normal(0, noise_sigma, n_samples)
    log.info('Simulated %d telegraph samples over %.3g s', n_samples, t[-1])
    return TelegraphTrace(t, values, truth=even)


def autocorrelation(trace, max_lag, bin_width=None):
    '''
    Lag-binned autocorrelation <I(t) I(t + lag)> of a telegraph trace

    Products x(t_a) x(t_b) of all sample pairs with 0 < t_b - t_a < max_lag
    are averaged in bins of `bin_width` (default: the mean sampling
    interval). Products are raw, so the squared mean of the trace appears as a
    constant offset. Self products are excluded so readout noise does not inflate
    the shortest lag. Each bin reports the mean lag of its pairs.
    '''
    if max_lag <= 0:
        raise ParameterError('max_lag must be positive')
    n = len(trace.t)
    width = trace.mean_interval if bin_width is None else bin_width
    if width <= 0:
        raise ParameterError('bin_width must be positive')

    flags = []
    if n < AUTOCORR_MIN_SAMPLES:
        log.warning('Only %d samples; the autocorrelation will be noisy', n)
        flags.append(f'fewer than {AUTOCORR_MIN_SAMPLES} samples')
    if max_lag > trace.span / 10:
        log.warning('max_lag exceeds a tenth of the trace span')
        flags.append('max_lag exceeds a tenth of the trace span')

    t = trace.t
    x = trace.values
    n_bins = int(np.ceil(max_lag / width))
    total = np.zeros(n_bins)
    total_sq = np.zeros(n_bins)
    total_lag = np.zeros(n_bins)
    counts = np.zeros(n_bins)
    for k in range(1, n):
        lag = t[k:] - t[:-k]
        mask = lag < max_lag
        if not mask.any():
            break
        lag = lag[mask]
        product = (x[k:] * x[:-k])[mask]
        b = np.minimum((lag / width).astype(int), n_bins - 1)
        total += np.bincount(b, product, n_bins)
        total_sq += np.bincount(b, product ** 2, n_bins)
        total_lag += np.bincount(b, lag, n_bins)
        counts += np.bincount(b, minlength=n_bins)

    valid = counts > 1
    counts = counts[valid]
    mean = total[valid] / counts
    variance = np.clip(total_sq[valid] / counts - mean ** 2, 0, None)
    return Autocorrelation(lag=total_lag[valid] / counts, c=mean,
                           stderr=np.sqrt(variance / counts), counts=counts, flags=flags)


def stretched_exponential(t, amplitude, gamma, beta, offset):
    return amplitude * np.exp(-(2 * t * gamma) ** beta) + offset


def _decay_guess(lag, c):
    tail = c[int(0.8 * len(c)):]
    offset = float(np.mean(tail))
    amplitude = float(c[0] - offset)
    noise = float(np.std(tail))
    scale = max(1.0, float(np.max(np.abs(c))))
    if not abs(amplitude) > max(3 * noise, 1e-12 * scale):
        raise FitError('Autocorrelation does not decay')
    below = np.flatnonzero((c - offset) / amplitude < np.exp(-1))
    t_e = lag[below[0]] if len(below) else lag[-1]
    return amplitude, 1 / (2 * max(t_e, lag[0], np.finfo(float).tiny)), offset


def fit_stretched_exponential(lag, c, stderr=None):
    '''
    Fit A exp(-(2 t gamma)^beta) + B to an autocorrelation

    Also fits the Markov model (beta fixed to 1); its rate is returned as
    `markov_gamma`.

    Raises
    ------
    FitError
        If the input does not decay or either fit fails.
    '''
    lag = np.asarray(lag, dtype=float)
    c = np.asarray(c, dtype=float)
    if len(lag) < 5 or not (np.all(np.isfinite(c)) and np.all(np.isfinite(lag))):
        raise FitError('At least five finite autocorrelation points are required')
    amplitude, gamma, offset = _decay_guess(lag, c)
    weights = None
    if stderr is not None:
        stderr = np.asarray(stderr, dtype=float)
        positive = stderr[stderr > 0]
        floor = np.min(positive) if len(positive) else 1.0
        weights = 1 / np.maximum(stderr, floor)

    model = Model(stretched_exponential, independent_vars=['t'])
    params = model.make_params(amplitude=amplitude, gamma=gamma, beta=1.0, offset=offset)
    params['gamma'].set(min=0)
    params['beta'].set(min=0.05, max=1.5)

    result = model.fit(c, params, t=lag, weights=weights)
    if not result.success:
        raise FitError(f'Stretched exponential fit failed: {result.message}')

    params['beta'].set(value=1.0, vary=False)
    markov = model.fit(c, params, t=lag, weights=weights)
    if not markov.success:
        raise FitError(f'Exponential fit failed: {markov.message}')

    p = result.params
    stderr = {k: (np.nan if v.stderr is None else float(v.stderr)) for k, v in p.items()}
    residual = c - result.best_fit
    return AutocorrFit(gamma_ps=p['gamma'].value, beta=p['beta'].value,
                       amplitude=p['amplitude'].value, offset=p['offset'].value,
                       markov_gamma=markov.params['gamma'].value, stderr=stderr,
                       rms=float(np.sqrt(np.mean(residual ** 2))))


def classify_parity(trace, levels=None):
    '''
    Boolean even-parity mask for each sample

    With known readout `levels` (even, odd) samples are assigned to the
    nearer level. Otherwise an Otsu threshold splits the histogram and the
    upper population is taken as even.
    '''
    if levels is not None:
        i_even, i_odd = levels
        threshold = 0.5 * (i_even + i_odd)
        return (trace.values > threshold) == (i_even > i_odd)
    threshold = threshold_otsu(trace.values)
    return trace.values > threshold


def telegraph_imbalance(trace, levels=None, gamma_ps=None):
    '''
    Fractions of even and odd parity and the uncertainty of the even fraction

    The uncertainty accounts for correlations between samples when the
    switching rate is known; otherwise samples are treated as independent.
    '''
    even = classify_parity(trace, levels)
    p = float(np.mean(even))
    n = len(even)
    if gamma_ps is None or gamma_ps <= 0:
        err = np.sqrt(p * (1 - p) / n)
    else:
        rho = np.exp(-2 * gamma_ps * trace.mean_interval)
        err = np.sqrt(p * (1 - p) / n * (1 + rho) / (1 - rho))
    return p, 1 - p, float(err)


def estimate_switching_rate(trace, levels=None):
    '''
    Rough switching rate from the number of level changes
    '''
    even = classify_parity(trace, levels)
    p = np.mean(even)
    flips = np.count_nonzero(np.diff(even.astype(int)))
    if flips == 0 or p in (0, 1):
        raise FitError('The trace never switches parity')
    return flips / (4 * p * (1 - p) * trace.span)


def analyze_parity(trace, max_lag=None, levels=None, bin_width=None):
    '''
    Switching rate, stretch exponent and imbalance of a telegraph trace

    If `max_lag` is not given it is set to five decay times of the
    autocorrelation, estimated from the number of parity flips.
    '''
    flags = []
    if levels is None:
        flags.append('levels estimated with an Otsu threshold')
    if max_lag is None:
        max_lag = 2.5 / estimate_switching_rate(trace, levels)
    acf = autocorrelation(trace, max_lag, bin_width)
    fit = fit_stretched_exponential(acf.lag, acf.c, acf.stderr)
    p_even, p_odd, err = telegraph_imbalance(trace, levels, fit.gamma_ps)
    fit.imbalance = [p_even, p_odd]
    fit.imbalance_err = err
    fit.flags = flags + list(acf.flags)
    log.info('Parity switching: gamma=%.4g Hz beta=%.3f (Markov %.4g Hz), even fraction %.4f',
             fit.gamma_ps, fit.beta, fit.markov_gamma, p_even)
    return fit
