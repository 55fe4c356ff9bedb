'''
Offset-charge tracking from Ramsey spectrograms and its noise spectrum
'''
import logging
log = logging.getLogger(__name__)

import numpy as np
import pandas as pd
from scipy import optimize, signal, sparse, special, stats

from qcharge import util
from qcharge.config import (
    CHARGE_PSD_FACTOR, FFT_PAD_FACTOR, PEAK_SNR_MIN, PSD_DETREND, PSD_FIT_TOP, PSD_MIN_SAMPLES,
    PSD_NOMINAL_EXPONENT, PSD_OVERLAP, PSD_SEGMENTS, PSD_WINDOW
)
from qcharge.errors import FitError, ParameterError
from qcharge.model import (
    ChargeTrack, PeakTracks, PowerLawFit, PsdEstimate, RamseyTrace, Spectrogram, VdcFit
)
from qcharge.ramsey import fft_magnitude, fit_lorentzian_peaks, ramsey_signal, splitting_to_ng


################################################################################
# Peak tracking
################################################################################
def _fit_row(spectrum, n_peaks, snr_min):
    noise = util.robust_noise(spectrum.magnitude)
    i = util.find_prominent_peaks(spectrum.magnitude, n_peaks, snr_min * noise)
    if len(i) < n_peaks:
        return None
    try:
        return fit_lorentzian_peaks(spectrum, n_peaks, guesses=spectrum.frequency[i])
    except FitError:
        return None


def fit_spectrogram_rows(spectrogram, n_peaks=2, snr_min=PEAK_SNR_MIN, max_workers=None):
    '''
    Lorentzian fit of each spectrogram row; None where fewer than `n_peaks`
    peaks rise `snr_min` above the noise
    '''
    rows = [spectrogram.row(k) for k in range(len(spectrogram.times))]
    return util.parallel_map(lambda s: _fit_row(s, n_peaks, snr_min), rows, max_workers)


def track_peaks(spectrogram, n_peaks=2, snr_min=PEAK_SNR_MIN, max_workers=None):
    '''
    Follow `n_peaks` spectral peaks through a spectrogram

    Each row is fit independently. Peak identities are then linked row to
    row by nearest center, starting from the ascending order of the first
    resolved row. Rows without enough resolved peaks are marked as gaps and
    contiguous gaps are merged into epochs.
    '''
    if n_peaks < 1:
        raise ParameterError('At least one peak must be tracked')
    fits = fit_spectrogram_rows(spectrogram, n_peaks, snr_min, max_workers)
    n_rows = len(fits)
    centers = np.full((n_rows, n_peaks), np.nan)
    widths = np.full((n_rows, n_peaks), np.nan)
    previous = None
    for k, fit in enumerate(fits):
        if fit is None:
            continue
        c, w = fit.centers, fit.widths
        if previous is not None:
            order = util.link_nearest(previous, c)
            c, w = c[order], w[order]
        centers[k], widths[k] = c, w
        previous = c

    gap = np.array([f is None for f in fits])
    times = spectrogram.times
    dt = np.median(np.diff(times)) if n_rows > 1 else 0.0
    epochs = [(times[a], times[b - 1] + dt) for a, b in util.contiguous_runs(gap)]
    gap_epochs = util.smooth_epochs(epochs)
    if gap.any():
        log.warning('%d of %d spectrogram rows unresolved (%d gap epochs)',
                    gap.sum(), n_rows, len(gap_epochs))
    return PeakTracks(times=times, centers=centers, widths=widths, gap=gap,
                      gap_epochs=gap_epochs)


################################################################################
# Global V_DC fit
################################################################################
def vdc_model(vdc, f_mean, delta_f, v_period, n_g0):
    '''
    Upper and lower peak frequencies of a parity-split transition while the
    gate voltage is swept

    The splitting only depends on |cos(2 pi n_g)| so n_g0 is defined modulo
    1/2.
    '''
    half = 0.5 * delta_f * np.abs(np.cos(2 * np.pi * (n_g0 + np.asarray(vdc) / v_period)))
    return f_mean + half, f_mean - half


def sweep_blocks(vdc):
    '''
    Block index per row; a new block starts whenever V_DC steps down
    '''
    return np.concatenate(([0], np.cumsum(np.diff(vdc) < 0)))


def _grid_n0(vdc, splitting, blocks, n_blocks, delta_f, v_period, n_grid=100):
    # Best n_g0 per block on a grid, and the summed squared error.
    grid = np.arange(n_grid) * 0.5 / n_grid
    model = delta_f * np.abs(np.cos(2 * np.pi * (grid[:, np.newaxis] + vdc / v_period)))
    sse = (model - splitting) ** 2
    per_block = np.zeros((n_grid, n_blocks))
    for g in range(n_grid):
        per_block[g] = np.bincount(blocks, sse[g], n_blocks)
    best = per_block.argmin(axis=0)
    return grid[best], per_block[best, np.arange(n_blocks)].sum()


def _scan_period(vdc, splitting, blocks, n_blocks, delta_f):
    steps = np.diff(np.unique(vdc))
    lo = 4 * np.min(steps)
    hi = 2 * np.ptp(vdc)
    candidates = np.geomspace(lo, hi, 300)
    costs = [_grid_n0(vdc, splitting, blocks, n_blocks, delta_f, p, 50)[1] for p in candidates]
    return candidates[int(np.argmin(costs))]


def global_vdc_fit_frequencies(times, vdc, f_hi, f_lo, blocks=None, v_period=None):
    '''
    Joint fit of f_mean, delta_f, the gate period and one n_g0 per sweep block

    Parameters
    ----------
    times, vdc : arrays
        Acquisition time and gate voltage of each row.
    f_hi, f_lo : arrays
        Upper and lower peak frequency per row (Hz). Rows with NaN are
        ignored.
    blocks : array of int
        Block index per row. Defaults to `sweep_blocks(vdc)`.
    v_period : float
        Starting value for the gate period. Scanned if omitted.

    Returns
    -------
    fit : VdcFit
        `track` holds n_g0 per block on the continuous branch of period 1/2.
    '''
    times, vdc = np.asarray(times, float), np.asarray(vdc, float)
    f_hi, f_lo = np.asarray(f_hi, float), np.asarray(f_lo, float)
    blocks = sweep_blocks(vdc) if blocks is None else np.asarray(blocks, int)
    valid = np.isfinite(f_hi) & np.isfinite(f_lo)
    times, vdc, f_hi, f_lo, blocks = (a[valid] for a in (times, vdc, f_hi, f_lo, blocks))
    if len(np.unique(vdc)) < 5:
        raise ParameterError('V_DC sweep is under-sampled; at least five distinct voltages '
                             'are required')
    _, blocks = np.unique(blocks, return_inverse=True)
    n_blocks = blocks.max() + 1

    f_mean = float(np.median(0.5 * (f_hi + f_lo)))
    splitting = f_hi - f_lo
    delta_f = float(np.percentile(splitting, 99))
    if v_period is None:
        v_period = _scan_period(vdc, splitting, blocks, n_blocks, delta_f)
        log.info('Gate period scan: %.4g V', v_period)
    n0, _ = _grid_n0(vdc, splitting, blocks, n_blocks, delta_f, v_period)

    # Residuals in units of the dispersion keep the problem well scaled.
    scale = delta_f

    def residuals(x):
        hi, lo = vdc_model(vdc, x[0] * scale, x[1] * scale, x[2], x[3 + blocks])
        return np.concatenate((hi - f_hi, lo - f_lo)) / scale

    n_rows = len(vdc)
    sparsity = sparse.lil_matrix((2 * n_rows, 3 + n_blocks), dtype=int)
    sparsity[:, :3] = 1
    rows = np.arange(n_rows)
    sparsity[rows, 3 + blocks] = 1
    sparsity[n_rows + rows, 3 + blocks] = 1

    x0 = np.concatenate(([f_mean / scale, delta_f / scale, v_period], n0))
    result = optimize.least_squares(residuals, x0, method='trf', jac_sparsity=sparsity,
                                    x_scale='jac')
    if not result.success:
        raise FitError(f'V_DC fit failed: {result.message}')

    x = result.x
    f_mean, delta_f, v_period = x[0] * scale, abs(x[1] * scale), x[2]
    n0 = x[3:]
    if v_period < 0:
        v_period, n0 = -v_period, -n0
    n0 = np.mod(n0, 0.5)

    # Per-block uncertainty from the diagonal of the normal matrix.
    jac = result.jac.tocsc() if sparse.issparse(result.jac) else sparse.csc_matrix(result.jac)
    dof = max(len(result.fun) - len(x), 1)
    s2 = float(np.dot(result.fun, result.fun)) / dof
    curvature = np.asarray(jac.multiply(jac).sum(axis=0)).ravel()[3:]
    n0_err = np.sqrt(s2 / np.maximum(curvature, np.finfo(float).tiny))
    # An exact fit leaves no error estimate.
    n0_err[~(n0_err > 0)] = np.nan

    block_times = np.bincount(blocks, times) / np.bincount(blocks)
    track = unwrap_track(ChargeTrack(block_times, n0, n0_err))
    rms = float(np.sqrt(np.mean(result.fun ** 2))) * scale
    log.info('V_DC fit: f_mean=%.6g Hz, delta_f=%.4g Hz, period=%.4g V over %d blocks',
             f_mean, delta_f, v_period, n_blocks)
    return VdcFit(f_mean=f_mean, delta_f=delta_f, v_period=v_period, track=track, rms=rms,
                  n_rows=n_rows)


def global_vdc_fit(spectrogram, snr_min=PEAK_SNR_MIN, v_period=None, max_workers=None):
    '''
    Global V_DC fit of a spectrogram whose rows carry gate voltages
    '''
    if spectrogram.vdc is None:
        raise ParameterError('The spectrogram has no V_DC column')
    fits = fit_spectrogram_rows(spectrogram, 2, snr_min, max_workers)
    f_hi = np.array([np.nan if f is None else f.centers[1] for f in fits])
    f_lo = np.array([np.nan if f is None else f.centers[0] for f in fits])
    n_missing = int(np.isnan(f_hi).sum())
    if n_missing:
        log.info('Skipping %d rows without a resolved doublet', n_missing)
    blocks = sweep_blocks(spectrogram.vdc)
    return global_vdc_fit_frequencies(spectrogram.times, spectrogram.vdc, f_hi, f_lo,
                                      blocks, v_period)


def synth_vdc_spectrogram(n_g_blocks, vdc, f_mean, delta_f, v_period, t2=1.4e-6, tau=None,
                          noise_sigma=0.02, row_interval=23.0, pad_factor=FFT_PAD_FACTOR,
                          seed=0):
    '''
    Spectrogram of Ramsey traces recorded while V_DC is swept once per block

    Frequencies are Ramsey detunings (Hz). Block b has offset charge
    `n_g_blocks[b]`; both parity peaks have equal weight.
    '''
    tau = np.linspace(0, 10e-6, 501) if tau is None else np.asarray(tau, dtype=float)
    vdc = np.asarray(vdc, dtype=float)
    rng = util.make_rng(seed, 'spectrogram')
    magnitude, frequency, voltages = [], None, []
    for n_g0 in n_g_blocks:
        hi, lo = vdc_model(vdc, f_mean, delta_f, v_period, n_g0)
        for f1, f2, v in zip(lo, hi, vdc):
            y = ramsey_signal(tau, f1, f2, t2) + rng.normal(0, noise_sigma, len(tau))
            spectrum = fft_magnitude(RamseyTrace(tau, y), pad_factor)
            frequency = spectrum.frequency
            magnitude.append(spectrum.magnitude)
            voltages.append(v)
    times = np.arange(len(magnitude)) * row_interval
    return Spectrogram(times, frequency, np.array(magnitude), np.array(voltages), 'synthetic')


def splitting_only_track(times, f_hi, f_lo, delta_f, sigma=0.0, level=3):
    '''
    n_g0 per row from the doublet splitting alone

    Without the gate sweep the sign of cos(2 pi n_g0) is lost and n_g0 folds
    into [0, 1/4], so drifts through 1/4 are underestimated.
    '''
    n_g, n_g_err = [], []
    for hi, lo in zip(f_hi, f_lo):
        if not (np.isfinite(hi) and np.isfinite(lo)):
            n_g.append(np.nan)
            n_g_err.append(np.nan)
            continue
        # Sorted peaks only fix |cos|; treat the splitting as non-negative.
        sign = (-1) ** (level + 1)
        ng, err = splitting_to_ng(0.0, sign * abs(hi - lo), delta_f, sigma, level)
        n_g.append(ng)
        n_g_err.append(err)
    return ChargeTrack(times, n_g, n_g_err, flags=['folded into [0, 1/4]'])


def unwrap_track(track, period=0.5, jump_threshold=0.125):
    '''
    Place n_g0 on a continuous branch and record large steps as jumps

    Steps are reduced modulo `period` to the smallest move. Steps larger
    than `jump_threshold` are listed in `track.jumps`.
    '''
    n_g = track.n_g.copy()
    finite = np.isfinite(n_g)
    unwrapped = n_g.copy()
    if finite.any():
        unwrapped[finite] = np.unwrap(n_g[finite], period=period)
    steps = np.abs(np.diff(unwrapped[finite]))
    index = np.flatnonzero(finite)
    jumps = list(index[1:][steps > jump_threshold])
    if jumps:
        log.info('%d charge jumps larger than %g', len(jumps), jump_threshold)
    return ChargeTrack(track.times, unwrapped, track.n_g_err, jumps=jumps, flags=track.flags)


################################################################################
# Charge noise
################################################################################
def simulate_charge_drift(step_sigma, dt, n, seed=0, n_g0=0.0, ng_err=1e-3):
    '''
    Random-walk offset charge sampled every `dt` seconds

    Steps are Gaussian with standard deviation `step_sigma`. The charge PSD
    of q = 2e n_g0 is then 2 step_sigma^2 dt / sin^2(pi f dt), approximately
    2 step_sigma^2 / (pi^2 f^2 dt) at low frequency.
    '''
    if step_sigma < 0:
        raise ParameterError('step_sigma must be non-negative')
    if dt <= 0 or n < 2:
        raise ParameterError('Need a positive dt and at least two samples')
    rng = util.make_rng(seed, 'drift')
    steps = rng.normal(0, step_sigma, n - 1) if step_sigma > 0 else np.zeros(n - 1)
    n_g = n_g0 + np.concatenate(([0.0], np.cumsum(steps)))
    times = np.arange(n) * dt
    return ChargeTrack(times, n_g, np.full(n, ng_err))


def calibrate_step_sigma(s_ref, f_ref, dt):
    '''
    Random-walk step that yields a charge PSD of `s_ref` (e^2/Hz) at `f_ref`
    '''
    if s_ref <= 0 or f_ref <= 0 or dt <= 0:
        raise ParameterError('s_ref, f_ref and dt must be positive')
    if f_ref >= 0.5 / dt:
        raise ParameterError('f_ref must lie below the Nyquist frequency')
    return np.sin(np.pi * f_ref * dt) * np.sqrt(s_ref / (2 * dt))


def _uniform_runs(track):
    '''
    Contiguous finite runs of the track on a uniform time grid

    Returns the sample interval, the runs and whether resampling was needed.
    '''
    finite = np.isfinite(track.n_g)
    dt = float(np.median(np.diff(track.times)))
    runs, resampled = [], False
    for a, b in util.contiguous_runs(finite):
        t, x = track.times[a:b], track.n_g[a:b]
        if len(t) < 2:
            continue
        gaps = np.diff(t)
        # A pause longer than 1.5 samples splits the run.
        breaks = np.flatnonzero(gaps > 1.5 * dt) + 1
        for tt, xx in zip(np.split(t, breaks), np.split(x, breaks)):
            if len(tt) < 2:
                continue
            if util.uniform_spacing(tt, rtol=0.01) is None:
                resampled = True
                grid = tt[0] + dt * np.arange(int(np.floor((tt[-1] - tt[0]) / dt)) + 1)
                xx = np.interp(grid, tt, xx)
            runs.append(xx)
    return dt, runs, resampled


def psd(track, n_segments=PSD_SEGMENTS, overlap=PSD_OVERLAP, window=PSD_WINDOW,
        detrend=PSD_DETREND):
    '''
    Welch estimate of the one-sided charge PSD S_q (e^2/Hz) with q = 2e n_g0

    The segment length is chosen so the longest gap-free run splits into
    `n_segments` overlapping segments; the default single segment is a
    windowed periodogram of that run. Runs shorter than a segment are
    skipped; the periodograms of all other runs are averaged, weighted by
    their number of segments.
    '''
    if n_segments < 1 or not 0 <= overlap < 1:
        raise ParameterError('Need at least one segment and an overlap in [0, 1)')
    dt, runs, resampled = _uniform_runs(track)
    n_total = sum(len(r) for r in runs)
    if n_total < PSD_MIN_SAMPLES:
        raise ParameterError(f'{n_total} usable samples; at least {PSD_MIN_SAMPLES} are '
                             'needed for a spectrum')
    longest = max(len(r) for r in runs)
    nperseg = int(longest / (1 + (n_segments - 1) * (1 - overlap)))
    noverlap = int(nperseg * overlap) if n_segments > 1 else 0
    step = nperseg - noverlap

    total, weight, used = 0.0, 0, 0
    frequency = None
    for run in runs:
        if len(run) < nperseg:
            continue
        k = 1 + (len(run) - nperseg) // step
        frequency, density = signal.welch(run, fs=1 / dt, window=window, nperseg=nperseg,
                                          noverlap=noverlap, detrend=detrend,
                                          scaling='density')
        total = total + k * density
        weight += k
        used += 1

    flags = []
    if resampled:
        flags.append('resampled onto a uniform grid')
    if used > 1:
        flags.append(f'{used} gap-free runs averaged')
    if used < len(runs):
        flags.append(f'skipped {len(runs) - used} gap-free run(s) shorter than a segment')
        log.warning('%d of %d gap-free runs are shorter than a segment and were skipped',
                    len(runs) - used, len(runs))
    metadata = {
        'quantity': 'q = 2e n_g0',
        'units': 'e^2/Hz',
        'charge_factor': CHARGE_PSD_FACTOR,
        'window': window,
        'detrend': detrend,
        'nperseg': nperseg,
        'noverlap': noverlap,
        'n_segments': weight,
        'dt_s': dt,
        'f_min_hz': float(frequency[1]),
        'flags': flags,
    }
    return PsdEstimate(frequency=frequency, density=CHARGE_PSD_FACTOR * total / weight,
                       metadata=metadata)


def default_fit_range(estimate):
    df = estimate.frequency[1] - estimate.frequency[0]
    return 4 * df, PSD_FIT_TOP * estimate.frequency[-1]


def log_periodogram_bias(n_averages):
    '''
    Mean of ln(P / S) for a periodogram averaged over `n_averages` segments

    Each bin of a single periodogram is S times an exponential variate, whose
    logarithm averages to minus Euler's constant. Averaging K segments gives
    digamma(K) - ln(K). Overlapping segments are counted as independent.
    '''
    n = max(float(n_averages), 1.0)
    return float(special.digamma(n) - np.log(n))


def fit_power_law(estimate, f_ref=1e-4, fit_range=None,
                  fixed_alpha=PSD_NOMINAL_EXPONENT):
    '''
    Fit S(f) = S(f_ref) (f / f_ref)^alpha by linear regression in log-log

    The log-periodogram is corrected for its bias before the regression.
    `fixed_amplitude` is S(f_ref) with the exponent held at `fixed_alpha`,
    which uses every point of the fit range to set the amplitude. The fit
    range must span at least one decade. The result is flagged when alpha is
    not within 0.5 of -2 and when f_ref lies outside the fit range.
    '''
    if f_ref <= 0:
        raise ParameterError('f_ref must be positive')
    lo, hi = default_fit_range(estimate) if fit_range is None else fit_range
    if lo <= 0 or hi <= lo:
        raise ParameterError('Fit range must be positive and increasing')
    if np.log10(hi / lo) < 1 - 1e-9:
        raise ParameterError(f'Fit range {lo:g}-{hi:g} Hz spans less than one decade')
    mask = (estimate.frequency >= lo) & (estimate.frequency <= hi)
    f, s = estimate.frequency[mask], estimate.density[mask]
    if len(f) < 3:
        raise ParameterError('Fewer than three PSD points in the fit range')
    if np.any(s <= 0):
        raise ParameterError('PSD must be positive in the fit range')

    bias = log_periodogram_bias(estimate.metadata.get('n_segments', 1)) / np.log(10)
    x = np.log10(f / f_ref)
    y = np.log10(s) - bias
    result = stats.linregress(x, y)
    alpha = result.slope
    amplitude = 10 ** result.intercept
    fixed_amplitude = 10 ** np.mean(y - fixed_alpha * x)
    flags = []
    if abs(alpha + 2) > 0.5:
        flags.append('not 1/f^2')
        log.warning('Fitted exponent %.3f is not consistent with a random walk', alpha)
    if not lo <= f_ref <= hi:
        flags.append('f_ref extrapolated outside the fit range')
        log.info('f_ref = %g Hz lies outside the fit range %g-%g Hz', f_ref, lo, hi)
    return PowerLawFit(alpha=alpha, alpha_err=result.stderr, amplitude=amplitude,
                       fixed_alpha=fixed_alpha, fixed_amplitude=float(fixed_amplitude),
                       f_ref=f_ref, fit_range=[lo, hi], flags=flags)


def reference_lines(frequency, amplitudes, f_ref=1e-4, exponent=-2.0):
    '''
    Power-law reference lines S(f_ref) (f / f_ref)^exponent for plotting

    `amplitudes` maps a label to S(f_ref).
    '''
    frequency = np.asarray(frequency, dtype=float)
    data = {'f_hz': frequency}
    with np.errstate(divide='ignore'):
        for label, amplitude in amplitudes.items():
            data[label] = amplitude * (frequency / f_ref) ** exponent
    return pd.DataFrame(data)
