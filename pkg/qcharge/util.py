import logging
log = logging.getLogger(__name__)

from concurrent.futures import ThreadPoolExecutor
import zlib

import numpy as np
from scipy import optimize, signal


def make_rng(seed=0, label=''):
    '''
    Return an independent random generator for a named stream

    Streams with the same seed but different labels are statistically
    independent, and the same (seed, label) pair always yields the same
    stream.
    '''
    if isinstance(seed, np.random.Generator):
        return seed
    key = zlib.crc32(label.encode('utf-8'))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


def parallel_map(fn, items, max_workers=None):
    '''
    Map `fn` over `items` on a thread pool. Results keep input order.
    '''
    items = list(items)
    if max_workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers or None) as executor:
        return list(executor.map(fn, items))


def uniform_spacing(x, rtol=1e-6):
    '''
    Return the sample spacing of `x` if it is uniform to within `rtol`,
    otherwise None.
    '''
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return None
    dx = np.diff(x)
    step = np.median(dx)
    if step <= 0:
        return None
    if np.max(np.abs(dx - step)) > rtol * step:
        return None
    return (x[-1] - x[0]) / (len(x) - 1)


def is_strictly_increasing(x):
    return bool(np.all(np.diff(np.asarray(x, dtype=float)) > 0))


def argnearest(x, xa):
    return int(np.argmin(np.abs(np.asarray(xa) - x)))


def smooth_epochs(epochs):
    '''
    Merge overlapping or touching [start, end] intervals

    Used to collapse per-row gaps of a spectrogram into gap epochs. Input
    order does not matter; the merged intervals are sorted by start time.
    '''
    epochs = np.asarray(epochs, dtype=float).reshape(-1, 2)
    if len(epochs) == 0:
        return epochs
    epochs = epochs[np.argsort(epochs[:, 0], kind='stable')]
    smoothed = []
    lb, ub = epochs[0]
    for start, end in epochs[1:]:
        if start <= ub:
            ub = max(ub, end)
        else:
            smoothed.append((lb, ub))
            lb, ub = start, end
    smoothed.append((lb, ub))
    return np.array(smoothed)


def contiguous_runs(mask):
    '''
    Return [[start, stop), ...] index pairs of the True runs in `mask`
    '''
    mask = np.asarray(mask, dtype=bool)
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return edges.reshape(-1, 2)


def robust_noise(x):
    '''
    Standard deviation estimated from the median absolute deviation
    '''
    x = np.asarray(x, dtype=float)
    return 1.4826 * np.median(np.abs(x - np.median(x)))


def find_prominent_peaks(x, n_peaks, prominence=None):
    '''
    Indices of the `n_peaks` most prominent peaks of `x`, in ascending index
    order. Returns fewer indices if fewer peaks meet the prominence.
    '''
    p, props = signal.find_peaks(x, prominence=prominence)
    if prominence is None:
        prominences = signal.peak_prominences(x, p)[0]
    else:
        prominences = props['prominences']
    keep = np.argsort(prominences)[::-1][:n_peaks]
    return np.sort(p[keep])


def link_nearest(previous, current):
    '''
    Reorder `current` so each entry lines up with the nearest entry of
    `previous`. Both must have the same length.
    '''
    previous = np.asarray(previous, dtype=float)
    current = np.asarray(current, dtype=float)
    cost = np.abs(previous[:, np.newaxis] - current[np.newaxis])
    rows, cols = optimize.linear_sum_assignment(cost)
    order = np.empty(len(previous), dtype=int)
    order[rows] = cols
    return order


def jsonable(value):
    '''
    Convert numpy scalars and arrays (possibly nested in dicts and lists) to
    plain Python objects.
    '''
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
