import numpy as np
from scipy import constants


# Reduced flux quantum (hbar / 2e) and its square over Planck's constant. The
# inductive energy in frequency units is E_L / h = PHI0_SQ_OVER_H / L.
PHI0 = constants.hbar / (2 * constants.e)
PHI0_SQ_OVER_H = PHI0 ** 2 / constants.h

GHZ = 1e9
MHZ = 1e6
KHZ = 1e3

SCHEMA_TAG = 'qcharge/1'

PARITIES = ('even', 'odd')


# Solver defaults. Energies are in GHz throughout the numerical core.
DEFAULT_CHARGE_CUTOFF = 40
DEFAULT_OSC_DIM = 400
DEFAULT_CONV_TOL = 1e-9
DEFAULT_N_LEVELS = 6
MAX_DOUBLINGS = 2

# Below this inductive energy the oscillator basis is no longer trusted.
SHUNT_EL_FLOOR = 1e-3

# Default E_L grid (GHz) for the inductance sweep.
EL_GRID = (1e-3, 2.0, 60)

# Coarse grid used by the reproduction run.
REPRO_EL_GRID = (5e-3, 0.12, 10)


# Published parameter sets. Energies in GHz, times in seconds, frequencies in
# Hz unless the key says otherwise.
PARAMETER_SETS = {
    'device': {
        'e_c': 0.199,
        'e_j': [16.5],
    },
    'run17_h5': {
        'e_c': 0.2165,
        'e_j': [15.6, -0.0116, -0.122, 0.0676, -0.0191],
    },
    'run17_h3': {
        'e_c': 0.2171,
        'e_j': [15.9, -0.227, -0.0169],
    },
}


RAMSEY_REFERENCE = {
    'f1': 4.0e6,
    'f2': 6.0e6,
    't2': 1.4e-6,
    'drive': 4.2084e9,
}


PARITY_REFERENCE = {
    'run17': {
        'gamma_ps': 8.0e3,
        'mean_interval': 12e-6,
        'imbalance': 0.51,
        'beta': 0.89,
        'markov_gamma': 7.5e3,
    },
    'run24': {
        'gamma_ps': 2.5e3,
        'mean_interval': 3e-6,
        'imbalance': 0.54,
        'beta': 1.0,
        'markov_gamma': 2.5e3,
    },
}


DRIFT_REFERENCE = {
    'dt': 23.0,
    'duration': 18 * 3600.0,
    's_ref': 0.8,
    'f_ref': 1e-4,
    'f_mean': 4.2034e9,
    'delta_f': 2.0e6,
    'v_period': 12.0,
}


# Fourier analysis
FFT_PAD_FACTOR = 8
PEAK_SNR_MIN = 8.0

# Welch estimator. One segment puts the lowest frequency at 1/T.
PSD_SEGMENTS = 1
PSD_OVERLAP = 0.5
PSD_WINDOW = 'hann'
PSD_DETREND = 'linear'
PSD_MIN_SAMPLES = 256
# Power-law fits stop at this fraction of the Nyquist frequency.
PSD_FIT_TOP = 0.25
PSD_NOMINAL_EXPONENT = -2.0
# q = 2e n_g, so the charge PSD in e^2/Hz is four times the n_g PSD.
CHARGE_PSD_FACTOR = 4.0

# Autocorrelation estimator
AUTOCORR_MIN_SAMPLES = 10_000


# CSV schemas. The spectrogram has a variable number of frequency columns
# named f_hz:<value>; only its fixed leading columns are listed here.
CSV_SCHEMAS = {
    'ramsey': ('tau_s', 'I'),
    'telegraph': ('t_s', 'I'),
    'charge': ('t_s', 'ng', 'ng_err'),
    'transitions': ('i', 'j', 'f_ghz', 'parity', 'n_g'),
    'band': ('i', 'j', 'f_min_ghz', 'f_max_ghz'),
    'spectrogram': ('t_s',),
}
SPECTROGRAM_VDC_COLUMN = 'vdc_v'
SPECTROGRAM_FREQ_PREFIX = 'f_hz:'


def _floats(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(',', ' ').split()]
    return [float(v) for v in np.atleast_1d(value)]


# Keys accepted in the [qcharge] section of a run configuration. Physical
# quantities carry their unit in the key name; the remaining keys are
# dimensionless or counts. Each entry maps to (parser, default).
CONFIG_KEYS = {
    # Circuit
    'e_c_ghz': (float, 0.199),
    'e_j_ghz': (_floats, [16.5]),
    'e_l_ghz': (float, 0.0),
    'l_henry': (float, 0.0),
    'n_g': (float, 0.0),
    'parity': (str, 'even'),
    'phi_ext_rad': (float, 0.0),

    # Solver
    'charge_cutoff': (int, DEFAULT_CHARGE_CUTOFF),
    'osc_dim': (int, DEFAULT_OSC_DIM),
    'conv_tol': (float, DEFAULT_CONV_TOL),
    'n_levels': (int, DEFAULT_N_LEVELS),
    'level': (int, 3),

    # Fitting and sweeps
    'order': (int, 5),
    'input_path': (str, ''),
    'band_path': (str, ''),
    'e_l_min_ghz': (float, EL_GRID[0]),
    'e_l_max_ghz': (float, EL_GRID[1]),
    'e_l_points': (int, EL_GRID[2]),
    'f01_ghz': (float, 5.125),
    'shift_ghz': (float, 0.005),
    'max_workers': (int, 0),

    # Ramsey
    'f1_hz': (float, RAMSEY_REFERENCE['f1']),
    'f2_hz': (float, RAMSEY_REFERENCE['f2']),
    't2_s': (float, RAMSEY_REFERENCE['t2']),
    'w1': (float, 0.5),
    'w2': (float, 0.5),
    'tau_max_s': (float, 10e-6),
    'n_tau': (int, 501),
    'noise_sigma': (float, 0.02),
    'pad_factor': (int, FFT_PAD_FACTOR),
    'drive_hz': (float, RAMSEY_REFERENCE['drive']),

    # Parity
    'gamma_ps_hz': (float, PARITY_REFERENCE['run17']['gamma_ps']),
    'imbalance': (float, 0.5),
    'i_even': (float, 1.0),
    'i_odd': (float, -1.0),
    'interval_s': (float, PARITY_REFERENCE['run17']['mean_interval']),
    'n_samples': (int, 1_000_000),
    'jitter': (float, 1.0),
    'max_lag_s': (float, 0.0),

    # Charge drift
    'step_sigma': (float, 9.53e-4),
    'dt_s': (float, DRIFT_REFERENCE['dt']),
    'duration_s': (float, DRIFT_REFERENCE['duration']),
    'ng_err': (float, 1e-3),
    'f_ref_hz': (float, DRIFT_REFERENCE['f_ref']),
    'fit_min_hz': (float, 0.0),
    'fit_max_hz': (float, 0.0),
    'delta_f_hz': (float, DRIFT_REFERENCE['delta_f']),
    'v_period_v': (float, 0.0),
    'snr_min': (float, PEAK_SNR_MIN),

    # Run
    'seed': (int, 0),
    'output_dir': (str, ''),
}


OUTPUT_DIR_ENV = 'QCHARGE_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'qcharge-out'
LOCK_FILENAME = '.qcharge.lock'


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
