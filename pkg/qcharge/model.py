import logging
log = logging.getLogger(__name__)

from atom.api import Atom, Bool, Dict, Enum, Float, Int, List, Str, Typed, Value
import numpy as np
import pandas as pd

from qcharge import util
from qcharge.config import (
    DEFAULT_CHARGE_CUTOFF, DEFAULT_CONV_TOL, DEFAULT_N_LEVELS, DEFAULT_OSC_DIM,
    MAX_DOUBLINGS, PARITIES, SCHEMA_TAG
)
from qcharge.errors import ParameterError


def _array(x):
    return np.asarray(x, dtype=float)


class CircuitParams(Atom):
    '''
    Parameters of the transmon Hamiltonian. Energies are E/h in GHz.

    `e_j` lists the Josephson harmonics [E_J1, ..., E_JN]; only E_J1 must be
    non-negative. `e_l` is the inductive shunt energy (0 for the unshunted
    model) and `phi_ext` the external flux phase in radians.
    '''
    e_c = Float()
    e_j = List(Float())
    e_l = Float(0.0)
    n_g = Float(0.0)
    parity = Enum(*PARITIES)
    phi_ext = Float(0.0)

    def __init__(self, e_c, e_j, e_l=0.0, n_g=0.0, parity='even', phi_ext=0.0):
        e_j = [float(e) for e in np.atleast_1d(e_j)]
        super().__init__(e_c=float(e_c), e_j=e_j, e_l=float(e_l),
                         n_g=float(n_g), parity=parity, phi_ext=float(phi_ext))
        self.validate()

    def validate(self):
        if not np.isfinite(self.e_c) or self.e_c <= 0:
            raise ParameterError(f'e_c must be positive, got {self.e_c}')
        if len(self.e_j) == 0:
            raise ParameterError('At least one Josephson harmonic is required')
        if not np.all(np.isfinite(self.e_j)):
            raise ParameterError('Josephson harmonics must be finite')
        if self.e_j[0] < 0:
            raise ParameterError(f'e_j[0] must be non-negative, got {self.e_j[0]}')
        if not np.isfinite(self.e_l) or self.e_l < 0:
            raise ParameterError(f'e_l must be non-negative, got {self.e_l}')
        if not np.isfinite(self.n_g) or not np.isfinite(self.phi_ext):
            raise ParameterError('n_g and phi_ext must be finite')

    @property
    def order(self):
        return len(self.e_j)

    @property
    def offset(self):
        '''
        Charge offset contributed by the quasiparticle parity
        '''
        return 0.5 if self.parity == 'odd' else 0.0

    def replace(self, **changes):
        state = self.get_state()
        state.update(changes)
        return CircuitParams(**state)

    def get_state(self):
        return {
            'e_c': self.e_c,
            'e_j': list(self.e_j),
            'e_l': self.e_l,
            'n_g': self.n_g,
            'parity': self.parity,
            'phi_ext': self.phi_ext,
        }

    @classmethod
    def from_state(cls, state):
        return cls(**state)

    def __repr__(self):
        e_j = ', '.join(f'{e:.6g}' for e in self.e_j)
        return f'<CircuitParams e_c={self.e_c:.6g} e_j=[{e_j}] e_l={self.e_l:.6g} ' \
            f'n_g={self.n_g:.6g} {self.parity}>'


class SolverConfig(Atom):

    charge_cutoff = Int(DEFAULT_CHARGE_CUTOFF)
    osc_dim = Int(DEFAULT_OSC_DIM)
    conv_tol = Float(DEFAULT_CONV_TOL)
    n_levels = Int(DEFAULT_N_LEVELS)
    max_doublings = Int(MAX_DOUBLINGS)

    def validate(self, order=1):
        if self.charge_cutoff < 5 + order:
            raise ParameterError(
                f'charge_cutoff ({self.charge_cutoff}) must be at least 5 + N ({5 + order})')
        if self.osc_dim < 50:
            raise ParameterError(f'osc_dim must be at least 50, got {self.osc_dim}')
        if self.conv_tol <= 0:
            raise ParameterError('conv_tol must be positive')
        if self.n_levels < 2:
            raise ParameterError('At least two levels are needed for a transition')
        if self.n_levels > 2 * self.charge_cutoff + 1:
            raise ParameterError('n_levels exceeds the charge basis size')

    def replace(self, **changes):
        state = self.get_state()
        state.update(changes)
        return SolverConfig(**state)

    def get_state(self):
        return {
            'charge_cutoff': self.charge_cutoff,
            'osc_dim': self.osc_dim,
            'conv_tol': self.conv_tol,
            'n_levels': self.n_levels,
            'max_doublings': self.max_doublings,
        }


class Transition(Atom):

    i = Int()
    j = Int()
    frequency = Float()
    parity = Enum(*PARITIES)
    n_g = Float(0.0)

    def __init__(self, i, j, frequency, parity='even', n_g=0.0):
        super().__init__(i=int(i), j=int(j), frequency=float(frequency),
                         parity=parity, n_g=float(n_g))

    @property
    def key(self):
        return (self.i, self.j, self.parity, round(self.n_g, 12))

    @property
    def label(self):
        return f'f{self.i}{self.j} {self.parity} n_g={self.n_g:g}'

    def get_state(self):
        return {
            'i': self.i,
            'j': self.j,
            'f_ghz': self.frequency,
            'parity': self.parity,
            'n_g': self.n_g,
        }


class TransitionSet(Atom):
    '''
    Labelled transition frequencies (GHz), either measured or predicted.
    '''
    entries = List(Typed(Transition))
    provenance = Enum('measured', 'predicted')
    notes = List(Str())

    def __init__(self, entries, provenance='measured', notes=None):
        super().__init__(entries=list(entries), provenance=provenance,
                         notes=[] if notes is None else list(notes))
        self.validate()

    def validate(self):
        seen = set()
        for t in self.entries:
            if t.j <= t.i or t.i < 0:
                raise ParameterError(f'Transition {t.label} must have 0 <= i < j')
            if not np.isfinite(t.frequency):
                raise ParameterError(f'Transition {t.label} has a non-finite frequency')
            if self.provenance == 'measured' and t.frequency <= 0:
                raise ParameterError(f'Measured transition {t.label} must be positive')
            if t.frequency < 0:
                raise ParameterError(f'Transition {t.label} is negative')
            if t.key in seen:
                raise ParameterError(f'Duplicate transition {t.label}')
            seen.add(t.key)

    def __iter__(self):
        yield from self.entries

    def __len__(self):
        return len(self.entries)

    def frequencies(self):
        return np.array([t.frequency for t in self.entries])

    def lookup(self, i, j, parity='even', n_g=0.0):
        key = (i, j, parity, round(n_g, 12))
        for t in self.entries:
            if t.key == key:
                return t.frequency
        raise KeyError(key)

    def select(self, parity=None, n_g=None):
        entries = [t for t in self.entries
                   if (parity is None or t.parity == parity)
                   and (n_g is None or round(t.n_g, 12) == round(n_g, 12))]
        return TransitionSet(entries, self.provenance, self.notes)

    def groups(self):
        '''
        Entries grouped by (parity, n_g) in first-seen order
        '''
        groups = {}
        for t in self.entries:
            groups.setdefault((t.parity, round(t.n_g, 12)), []).append(t)
        return groups

    def to_frame(self):
        return pd.DataFrame([t.get_state() for t in self.entries],
                            columns=['i', 'j', 'f_ghz', 'parity', 'n_g'])

    @classmethod
    def from_frame(cls, frame, provenance='measured'):
        entries = [Transition(r.i, r.j, r.f_ghz, r.parity, r.n_g) for r in frame.itertuples()]
        return cls(entries, provenance)

    def get_state(self):
        return {
            'provenance': self.provenance,
            'notes': list(self.notes),
            'entries': [t.get_state() for t in self.entries],
        }

    @classmethod
    def from_state(cls, state):
        entries = [Transition(e['i'], e['j'], e['f_ghz'], e['parity'], e['n_g'])
                   for e in state['entries']]
        return cls(entries, state['provenance'], state.get('notes'))


class PerturbativeTransition(Atom):

    frequency = Float()
    flags = List(Str())


class FitReport(Atom):
    '''
    Result of a Hamiltonian fit. Residuals (predicted - measured) are in MHz.
    '''
    model = Str()
    params = Typed(CircuitParams)
    guess = Typed(CircuitParams)
    residuals = List(Float())
    labels = List(Str())
    stderr = List(Float())
    rms = Float()
    iterations = Int()
    n_evaluations = Int()
    converged = Bool()
    message = Str()

    def __init__(self, residuals, **kwargs):
        residuals = [float(r) for r in residuals]
        rms = float(np.sqrt(np.mean(np.square(residuals)))) if residuals else 0.0
        super().__init__(residuals=residuals, rms=rms, **kwargs)

    def get_state(self):
        return {
            'model': self.model,
            'params': self.params.get_state(),
            'guess': self.guess.get_state() if self.guess is not None else None,
            'residuals_mhz': list(self.residuals),
            'labels': list(self.labels),
            'stderr_ghz': list(self.stderr),
            'rms_mhz': self.rms,
            'iterations': self.iterations,
            'n_evaluations': self.n_evaluations,
            'converged': self.converged,
            'message': self.message,
        }

    @classmethod
    def from_state(cls, state):
        guess = state.get('guess')
        return cls(state['residuals_mhz'], model=state['model'],
                   params=CircuitParams.from_state(state['params']),
                   guess=None if guess is None else CircuitParams.from_state(guess),
                   labels=state['labels'], stderr=state['stderr_ghz'],
                   iterations=state['iterations'], n_evaluations=state['n_evaluations'],
                   converged=state['converged'], message=state['message'])


class ElSweepResult(Atom):
    '''
    Refits of a measured transition set along a grid of inductive energies.
    `fits` and `predictions` hold None where the fit at that point failed; the
    reason is kept in `failures`.
    '''
    e_l = List(Float())
    fits = List(Value())
    predictions = List(Value())
    failures = Dict(Int(), Str())

    def validate(self):
        if not util.is_strictly_increasing(self.e_l):
            raise ParameterError('E_L grid must be strictly increasing')

    def rms(self):
        return np.array([np.nan if f is None else f.rms for f in self.fits])

    def get_state(self):
        return {
            'e_l_ghz': list(self.e_l),
            'fits': [None if f is None else f.get_state() for f in self.fits],
            'predictions': [None if p is None else p.get_state() for p in self.predictions],
            'failures': {str(k): v for k, v in self.failures.items()},
        }


class FrequencyBand(Atom):
    '''
    Allowed [min, max] frequency (GHz) per (i, j) transition
    '''
    bands = Dict()

    def __init__(self, bands):
        bands = {(int(i), int(j)): (float(lo), float(hi)) for (i, j), (lo, hi) in bands.items()}
        for key, (lo, hi) in bands.items():
            if lo > hi:
                raise ParameterError(f'Band for f{key[0]}{key[1]} has min > max')
        super().__init__(bands=bands)

    def contains(self, i, j, frequency):
        lo, hi = self.bands[(i, j)]
        return lo <= frequency <= hi

    def to_frame(self):
        rows = [(i, j, lo, hi) for (i, j), (lo, hi) in sorted(self.bands.items())]
        return pd.DataFrame(rows, columns=['i', 'j', 'f_min_ghz', 'f_max_ghz'])

    @classmethod
    def from_frame(cls, frame):
        return cls({(r.i, r.j): (r.f_min_ghz, r.f_max_ghz) for r in frame.itertuples()})

    def get_state(self):
        return self.to_frame().to_dict(orient='records')


class InductanceBound(Atom):

    e_l_max = Float()
    l_min = Float()
    unbounded_below_grid = Bool()
    inside = List(Float())

    def get_state(self):
        return {
            'e_l_max_ghz': self.e_l_max,
            'l_min_h': self.l_min,
            'unbounded_below_grid': self.unbounded_below_grid,
            'e_l_inside_band_ghz': list(self.inside),
        }


class RamseyTrace(Atom):

    tau = Typed(np.ndarray)
    i_quadrature = Typed(np.ndarray)
    repetitions = Int(1)

    def __init__(self, tau, i_quadrature, repetitions=1):
        tau, i_quadrature = _array(tau), _array(i_quadrature)
        if tau.shape != i_quadrature.shape or tau.ndim != 1:
            raise ParameterError('tau and I must be 1D arrays of equal length')
        if len(tau) == 0:
            raise ParameterError('Ramsey trace is empty')
        if not util.is_strictly_increasing(tau):
            raise ParameterError('Ramsey delays must be strictly increasing')
        super().__init__(tau=tau, i_quadrature=i_quadrature, repetitions=repetitions)

    @property
    def span(self):
        return self.tau[-1] - self.tau[0]

    def to_frame(self):
        return pd.DataFrame({'tau_s': self.tau, 'I': self.i_quadrature})


class SpectrumEstimate(Atom):
    '''
    Magnitude spectrum of a uniformly sampled trace
    '''
    frequency = Typed(np.ndarray)
    magnitude = Typed(np.ndarray)
    n_samples = Int()
    n_padded = Int()
    dt = Float()
    mean_removed = Bool(True)
    window = Str('none')

    @property
    def resolution(self):
        return self.frequency[1] - self.frequency[0]

    def to_frame(self):
        return pd.DataFrame({'f_hz': self.frequency, 'magnitude': self.magnitude})


class Peak(Atom):

    center = Float()
    width = Float()
    amplitude = Float()
    center_err = Float(np.nan)

    def get_state(self):
        return {
            'center_hz': self.center,
            'hwhm_hz': self.width,
            'amplitude': self.amplitude,
            'center_err_hz': self.center_err,
        }


class PeakFit(Atom):

    peaks = List(Typed(Peak))
    baseline = Float()
    rms = Float()
    flags = List(Str())

    @property
    def centers(self):
        return np.array([p.center for p in self.peaks])

    @property
    def widths(self):
        return np.array([p.width for p in self.peaks])

    def get_state(self):
        return {
            'peaks': [p.get_state() for p in self.peaks],
            'baseline': self.baseline,
            'rms': self.rms,
            'flags': list(self.flags),
        }


class RamseyFit(Atom):

    f1 = Float()
    f2 = Float()
    t2 = Float()
    w1 = Float()
    w2 = Float()
    offset = Float()
    rms = Float()
    stderr = Dict()
    flags = List(Str())

    @property
    def detuning(self):
        return 0.5 * (self.f1 + self.f2)

    @property
    def splitting(self):
        return abs(self.f2 - self.f1)

    def get_state(self):
        return {
            'f1_hz': self.f1,
            'f2_hz': self.f2,
            't2_s': self.t2,
            'w1': self.w1,
            'w2': self.w2,
            'offset': self.offset,
            'rms': self.rms,
            'stderr': dict(self.stderr),
            'flags': list(self.flags),
        }


class TelegraphTrace(Atom):
    '''
    Single-shot readout values sampled at (possibly jittered) times. `truth`
    optionally holds the simulated parity (True for even) per sample.
    '''
    t = Typed(np.ndarray)
    values = Typed(np.ndarray)
    truth = Value()

    def __init__(self, t, values, truth=None):
        t, values = _array(t), _array(values)
        if t.shape != values.shape or t.ndim != 1:
            raise ParameterError('t and I must be 1D arrays of equal length')
        if len(t) < 2:
            raise ParameterError('Telegraph trace needs at least two samples')
        if not util.is_strictly_increasing(t):
            raise ParameterError('Telegraph times must be strictly increasing')
        super().__init__(t=t, values=values, truth=truth)

    @property
    def span(self):
        return self.t[-1] - self.t[0]

    @property
    def mean_interval(self):
        return self.span / (len(self.t) - 1)

    def to_frame(self):
        return pd.DataFrame({'t_s': self.t, 'I': self.values})


class Autocorrelation(Atom):

    lag = Typed(np.ndarray)
    c = Typed(np.ndarray)
    stderr = Typed(np.ndarray)
    counts = Typed(np.ndarray)
    flags = List(Str())

    def to_frame(self):
        return pd.DataFrame({'lag_s': self.lag, 'c': self.c, 'stderr': self.stderr,
                             'counts': self.counts})


class AutocorrFit(Atom):

    gamma_ps = Float()
    beta = Float()
    amplitude = Float()
    offset = Float()
    markov_gamma = Float()
    imbalance = List(Float())
    imbalance_err = Float()
    stderr = Dict()
    rms = Float()
    flags = List(Str())

    def get_state(self):
        return {
            'gamma_ps_hz': self.gamma_ps,
            'beta': self.beta,
            'amplitude': self.amplitude,
            'offset': self.offset,
            'markov_gamma_hz': self.markov_gamma,
            'imbalance': list(self.imbalance),
            'imbalance_err': self.imbalance_err,
            'stderr': dict(self.stderr),
            'rms': self.rms,
            'flags': list(self.flags),
        }


class Spectrogram(Atom):
    '''
    Fourier magnitude spectra of repeated Ramsey traces, one row per time
    point. `vdc` is the applied gate voltage per row, if known.
    '''
    times = Typed(np.ndarray)
    frequency = Typed(np.ndarray)
    magnitude = Typed(np.ndarray)
    vdc = Value()
    run = Str()

    def __init__(self, times, frequency, magnitude, vdc=None, run=''):
        times, frequency, magnitude = _array(times), _array(frequency), _array(magnitude)
        if magnitude.shape != (len(times), len(frequency)):
            raise ParameterError('Spectrogram magnitude must be (n_times, n_frequencies)')
        if not util.is_strictly_increasing(times):
            raise ParameterError('Spectrogram times must be strictly increasing')
        if not util.is_strictly_increasing(frequency):
            raise ParameterError('Spectrogram frequencies must be strictly increasing')
        if vdc is not None:
            vdc = _array(vdc)
            if vdc.shape != times.shape:
                raise ParameterError('One V_DC value is needed per spectrogram row')
        super().__init__(times=times, frequency=frequency, magnitude=magnitude,
                         vdc=vdc, run=run)

    def row(self, k):
        return SpectrumEstimate(frequency=self.frequency, magnitude=self.magnitude[k],
                                n_samples=0, n_padded=0, dt=0.0)


class PeakTracks(Atom):

    times = Typed(np.ndarray)
    centers = Typed(np.ndarray)
    widths = Typed(np.ndarray)
    gap = Typed(np.ndarray)
    gap_epochs = Typed(np.ndarray)

    def to_frame(self):
        data = {'t_s': self.times}
        for k in range(self.centers.shape[1]):
            data[f'center_{k}_hz'] = self.centers[:, k]
            data[f'hwhm_{k}_hz'] = self.widths[:, k]
        data['gap'] = self.gap.astype(int)
        return pd.DataFrame(data)


class ChargeTrack(Atom):
    '''
    Offset charge n_g0 versus time. `jumps` holds the indices of samples that
    moved by more than the unwrap threshold from their predecessor. An
    uncertainty of NaN means none is known.
    '''
    times = Typed(np.ndarray)
    n_g = Typed(np.ndarray)
    n_g_err = Typed(np.ndarray)
    jumps = List(Int())
    flags = List(Str())

    def __init__(self, times, n_g, n_g_err=None, jumps=None, flags=None):
        times, n_g = _array(times), _array(n_g)
        n_g_err = np.full_like(n_g, np.nan) if n_g_err is None else _array(n_g_err)
        if not (times.shape == n_g.shape == n_g_err.shape) or times.ndim != 1:
            raise ParameterError('Charge track columns must be 1D and equal length')
        if not util.is_strictly_increasing(times):
            raise ParameterError('Charge track times must be strictly increasing')
        if np.any(n_g_err[np.isfinite(n_g_err)] <= 0):
            raise ParameterError('Charge track uncertainties must be positive; use NaN when '
                                 'unknown')
        super().__init__(times=times, n_g=n_g, n_g_err=n_g_err,
                         jumps=[] if jumps is None else [int(j) for j in jumps],
                         flags=[] if flags is None else list(flags))

    def to_frame(self):
        return pd.DataFrame({'t_s': self.times, 'ng': self.n_g, 'ng_err': self.n_g_err})


class VdcFit(Atom):

    f_mean = Float()
    delta_f = Float()
    v_period = Float()
    track = Typed(ChargeTrack)
    rms = Float()
    n_rows = Int()
    flags = List(Str())

    def get_state(self):
        return {
            'f_mean_hz': self.f_mean,
            'delta_f_hz': self.delta_f,
            'v_period_v': self.v_period,
            'rms_hz': self.rms,
            'n_rows': self.n_rows,
            'n_blocks': len(self.track.times),
            'flags': list(self.flags),
        }


class PsdEstimate(Atom):
    '''
    One-sided power spectral density of the offset charge q = 2e n_g0 in
    e^2/Hz.
    '''
    frequency = Typed(np.ndarray)
    density = Typed(np.ndarray)
    metadata = Dict()

    def to_frame(self):
        return pd.DataFrame({'f_hz': self.frequency, 's_q_e2_per_hz': self.density})


class PowerLawFit(Atom):

    alpha = Float()
    alpha_err = Float()
    amplitude = Float()
    fixed_alpha = Float(-2.0)
    fixed_amplitude = Float()
    f_ref = Float()
    fit_range = List(Float())
    flags = List(Str())

    def evaluate(self, frequency):
        return self.amplitude * (np.asarray(frequency) / self.f_ref) ** self.alpha

    def get_state(self):
        return {
            'alpha': self.alpha,
            'alpha_err': self.alpha_err,
            'amplitude_e2_per_hz': self.amplitude,
            'fixed_alpha': self.fixed_alpha,
            'fixed_amplitude_e2_per_hz': self.fixed_amplitude,
            'f_ref_hz': self.f_ref,
            'fit_range_hz': list(self.fit_range),
            'flags': list(self.flags),
        }


class Report(Atom):

    command = Str()
    inputs = Dict()
    results = Dict()
    warnings = List(Str())
    schema = Str(SCHEMA_TAG)
    wall_clock = Float()

    def get_state(self):
        return util.jsonable({
            'schema': self.schema,
            'command': self.command,
            'inputs': dict(self.inputs),
            'results': dict(self.results),
            'warnings': list(self.warnings),
        })

    @classmethod
    def from_state(cls, state):
        return cls(schema=state['schema'], command=state['command'],
                   inputs=state['inputs'], results=state['results'],
                   warnings=state['warnings'])
