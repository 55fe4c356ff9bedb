import argparse
import configparser
import contextlib
import json
import logging
import os
from pathlib import Path
import sys
import time

log = logging.getLogger(__name__)

import numpy as np
import pandas as pd

from qcharge import fit, parity, plot, ramsey, readers, spectra, tracker, util
from qcharge.config import (
    CONFIG_KEYS, DEFAULT_OUTPUT_DIR, DRIFT_REFERENCE, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL,
    EXIT_OK, LOCK_FILENAME, OUTPUT_DIR_ENV, PARAMETER_SETS, PARITY_REFERENCE, REPRO_EL_GRID,
    SCHEMA_TAG
)
from qcharge.errors import (
    AmbiguousLadderError, ConfigError, ConvergenceError, FitError, ParameterError, SchemaError
)
from qcharge.model import (
    CircuitParams, FrequencyBand, Report, SolverConfig, Transition, TransitionSet
)


SECTION = 'qcharge'
UNIT_SUFFIXES = ('_ghz', '_hz', '_s', '_v', '_rad', '_henry')


def get_version():
    from importlib.metadata import PackageNotFoundError, version
    try:
        return version('qcharge')
    except PackageNotFoundError:
        return '0+unknown'


################################################################################
# Configuration
################################################################################
def parse_value(key, raw):
    if key not in CONFIG_KEYS:
        hints = [key + s for s in UNIT_SUFFIXES if key + s in CONFIG_KEYS]
        if hints:
            raise ConfigError(f'Key {key!r} is missing its unit suffix; use {hints[0]!r}')
        raise ConfigError(f'Unknown configuration key {key!r}')
    parse, _ = CONFIG_KEYS[key]
    try:
        return parse(raw)
    except (TypeError, ValueError):
        raise ConfigError(f'Cannot parse {key}={raw!r}')


def load_config(path=None, overrides=()):
    '''
    Resolve the run configuration from defaults, an INI file and overrides

    Returns the resolved values and the set of keys given explicitly.
    '''
    values = {key: default for key, (_, default) in CONFIG_KEYS.items()}
    explicit = set()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f'Configuration file {path} does not exist')
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as e:
            raise ConfigError(f'{path}: {e}')
        unknown = [s for s in parser.sections() if s != SECTION]
        if unknown:
            raise ConfigError(f'{path}: unknown section(s) {", ".join(unknown)}')
        if parser.has_section(SECTION):
            for key, raw in parser.items(SECTION):
                values[key] = parse_value(key, raw)
                explicit.add(key)
    for item in overrides:
        if '=' not in item:
            raise ConfigError(f'Override {item!r} must have the form key=value')
        key, raw = (s.strip() for s in item.split('=', 1))
        values[key] = parse_value(key, raw)
        explicit.add(key)
    return values, explicit


def circuit_params(values):
    e_l = values['e_l_ghz']
    if values['l_henry'] > 0:
        if e_l > 0:
            raise ConfigError('Set either e_l_ghz or l_henry, not both')
        e_l = spectra.inductance_to_el(values['l_henry'])
    return CircuitParams(values['e_c_ghz'], values['e_j_ghz'], e_l,
                         values['n_g'], values['parity'], values['phi_ext_rad'])


def solver_config(values):
    return SolverConfig(charge_cutoff=values['charge_cutoff'], osc_dim=values['osc_dim'],
                        conv_tol=values['conv_tol'], n_levels=values['n_levels'])


def require_path(values, key):
    if not values[key]:
        raise ConfigError(f'{key} must be set for this command')
    return Path(values[key])


def max_workers(values):
    return values['max_workers'] or None


def resolve_output_dir(cli_value, values):
    for candidate in (cli_value, values['output_dir'], os.environ.get(OUTPUT_DIR_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT_DIR)


@contextlib.contextmanager
def output_lock(path):
    '''
    Hold an exclusive lock file in the output directory for the run
    '''
    path.mkdir(parents=True, exist_ok=True)
    lock = path / LOCK_FILENAME
    try:
        fh = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise IOError(f'Output directory {path} is in use by another run ({lock})')
    os.write(fh, str(os.getpid()).encode())
    os.close(fh)
    try:
        yield path
    finally:
        lock.unlink()


class WarningCollector(logging.Handler):

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages = []

    def emit(self, record):
        message = record.getMessage()
        if message not in self.messages:
            self.messages.append(message)


################################################################################
# Commands
################################################################################
def cmd_spectrum(values, explicit, out):
    params = circuit_params(values)
    config = solver_config(values)
    transitions = spectra.transition_frequencies(params, config)
    plot.emit_plot_data(transitions, out / 'spectrum.csv')
    results = {'transitions': transitions.get_state()}
    if params.e_l == 0:
        curves = spectra.charge_spectrum(params, np.linspace(0, 1, 101), config)
        plot.emit_plot_data(curves, out / 'spectrum_vs_ng.csv')
    else:
        results['inductance_h'] = spectra.el_to_inductance(params.e_l)
    return results


def dispersion_table(params, config):
    rows = []
    for i in range(config.n_levels - 1):
        exact = spectra.charge_dispersion(params, config, i)
        approx = spectra.asymptotic_dispersion(params.e_c, params.e_j[0], i)
        rows.append({'i': i, 'j': i + 1, 'dispersion_mhz': exact * 1e3,
                     'asymptotic_mhz': approx * 1e3})
    return rows


def cmd_dispersion(values, explicit, out):
    params = circuit_params(values)
    rows = dispersion_table(params, solver_config(values))
    plot.emit_plot_data(pd.DataFrame(rows), out / 'dispersion.csv')
    return {'dispersion': rows}


def _harmonic_results(reports):
    results = {'fits': [r.get_state() for r in reports]}
    last = reports[-1].params
    if last.order >= 2:
        l_s, note = fit.series_inductance(last.e_j[1], last.e_j[0])
        results['series_inductance_h'] = l_s
        results['series_inductance_note'] = note
    return results


def cmd_fit_harmonics(values, explicit, out):
    measured = readers.TransitionReader(require_path(values, 'input_path')).load()
    orders = range(1, values['order'] + 1)
    reports = fit.fit_harmonic_orders(measured, orders, config=solver_config(values))
    plot.emit_plot_data(plot.residual_frame(reports), out / 'residuals.csv')
    return _harmonic_results(reports)


def _el_grid(values):
    return np.geomspace(values['e_l_min_ghz'], values['e_l_max_ghz'], values['e_l_points'])


def _sweep_results(sweep, measured):
    shifts = fit.predicted_frequency_shift(sweep, measured.select(parity='even', n_g=0.0))
    results = sweep.get_state()
    results['inductance_h'] = [spectra.el_to_inductance(e) if e > 0 else None for e in sweep.e_l]
    return results, shifts


def cmd_el_sweep(values, explicit, out):
    measured = readers.TransitionReader(require_path(values, 'input_path')).load()
    sweep = fit.el_sweep(measured, _el_grid(values), config=solver_config(values),
                         max_workers=max_workers(values))
    results, shifts = _sweep_results(sweep, measured)
    plot.emit_plot_data(sweep, out / 'el_sweep.csv')
    plot.emit_plot_data(shifts, out / 'el_sweep_shifts.csv')
    return results


def cmd_bound(values, explicit, out):
    e_l_flux = fit.flux_dispersion_bound(values['e_j_ghz'][0], values['f01_ghz'],
                                        values['shift_ghz'])
    results = {
        'flux_bound_e_l_ghz': e_l_flux,
        'flux_bound_l_h': spectra.el_to_inductance(e_l_flux),
    }
    if values['input_path'] and values['band_path']:
        measured = readers.TransitionReader(values['input_path']).load()
        band = readers.BandReader(values['band_path']).load()
        sweep = fit.el_sweep(measured, _el_grid(values), config=solver_config(values),
                             max_workers=max_workers(values))
        bound = fit.inductance_bound(sweep, band)
        results['charge_bound'] = bound.get_state()
        plot.emit_plot_data(sweep, out / 'el_sweep.csv')
    return results


def cmd_series_l(values, explicit, out):
    e_j = values['e_j_ghz']
    if len(e_j) < 2:
        raise ConfigError('series-l needs at least two harmonics in e_j_ghz')
    l_s, note = fit.series_inductance(e_j[1], e_j[0])
    return {'series_inductance_h': l_s, 'note': note}


def cmd_ramsey_sim(values, explicit, out):
    tau = np.linspace(0, values['tau_max_s'], values['n_tau'])
    trace = ramsey.synth_ramsey(values['f1_hz'], values['f2_hz'], values['t2_s'], tau,
                                values['noise_sigma'], (values['w1'], values['w2']),
                                values['seed'])
    readers.write_trace_csv(trace, out / 'ramsey.csv')
    return {'n_samples': len(tau), 'path': 'ramsey.csv'}


def analyze_ramsey(trace, pad_factor, drive):
    spectrum = ramsey.fft_magnitude(trace, pad_factor)
    try:
        peaks = ramsey.fit_lorentzian_peaks(spectrum, 2)
    except FitError:
        log.warning('Two-peak Lorentzian fit failed; fitting a single peak')
        peaks = ramsey.fit_lorentzian_peaks(spectrum, 1)
    time_fit = ramsey.time_domain_fit(trace, pad_factor=pad_factor)
    detuning = float(np.mean(peaks.centers))
    results = {
        'fourier': peaks.get_state(),
        'time_domain': time_fit.get_state(),
        'detuning_hz': detuning,
        'splitting_hz': float(np.ptp(peaks.centers)),
        'f_mean_hz': drive - detuning,
    }
    return spectrum, time_fit, results


def cmd_ramsey_analyze(values, explicit, out):
    trace = readers.RamseyReader(require_path(values, 'input_path')).load()
    spectrum, time_fit, results = analyze_ramsey(trace, values['pad_factor'], values['drive_hz'])
    plot.emit_plot_data(spectrum, out / 'ramsey_spectrum.csv')
    model = ramsey.ramsey_signal(trace.tau, time_fit.f1, time_fit.f2, time_fit.t2, time_fit.w1,
                                 time_fit.w2, time_fit.offset)
    curve = plot.fit_curve_frame(trace.tau, trace.i_quadrature, model, 'tau_s', 'I')
    plot.emit_plot_data(curve, out / 'ramsey_fit.csv')
    return results


def cmd_parity_sim(values, explicit, out):
    trace = parity.simulate_telegraph(values['gamma_ps_hz'], values['imbalance'],
                                      (values['i_even'], values['i_odd']),
                                      values['interval_s'], values['n_samples'],
                                      values['jitter'], values['noise_sigma'], values['seed'])
    readers.write_trace_csv(trace, out / 'telegraph.csv')
    return {'n_samples': len(trace.t), 'span_s': trace.span, 'path': 'telegraph.csv'}


def analyze_telegraph(trace, levels, max_lag, out, name='autocorrelation.csv'):
    if not max_lag:
        max_lag = 2.5 / parity.estimate_switching_rate(trace, levels)
    result = parity.analyze_parity(trace, max_lag, levels)
    acf = parity.autocorrelation(trace, max_lag)
    model = parity.stretched_exponential(acf.lag, result.amplitude, result.gamma_ps,
                                         result.beta, result.offset)
    frame = acf.to_frame()
    frame['c_fit'] = model
    plot.emit_plot_data(frame, out / name)
    return result


def cmd_parity_fit(values, explicit, out):
    trace = readers.TelegraphReader(require_path(values, 'input_path')).load()
    levels = None
    if {'i_even', 'i_odd'} & explicit:
        levels = (values['i_even'], values['i_odd'])
    result = analyze_telegraph(trace, levels, values['max_lag_s'], out)
    return result.get_state()


def cmd_vdc_fit(values, explicit, out):
    spectrogram = readers.SpectrogramReader(require_path(values, 'input_path')).load()
    v_period = values['v_period_v'] or None
    result = tracker.global_vdc_fit(spectrogram, values['snr_min'], v_period,
                                    max_workers(values))
    readers.write_trace_csv(result.track, out / 'charge_track.csv')
    results = result.get_state()
    results['jumps'] = list(result.track.jumps)
    return results


def cmd_track(values, explicit, out):
    spectrogram = readers.SpectrogramReader(require_path(values, 'input_path')).load()
    tracks = tracker.track_peaks(spectrogram, 2, values['snr_min'], max_workers(values))
    plot.emit_plot_data(tracks, out / 'peak_tracks.csv')
    folded = tracker.splitting_only_track(tracks.times, tracks.centers[:, 1],
                                          tracks.centers[:, 0], values['delta_f_hz'],
                                          level=values['level'])
    readers.write_trace_csv(folded, out / 'charge_track_splitting.csv')
    return {
        'n_rows': len(tracks.times),
        'n_gaps': int(tracks.gap.sum()),
        'gap_epochs_s': tracks.gap_epochs,
        'flags': list(folded.flags),
    }


def _psd_results(track, values, out, name='psd.csv'):
    estimate = tracker.psd(track)
    fit_range = None
    if values['fit_min_hz'] and values['fit_max_hz']:
        fit_range = (values['fit_min_hz'], values['fit_max_hz'])
    power_law = tracker.fit_power_law(estimate, values['f_ref_hz'], fit_range)
    frame = estimate.to_frame()
    frame['fit'] = power_law.evaluate(estimate.frequency)
    plot.emit_plot_data(frame, out / name)
    lines = tracker.reference_lines(estimate.frequency, {
        'reference_e2_per_hz': DRIFT_REFERENCE['s_ref'],
        'fit_e2_per_hz': power_law.amplitude,
        'fixed_fit_e2_per_hz': power_law.fixed_amplitude,
    }, values['f_ref_hz'])
    plot.emit_plot_data(lines, out / name.replace('.csv', '_reference.csv'))
    return {'psd': estimate.metadata, 'power_law': power_law.get_state()}


def simulated_drift(values, explicit):
    if 'step_sigma' in explicit:
        sigma = values['step_sigma']
    else:
        sigma = tracker.calibrate_step_sigma(DRIFT_REFERENCE['s_ref'], values['f_ref_hz'],
                                             values['dt_s'])
    n = int(values['duration_s'] / values['dt_s']) + 1
    track = tracker.simulate_charge_drift(sigma, values['dt_s'], n, values['seed'],
                                          ng_err=values['ng_err'])
    return track, sigma


def cmd_psd(values, explicit, out):
    '''
    PSD of a measured charge track, or of a simulated random walk when no
    input_path is configured
    '''
    if values['input_path']:
        track = readers.ChargeTrackReader(values['input_path']).load()
        return _psd_results(track, values, out)
    track, sigma = simulated_drift(values, explicit)
    readers.write_trace_csv(track, out / 'drift_track.csv')
    results = _psd_results(track, values, out)
    results['step_sigma'] = sigma
    return results


################################################################################
# Reproduction run
################################################################################
def synthetic_transitions(params, levels, parities=('even', 'odd'), config=None):
    config = SolverConfig(n_levels=levels) if config is None else config.replace(n_levels=levels)
    entries = []
    for p in parities:
        predicted = spectra.transition_frequencies(params.replace(parity=p, n_g=0.0), config)
        entries.extend(Transition(t.i, t.j, t.frequency, p, 0.0) for t in predicted)
    return TransitionSet(entries, 'measured')


def repro_spectrum(values, explicit, out):
    params = CircuitParams(**PARAMETER_SETS['device'])
    config = solver_config(values)
    transitions = spectra.transition_frequencies(params, config)
    plot.emit_plot_data(transitions, out / 'device_spectrum.csv')
    curves = spectra.charge_spectrum(params, np.linspace(0, 1, 101), config)
    plot.emit_plot_data(curves, out / 'device_spectrum_vs_ng.csv')
    return {'transitions': transitions.get_state(),
            'dispersion': dispersion_table(params, config)}


def repro_harmonics(values, explicit, out):
    truth = CircuitParams(**PARAMETER_SETS['run17_h5'])
    measured = synthetic_transitions(truth, 6)
    readers.write_trace_csv(measured, out / 'harmonics_measured.csv')
    reports = fit.fit_harmonic_orders(measured, range(1, 6), config=solver_config(values))
    plot.emit_plot_data(plot.residual_frame(reports), out / 'harmonics_residuals.csv')
    return _harmonic_results(reports)


def repro_bound(values, explicit, out):
    # Synthetic band: the unshunted prediction, widened asymmetrically since a
    # shunt can only raise the measured frequencies by a small amount.
    reference = CircuitParams(**PARAMETER_SETS['run17_h3'])
    measured = synthetic_transitions(reference, 5, parities=('even',))
    band = fit.frequency_band([measured])
    band = FrequencyBand({k: (lo - 4.5e-3, hi + 0.5e-3) for k, (lo, hi) in band.bands.items()})
    readers.write_trace_csv(band, out / 'bound_band.csv')
    grid = np.geomspace(*REPRO_EL_GRID)
    sweep = fit.el_sweep(measured, grid, config=solver_config(values),
                         max_workers=max_workers(values))
    bound = fit.inductance_bound(sweep, band)
    results, shifts = _sweep_results(sweep, measured)
    plot.emit_plot_data(sweep, out / 'bound_el_sweep.csv')
    plot.emit_plot_data(shifts, out / 'bound_el_sweep_shifts.csv')
    e_l_flux = fit.flux_dispersion_bound(PARAMETER_SETS['device']['e_j'][0], values['f01_ghz'],
                                        values['shift_ghz'])
    return {
        'charge_bound': bound.get_state(),
        'flux_bound_e_l_ghz': e_l_flux,
        'flux_bound_l_h': spectra.el_to_inductance(e_l_flux),
        'sweep': results,
    }


def repro_ramsey(values, explicit, out):
    tau = np.linspace(0, values['tau_max_s'], values['n_tau'])
    trace = ramsey.synth_ramsey(values['f1_hz'], values['f2_hz'], values['t2_s'], tau,
                                values['noise_sigma'], (values['w1'], values['w2']),
                                values['seed'])
    readers.write_trace_csv(trace, out / 'ramsey.csv')
    spectrum, _, results = analyze_ramsey(trace, values['pad_factor'], values['drive_hz'])
    plot.emit_plot_data(spectrum, out / 'ramsey_spectrum.csv')
    return results


def repro_parity(values, explicit, out):
    results = {}
    for run, reference in PARITY_REFERENCE.items():
        trace = parity.simulate_telegraph(reference['gamma_ps'], reference['imbalance'],
                                          mean_interval=reference['mean_interval'],
                                          n_samples=values['n_samples'],
                                          seed=util.make_rng(values['seed'], f'parity-{run}'))
        result = analyze_telegraph(trace, (1.0, -1.0), None, out, f'{run}_autocorrelation.csv')
        results[run] = result.get_state()
    return results


def repro_drift(values, explicit, out):
    track, sigma = simulated_drift(values, explicit)
    readers.write_trace_csv(track, out / 'drift_track.csv')
    results = _psd_results(track, values, out, 'drift_psd.csv')
    results['step_sigma'] = sigma
    return results


def repro_vdc(values, explicit, out):
    rng = util.make_rng(values['seed'], 'vdc-drift')
    n_g_blocks = 0.1 + np.cumsum(rng.normal(0, 0.01, 12))
    vdc = np.linspace(-6, 6, 25)
    spectrogram = tracker.synth_vdc_spectrogram(n_g_blocks, vdc, 5e6, values['delta_f_hz'],
                                                DRIFT_REFERENCE['v_period'],
                                                seed=values['seed'])
    result = tracker.global_vdc_fit(spectrogram, values['snr_min'],
                                    max_workers=max_workers(values))
    readers.write_trace_csv(result.track, out / 'vdc_charge_track.csv')
    error = (result.track.n_g - n_g_blocks + 0.25) % 0.5 - 0.25
    results = result.get_state()
    results['max_n_g_error'] = float(np.max(np.abs(error)))
    return results


REPRO_STEPS = {
    'spectrum': repro_spectrum,
    'harmonics': repro_harmonics,
    'bound': repro_bound,
    'ramsey': repro_ramsey,
    'parity': repro_parity,
    'drift': repro_drift,
    'vdc': repro_vdc,
}


@contextlib.contextmanager
def collect_warnings():
    collector = WarningCollector()
    logger = logging.getLogger('qcharge')
    logger.addHandler(collector)
    try:
        yield collector.messages
    finally:
        logger.removeHandler(collector)


def cmd_repro(values, explicit, out):
    '''
    Regenerate every derived quantity from synthetic data with fixed seeds
    '''
    summary = {}
    for name, step in REPRO_STEPS.items():
        log.info('Reproduction step: %s', name)
        start = time.perf_counter()
        with collect_warnings() as warnings:
            results = step(values, explicit, out)
        report = Report(command=f'repro-{name}', inputs={'seed': values['seed']},
                        results=results, warnings=warnings,
                        wall_clock=time.perf_counter() - start)
        summary[name] = readers.write_report(report, out / f'repro_{name}.json').name
    return {'reports': summary}


COMMANDS = {
    'spectrum': (cmd_spectrum, 'Transition frequencies of the configured circuit'),
    'dispersion': (cmd_dispersion, 'Charge dispersion per transition'),
    'fit-harmonics': (cmd_fit_harmonics, 'Fit Josephson harmonics to measured transitions'),
    'el-sweep': (cmd_el_sweep, 'Refit measured transitions along a grid of E_L'),
    'bound': (cmd_bound, 'Upper bounds on the inductive energy'),
    'series-l': (cmd_series_l, 'Series inductance implied by E_J2'),
    'ramsey-sim': (cmd_ramsey_sim, 'Simulate a parity-split Ramsey trace'),
    'ramsey-analyze': (cmd_ramsey_analyze, 'Fourier and time-domain analysis of a Ramsey trace'),
    'parity-sim': (cmd_parity_sim, 'Simulate a parity telegraph trace'),
    'parity-fit': (cmd_parity_fit, 'Switching rate and imbalance of a telegraph trace'),
    'vdc-fit': (cmd_vdc_fit, 'Global V_DC fit of a spectrogram'),
    'track': (cmd_track, 'Track the parity doublet through a spectrogram'),
    'psd': (cmd_psd, 'Charge-noise PSD and power-law fit'),
    'repro': (cmd_repro, 'Regenerate all derived quantities from synthetic data'),
}


def build_parser():
    parser = argparse.ArgumentParser('qcharge', description='Transmon charge-dispersion and '
                                     'parity-switching analysis')
    parser.add_argument('--version', action='version', version=get_version())
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, (_, description) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=description, description=description)
        sub.add_argument('--config', help='INI file with a [qcharge] section')
        sub.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                         help='Override a configuration key')
        sub.add_argument('--output-dir', help='Directory for reports and plot data')
        sub.add_argument('--log-level', default='INFO',
                         choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return parser


EXIT_CODES = (
    ((ConfigError, SchemaError), EXIT_CONFIG),
    ((ConvergenceError, AmbiguousLadderError, FitError, ParameterError), EXIT_NUMERICAL),
    ((OSError,), EXIT_IO),
)

ERROR_DETAILS = ('achieved_tol', 'cutoff', 'level', 'candidates', 'elements', 'path', 'line')


def error_document(error, exit_code):
    details = {k: getattr(error, k) for k in ERROR_DETAILS if getattr(error, k, None) is not None}
    details['exit_code'] = exit_code
    return util.jsonable({
        'schema': SCHEMA_TAG,
        'error': type(error).__name__,
        'message': str(error),
        'details': details,
    })


def fail(error, exit_code, out=None):
    '''
    Report `error` as JSON on stderr and, if the run owns an output
    directory, in error.json
    '''
    document = error_document(error, exit_code)
    print(json.dumps(document), file=sys.stderr)
    if out is not None:
        try:
            readers.save_state(out / 'error.json', document)
        except OSError as e:
            log.error('Could not write error report: %s', e)
    return exit_code


def run(command, values, explicit, out):
    handler, _ = COMMANDS[command]
    start = time.perf_counter()
    with collect_warnings() as warnings:
        results = handler(values, explicit, out)
    report = Report(command=command,
                    inputs={'version': get_version(), 'config': values},
                    results=util.jsonable(results),
                    warnings=warnings,
                    wall_clock=time.perf_counter() - start)
    return readers.write_report(report, out / f'{command}.json')


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level)

    owned = None
    try:
        values, explicit = load_config(args.config, args.set)
        out = resolve_output_dir(args.output_dir, values)
        with output_lock(out):
            owned = out
            path = run(args.command, values, explicit, out)
        log.info('Wrote %s', path)
        return EXIT_OK
    except Exception as e:
        for types, exit_code in EXIT_CODES:
            if isinstance(e, types):
                log.error('%s: %s', type(e).__name__, e)
                return fail(e, exit_code, owned)
        raise


if __name__ == '__main__':
    sys.exit(main())
