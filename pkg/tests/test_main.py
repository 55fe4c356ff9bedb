import json

import numpy as np
import pytest

from qcharge import main, readers
from qcharge.config import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, LOCK_FILENAME
from qcharge.errors import ConfigError
from qcharge.model import ChargeTrack


def run_cli(command, out, *overrides):
    argv = [command, '--output-dir', str(out), '--log-level', 'WARNING']
    for item in overrides:
        argv.extend(['--set', item])
    return main.main(argv)


def stderr_document(capsys):
    lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith('{')]
    return json.loads(lines[-1])


################################################################################
# Configuration
################################################################################
def test_parse_value_hints_unit_suffix():
    with pytest.raises(ConfigError, match="use 'e_c_ghz'"):
        main.parse_value('e_c', '0.2')
    with pytest.raises(ConfigError, match="use 'f1_hz'"):
        main.parse_value('f1', '4e6')
    with pytest.raises(ConfigError, match='Unknown'):
        main.parse_value('bogus', '1')
    with pytest.raises(ConfigError, match='Cannot parse'):
        main.parse_value('n_levels', 'six')


def test_parse_value_harmonic_list():
    assert main.parse_value('e_j_ghz', '15.6, -0.0116') == [15.6, -0.0116]


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / 'run.ini'
    path.write_text('[qcharge]\ne_c_ghz = 0.25\ne_j_ghz = 15, -0.1\nseed = 3\n')
    values, explicit = main.load_config(path, ['e_c_ghz=0.3'])
    assert values['e_c_ghz'] == 0.3
    assert values['e_j_ghz'] == [15.0, -0.1]
    assert values['seed'] == 3
    assert values['n_levels'] == 6
    assert explicit == {'e_c_ghz', 'e_j_ghz', 'seed'}


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match='does not exist'):
        main.load_config(tmp_path / 'missing.ini')
    path = tmp_path / 'run.ini'
    path.write_text('[other]\nseed = 1\n')
    with pytest.raises(ConfigError, match='unknown section'):
        main.load_config(path)
    with pytest.raises(ConfigError, match='key=value'):
        main.load_config(None, ['seed'])


def test_circuit_params_from_inductance():
    values, _ = main.load_config(None, ['l_henry=1e-6'])
    params = main.circuit_params(values)
    assert params.e_l == pytest.approx(0.1635, rel=1e-3)
    values, _ = main.load_config(None, ['l_henry=1e-6', 'e_l_ghz=0.1'])
    with pytest.raises(ConfigError):
        main.circuit_params(values)


def test_output_dir_precedence(tmp_path, monkeypatch):
    values, _ = main.load_config()
    monkeypatch.delenv('QCHARGE_OUTPUT_DIR', raising=False)
    assert main.resolve_output_dir(None, values).name == 'qcharge-out'
    monkeypatch.setenv('QCHARGE_OUTPUT_DIR', str(tmp_path / 'env'))
    assert main.resolve_output_dir(None, values) == tmp_path / 'env'
    values['output_dir'] = str(tmp_path / 'config')
    assert main.resolve_output_dir(None, values) == tmp_path / 'config'
    assert main.resolve_output_dir(str(tmp_path / 'cli'), values) == tmp_path / 'cli'


################################################################################
# Commands
################################################################################
def test_spectrum_free_charge(tmp_path):
    assert run_cli('spectrum', tmp_path, 'e_j_ghz=0') == EXIT_OK
    report = readers.read_report(tmp_path / 'spectrum.json')
    transitions = report.results['transitions']
    assert transitions['entries'][0]['f_ghz'] == pytest.approx(4 * 0.199)
    assert transitions['notes'] == ['degenerate levels: f12']
    assert (tmp_path / 'spectrum.csv').exists()
    assert (tmp_path / 'spectrum_vs_ng.csv').exists()
    assert (tmp_path / 'spectrum.timing.json').exists()
    assert not (tmp_path / LOCK_FILENAME).exists()


def test_spectrum_is_reproducible(tmp_path):
    assert run_cli('spectrum', tmp_path / 'a') == EXIT_OK
    assert run_cli('spectrum', tmp_path / 'b') == EXIT_OK
    first = (tmp_path / 'a' / 'spectrum.json').read_bytes()
    assert first == (tmp_path / 'b' / 'spectrum.json').read_bytes()
    report = readers.read_report(tmp_path / 'a' / 'spectrum.json')
    assert 4.9 < report.results['transitions']['entries'][0]['f_ghz'] < 5.2


def test_bound(tmp_path):
    assert run_cli('bound', tmp_path) == EXIT_OK
    results = readers.read_report(tmp_path / 'bound.json').results
    assert results['flux_bound_e_l_ghz'] == pytest.approx(1.4577, rel=1e-4)
    assert 'charge_bound' not in results


def test_series_l(tmp_path):
    assert run_cli('series-l', tmp_path, 'e_j_ghz=15.6,-0.0116') == EXIT_OK
    results = readers.read_report(tmp_path / 'series-l.json').results
    assert results['series_inductance_h'] == pytest.approx(31e-12, rel=0.01)


def test_series_l_needs_two_harmonics(tmp_path, capsys):
    assert run_cli('series-l', tmp_path) == EXIT_CONFIG
    document = stderr_document(capsys)
    assert document['error'] == 'ConfigError'
    # The run owned the directory, so the error is also recorded there.
    assert readers.load_state(tmp_path / 'error.json') == document


def test_ramsey_round_trip(tmp_path):
    assert run_cli('ramsey-sim', tmp_path / 'sim', 'seed=1') == EXIT_OK
    trace_path = tmp_path / 'sim' / 'ramsey.csv'
    assert run_cli('ramsey-analyze', tmp_path / 'fit', f'input_path={trace_path}') == EXIT_OK
    results = readers.read_report(tmp_path / 'fit' / 'ramsey-analyze.json').results
    assert results['detuning_hz'] == pytest.approx(5e6, abs=12.5e3)
    assert results['splitting_hz'] == pytest.approx(2e6, abs=25e3)
    assert results['time_domain']['flags'] == []
    assert (tmp_path / 'fit' / 'ramsey_fit.csv').exists()


def test_parity_round_trip(tmp_path):
    assert run_cli('parity-sim', tmp_path / 'sim', 'n_samples=200000', 'seed=2') == EXIT_OK
    trace_path = tmp_path / 'sim' / 'telegraph.csv'
    assert run_cli('parity-fit', tmp_path / 'fit', f'input_path={trace_path}') == EXIT_OK
    report = readers.read_report(tmp_path / 'fit' / 'parity-fit.json')
    assert report.results['gamma_ps_hz'] == pytest.approx(8e3, rel=0.15)
    assert 'levels estimated with an Otsu threshold' in report.results['flags']


def test_psd_simulated(tmp_path):
    assert run_cli('psd', tmp_path) == EXIT_OK
    results = readers.read_report(tmp_path / 'psd.json').results
    assert results['step_sigma'] == pytest.approx(9.529e-4, rel=1e-3)
    assert (tmp_path / 'drift_track.csv').exists()
    assert (tmp_path / 'psd_reference.csv').exists()


def test_psd_collects_warnings(tmp_path):
    rng = np.random.default_rng(0)
    track = ChargeTrack(np.arange(4096.0) * 23.0, rng.normal(0, 0.01, 4096))
    path = readers.write_trace_csv(track, tmp_path / 'white.csv')
    assert run_cli('psd', tmp_path / 'out', f'input_path={path}') == EXIT_OK
    report = readers.read_report(tmp_path / 'out' / 'psd.json')
    assert any(w.startswith('Fitted exponent') for w in report.warnings)
    assert 'not 1/f^2' in report.results['power_law']['flags']


################################################################################
# Failures
################################################################################
def test_config_error_exit_code(tmp_path, capsys):
    assert run_cli('spectrum', tmp_path, 'e_c=0.2') == EXIT_CONFIG
    document = stderr_document(capsys)
    assert document['error'] == 'ConfigError'
    assert document['details']['exit_code'] == EXIT_CONFIG
    assert "use 'e_c_ghz'" in document['message']
    # Configuration is resolved before the output directory is claimed.
    assert not (tmp_path / 'error.json').exists()


def test_parameter_error_exit_code(tmp_path, capsys):
    assert run_cli('spectrum', tmp_path, 'e_c_ghz=-1') == EXIT_NUMERICAL
    document = stderr_document(capsys)
    assert document['error'] == 'ParameterError'
    assert readers.load_state(tmp_path / 'error.json')['details']['exit_code'] == EXIT_NUMERICAL


def test_missing_input_exit_code(tmp_path, capsys):
    missing = tmp_path / 'missing.csv'
    assert run_cli('ramsey-analyze', tmp_path / 'out', f'input_path={missing}') == EXIT_IO
    assert stderr_document(capsys)['details']['exit_code'] == EXIT_IO


def test_schema_error_reports_line(tmp_path, capsys):
    path = tmp_path / 'ramsey.csv'
    path.write_text('tau_s,I\n0,1\n1e-8,x\n')
    assert run_cli('ramsey-analyze', tmp_path / 'out', f'input_path={path}') == EXIT_CONFIG
    document = stderr_document(capsys)
    assert document['error'] == 'SchemaError'
    assert document['details']['line'] == 3


def test_locked_output_dir(tmp_path, capsys):
    (tmp_path / LOCK_FILENAME).write_text('1')
    assert run_cli('spectrum', tmp_path) == EXIT_IO
    assert stderr_document(capsys)['details']['exit_code'] == EXIT_IO
    assert (tmp_path / LOCK_FILENAME).exists()
    assert not (tmp_path / 'error.json').exists()
    assert not (tmp_path / 'spectrum.json').exists()


################################################################################
# Reproduction run
################################################################################
@pytest.mark.slow
def test_repro_is_byte_identical(tmp_path):
    for name in ('a', 'b'):
        assert run_cli('repro', tmp_path / name, 'n_samples=200000') == EXIT_OK
    reports = sorted(p.name for p in (tmp_path / 'a').glob('repro_*.json')
                     if not p.name.endswith('.timing.json'))
    assert len(reports) == len(main.REPRO_STEPS)
    for name in reports:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
