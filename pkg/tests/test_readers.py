import numpy as np
import pytest

from qcharge import readers
from qcharge.config import SCHEMA_TAG
from qcharge.errors import SchemaError
from qcharge.model import (
    ChargeTrack, FrequencyBand, RamseyTrace, Report, Spectrogram, Transition, TransitionSet
)


def write(path, text):
    path.write_text(text)
    return path


def test_ramsey_round_trip(tmp_path):
    tau = np.linspace(0, 1e-6, 11)
    trace = RamseyTrace(tau, np.cos(2 * np.pi * 5e6 * tau))
    path = readers.write_trace_csv(trace, tmp_path / 'ramsey.csv')
    assert path.read_text().splitlines()[0] == 'tau_s,I'
    loaded = readers.load_trace_csv(path, 'ramsey')
    np.testing.assert_allclose(loaded.tau, trace.tau)
    np.testing.assert_allclose(loaded.i_quadrature, trace.i_quadrature)


def test_charge_track_keeps_nan(tmp_path):
    track = ChargeTrack([0.0, 23.0, 46.0], [0.1, np.nan, 0.2], [1e-3, np.nan, 1e-3])
    path = readers.write_trace_csv(track, tmp_path / 'charge.csv')
    loaded = readers.load_trace_csv(path, 'charge')
    np.testing.assert_allclose(loaded.n_g, track.n_g)
    assert np.isnan(loaded.n_g_err[1])


def test_transition_round_trip(tmp_path):
    measured = TransitionSet([Transition(0, 1, 4.9), Transition(1, 2, 4.68, 'odd', 0.25)])
    path = readers.write_trace_csv(measured, tmp_path / 'transitions.csv')
    loaded = readers.TransitionReader(path).load()
    assert loaded.provenance == 'measured'
    assert loaded.lookup(1, 2, 'odd', 0.25) == pytest.approx(4.68)
    assert [t.i for t in loaded] == [0, 1]


def test_transition_reader_rejects_parity(tmp_path):
    path = write(tmp_path / 't.csv', 'i,j,f_ghz,parity,n_g\n0,1,4.9,even,0\n1,2,4.7,neutral,0\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'transitions')
    assert info.value.line == 3
    assert 'line 3' in str(info.value)


def test_transition_reader_rejects_fractional_level(tmp_path):
    path = write(tmp_path / 't.csv', 'i,j,f_ghz,parity,n_g\n0.5,1,4.9,even,0\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'transitions')
    assert info.value.line == 2


def test_transition_reader_rejects_duplicates(tmp_path):
    path = write(tmp_path / 't.csv', 'i,j,f_ghz,parity,n_g\n0,1,4.9,even,0\n0,1,4.8,even,0\n')
    with pytest.raises(SchemaError, match='Duplicate'):
        readers.load_trace_csv(path, 'transitions')


def test_missing_column(tmp_path):
    path = write(tmp_path / 'ramsey.csv', 'tau_s\n0\n1\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'ramsey')
    assert info.value.line == 1
    assert info.value.path == path
    assert 'missing column(s) I' in str(info.value)


def test_unexpected_column(tmp_path):
    path = write(tmp_path / 'ramsey.csv', 'tau_s,I,Q\n0,1,0\n')
    with pytest.raises(SchemaError, match='unexpected'):
        readers.load_trace_csv(path, 'ramsey')


def test_non_numeric_value(tmp_path):
    path = write(tmp_path / 'telegraph.csv', 't_s,I\n0,1\n1,one\n2,1\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'telegraph')
    assert info.value.line == 3
    assert "'one'" in str(info.value)


def test_times_must_increase(tmp_path):
    path = write(tmp_path / 'ramsey.csv', 'tau_s,I\n0,1\n2,0\n1,1\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'ramsey')
    assert info.value.line == 4


def test_negative_uncertainty(tmp_path):
    path = write(tmp_path / 'charge.csv', 't_s,ng,ng_err\n0,0.1,0.01\n1,0.1,-0.01\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'charge')
    assert info.value.line == 3


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(OSError):
        readers.load_trace_csv(tmp_path / 'missing.csv', 'ramsey')
    with pytest.raises(SchemaError):
        readers.load_trace_csv(write(tmp_path / 'empty.csv', ''), 'ramsey')
    with pytest.raises(ValueError):
        readers.load_trace_csv(tmp_path / 'missing.csv', 'lif')


def test_band_round_trip(tmp_path):
    band = FrequencyBand({(0, 1): (4.9, 4.95), (1, 2): (4.6, 4.7)})
    path = readers.write_trace_csv(band, tmp_path / 'band.csv')
    loaded = readers.load_trace_csv(path, 'band')
    assert loaded.bands == band.bands


def test_band_rejects_inverted_range(tmp_path):
    path = write(tmp_path / 'band.csv', 'i,j,f_min_ghz,f_max_ghz\n0,1,5.0,4.9\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'band')
    assert info.value.line == 2


def test_spectrogram_round_trip(tmp_path):
    frequency = np.arange(8) * 12.5e3
    magnitude = np.arange(24, dtype=float).reshape(3, 8)
    spectrogram = Spectrogram([0, 23, 46], frequency, magnitude, vdc=[0.0, 0.5, 1.0])
    path = readers.write_trace_csv(spectrogram, tmp_path / 'run17.csv')
    loaded = readers.load_trace_csv(path, 'spectrogram')
    np.testing.assert_array_equal(loaded.frequency, frequency)
    np.testing.assert_array_equal(loaded.magnitude, magnitude)
    np.testing.assert_array_equal(loaded.vdc, [0.0, 0.5, 1.0])
    assert loaded.run == 'run17'


def test_spectrogram_without_vdc(tmp_path):
    spectrogram = Spectrogram([0, 23], np.arange(4.0), np.ones((2, 4)))
    path = readers.write_trace_csv(spectrogram, tmp_path / 'run.csv')
    assert readers.load_trace_csv(path, 'spectrogram').vdc is None


def test_spectrogram_rejects_bad_columns(tmp_path):
    path = write(tmp_path / 's.csv', 't_s,f_hz:0,f_hz:1,power\n0,1,1,1\n')
    with pytest.raises(SchemaError, match='unexpected column'):
        readers.load_trace_csv(path, 'spectrogram')
    path = write(tmp_path / 's.csv', 't_s,f_hz:0,f_hz:1,f_hz:x\n0,1,1,1\n')
    with pytest.raises(SchemaError, match='bad frequency'):
        readers.load_trace_csv(path, 'spectrogram')
    path = write(tmp_path / 's.csv', 't_s,f_hz:0,f_hz:1\n0,1,1\n')
    with pytest.raises(SchemaError, match='four frequency columns'):
        readers.load_trace_csv(path, 'spectrogram')


def make_report():
    return Report(command='spectrum', inputs={'e_c_ghz': 0.199, 'e_j_ghz': [16.5]},
                  results={'f01_ghz': np.float64(4.926), 'levels': np.arange(3)},
                  warnings=[], wall_clock=1.25)


def test_report_round_trip(tmp_path):
    path = readers.write_report(make_report(), tmp_path / 'spectrum.json')
    loaded = readers.read_report(path)
    assert loaded.schema == SCHEMA_TAG
    assert loaded.warnings == []
    assert loaded.results == {'f01_ghz': 4.926, 'levels': [0, 1, 2]}
    assert loaded.wall_clock == 1.25


def test_report_timing_sidecar(tmp_path):
    path = readers.write_report(make_report(), tmp_path / 'spectrum.json')
    timing = readers.timing_filename(path)
    assert timing.name == 'spectrum.timing.json'
    assert readers.load_state(timing) == {'command': 'spectrum', 'wall_clock_s': 1.25}
    assert 'wall_clock' not in path.read_text()


def test_report_is_byte_identical(tmp_path):
    first = readers.write_report(make_report(), tmp_path / 'a.json')
    report = make_report()
    report.wall_clock = 99.0
    second = readers.write_report(report, tmp_path / 'b.json')
    assert first.read_bytes() == second.read_bytes()


def test_report_requires_keys(tmp_path):
    path = readers.save_state(tmp_path / 'bad.json', {'schema': SCHEMA_TAG, 'command': 'x'})
    with pytest.raises(SchemaError, match='inputs'):
        readers.read_report(path)


def test_zero_uncertainty(tmp_path):
    path = write(tmp_path / 'charge.csv', 't_s,ng,ng_err\n0,0.1,0.01\n1,0.1,0\n2,nan,nan\n')
    with pytest.raises(SchemaError) as info:
        readers.load_trace_csv(path, 'charge')
    assert info.value.line == 3
