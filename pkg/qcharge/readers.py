import logging

log = logging.getLogger(__name__)

import json
from pathlib import Path

import numpy as np
import pandas as pd

from . import model
from . import util
from .config import CSV_SCHEMAS, PARITIES, SPECTROGRAM_FREQ_PREFIX, SPECTROGRAM_VDC_COLUMN
from .errors import ParameterError, SchemaError


def _line(index):
    # Row 0 of the frame is line 2 of the file (line 1 is the header).
    return int(index) + 2


class BaseReader:
    '''
    Base class of all CSV readers. Checks the header against the schema and
    converts numeric columns, reporting the first offending line. Building the
    domain object from the frame is handled by subclasses.
    '''

    schema = None
    numeric = ()

    def __init__(self, path):
        self.path = Path(path)

    @property
    def columns(self):
        return CSV_SCHEMAS[self.schema]

    def read_frame(self):
        if not self.path.exists():
            raise IOError(f'{self.path} does not exist')
        try:
            frame = pd.read_csv(self.path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            raise SchemaError('file is empty', self.path)
        self.check_header(list(frame.columns))
        for column in self.numeric_columns(frame):
            frame[column] = self.to_numeric(frame, column)
        return frame

    def check_header(self, header):
        missing = [c for c in self.columns if c not in header]
        if missing:
            raise SchemaError(f'missing column(s) {", ".join(missing)}; expected '
                              f'{",".join(self.columns)}', self.path, 1)
        extra = [c for c in header if c not in self.columns]
        if extra:
            raise SchemaError(f'unexpected column(s) {", ".join(extra)}', self.path, 1)

    def numeric_columns(self, frame):
        return self.numeric

    def to_numeric(self, frame, column):
        values = pd.to_numeric(frame[column], errors='coerce')
        bad = values.isna() & (frame[column].str.lower() != 'nan')
        if bad.any():
            index = bad.idxmax()
            raise SchemaError(f'{column}={frame[column][index]!r} is not a number',
                              self.path, _line(index))
        return values.astype(float)

    def check_increasing(self, frame, column):
        diff = np.diff(frame[column].to_numpy())
        bad = np.flatnonzero(~(diff > 0))
        if len(bad):
            raise SchemaError(f'{column} is not strictly increasing', self.path,
                              _line(bad[0] + 1))

    def load(self):
        return self._build(self.read_frame())

    def _build(self, frame):
        raise NotImplementedError

    def get_name(self):
        return self.path.stem


class RamseyReader(BaseReader):

    schema = 'ramsey'
    numeric = ('tau_s', 'I')

    def _build(self, frame):
        self.check_increasing(frame, 'tau_s')
        return model.RamseyTrace(frame['tau_s'], frame['I'])


class TelegraphReader(BaseReader):

    schema = 'telegraph'
    numeric = ('t_s', 'I')

    def _build(self, frame):
        self.check_increasing(frame, 't_s')
        return model.TelegraphTrace(frame['t_s'], frame['I'])


class ChargeTrackReader(BaseReader):

    schema = 'charge'
    numeric = ('t_s', 'ng', 'ng_err')

    def _build(self, frame):
        self.check_increasing(frame, 't_s')
        bad = np.flatnonzero(frame['ng_err'].to_numpy() <= 0)
        if len(bad):
            raise SchemaError('ng_err must be positive or nan', self.path, _line(bad[0]))
        return model.ChargeTrack(frame['t_s'], frame['ng'], frame['ng_err'])


class TransitionReader(BaseReader):

    schema = 'transitions'
    numeric = ('f_ghz', 'n_g')

    def __init__(self, path, provenance='measured'):
        super().__init__(path)
        self.provenance = provenance

    def _build(self, frame):
        for column in ('i', 'j'):
            values = pd.to_numeric(frame[column], errors='coerce')
            bad = values.isna() | (values != values.round())
            if bad.any():
                index = bad.idxmax()
                raise SchemaError(f'{column} must be an integer', self.path, _line(index))
            frame[column] = values.astype(int)
        bad = ~frame['parity'].isin(PARITIES)
        if bad.any():
            index = bad.idxmax()
            raise SchemaError(f'parity must be one of {", ".join(PARITIES)}', self.path,
                              _line(index))
        try:
            return model.TransitionSet.from_frame(frame, self.provenance)
        except ParameterError as e:
            raise SchemaError(str(e), self.path)


class BandReader(BaseReader):

    schema = 'band'
    numeric = ('i', 'j', 'f_min_ghz', 'f_max_ghz')

    def _build(self, frame):
        frame['i'] = frame['i'].astype(int)
        frame['j'] = frame['j'].astype(int)
        bad = np.flatnonzero(frame['f_min_ghz'].to_numpy() > frame['f_max_ghz'].to_numpy())
        if len(bad):
            raise SchemaError('f_min_ghz exceeds f_max_ghz', self.path, _line(bad[0]))
        return model.FrequencyBand.from_frame(frame)


class SpectrogramReader(BaseReader):
    '''
    Reads a spectrogram stored as one row per time point with columns
    t_s, an optional vdc_v and one f_hz:<frequency> column per bin
    '''

    schema = 'spectrogram'

    def check_header(self, header):
        if not header or header[0] != 't_s':
            raise SchemaError('first column must be t_s', self.path, 1)
        for column in header[1:]:
            if column == SPECTROGRAM_VDC_COLUMN:
                continue
            if not column.startswith(SPECTROGRAM_FREQ_PREFIX):
                raise SchemaError(f'unexpected column {column!r}', self.path, 1)
            try:
                float(column[len(SPECTROGRAM_FREQ_PREFIX):])
            except ValueError:
                raise SchemaError(f'bad frequency in column {column!r}', self.path, 1)

    def numeric_columns(self, frame):
        return list(frame.columns)

    def _build(self, frame):
        self.check_increasing(frame, 't_s')
        f_columns = [c for c in frame.columns if c.startswith(SPECTROGRAM_FREQ_PREFIX)]
        if len(f_columns) < 4:
            raise SchemaError('at least four frequency columns are required', self.path, 1)
        frequency = np.array([float(c[len(SPECTROGRAM_FREQ_PREFIX):]) for c in f_columns])
        vdc = None
        if SPECTROGRAM_VDC_COLUMN in frame:
            vdc = frame[SPECTROGRAM_VDC_COLUMN].to_numpy()
        try:
            return model.Spectrogram(frame['t_s'].to_numpy(), frequency,
                                     frame[f_columns].to_numpy(), vdc, self.get_name())
        except ParameterError as e:
            raise SchemaError(str(e), self.path)


READERS = {
    'ramsey': RamseyReader,
    'telegraph': TelegraphReader,
    'charge': ChargeTrackReader,
    'transitions': TransitionReader,
    'band': BandReader,
    'spectrogram': SpectrogramReader,
}


def load_trace_csv(path, schema):
    '''
    Load a CSV file of the given schema into its domain object
    '''
    if schema not in READERS:
        raise ValueError(f'Unknown schema {schema!r}')
    return READERS[schema](path).load()


def spectrogram_frame(spectrogram):
    data = {'t_s': spectrogram.times}
    if spectrogram.vdc is not None:
        data[SPECTROGRAM_VDC_COLUMN] = spectrogram.vdc
    for k, f in enumerate(spectrogram.frequency):
        data[f'{SPECTROGRAM_FREQ_PREFIX}{float(f)!r}'] = spectrogram.magnitude[:, k]
    return pd.DataFrame(data)


def write_trace_csv(obj, path):
    '''
    Write a domain object in its CSV schema so it can be read back with
    `load_trace_csv`
    '''
    if isinstance(obj, model.Spectrogram):
        frame = spectrogram_frame(obj)
    else:
        frame = obj.to_frame()
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    frame.to_csv(path, index=False, na_rep='nan')
    return path


################################################################################
# Reports
################################################################################
def dump_json(state):
    return json.dumps(util.jsonable(state), indent=4, sort_keys=True) + '\n'


def save_state(path, state):
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    path.write_text(dump_json(state))
    return path


def load_state(path):
    path = Path(path)
    if not path.exists():
        raise IOError(f'{path} does not exist')
    return json.loads(path.read_text())


def timing_filename(path):
    path = Path(path)
    return path.with_name(f'{path.stem}.timing.json')


def write_report(report, path):
    '''
    Write a report as JSON. Wall-clock time goes to a separate
    `<name>.timing.json` so reruns produce byte-identical reports.
    '''
    path = save_state(path, report.get_state())
    save_state(timing_filename(path), {'command': report.command,
                                       'wall_clock_s': report.wall_clock})
    return path


def read_report(path):
    state = load_state(path)
    for key in ('schema', 'command', 'inputs', 'results', 'warnings'):
        if key not in state:
            raise SchemaError(f'report is missing {key!r}', path)
    report = model.Report.from_state(state)
    timing = timing_filename(path)
    if timing.exists():
        report.wall_clock = load_state(timing)['wall_clock_s']
    return report
