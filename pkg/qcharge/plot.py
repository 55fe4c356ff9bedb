'''
Tabular plot data for the figures produced by each command

Every function returns a DataFrame with one column per plotted axis; the
CLI writes these next to the reports.
'''
from functools import singledispatch
from pathlib import Path

import numpy as np
import pandas as pd

from qcharge import model
from qcharge.readers import spectrogram_frame


@singledispatch
def plot_frame(obj):
    raise TypeError(f'No plot data for {type(obj).__name__}')


@plot_frame.register
def _(obj: pd.DataFrame):
    return obj


@plot_frame.register(model.TransitionSet)
@plot_frame.register(model.RamseyTrace)
@plot_frame.register(model.TelegraphTrace)
@plot_frame.register(model.SpectrumEstimate)
@plot_frame.register(model.Autocorrelation)
@plot_frame.register(model.PeakTracks)
@plot_frame.register(model.ChargeTrack)
@plot_frame.register(model.PsdEstimate)
@plot_frame.register(model.FrequencyBand)
def _(obj):
    return obj.to_frame()


@plot_frame.register
def _(obj: model.Spectrogram):
    return spectrogram_frame(obj)


@plot_frame.register
def _(obj: model.ElSweepResult):
    '''
    Fitted parameters and residual versus E_L
    '''
    order = max((len(f.params.e_j) for f in obj.fits if f is not None), default=0)
    rows = []
    for e_l, fit in zip(obj.e_l, obj.fits):
        if fit is None:
            rows.append([e_l, np.nan, np.nan] + [np.nan] * order)
        else:
            e_j = list(fit.params.e_j) + [np.nan] * (order - len(fit.params.e_j))
            rows.append([e_l, fit.rms, fit.params.e_c] + e_j)
    columns = ['e_l_ghz', 'rms_mhz', 'e_c_ghz'] + [f'e_j{k + 1}_ghz' for k in range(order)]
    return pd.DataFrame(rows, columns=columns)


def residual_frame(reports):
    '''
    Residual per transition for a list of fits, one column per model
    '''
    data = {'transition': reports[0].labels}
    for report in reports:
        data[f'{report.model}_mhz'] = report.residuals
    return pd.DataFrame(data)


def fit_curve_frame(x, y, y_fit, x_name, y_name):
    return pd.DataFrame({x_name: x, y_name: y, f'{y_name}_fit': y_fit})


def emit_plot_data(obj, path):
    '''
    Write the plot data of `obj` as CSV and return the path
    '''
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    plot_frame(obj).to_csv(path, index=False, na_rep='nan')
    return path
