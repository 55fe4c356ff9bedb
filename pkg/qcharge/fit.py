'''
Fitting Hamiltonian parameters to measured transition frequencies
'''
import logging
log = logging.getLogger(__name__)

import numpy as np
import pandas as pd
from scipy import optimize

from qcharge import spectra, util
from qcharge.config import EL_GRID, GHZ, PHI0_SQ_OVER_H
from qcharge.errors import FitError, ParameterError, QChargeError
from qcharge.model import (
    CircuitParams, ElSweepResult, FitReport, FrequencyBand, InductanceBound,
    SolverConfig, TransitionSet
)


# Parameters that start at zero are scaled by this (GHz) during optimization.
ZERO_SCALE = 0.05
# Penalty residual (GHz) returned when the optimizer steps outside the
# physical parameter region.
PENALTY = 1e3


class TransitionModel:
    '''
    Residuals of a circuit model against a measured transition set

    The free parameters are theta = [e_c, e_j1, ..., e_jN]. All other
    circuit parameters (e_l, phi_ext) come from `template`. Predictions are
    computed once per (parity, n_g) group and non-adjacent transitions are
    summed from the ladder.
    '''

    def __init__(self, measured, template, config):
        if len(measured) == 0:
            raise ParameterError('No measured transitions to fit')
        self.measured = measured
        self.template = template
        self.target = measured.frequencies()
        n_levels = max(t.j for t in measured) + 1
        self.config = config.replace(n_levels=max(n_levels, 2))
        if template.e_l == 0:
            self.config.validate(template.order)
            self.phi_scale = None
        else:
            self.phi_scale = spectra.shunted_phi_scale(template)
        self.groups = []
        index = {id(t): k for k, t in enumerate(measured)}
        for key, entries in measured.groups().items():
            self.groups.append((key, [(index[id(t)], t.i, t.j) for t in entries]))

    def unpack(self, theta):
        return self.template.replace(e_c=theta[0], e_j=list(theta[1:]))

    def _ladder(self, params):
        if params.e_l > 0:
            return spectra.shunted_frequencies(params, self.config, self.phi_scale)
        return spectra.ladder_frequencies(params, self.config, certify=False)

    def predict(self, theta):
        params = self.unpack(theta)
        predicted = np.empty(len(self.target))
        shunted = None
        for (parity, n_g), items in self.groups:
            if params.e_l > 0:
                # Offset charge and parity are gauged away.
                if shunted is None:
                    shunted = self._ladder(params)
                f = shunted
            else:
                f = self._ladder(params.replace(parity=parity, n_g=n_g))
            energies = np.concatenate(([0.0], np.cumsum(f)))
            for k, i, j in items:
                predicted[k] = energies[j] - energies[i]
        return predicted

    def residuals(self, theta):
        try:
            return self.predict(theta) - self.target
        except ParameterError:
            return np.full(len(self.target), PENALTY)


def initial_guess(measured):
    '''
    Single-harmonic starting point from f01 and f12

    The anharmonicity f01 - f12 approximates E_C and f01 + E_C approximates
    the plasma frequency sqrt(8 E_J E_C).
    '''
    groups = measured.groups()
    keys = sorted(groups, key=lambda k: (k[0] != 'even', abs(k[1])))
    for key in keys:
        try:
            f01 = measured.lookup(0, 1, *key)
            f12 = measured.lookup(1, 2, *key)
        except KeyError:
            continue
        e_c = f01 - f12
        if e_c <= 0:
            raise ParameterError('f12 must lie below f01 to estimate E_C')
        e_j = (f01 + e_c) ** 2 / (8 * e_c)
        return CircuitParams(e_c, [e_j])
    raise ParameterError('Both f01 and f12 are needed for an initial guess')


def _scaled_fit(model, theta0, model_name, guess, simplex=True):
    theta0 = np.asarray(theta0, dtype=float)
    scale = np.where(np.abs(theta0) > 0, np.abs(theta0), ZERO_SCALE)
    u0 = theta0 / scale
    n_params = len(u0)

    def residuals(u):
        return model.residuals(u * scale)

    iterations = 0
    n_evaluations = 0
    u = u0
    if simplex:
        def cost(u):
            r = residuals(u)
            return float(np.dot(r, r))
        initial_simplex = np.vstack([u0, u0 + 1e-3 * np.eye(n_params)])
        nm = optimize.minimize(cost, u0, method='Nelder-Mead', options={
            'initial_simplex': initial_simplex,
            'maxiter': 200 * n_params,
            'xatol': 1e-10,
            'fatol': 1e-20,
        })
        u = nm.x
        iterations += nm.nit
        n_evaluations += nm.nfev
        log.debug('%s simplex stage: cost %.3g after %d iterations', model_name, nm.fun, nm.nit)

    ls = optimize.least_squares(residuals, u, method='lm', diff_step=1e-6,
                                xtol=1e-14, ftol=1e-14, gtol=1e-14,
                                max_nfev=300 * (n_params + 1))
    n_evaluations += ls.nfev
    if ls.status <= 0:
        raise FitError(f'{model_name} fit did not converge: {ls.message}')

    theta = ls.x * scale
    params = model.unpack(theta)
    n_data = len(ls.fun)
    dof = n_data - n_params
    if dof > 0:
        jac = ls.jac / scale
        s2 = float(np.dot(ls.fun, ls.fun)) / dof
        cov = np.linalg.pinv(jac.T @ jac) * s2
        stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    else:
        stderr = np.full(n_params, np.nan)

    report = FitReport(
        ls.fun * 1e3,
        model=model_name,
        params=params,
        guess=guess,
        labels=[t.label for t in model.measured],
        stderr=[float(s) for s in stderr],
        iterations=iterations,
        n_evaluations=n_evaluations,
        converged=True,
        message=str(ls.message),
    )
    log.info('%s fit: rms %.4g MHz, e_c=%.6g GHz, e_j=%s GHz', model_name, report.rms,
             params.e_c, np.array2string(np.asarray(params.e_j), precision=6))
    return report


def fit_harmonics(measured, order, guess=None, config=None):
    '''
    Fit the unshunted transmon with `order` Josephson harmonics

    Parameters
    ----------
    measured : TransitionSet
        Measured transitions in GHz, possibly at several (parity, n_g).
    order : int
        Number of harmonics N.
    guess : CircuitParams
        Starting point. Harmonics are padded with zeros or truncated to
        `order`. Defaults to `initial_guess(measured)`.
    config : SolverConfig

    Returns
    -------
    report : FitReport
    '''
    config = SolverConfig() if config is None else config
    if order < 1:
        raise ParameterError('At least one harmonic is required')
    if len(measured) < order + 1:
        raise FitError(f'{len(measured)} transitions cannot constrain {order + 1} parameters')
    guess = initial_guess(measured) if guess is None else guess
    e_j = (list(guess.e_j) + [0.0] * order)[:order]
    guess = guess.replace(e_j=e_j, e_l=0.0, phi_ext=0.0)
    model = TransitionModel(measured, guess, config)
    return _scaled_fit(model, [guess.e_c] + e_j, f'H{order}', guess)


def fit_harmonic_orders(measured, orders=(1, 2, 3, 4, 5), guess=None, config=None):
    '''
    Fit increasing harmonic orders, seeding each order from the previous one

    Because each fit starts at the previous optimum with the new harmonic set
    to zero, the residual never grows with the order.
    '''
    reports = []
    for order in orders:
        if reports:
            guess = reports[-1].params
        reports.append(fit_harmonics(measured, order, guess, config))
    return reports


def fit_shunted(measured, e_l, guess, config=None):
    '''
    Fit e_c and the harmonics of the shunted model at fixed e_l

    Measured transitions are compared at n_g = 0; the shunted spectrum has no
    offset-charge dependence.
    '''
    config = SolverConfig() if config is None else config
    if e_l <= 0:
        raise ParameterError('fit_shunted requires e_l > 0')
    if len(measured) < guess.order + 1:
        raise FitError(f'{len(measured)} transitions cannot constrain {guess.order + 1} parameters')
    guess = guess.replace(e_l=e_l, n_g=0.0, parity='even')
    model = TransitionModel(measured, guess, config)
    return _scaled_fit(model, [guess.e_c] + list(guess.e_j), f'H_full(e_l={e_l:g})',
                       guess, simplex=False)


def default_el_grid():
    lo, hi, n = EL_GRID
    return np.geomspace(lo, hi, n)


def el_sweep(measured, e_l_grid=None, guess=None, config=None, order=3, max_workers=None):
    '''
    Refit the measured n_g = 0 transitions with the shunted model along a grid
    of inductive energies

    At each grid point e_c and `order` harmonics are refit with e_l fixed, and
    the fitted parameters are used to predict the unshunted (e_l = 0)
    spectrum at n_g = 0. The starting point at each point is the unshunted fit
    with E_J1 lowered by e_l, so results do not depend on evaluation order.

    Returns
    -------
    sweep : ElSweepResult
        Per-point fits and predictions; failed points hold None and are listed
        in `failures`.
    '''
    config = SolverConfig() if config is None else config
    grid = default_el_grid() if e_l_grid is None else np.asarray(e_l_grid, dtype=float)
    if len(grid) == 0 or np.any(grid < 0) or not util.is_strictly_increasing(grid):
        raise ParameterError('E_L grid must be non-negative and strictly increasing')

    data = measured.select(parity='even', n_g=0.0)
    if len(data) < order + 1:
        raise FitError(f'{len(data)} even-parity n_g=0 transitions cannot constrain '
                       f'{order + 1} parameters')
    base = fit_harmonics(data, order, guess, config)

    def fit_point(e_l):
        if e_l == 0:
            return base
        e_j = list(base.params.e_j)
        e_j[0] = max(e_j[0] - e_l, 0.5 * e_j[0])
        return fit_shunted(data, e_l, base.params.replace(e_j=e_j), config)

    def run(e_l):
        try:
            fit = fit_point(e_l)
            bare = fit.params.replace(e_l=0.0, n_g=0.0, parity='even', phi_ext=0.0)
            predicted = spectra.transition_frequencies(bare, config)
        except QChargeError as e:
            log.warning('E_L sweep point %g GHz failed: %s', e_l, e)
            return None, None, f'{type(e).__name__}: {e}'
        return fit, predicted, None

    log.info('Sweeping %d E_L values from %g to %g GHz', len(grid), grid[0], grid[-1])
    results = util.parallel_map(run, grid, max_workers)
    failures = {k: r[2] for k, r in enumerate(results) if r[2] is not None}
    sweep = ElSweepResult(e_l=[float(e) for e in grid],
                          fits=[r[0] for r in results],
                          predictions=[r[1] for r in results],
                          failures=failures)
    sweep.validate()
    return sweep


def _transition(predicted, i, j):
    '''
    f_ij at even parity, n_g = 0, summed from the nearest-neighbour ladder
    '''
    try:
        return sum(predicted.lookup(k, k + 1, 'even', 0.0) for k in range(i, j))
    except KeyError:
        raise ParameterError(f'Predicted spectrum lacks f{i}{j}; increase n_levels')


def inductance_bound(sweep, band):
    '''
    Largest E_L whose unshunted prediction lies inside the measured band

    Every transition of the band must fall inside [min, max], inclusive. If
    no grid point qualifies, the smallest grid point is returned with
    `unbounded_below_grid` set.
    '''
    inside = []
    for e_l, predicted in zip(sweep.e_l, sweep.predictions):
        if predicted is None:
            continue
        if all(band.contains(i, j, _transition(predicted, i, j)) for i, j in band.bands):
            inside.append(e_l)
    if not inside:
        e_l = sweep.e_l[0]
        log.warning('No E_L on the grid reproduces the band; bound lies below %g GHz', e_l)
        return InductanceBound(e_l_max=e_l, l_min=spectra.el_to_inductance(e_l),
                               unbounded_below_grid=True, inside=[])
    e_l_max = max(inside)
    bound = InductanceBound(e_l_max=e_l_max, l_min=spectra.el_to_inductance(e_l_max),
                            unbounded_below_grid=False, inside=inside)
    log.info('E_L <= %g GHz (L >= %.3g H)', bound.e_l_max, bound.l_min)
    return bound


def frequency_band(sets, margin=0.0):
    '''
    Band spanned by several transition sets, widened by `margin` GHz
    '''
    bands = {}
    for s in sets:
        for t in s:
            lo, hi = bands.get((t.i, t.j), (np.inf, -np.inf))
            bands[(t.i, t.j)] = (min(lo, t.frequency), max(hi, t.frequency))
    return FrequencyBand({k: (lo - margin, hi + margin) for k, (lo, hi) in bands.items()})


def predicted_frequency_shift(sweep, reference):
    '''
    Shift (MHz) of each predicted unshunted transition from `reference`
    '''
    rows = []
    for e_l, predicted in zip(sweep.e_l, sweep.predictions):
        if predicted is None:
            continue
        for t in predicted:
            try:
                f_ref = reference.lookup(t.i, t.j, 'even', 0.0)
            except KeyError:
                continue
            rows.append((e_l, t.i, t.j, (t.frequency - f_ref) * 1e3))
    return pd.DataFrame(rows, columns=['e_l_ghz', 'i', 'j', 'shift_mhz'])


def flux_dispersion_bound(e_j, f01, shift):
    '''
    Upper bound on E_L (GHz) from the largest unobserved flux-induced shift

    E_L <= E_J sqrt(8 shift / f01)
    '''
    if e_j <= 0 or f01 <= 0:
        raise ParameterError('e_j and f01 must be positive')
    if shift < 0:
        raise ParameterError('Frequency shift must be non-negative')
    return e_j * np.sqrt(8 * shift / f01)


def series_inductance(e_j2, e_j):
    '''
    Series inductance (henry) implied by a second harmonic

    |L_s| = 4 (Phi_0 / 2 pi)^2 |E_J2| / E_J^2 with energies expressed as
    frequencies. A series inductance produces a negative E_J2; the sign is
    reported in the returned note.
    '''
    if e_j <= 0:
        raise ParameterError('e_j must be positive')
    l_s = 4 * PHI0_SQ_OVER_H * abs(e_j2) * GHZ / (e_j * GHZ) ** 2
    if e_j2 < 0:
        note = 'negative E_J2, consistent with a series inductance'
    elif e_j2 > 0:
        note = 'positive E_J2, not explained by a series inductance'
    else:
        note = 'no second harmonic'
    return l_s, note
