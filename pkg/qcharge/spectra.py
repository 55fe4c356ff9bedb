'''
Eigenspectra of the transmon with higher Josephson harmonics

Two models are supported:

* the unshunted transmon, diagonalized in the charge basis |n>, n = -N_c..N_c,
  which depends on the offset charge n_g and the quasiparticle parity;
* the inductively shunted transmon, diagonalized in a truncated oscillator
  basis. The inductive shunt makes the offset charge a removable gauge so the
  spectrum does not depend on n_g or parity.

All energies and frequencies are E/h in GHz.
'''
import logging
log = logging.getLogger(__name__)

from functools import lru_cache
import math

import numpy as np
import pandas as pd
from scipy import linalg

from qcharge.config import GHZ, PHI0_SQ_OVER_H, SHUNT_EL_FLOOR
from qcharge.errors import AmbiguousLadderError, ConvergenceError, ParameterError
from qcharge.model import PerturbativeTransition, SolverConfig, Transition, TransitionSet


def inductance_to_el(inductance):
    '''
    Inductive energy E_L/h (GHz) of an inductance in henry
    '''
    if not inductance > 0:
        raise ParameterError(f'Inductance must be positive, got {inductance}')
    return PHI0_SQ_OVER_H / inductance / GHZ


def el_to_inductance(e_l):
    '''
    Inductance (henry) with inductive energy E_L/h (GHz). E_L = 0 maps to an
    infinite inductance.
    '''
    if e_l < 0:
        raise ParameterError(f'e_l must be non-negative, got {e_l}')
    if e_l == 0:
        return np.inf
    return PHI0_SQ_OVER_H / (e_l * GHZ)


################################################################################
# Charge basis
################################################################################
def _check_charge_model(params, charge_cutoff):
    if params.e_l != 0:
        raise ParameterError(f'The charge-basis solver requires e_l = 0, got '
                             f'e_l={params.e_l} GHz; use the shunted model')
    if params.order > charge_cutoff:
        raise ParameterError(f'Harmonic order {params.order} exceeds the charge '
                             f'cutoff {charge_cutoff}')


def build_charge_hamiltonian(params, config=None):
    '''
    Dense Hamiltonian of the unshunted transmon in the charge basis

    The diagonal holds 4 E_C (n - n_g - p/2)^2 with p = 1 for odd parity. The
    k-th harmonic couples |n> and |n +/- k> with amplitude -E_Jk / 2.
    '''
    config = SolverConfig() if config is None else config
    _check_charge_model(params, config.charge_cutoff)
    n_c = config.charge_cutoff
    n = np.arange(-n_c, n_c + 1)
    h = np.diag(4 * params.e_c * (n - params.n_g - params.offset) ** 2)
    for k, e_jk in enumerate(params.e_j, 1):
        off = np.full(len(n) - k, -0.5 * e_jk)
        h += np.diag(off, k) + np.diag(off, -k)
    return h


def _charge_levels(params, charge_cutoff, n_levels):
    # Lower banded storage: row k holds the k-th subdiagonal.
    n = np.arange(-charge_cutoff, charge_cutoff + 1)
    band = np.zeros((params.order + 1, len(n)))
    band[0] = 4 * params.e_c * (n - params.n_g - params.offset) ** 2
    for k, e_jk in enumerate(params.e_j, 1):
        band[k, :len(n) - k] = -0.5 * e_jk
    return linalg.eigvals_banded(band, lower=True, select='i',
                                 select_range=(0, n_levels - 1))


def _certify(solve, cutoff, config, scale, label):
    '''
    Evaluate `solve` at `cutoff`, doubling the cutoff until the transitions
    change by less than the configured tolerance
    '''
    f = solve(cutoff)
    err = np.inf
    for _ in range(config.max_doublings):
        f_next = solve(2 * cutoff)
        err = float(np.max(np.abs(f_next - f) / np.maximum(np.abs(f_next), scale)))
        log.debug('%s cutoff %d -> %d: max relative change %.3g', label, cutoff,
                  2 * cutoff, err)
        if err < config.conv_tol:
            return f
        cutoff, f = 2 * cutoff, f_next
    raise ConvergenceError(
        f'{label} did not converge to {config.conv_tol:g} (reached {err:.3g} at '
        f'cutoff {cutoff})', achieved_tol=err, cutoff=cutoff)


def ladder_frequencies(params, config=None, certify=True):
    '''
    Frequencies f_{i,i+1} (GHz) of the lowest `config.n_levels` levels

    Dispatches to the charge-basis solver when e_l = 0 and to the shunted
    solver otherwise. With `certify` the basis cutoff is doubled until the
    result is stable to `config.conv_tol`.
    '''
    config = SolverConfig() if config is None else config
    if params.e_l > 0:
        return _shunted_ladder_frequencies(params, config, certify)

    _check_charge_model(params, config.charge_cutoff)

    def solve(cutoff):
        return np.diff(_charge_levels(params, cutoff, config.n_levels))

    if not certify:
        return solve(config.charge_cutoff)
    return _certify(solve, config.charge_cutoff, config, params.e_c, 'Charge basis')


def transition_frequencies(params, config=None, certify=True):
    '''
    Predicted nearest-neighbour transitions f01, f12, ... as a TransitionSet

    Parameters
    ----------
    params : CircuitParams
        Circuit parameters. For the shunted model n_g and parity are ignored.
    config : SolverConfig
        Basis cutoffs, convergence tolerance and number of levels.
    certify : bool
        If True, verify that doubling the cutoff changes no transition by more
        than `config.conv_tol` (relative). Fits turn this off for speed.

    Returns
    -------
    transitions : TransitionSet
        Predicted set labelled with the parity and n_g of the calculation.
    '''
    config = SolverConfig() if config is None else config
    config.validate(params.order)
    f = ladder_frequencies(params, config, certify)

    notes = []
    parity, n_g = params.parity, params.n_g
    if params.e_l > 0:
        if params.n_g != 0 or params.parity != 'even':
            log.warning('Offset charge and parity are gauged away by the inductive '
                        'shunt; ignoring n_g=%g, parity=%s', params.n_g, params.parity)
            notes.append('n_g and parity ignored for the shunted model')
        parity, n_g = 'even', 0.0

    degenerate = np.abs(f) < 1e-9 * max(1.0, np.max(np.abs(f)))
    if np.any(degenerate):
        pairs = ', '.join(f'f{i}{i + 1}' for i in np.flatnonzero(degenerate))
        notes.append(f'degenerate levels: {pairs}')
    f = np.clip(f, 0, None)

    entries = [Transition(i, i + 1, fi, parity, n_g) for i, fi in enumerate(f)]
    return TransitionSet(entries, 'predicted', notes)


def charge_dispersion(params, config=None, i=0):
    '''
    Peak-to-peak charge dispersion |f_i(n_g=0) - f_i(n_g=1/2)| of transition
    f_{i,i+1} in GHz
    '''
    config = SolverConfig() if config is None else config
    if params.e_l != 0:
        raise ParameterError('Charge dispersion is only defined for the unshunted model')
    if i < 0:
        raise ParameterError('Transition index must be non-negative')
    if i >= config.n_levels - 1:
        raise ParameterError(f'Transition f{i}{i + 1} needs n_levels >= {i + 2}, '
                             f'got {config.n_levels}')
    config.validate(params.order)
    f0 = ladder_frequencies(params.replace(n_g=0.0, parity='even'), config)
    f1 = ladder_frequencies(params.replace(n_g=0.5, parity='even'), config)
    return abs(f0[i] - f1[i])


def charge_spectrum(params, n_g_values, config=None, parities=('even', 'odd')):
    '''
    Transition frequencies as a function of n_g for each parity

    Returns a DataFrame with columns n_g, parity, i, j, f_ghz.
    '''
    config = SolverConfig() if config is None else config
    config.validate(params.order)
    rows = []
    for parity in parities:
        for n_g in np.asarray(n_g_values, dtype=float):
            p = params.replace(n_g=n_g, parity=parity)
            for i, f in enumerate(ladder_frequencies(p, config, certify=False)):
                rows.append((n_g, parity, i, i + 1, f))
    return pd.DataFrame(rows, columns=['n_g', 'parity', 'i', 'j', 'f_ghz'])


def asymptotic_level_dispersion(e_c, e_j, m):
    '''
    Asymptotic peak-to-peak charge dispersion (GHz) of level m for E_J >> E_C
    with a single harmonic
    '''
    if e_c <= 0 or e_j <= 0:
        raise ParameterError('e_c and e_j must be positive')
    return e_c * 2 ** (4 * m + 5) / math.factorial(m) * np.sqrt(2 / np.pi) \
        * (e_j / (2 * e_c)) ** (m / 2 + 3 / 4) * np.exp(-np.sqrt(8 * e_j / e_c))


def asymptotic_dispersion(e_c, e_j, i):
    '''
    Asymptotic charge dispersion (GHz) of transition f_{i,i+1}
    '''
    return (asymptotic_level_dispersion(e_c, e_j, i)
            + asymptotic_level_dispersion(e_c, e_j, i + 1))


def doublet_frequency(f_mean, delta_f, n_g, parity='even', i=3):
    '''
    Cosine model of a parity-split transition

    f = f_mean + (-1)^(p + i) (delta_f / 2) cos(2 pi n_g) where p is 0 for even
    and 1 for odd parity.
    '''
    p = 1 if parity == 'odd' else 0
    return f_mean + (-1) ** (p + i) * 0.5 * delta_f * np.cos(2 * np.pi * np.asarray(n_g))


################################################################################
# Inductively shunted model
################################################################################
@lru_cache(maxsize=32)
def _oscillator_basis(dim, phi_scale):
    '''
    Discrete-variable representation of a truncated oscillator basis

    Returns the eigenvalues x of phi = phi_scale (a + a^dagger), the
    eigenvectors v (Fock -> DVR), the real antisymmetric matrix A with
    n = i A in the DVR and the kinetic matrix n^2 = A A^T.
    '''
    sqrt_n = np.sqrt(np.arange(1, dim))
    x, v = linalg.eigh_tridiagonal(np.zeros(dim), phi_scale * sqrt_n)
    a = np.diag(sqrt_n, 1)
    n_fock = (a.T - a) / (2 * phi_scale)
    n_dvr = v.T @ n_fock @ v
    kinetic = n_dvr @ n_dvr.T
    for array in (x, v, n_dvr, kinetic):
        array.flags.writeable = False
    return x, v, n_dvr, kinetic


def shunted_phi_scale(params):
    '''
    Zero-point phase spread used to scale the oscillator basis

    The basis is matched to the total curvature of the potential at its
    minimum, E_L + sum k^2 E_Jk, which keeps it compact when E_L << E_J.
    '''
    curvature = params.e_l + sum(k ** 2 * e for k, e in enumerate(params.e_j, 1))
    curvature = max(curvature, params.e_l)
    return (2 * params.e_c / curvature) ** 0.25


def _check_shunted_model(params, osc_dim):
    if params.e_l < SHUNT_EL_FLOOR:
        raise ParameterError(
            f'e_l={params.e_l} GHz is below the {SHUNT_EL_FLOOR} GHz floor of the '
            'oscillator basis; use the charge-basis model')
    if osc_dim < 50:
        raise ParameterError(f'osc_dim must be at least 50, got {osc_dim}')


def _shunted_dvr_hamiltonian(params, dim, phi_scale):
    x, v, n_dvr, kinetic = _oscillator_basis(dim, round(phi_scale, 12))
    # phi' = phi + phi_ext moves the external flux onto the cosine terms.
    potential = 0.5 * params.e_l * x ** 2
    for k, e_jk in enumerate(params.e_j, 1):
        potential -= e_jk * np.cos(k * (x - params.phi_ext))
    h = 4 * params.e_c * kinetic
    h[np.diag_indices(dim)] += potential
    return h, v, n_dvr


def build_shunted_hamiltonian(params, config=None, phi_scale=None):
    '''
    Hamiltonian of the inductively shunted transmon in the Fock basis of the
    scaled oscillator

    H = 4 E_C n^2 + E_L phi^2 / 2 - sum_k E_Jk cos(k (phi - phi_ext))

    written in the shifted variable phi + phi_ext. The cosine terms are
    evaluated exactly on the truncated phase operator.
    '''
    config = SolverConfig() if config is None else config
    _check_shunted_model(params, config.osc_dim)
    phi_scale = shunted_phi_scale(params) if phi_scale is None else phi_scale
    h, v, _ = _shunted_dvr_hamiltonian(params, config.osc_dim, phi_scale)
    return v @ h @ v.T


def plasmon_ladder(energies, vectors, charge_operator, n_levels):
    '''
    Identify the plasmon ladder among the eigenstates

    Starting from the ground state, each next rung is the higher state with
    the largest charge matrix element |<m|n|current>|.

    Parameters
    ----------
    energies : array (K,)
        Sorted eigenvalues.
    vectors : array (M, K)
        Eigenvectors as columns.
    charge_operator : array (M, M)
        Real antisymmetric A with n = i A in the same basis as `vectors`.
    n_levels : int
        Number of rungs requested.

    Returns
    -------
    ladder : list of int
        Indices of the rungs found. Fewer than `n_levels` indices means the
        eigenvalue subset ended before the ladder did.
    '''
    ladder = [0]
    reference = None
    n_states = len(energies)
    while len(ladder) < n_levels:
        current = ladder[-1]
        candidates = np.arange(current + 1, n_states)
        if len(candidates) == 0:
            break
        elements = np.abs(vectors[:, candidates].T @ (charge_operator @ vectors[:, current]))
        order = np.argsort(elements)[::-1]
        best = order[0]
        if reference is None:
            reference = elements[best]
        if elements[best] < 0.5 * reference or candidates[best] == n_states - 1:
            break
        if len(order) > 1 and elements[order[1]] >= 0.99 * elements[best]:
            level = len(ladder)
            raise AmbiguousLadderError(
                f'Rung {level} of the plasmon ladder is ambiguous between states '
                f'{candidates[best]} and {candidates[order[1]]}',
                level=level, candidates=candidates[order[:2]],
                elements=elements[order[:2]])
        ladder.append(int(candidates[best]))
    return ladder


def plasmon_transitions(energies, vectors, charge_operator, config):
    '''
    Nearest-neighbour transitions along the plasmon ladder

    Returns a predicted TransitionSet at even parity and n_g = 0, or None if
    the eigenvalue subset ends before `config.n_levels` rungs are found.
    '''
    ladder = plasmon_ladder(energies, vectors, charge_operator, config.n_levels)
    if len(ladder) < config.n_levels:
        return None
    f = np.diff(np.asarray(energies)[ladder])
    entries = [Transition(i, i + 1, fi, 'even', 0.0) for i, fi in enumerate(f)]
    return TransitionSet(entries, 'predicted')


def _shunted_solve(params, dim, n_levels, phi_scale):
    h, _, n_dvr = _shunted_dvr_hamiltonian(params, dim, phi_scale)
    n_states = min(dim, max(8 * n_levels, 60))
    config = SolverConfig(n_levels=n_levels)
    while True:
        energies, vectors = linalg.eigh(h, subset_by_index=[0, n_states - 1])
        transitions = plasmon_transitions(energies, vectors, n_dvr, config)
        if transitions is not None:
            return transitions.frequencies()
        if n_states == dim:
            raise ConvergenceError(
                f'Plasmon ladder of {n_levels} levels not resolved within an '
                f'oscillator basis of dimension {dim}', achieved_tol=np.inf, cutoff=dim)
        n_states = min(dim, 2 * n_states)
        log.debug('Extending eigenvalue subset to %d states', n_states)


def _shunted_ladder_frequencies(params, config, certify=True, phi_scale=None):
    _check_shunted_model(params, config.osc_dim)
    phi_scale = shunted_phi_scale(params) if phi_scale is None else phi_scale

    def solve(dim):
        return _shunted_solve(params, dim, config.n_levels, phi_scale)

    if not certify:
        return solve(config.osc_dim)
    return _certify(solve, config.osc_dim, config, params.e_c, 'Oscillator basis')


def shunted_frequencies(params, config=None, phi_scale=None):
    '''
    Uncertified shunted-model ladder with a fixed basis scale. Fits use this
    so the cached basis is reused across evaluations.
    '''
    config = SolverConfig() if config is None else config
    return _shunted_ladder_frequencies(params, config, certify=False, phi_scale=phi_scale)


def perturbative_transition(params, i=0, config=None):
    '''
    First-order estimate of f_{i,i+1} (GHz) for a weak inductive shunt

    The unshunted frequency is evaluated at n_g = 0 with all harmonics, and
    the shunt adds

        E_L sqrt(2 E_C / E_J1) (1 - (i + 1) E_L / (4 E_J1) - phi_ext^2 E_L / (4 E_J1))

    Only the first harmonic enters the correction.
    '''
    config = SolverConfig() if config is None else config
    e_j1 = params.e_j[0]
    if e_j1 <= 0:
        raise ParameterError('The perturbative shunt correction requires e_j[0] > 0')
    flags = []
    ratio = params.e_l / e_j1
    if ratio >= 0.05:
        flags.append(f'e_l/e_j1 = {ratio:.3g} is not small; perturbative estimate unreliable')
    if params.order > 1:
        log.warning('Higher harmonics are ignored by the shunt correction')
        flags.append('higher harmonics ignored in the shunt correction')

    bare = params.replace(e_l=0.0, n_g=0.0, parity='even', phi_ext=0.0)
    config = config.replace(n_levels=max(config.n_levels, i + 2))
    f_bare = ladder_frequencies(bare, config, certify=False)[i]

    e_l, phi = params.e_l, params.phi_ext
    correction = e_l * np.sqrt(2 * params.e_c / e_j1) \
        * (1 - (i + 1) * e_l / (4 * e_j1) - phi ** 2 * e_l / (4 * e_j1))
    return PerturbativeTransition(frequency=float(f_bare + correction), flags=flags)
