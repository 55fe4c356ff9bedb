import numpy as np
import pytest

from qcharge import spectra
from qcharge.config import PARAMETER_SETS
from qcharge.model import CircuitParams, SolverConfig, Transition, TransitionSet


@pytest.fixture
def device():
    return CircuitParams(**PARAMETER_SETS['device'])


@pytest.fixture
def run17_h5():
    return CircuitParams(**PARAMETER_SETS['run17_h5'])


@pytest.fixture
def run17_h3():
    return CircuitParams(**PARAMETER_SETS['run17_h3'])


@pytest.fixture
def make_transitions():
    '''
    Noiseless "measured" transitions computed from a parameter set
    '''
    def make(params, n_levels=6, parities=('even', 'odd'), n_g=0.0, noise=0.0, seed=0,
             certify=False):
        rng = np.random.default_rng(seed)
        config = SolverConfig(n_levels=n_levels)
        entries = []
        for parity in parities:
            p = params if params.e_l > 0 else params.replace(parity=parity, n_g=n_g)
            for t in spectra.transition_frequencies(p, config, certify=certify):
                f = t.frequency + (rng.normal(0, noise) if noise else 0.0)
                entries.append(Transition(t.i, t.j, f, parity, n_g))
        return TransitionSet(entries, 'measured')
    return make
