class QChargeError(Exception):
    pass


class ParameterError(QChargeError, ValueError):
    '''
    Physical parameters or call preconditions are invalid.
    '''


class ConvergenceError(QChargeError):
    '''
    Basis truncation could not be certified.

    Attributes
    ----------
    achieved_tol : float
        Largest relative change of a transition frequency at the last doubling.
    cutoff : int
        Cutoff (charge or oscillator) at which the solver gave up.
    '''

    def __init__(self, message, achieved_tol, cutoff):
        super().__init__(message)
        self.achieved_tol = achieved_tol
        self.cutoff = cutoff


class AmbiguousLadderError(QChargeError):
    '''
    Two eigenstates are equally good continuations of the plasmon ladder.
    '''

    def __init__(self, message, level, candidates, elements):
        super().__init__(message)
        self.level = level
        self.candidates = tuple(candidates)
        self.elements = tuple(elements)


class FitError(QChargeError):
    pass


class SchemaError(QChargeError, ValueError):

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f'{path}, line {line}: {message}'
        elif path is not None:
            message = f'{path}: {message}'
        super().__init__(message)
        self.path = path
        self.line = line


class ConfigError(QChargeError, ValueError):
    pass
