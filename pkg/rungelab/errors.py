# encoding: utf-8
'''
Exception hierarchy shared by every rungelab module.

Each error carries a human readable message, an optional payload of
diagnostics and the process exit status the command line maps it to.
'''


class LabError(Exception):

    exit_status = 1

    def __init__(self, message, exit_status=None, payload=None):
        Exception.__init__(self, message)
        self.message = message
        if exit_status is not None:
            self.exit_status = exit_status
        self.payload = payload

    def to_dict(self):
        rv = dict(self.payload or ())
        rv['error'] = type(self).__name__
        rv['message'] = self.message
        return rv


class ConfigurationError(LabError):
    pass


class DegenerateRegionError(LabError):
    pass


class GeometryError(LabError):
    pass


class MaterialError(LabError):
    pass


class ParameterError(LabError):
    pass


class SizeError(LabError):
    pass


class SingularityError(LabError):
    pass


class NumericError(LabError):
    pass


class SolverError(NumericError):
    '''
    Iterative solve did not reach its tolerance.

    The payload holds the residual history under `residuals`.
    '''
    pass


class ResonanceError(NumericError):
    '''
    The frequency is too close to a discrete cavity eigenvalue.

    The payload holds `margin`, `threshold` and `suggested_omega`.
    '''
    pass


class StoreError(LabError):
    pass


class CorruptFileError(StoreError):
    pass


class MagicError(CorruptFileError):
    pass


class LengthError(CorruptFileError):
    pass


class ChecksumError(CorruptFileError):
    pass


class VersionError(StoreError):
    pass


class KindError(StoreError):
    pass


class ProvenanceError(StoreError):
    pass


class ToleranceFailure(LabError):
    exit_status = 2
