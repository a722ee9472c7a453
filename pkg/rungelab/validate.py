import math

import numpy as np

from .errors import ParameterError


# Type Validation
def type_number(key, value, error=ParameterError):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise error(
            "Invalid parameter type: '{0}' must be 'integer' or 'float'.".format(
                key)
        )
    if not math.isfinite(float(value)):
        raise error("Invalid parameter: '{0}' must be finite.".format(key))


def type_integer(key, value, error=ParameterError):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise error(
            "Invalid parameter type: '{0}' must be an 'integer'.".format(key)
        )


def vector3(key, value, error=ParameterError):
    arr = np.asarray(value)
    if arr.shape != (3,):
        raise error(
            "Invalid parameter: '{0}' must have exactly 3 components.".format(
                key)
        )
    if not np.all(np.isfinite(arr)):
        raise error("Invalid parameter: '{0}' must be finite.".format(key))


# Range Validation
def positive(key, value, error=ParameterError):
    type_number(key, value, error)
    if value <= 0:
        raise error(
            "Invalid value: '{0}' must be positive, got {1}.".format(key, value)
        )


def nonnegative(key, value, error=ParameterError):
    type_number(key, value, error)
    if value < 0:
        raise error(
            "Invalid value: '{0}' must be nonnegative, got {1}.".format(
                key, value)
        )


def at_least(key, value, threshold_value, error=ParameterError):
    type_number(key, value, error)
    if value < threshold_value:
        raise error(
            "Invalid value: '{0}' must be at least {1}, got {2}.".format(
                key, threshold_value, value)
        )


def in_open_interval(key, value, lo, hi, error=ParameterError):
    type_number(key, value, error)
    if not lo < value < hi:
        raise error(
            "Invalid value: '{0}' must lie in ({1}, {2}), got {3}.".format(
                key, lo, hi, value)
        )


def finite_array(key, array, error=ParameterError):
    if not np.all(np.isfinite(np.asarray(array))):
        raise error("Invalid array: '{0}' has non-finite entries.".format(key))


def array_length(key, array, threshold_value, error=ParameterError):
    if len(array) < threshold_value:
        raise error(
            "Invalid length: '{0}' needs at least {1} elements, got {2}.".format(
                key, threshold_value, len(array))
        )


# Validation Utility
def validate(valid_inputs, error=None):
    '''Run a table of checks.
        :valid_inputs (dict) parameter name to a list of checks
            {
                'some_key': [(some_validation_func, arg1, arg2, ...)],
                'some_other_key': [...]
            }
        :error (LabError subclass) overrides the error raised by every check
    '''
    def _apply(func_obj):
        func = func_obj[0]
        args = func_obj[1:]
        if error is not None:
            func(*args, error=error)
        else:
            func(*args)

    for key in valid_inputs.keys():
        for f in valid_inputs[key]:
            _apply(f)
