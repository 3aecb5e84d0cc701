"""Exception taxonomy shared across the package.

InputError maps to CLI exit code 2, NumericalError to exit code 3.
"""


class GeomatchError(Exception):
    pass


class InputError(GeomatchError):
    """Malformed files, missing paths, schema violations, bad arguments."""


class NumericalError(GeomatchError):
    """Degenerate descriptors, NaN losses, undefined metrics."""
