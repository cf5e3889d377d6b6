"""Exception types shared across the package.

DataError covers unusable inputs (bad files, empty corpora, mismatched
models); NumericError covers runtime numerical failures (non-finite
gradients, degenerate marginals). The CLI maps them to exit codes 2 and 3.
"""


class DataError(Exception):
    pass


class NumericError(Exception):
    pass
