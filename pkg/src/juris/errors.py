class DataError(ValueError):
    """Bad input data: malformed lines, broken invariants, unknown ids.

    The CLI maps this to exit code 1.
    """
