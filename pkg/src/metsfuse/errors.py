"""Error taxonomy shared across the package.

DataError covers malformed or invalid inputs (CLI exit code 2);
LeakageError marks train/test contamination caught by pipeline guards.
Numeric failures live in metsfuse.nn (NonFiniteError, exit code 3).
"""
from __future__ import annotations


class DataError(ValueError):
    pass


class LeakageError(DataError):
    pass
