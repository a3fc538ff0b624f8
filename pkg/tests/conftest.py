import os

import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: opt-in long runs (set LOCALIZER_LAB_SLOW_TESTS=1)"
    )


def pytest_collection_modifyitems(config, items):
    if os.environ.get("LOCALIZER_LAB_SLOW_TESTS"):
        return
    skip = pytest.mark.skip(reason="set LOCALIZER_LAB_SLOW_TESTS=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


class RawWindow:
    """Duck-typed stand-in for a flattened Hamiltonian: the raw (unflattened)
    dense restriction of a block operator to its whole window.  The localizer
    assemblers only read .matrix/.site_indices/.n/.pattern."""

    def __init__(self, h):
        self.site_indices = np.arange(len(h.pattern.sites))
        self.matrix = h.dense(self.site_indices)
        self.n = h.n
        self.pattern = h.pattern


@pytest.fixture
def raw_window():
    return RawWindow
