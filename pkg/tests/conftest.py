from datetime import datetime

import numpy as np
import pytest

from bessrate.timeseries import IntervalSeries, write_csv


@pytest.fixture
def write_series(tmp_path):
    """Write an IntervalSeries-style CSV and return its path."""
    def _write(name, values, start=datetime(2021, 7, 1), step=15):
        path = tmp_path / name
        write_csv(path, IntervalSeries(start, np.asarray(values, float), step))
        return path
    return _write
