import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd
import pytest

from regretplot import SUMMARY_COLUMNS


@pytest.fixture(autouse=True)
def _close_figures():
    yield
    plt.close("all")


def write_summary(path, rows):
    """Write schema-conforming summary rows (tuples in column order) to *path*."""
    frame = pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))
    frame.to_csv(path, index=False)
    return path


def constant_rows(algorithm, mean, std, m, rounds=range(1, 11), normalized=0):
    return [(algorithm, r, mean, std, m, normalized) for r in rounds]
