import os

import numpy as np
import pandas as pd
import pytest

# Set test environment
os.environ["DEBUG"] = "true"
os.environ["NETMATCH_THREADS"] = "1"

from app.models.graph import Graph


@pytest.fixture
def triangle():
    """K3 on vertices 0, 1, 2"""
    return Graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def star3():
    """K_{1,3} with center 0"""
    return Graph(4, [(0, 1), (0, 2), (0, 3)])


@pytest.fixture
def path3():
    return Graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def path4():
    return Graph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def cycle4():
    return Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_csv(path, rows, header):
    pd.DataFrame(rows, columns=header).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def csv_file(tmp_path):
    """Write rows under a header into tmp_path and return the path"""

    def write(name, rows, header):
        return write_csv(tmp_path / name, rows, header)

    return write


@pytest.fixture
def tiny_study(tmp_path):
    """Six units on two paths 1-3-4 and 2-6-5; 1,2,3 treated.

    Units 1 and 4 both see a single treated neighbor, 2 and 5 a single control
    neighbor, so with 3 and 6 held out round 0 forms the groups {1,4} and
    {2,5} with differences 5 and 3.
    """
    edges = write_csv(tmp_path / "edges.csv", [(1, 3), (3, 4), (2, 6), (6, 5)], ["src", "dst"])
    units = write_csv(
        tmp_path / "units.csv",
        [(1, 1, 7.0), (2, 1, 6.0), (3, 1, 5.0), (4, 0, 2.0), (5, 0, 3.0), (6, 0, 1.0)],
        ["unit", "treated", "outcome"],
    )
    return {"edges": edges, "units": units, "out": str(tmp_path / "out"), "holdout": "3,6"}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full simulation experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full simulation experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
