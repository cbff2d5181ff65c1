"""Shared fixtures: tiny graphs, dataset discovery, the --full gate."""

import os
from pathlib import Path

import numpy as np
import pytest

from gadview import Graph, from_edges


def pytest_addoption(parser):
    parser.addoption(
        "--full", action="store_true", default=False,
        help="run the hour-scale dataset reproduction checks")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "full: hour-scale reproduction run, needs --full")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full"):
        return
    skip = pytest.mark.skip(reason="needs --full")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


def dataset_dir(name: str) -> Path | None:
    """Locate a converted dataset directory, or None if absent.

    Looks under $GADVIEW_DATA, then ./data. Datasets are not bundled;
    see README for the conversion command.
    """
    roots = []
    if os.environ.get("GADVIEW_DATA"):
        roots.append(Path(os.environ["GADVIEW_DATA"]))
    roots.append(Path("data"))
    for root in roots:
        cand = root / name
        if (cand / "edges.tsv").is_file() and (cand / "features.tsv").is_file():
            return cand
    return None


def require_dataset(name: str) -> Path:
    path = dataset_dir(name)
    if path is None:
        pytest.skip(f"dataset {name!r} not found; set GADVIEW_DATA or ./data "
                    "(see README: converting the citation datasets)")
    return path


@pytest.fixture
def path3() -> Graph:
    """3-node path 0-1-2 with 2-dim features."""
    feats = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return from_edges(3, [(0, 1), (1, 2)], feats)


@pytest.fixture
def star5() -> Graph:
    """Star: center 0, leaves 1..5, 1-dim features."""
    feats = np.arange(6, dtype=np.float64).reshape(-1, 1)
    return from_edges(6, [(0, leaf) for leaf in range(1, 6)], feats)


@pytest.fixture
def k4() -> Graph:
    """Complete graph on 4 nodes, 3-dim features."""
    rng = np.random.default_rng(7)
    feats = rng.random((4, 3))
    edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    return from_edges(4, edges, feats)
