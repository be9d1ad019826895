import os

import pytest

from kograph.data import load_tu_dataset

_capman = None


def pytest_configure(config):
    global _capman
    _capman = config.pluginmanager.getplugin("capturemanager")


def emit(line):
    """Print a line that survives pytest's output capture."""
    if _capman is None:
        print(line)
    else:
        with _capman.global_and_fixture_disabled():
            print(line)


def write_tu_corpus(base, name, edges, graph_of_node, graph_labels,
                    node_labels=None, node_attrs=None):
    """Write a TU-format corpus; edges are 1-based directed pairs as listed."""
    root = base / name
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{name}_A.txt").write_text(
        "".join(f"{i}, {j}\n" for i, j in edges))
    (root / f"{name}_graph_indicator.txt").write_text(
        "".join(f"{g}\n" for g in graph_of_node))
    (root / f"{name}_graph_labels.txt").write_text(
        "".join(f"{y}\n" for y in graph_labels))
    if node_labels is not None:
        (root / f"{name}_node_labels.txt").write_text(
            "".join(f"{v}\n" for v in node_labels))
    if node_attrs is not None:
        (root / f"{name}_node_attributes.txt").write_text(
            "".join(", ".join(str(x) for x in row) + "\n" for row in node_attrs))
    return str(base)


@pytest.fixture
def tiny_corpus(tmp_path):
    """One 3-node path graph with two node label values."""
    root = write_tu_corpus(
        tmp_path, "TINY",
        edges=[(1, 2), (2, 1), (2, 3), (3, 2)],
        graph_of_node=[1, 1, 1],
        graph_labels=[1],
        node_labels=[0, 1, 0],
    )
    return root


PROTEINS_ENV = "KOGRAPH_DATA_ROOT"


def proteins_root():
    """Directory containing PROTEINS/, or None when unavailable."""
    candidates = [os.environ.get(PROTEINS_ENV), "data",
                  os.path.join(os.path.dirname(__file__), "..", "data")]
    for root in candidates:
        if root and os.path.isfile(
                os.path.join(root, "PROTEINS", "PROTEINS_A.txt")):
            return root
    return None


@pytest.fixture(scope="session")
def proteins_dataset():
    root = proteins_root()
    if root is None:
        pytest.fail(
            "PROTEINS dataset not available: place the TU files under "
            f"data/PROTEINS/ or set ${PROTEINS_ENV}. This environment has "
            "no network access to fetch them.")
    return load_tu_dataset(root, "PROTEINS")
