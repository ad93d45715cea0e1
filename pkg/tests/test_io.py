import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbcentrality.errors import ValidationError
from vbcentrality.graph import ObservationDataset, WeightedDigraph
from vbcentrality.io import (load_attributes, load_graph, load_observations, write_attributes,
                             write_graph, write_observations)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_graph_round_trip_is_bit_exact(tmp_path_factory, n, seed):
    rng = np.random.default_rng(seed)
    w = rng.lognormal(0.0, 3.0, size=(n, n)) * (rng.random((n, n)) < 0.5)
    g = WeightedDigraph.from_dense(w, directed=True)
    path = tmp_path_factory.mktemp("rt") / "g.csv"
    write_graph(path, g)
    back, index = load_graph(path)
    # isolated nodes never appear in an edge file; compare on the labelled ones
    ids = [int(label) for label in index.labels]
    assert np.array_equal(back.to_dense(), g.to_dense()[np.ix_(ids, ids)])


def test_file_rows_are_from_to(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("from,to,weight\na,b,2.5\nb,a,1\n")
    g, index = load_graph(path)
    assert index.labels == ["a", "b"]
    assert g.to_dense()[index["b"], index["a"]] == 2.5


def test_integer_labels_sorted_numerically(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("from,to,weight\n10,2,1\n2,10,1\n")
    _, index = load_graph(path)
    assert index.labels == ["2", "10"]


def test_repeated_edge_in_graph_file_rejected(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("from,to,weight\n0,1,1\n0,1,2\n")
    with pytest.raises(ValidationError):
        load_graph(path)


@pytest.mark.parametrize("body", ["src,dst,w\n0,1,1\n", "from,to,weight\n0,1\n",
                                  "from,to,weight\n0,1,abc\n", "from,to,weight\n0,1,-2\n"])
def test_malformed_edge_files(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ValidationError):
        load_graph(path)


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        load_graph(tmp_path / "nope.csv")


def test_observation_round_trip(tmp_path):
    samples = [(0, [(1, 0.5), (2, 1.5)]), (1, [(0, 2.0)]), (2, [(0, 0.25)]),
               (0, [(1, 0.75), (2, 1.0)]), (1, [(0, 3.0)]), (2, [(0, 0.125)])]
    data = ObservationDataset.from_samples(3, samples)
    path = tmp_path / "obs.csv"
    write_observations(path, data)
    back, index = load_observations(path)
    assert index.labels == ["0", "1", "2"]
    orig = [(i, nb.tolist(), w.tolist()) for i, nb, w in data.samples()]
    got = [(i, nb.tolist(), w.tolist()) for i, nb, w in back.samples()]
    assert got == orig


def test_attributes_round_trip_and_missing_row(tmp_path):
    x = np.array([[0.1, 2.0], [1.0 / 3.0, -4.5]])
    path = tmp_path / "x.csv"
    write_attributes(path, x)
    back, index = load_attributes(path)
    assert np.array_equal(back, x)

    obs = tmp_path / "obs.csv"
    obs.write_text("from,to,weight\n0,1,1\n1,2,1\n2,0,1\n")
    with pytest.raises(ValidationError):
        load_observations(obs, path)
