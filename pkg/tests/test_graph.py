import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from spherical_dcsbm.exceptions import EdgeListParseError, SelfLoopError
from spherical_dcsbm.graph import SparseGraph, degree_profile, load_edge_list, write_edge_list


def _write(tmp_path, text, name="g.tsv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_smallest_symmetric_graph(tmp_path):
    g = load_edge_list(_write(tmp_path, "0\t1\n1\t0\n"), "undirected")
    assert g.n_rows == g.n_cols == 2
    assert g.edge_set() == {(0, 1), (1, 0)}


def test_duplicates_collapse(tmp_path):
    g = load_edge_list(_write(tmp_path, "0 1\n0 1\n"), "directed")
    assert g.n_edges == 1


def test_undirected_edge_is_symmetrised(tmp_path):
    g = load_edge_list(_write(tmp_path, "0,2\n"), "undirected")
    assert g.edge_set() == {(0, 2), (2, 0)}
    assert g.n_rows == 3


def test_bipartite_counts_match_set_oracle(tmp_path):
    pairs = [(0, 0), (0, 4), (1, 2), (2, 3), (2, 1), (1, 1), (0, 2), (0, 4), (1, 2)]
    text = "\n".join(f"{a}\t{b}" for a, b in pairs) + "\n"
    g = load_edge_list(_write(tmp_path, text), "bipartite")
    assert (g.n_rows, g.n_cols) == (3, 5)
    assert g.n_edges == len(set(pairs)) == 7
    assert g.edge_set() == set(pairs)


def test_header_fixes_node_counts(tmp_path):
    g = load_edge_list(_write(tmp_path, "# n_rows=4 n_cols=6\n# comment\n0\t1\n"), "bipartite")
    assert g.shape == (4, 6)
    assert_array_equal(degree_profile(g).isolated_rows, [False, True, True, True])


def test_malformed_line_reports_line_number(tmp_path):
    path = _write(tmp_path, "0\t1\n# note\n2\t3\t4\n")
    with pytest.raises(EdgeListParseError) as info:
        load_edge_list(path, "directed")
    assert info.value.line_number == 3


def test_index_beyond_header_rejected(tmp_path):
    with pytest.raises(EdgeListParseError):
        load_edge_list(_write(tmp_path, "# n_rows=2 n_cols=2\n0\t5\n"), "directed")


def test_self_loop_rejected_with_node_id(tmp_path):
    with pytest.raises(SelfLoopError) as info:
        load_edge_list(_write(tmp_path, "0\t1\n3\t3\n"), "undirected")
    assert info.value.node == 3
    # directed graphs may carry them
    g = load_edge_list(_write(tmp_path, "3\t3\n", "d.tsv"), "directed")
    assert g.edge_set() == {(3, 3)}


def test_string_labels_first_seen_order(tmp_path):
    text = "10.0.0.5\t10.0.0.1\n10.0.0.1\t10.0.0.9\n"
    g = load_edge_list(_write(tmp_path, text), "undirected")
    assert g.row_labels == ("10.0.0.5", "10.0.0.1", "10.0.0.9")
    assert g.edge_set() == {(0, 1), (1, 0), (1, 2), (2, 1)}


def test_string_labels_bipartite_sides_are_separate(tmp_path):
    g = load_edge_list(_write(tmp_path, "a\tx\nb\tx\na\ty\n"), "bipartite")
    assert g.row_labels == ("a", "b")
    assert g.col_labels == ("x", "y")
    assert g.shape == (2, 2)


def test_invariants_enforced():
    with pytest.raises(ValueError):
        # one orientation only
        SparseGraph(3, 3, np.array([0]), np.array([1]), "undirected")
    with pytest.raises(ValueError):
        SparseGraph.from_edges(2, 3, [(0, 1)], "undirected")
    with pytest.raises(ValueError):
        SparseGraph.from_edges(2, 2, [(0, 2)], "directed")


def test_degree_profile_empty_graph():
    prof = degree_profile(SparseGraph.from_edges(3, 4, [], "bipartite"))
    assert_array_equal(prof.out_degrees, [0, 0, 0])
    assert_array_equal(prof.in_degrees, [0, 0, 0, 0])


def test_degree_profile_complete_bipartite():
    g = SparseGraph.from_dense(np.ones((2, 3)), "bipartite")
    prof = degree_profile(g)
    assert_array_equal(prof.out_degrees, [3, 3])
    assert_array_equal(prof.in_degrees, [2, 2, 2])


def test_degree_profile_matches_naive_scan():
    rng = np.random.default_rng(1)
    a = (rng.random((30, 40)) < 0.2).astype(int)
    g = SparseGraph.from_dense(a, "directed" if a.shape[0] == a.shape[1] else "bipartite")
    prof = degree_profile(g)
    out = [sum(1 for (i, j) in g.edge_set() if i == r) for r in range(30)]
    inn = [sum(1 for (i, j) in g.edge_set() if j == c) for c in range(40)]
    assert_array_equal(prof.out_degrees, out)
    assert_array_equal(prof.in_degrees, inn)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)),
                                    max_size=40),
       st.sampled_from(["undirected", "directed"]))
def test_round_trip_and_degree_sums(tmp_path_factory, n, pairs, mode):
    pairs = [(a % n, b % n) for a, b in pairs if not (mode == "undirected" and a % n == b % n)]
    g = SparseGraph.from_edges(n, n, pairs, mode)
    prof = degree_profile(g)
    assert prof.out_degrees.sum() == prof.in_degrees.sum() == g.n_edges
    path = tmp_path_factory.mktemp("rt") / "g.tsv"
    write_edge_list(g, path)
    back = load_edge_list(path, mode)
    assert back.edge_set() == g.edge_set()
    assert back.shape == g.shape


def test_round_trip_labels(tmp_path):
    g = load_edge_list(_write(tmp_path, "u\tv\nv\tw\n"), "undirected")
    out = tmp_path / "back.tsv"
    write_edge_list(g, out)
    back = load_edge_list(out, "undirected")
    assert back.row_labels == g.row_labels
    assert back.edge_set() == g.edge_set()


def test_dense_adjacency_is_binary_and_symmetric():
    g = SparseGraph.from_edges(4, 4, [(0, 1), (1, 2), (1, 0)], "undirected")
    a = g.to_dense()
    assert_array_equal(a, a.T)
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert a.sum() == 4
