import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egoscore.graph import (
    Graph,
    GraphFormatError,
    TypedEdge,
    derive_node_features,
    egonet_from_edges,
    egonet_to_text,
    import_egovk,
    load_graph,
    parse_egonets,
    read_egonets,
    save_graph,
    transform_time,
    write_egonets,
)
from egoscore.synthetic import SyntheticConfig, generate_synthetic

from conftest import random_undirected_graph


def write(tmp_path, text, name="g.tsv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadGraph:
    def test_two_edges(self, tmp_path):
        g = load_graph(write(tmp_path, "1 2 0 5\n2 3 0 9\n"))
        assert g.num_edges == 2
        assert list(g.node_ids()) == [1, 2, 3]
        assert list(g.edges()) == [TypedEdge(1, 2, 0, 5.0), TypedEdge(2, 3, 0, 9.0)]

    def test_comments_and_blank_lines(self, tmp_path):
        g = load_graph(write(tmp_path, "# header\n\n1\t2\t0\t5\n  # indented comment\n"))
        assert g.num_edges == 1

    def test_self_loop_rejected(self, tmp_path):
        with pytest.raises(GraphFormatError, match="self-loop"):
            load_graph(write(tmp_path, "1 1 0 5\n"))

    def test_duplicate_rejected_with_line(self, tmp_path):
        with pytest.raises(GraphFormatError, match="duplicate.*line 2"):
            load_graph(write(tmp_path, "1 2 0 5\n1 2 0 5\n"))

    def test_same_pair_different_type_is_fine(self, tmp_path):
        g = load_graph(write(tmp_path, "1 2 0 5\n1 2 1 0.5\n2 1 0 5\n"))
        assert g.num_edges == 3

    @pytest.mark.parametrize("line,msg", [
        ("1 2 0\n", "line 1"),
        ("1 x 0 5\n", "line 1"),
        ("1 2 9 5\n", "edge type"),
        ("1 2 0 -3\n", "friendship age"),
        ("1 2 1 nan\n", "non-finite"),
        ("-1 2 0 5\n", "negative"),
    ])
    def test_malformed(self, tmp_path, line, msg):
        with pytest.raises(GraphFormatError, match=msg):
            load_graph(write(tmp_path, line))

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            load_graph(write(tmp_path, "1 2 0 5\n"), format="parquet")

    def test_friendship_minus_one_allowed(self, tmp_path):
        g = load_graph(write(tmp_path, "1 2 0 -1\n"))
        assert g.attr[0] == -1.0


class TestAdjacency:
    def test_sorted_neighbors(self):
        g = Graph.from_edges([(1, 2, 0, 1.0), (1, 3, 0, 1.0)])
        assert [v for v, _ in g.out_neighbors(1)] == [2, 3]

    def test_sorting_contract(self):
        g = Graph.from_edges([(1, 3, 0, 1.0), (1, 2, 0, 1.0)])
        assert [v for v, _ in g.out_neighbors(1)] == [2, 3]

    def test_ties_by_etype(self):
        g = Graph.from_edges([(1, 2, 3, 1.0), (1, 2, 0, 1.0), (1, 2, 1, 1.0)])
        assert g.out_neighbors(1) == [(2, 0), (2, 1), (2, 3)]

    def test_empty(self):
        g = Graph.from_edges([])
        g.build_adjacency()
        assert g.num_nodes == 0
        assert g.out_neighbors(5) == []
        assert len(g.neighbors(0)) == 0
        assert not g.connected(np.array([1]), np.array([2])).any()

    def test_idempotent(self):
        g = random_undirected_graph(20, 0.3, seed=1)
        g.build_adjacency()
        before = g.und_indices.copy()
        g.build_adjacency()
        assert np.array_equal(before, g.und_indices)

    def test_undirected_neighbors_merge_direction_and_type(self):
        g = Graph.from_edges([(1, 2, 0, 1.0), (2, 1, 1, 1.0), (3, 1, 2, 1.0)])
        assert list(g.neighbors(1)) == [2, 3]
        assert list(g.neighbors(3)) == [1]
        assert g.connected(np.array([3, 2]), np.array([1, 3])).tolist() == [True, False]

    def test_consistent_with_edges(self):
        g = random_undirected_graph(30, 0.2, seed=4)
        multiset = sorted((u, v, t) for u in range(g.num_nodes) for v, t in g.out_neighbors(u))
        assert multiset == sorted((e.src, e.dst, e.etype) for e in g.edges())


class TestTransformTime:
    @pytest.mark.parametrize("t,expected", [(0, 28.0), (27, 1.0), (-1, 0.0)])
    def test_values(self, t, expected):
        assert transform_time(t) == expected

    @given(st.floats(0, 1e6), st.floats(0, 1e6))
    def test_monotone_and_bounded(self, a, b):
        fa, fb = transform_time(a), transform_time(b)
        assert 0.0 < fa <= 28.0
        if a < b:
            assert fa >= fb


class TestNodeFeatures:
    def base(self, n=3):
        return egonet_from_edges(n, [(1, 2, 1, 0.5)])

    def test_missing_edges_zero(self):
        e = derive_node_features(self.base(), [])
        assert np.all(e.node_features == 0)

    def test_forward_friendship_age_zero(self):
        e = derive_node_features(self.base(), [(0, 1, 0, 0.0)])
        assert e.node_features.shape == (3, 8)
        assert e.node_features[1, 0] == 28.0
        assert e.node_features[0].sum() == 0

    def test_backward_no_friendship(self):
        e = derive_node_features(self.base(), [(1, 0, 0, -1.0)])
        assert e.node_features[1, 4] == 0.0

    def test_activity_raw_both_directions(self):
        e = derive_node_features(self.base(), [(0, 2, 2, 3.5), (2, 0, 1, 1.25)])
        assert e.node_features[2, 2] == 3.5
        assert e.node_features[2, 4 + 1] == 1.25

    def test_not_incident_rejected(self):
        with pytest.raises(ValueError):
            derive_node_features(self.base(), [(1, 2, 0, 3.0)])


class TestEgoNetInvariants:
    def test_edge_touching_ego_rejected(self):
        with pytest.raises(ValueError, match="ego"):
            egonet_from_edges(3, [(0, 1, 0, 1.0)])

    def test_ground_truth_on_base_edge_rejected(self):
        with pytest.raises(ValueError, match="base edge"):
            egonet_from_edges(3, [(1, 2, 1, 1.0)], ground_truth=[(2, 1)])

    def test_ground_truth_canonical(self):
        e = egonet_from_edges(4, [(1, 2, 1, 1.0)], ground_truth=[(3, 1)])
        assert e.ground_truth == ((1, 3),)

    def test_candidate_mask(self):
        e = egonet_from_edges(4, [(1, 2, 1, 1.0)])
        m = e.candidate_mask
        assert not m[0].any() and not m[:, 0].any()
        assert not m[1, 2] and not m[2, 1]
        assert m[1, 3] and m[3, 2]
        assert not m.diagonal().any()


class TestRoundTrip:
    def test_graph_file(self, tmp_path):
        g = random_undirected_graph(40, 0.2, seed=9)
        p = tmp_path / "g.tsv"
        save_graph(g, p)
        assert load_graph(p) == g

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(0, 3),
                              st.floats(-1, 1e4, allow_nan=False)), max_size=40))
    def test_graph_round_trip_property(self, rows):
        seen, clean = set(), []
        for s, d, t, a in rows:
            if s == d or (s, d, t) in seen:
                continue
            if t == 0 and a < 0:
                a = -1.0
            seen.add((s, d, t))
            clean.append((s, d, t, a))
        g = Graph.from_edges(clean)
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "g.tsv")
            save_graph(g, p)
            assert load_graph(p) == g

    def test_egonet_file_bit_exact(self, tmp_path):
        nets = generate_synthetic(SyntheticConfig(n_egonets=15, seed=3))
        p = tmp_path / "x.egonets"
        assert write_egonets(nets, p) == 15
        back = read_egonets(p)
        assert back == nets
        for a, b in zip(nets, back):
            assert a.node_features.tobytes() == b.node_features.tobytes()
            assert a.attr.tobytes() == b.attr.tobytes()

    def test_egonet_text_format(self):
        e = egonet_from_edges(3, [(1, 2, 1, 0.5)], [(0, 1, 0, 0.0)], ego_global_id=7,
                              local_to_global=[7, 10, 11], ground_truth=[])
        text = egonet_to_text(e).splitlines()
        assert text[0] == "E 7 3"
        assert text[1].startswith("N 0 7 ")
        assert text[2].split()[:4] == ["N", "1", "10", "28.0"]
        assert text[-1] == "A 1 2 1 0.5"
        assert list(parse_egonets(text)) == [e]

    @pytest.mark.parametrize("text,msg", [
        ("N 0 1 0 0 0 0 0 0 0 0\n", "before"),
        ("E 1 2\nN 0 1 0 0 0 0 0 0 0 0\n", "node"),
        ("E 1 2\nN 0 1 0 0 0 0 0 0 0 0\nN 1 2 0 0\n", "line 3"),
        ("E 1 2\nQ 1\n", "line 2"),
    ])
    def test_malformed_egonet_files(self, text, msg):
        with pytest.raises(GraphFormatError, match=msg):
            list(parse_egonets(text.splitlines()))


def test_egovk_hook_documents_itself(tmp_path):
    assert "friendship age" in import_egovk.__doc__
    with pytest.raises(NotImplementedError):
        import_egovk(tmp_path)
