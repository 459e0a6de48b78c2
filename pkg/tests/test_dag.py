import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnmix import (
    BadVertexIndex,
    CycleDetected,
    Dag,
    NotEnoughCenters,
    find_centers,
    validate_acyclic,
)

from conftest import chain


@st.composite
def dags(draw, max_n=8):
    n = draw(st.integers(min_value=1, max_value=max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag.build(n, [p for p, keep in zip(pairs, mask) if keep])


class TestValidation:
    def test_two_vertex_chain(self):
        g = validate_acyclic([(0, 1)], 2)
        assert g.topological_order() == (0, 1)

    def test_two_cycle_rejected(self):
        with pytest.raises(CycleDetected):
            validate_acyclic([(0, 1), (1, 0)], 2)

    def test_self_loop_rejected(self):
        with pytest.raises(CycleDetected):
            validate_acyclic([(0, 0)], 1)

    def test_bad_index(self):
        with pytest.raises(BadVertexIndex):
            validate_acyclic([(0, 5)], 2)

    def test_benchmark_graph_is_valid(self, fig13):
        assert fig13.n == 13
        assert len(fig13.edges) == 12

    def test_duplicate_edges_collapse(self):
        g = validate_acyclic([(0, 1), (0, 1)], 2)
        assert g.edges == ((0, 1),)

    def test_json_round_trip(self, fig13):
        again = Dag.from_json(fig13.to_json())
        assert again.edges == fig13.edges and again.n == fig13.n


class TestStructure:
    def test_parents_children(self, fig13):
        assert fig13.parents(12) == (11,)
        assert fig13.children(8) == (9, 10)

    def test_ancestors_empty_graph(self):
        g = Dag.build(3, [])
        assert g.ancestors([0]) == ()

    def test_ancestors_exclude_input(self):
        g = chain(4)
        assert g.ancestors([2, 3]) == (0, 1)

    def test_markov_boundary_fan(self, fan6):
        assert fan6.markov_boundary(3) == (0, 1, 2, 4, 5)

    def test_markov_boundary_benchmark(self, fig13):
        assert fig13.markov_boundary(0) == (1, 2)

    def test_markov_boundary_isolated(self):
        g = Dag.build(3, [(0, 1)])
        assert g.markov_boundary(2) == ()

    def test_top_set_fan(self, fan6):
        assert fan6.top_set(3) == (0, 1, 2)

    def test_top_set_chain_root(self):
        assert chain(2).top_set(0) == ()

    def test_bad_vertex_raises(self, fig13):
        with pytest.raises(BadVertexIndex):
            fig13.markov_boundary(13)


class TestDepth:
    def test_root_depth_zero(self, fig13):
        assert fig13.depth(0) == 0 and fig13.depth(1) == 0

    def test_chain_depth(self):
        assert chain(3).depth(2) == 2

    def test_benchmark_depths(self, fig13):
        # frozen from BFS over the edge list; cross-checked against networkx below
        assert [fig13.depth(v) for v in range(13)] == [0, 0, 1, 1, 2, 2, 3, 3, 4, 5, 5, 6, 7]

    def test_depths_match_networkx(self, fig13):
        nxg = nx.DiGraph(list(fig13.edges))
        nxg.add_nodes_from(range(13))
        roots = [v for v in range(13) if fig13.parents(v) == ()]
        for v in range(13):
            reference = min(
                nx.shortest_path_length(nxg, r, v)
                for r in roots
                if nx.has_path(nxg, r, v)
            )
            assert fig13.depth(v) == reference

    @given(dags())
    @settings(max_examples=60, deadline=None)
    def test_depth_zero_iff_root(self, g):
        for v in range(g.n):
            assert (g.depth(v) == 0) == (g.parents(v) == ())


class TestGamma:
    def test_empty_graph(self):
        assert Dag.build(4, []).gamma() == 0

    def test_two_chain(self):
        assert chain(2).gamma() == 1

    def test_benchmark(self, fig13):
        assert fig13.gamma() == 3

    @given(dags())
    @settings(max_examples=60, deadline=None)
    def test_degree_bounds(self, g):
        din, dout = g.max_in_degree(), g.max_out_degree()
        assert g.gamma() <= din + dout * din + dout
        skel = g.max_skeleton_degree()
        if skel >= 1:
            assert g.gamma() <= skel * skel


@given(dags())
@settings(max_examples=80, deadline=None)
def test_markov_boundary_symmetry(g):
    for x in range(g.n):
        for y in g.markov_boundary(x):
            assert x in g.markov_boundary(y)


class TestBottomVertices:
    def test_singleton_root(self, fig13):
        assert fig13.bottom_vertices([0]) == (0,)

    def test_benchmark_deepest(self, fig13):
        assert fig13.bottom_vertices([0, 5, 8, 12]) == (12,)

    def test_ties_kept(self):
        g = Dag.build(4, [(0, 2), (1, 3)])
        assert g.bottom_vertices([2, 3]) == (2, 3)


class TestFindCenters:
    def test_benchmark_four_centers(self, fig13):
        centers = find_centers(fig13, 4, 9)
        assert len(centers) == 4
        boundaries = [set(fig13.markov_boundary(x)) for x in centers]
        for i in range(4):
            assert fig13.depth(centers[i]) <= 9
            for j in range(i + 1, 4):
                assert not boundaries[i] & boundaries[j]
                assert centers[j] not in boundaries[i]

    def test_empty_graph_all_vertices(self):
        g = Dag.build(5, [])
        assert find_centers(g, 5, 0) == (0, 1, 2, 3, 4)

    def test_two_chain_fails(self):
        with pytest.raises(NotEnoughCenters) as exc:
            find_centers(chain(2), 2, 10)
        assert exc.value.requested == 2
        assert len(exc.value.found) == 1

    @given(dags(), st.integers(min_value=1, max_value=4))
    @settings(max_examples=60, deadline=None)
    def test_center_output_contract(self, g, count):
        try:
            centers = find_centers(g, count, 3 * count)
        except NotEnoughCenters:
            return
        assert len(set(centers)) == len(centers) == count
        for i, x in enumerate(centers):
            assert g.depth(x) <= 3 * count
            for y in centers[i + 1:]:
                assert not set(g.markov_boundary(x)) & set(g.markov_boundary(y))
                assert y not in g.markov_boundary(x)
