import json

import numpy as np
import pytest

from platelab.errors import GraphFormatError
from platelab.lattice_graph import (
    ExpandedBeamSet,
    LatticeGraph,
    expand_symmetry,
    graph_statistics,
    octahedral_group,
    parse_graph,
    serialize_graph,
    validate_graph,
)

# four-beam cycle used throughout the test suite
FOUR_BEAM_DOC = {
    "nodes": [[0.24, 0.61, 0.46], [0.15, 0.18, 0.19],
              [0.44, 0.57, 0.85], [0.64, 0.12, 0.51]],
    "beams": [{"idx": [0, 1], "r": 0.017}, {"idx": [1, 2], "r": 0.011},
              {"idx": [2, 3], "r": 0.016}, {"idx": [3, 0], "r": 0.014}],
}


def four_beam_graph():
    return parse_graph(json.dumps(FOUR_BEAM_DOC))


class TestParse:

    def test_round_trip(self):
        g = four_beam_graph()
        again = parse_graph(serialize_graph(g))
        assert np.array_equal(again.nodes, g.nodes)
        assert np.array_equal(again.beams, g.beams)
        assert np.array_equal(again.radii, g.radii)

    def test_values_verbatim(self):
        g = four_beam_graph()
        assert g.n_nodes == 4 and g.n_beams == 4
        assert g.nodes[0, 1] == 0.61
        assert g.radii.tolist() == [0.017, 0.011, 0.016, 0.014]

    def test_bad_json(self):
        with pytest.raises(GraphFormatError):
            parse_graph("{nodes: oops")

    def test_missing_keys(self):
        with pytest.raises(GraphFormatError):
            parse_graph(json.dumps({"nodes": []}))

    def test_non_finite_coordinate(self):
        doc = {"nodes": [[0, 0, float("nan")]], "beams": []}
        with pytest.raises(GraphFormatError):
            parse_graph(doc)

    def test_out_of_range_index(self):
        doc = {"nodes": [[0, 0, 0], [1, 0, 0]],
               "beams": [{"idx": [0, 5], "r": 0.1}]}
        with pytest.raises(GraphFormatError):
            parse_graph(doc)

    def test_self_loop_rejected(self):
        doc = {"nodes": [[0, 0, 0], [1, 0, 0]],
               "beams": [{"idx": [1, 1], "r": 0.1}]}
        with pytest.raises(GraphFormatError):
            parse_graph(doc)


class TestValidate:

    def test_valid_graph(self):
        report = validate_graph(four_beam_graph())
        assert report.passed and not report.violations

    def test_coordinate_bound(self):
        g = four_beam_graph()
        g.nodes[2, 0] = 1.6
        report = validate_graph(g)
        assert not report.passed
        assert any("coordinates" in v for v in report.violations)

    def test_radius_bounds(self):
        g = four_beam_graph()
        g.radii[0] = 0.0
        assert not validate_graph(g).passed
        g = four_beam_graph()
        g.radii[0] = 0.51
        assert not validate_graph(g).passed
        g = four_beam_graph()
        g.radii[0] = 0.5   # inclusive upper bound
        assert validate_graph(g).passed

    def test_disconnected_graph(self):
        doc = {"nodes": [[0, 0, 0], [0.5, 0, 0], [0, 0.5, 0], [0, 0, 0.5]],
               "beams": [{"idx": [0, 1], "r": 0.1}, {"idx": [2, 3], "r": 0.1}]}
        report = validate_graph(parse_graph(doc))
        assert not report.passed
        assert any("connected" in v for v in report.violations)


class TestSymmetryExpansion:

    def test_group_has_48_distinct_orthogonal_elements(self):
        ops = octahedral_group()
        assert ops.shape == (48, 3, 3)
        assert len({tuple(op.flatten()) for op in ops}) == 48
        for op in ops:
            assert np.allclose(op @ op.T, np.eye(3))
            assert abs(abs(np.linalg.det(op)) - 1.0) < 1e-12

    def test_full_expansion_count_without_dedup(self):
        g = four_beam_graph()
        ex = expand_symmetry(g, dedup=False)
        assert ex.n_beams == 48 * g.n_beams == 192

    def test_four_beam_fixture_has_no_coincident_images(self):
        # the generic 4-beam cycle has trivial stabilizer: 192 distinct beams
        ex = expand_symmetry(four_beam_graph(), dedup=True)
        assert ex.n_beams == 192

    def test_dedup_collapses_symmetric_input(self):
        # a single axis-aligned beam through the origin has a large
        # stabilizer: its orbit is the 6 signed coordinate half-axes
        g = LatticeGraph(nodes=[[0, 0, 0], [0.4, 0, 0]],
                         beams=[[0, 1]], radii=[0.05])
        ex = expand_symmetry(g, dedup=True)
        assert ex.n_beams == 6
        tips = sorted(tuple(np.round(e[np.abs(e).sum(axis=1) > 0][0], 9))
                      for e in ex.endpoints)
        assert tips == sorted([(0.4, 0, 0), (-0.4, 0, 0), (0, 0.4, 0),
                               (0, -0.4, 0), (0, 0, 0.4), (0, 0, -0.4)])

    def test_expansion_invariant_under_group_action(self):
        # transforming the input graph by any group element leaves the
        # deduplicated expanded set unchanged (as a set of segments)
        g = four_beam_graph()
        base = expand_symmetry(g, dedup=True)

        def segment_set(ex: ExpandedBeamSet):
            keys = set()
            for k in range(ex.n_beams):
                p = tuple(np.round(ex.endpoints[k, 0], 9) + 0.0)
                q = tuple(np.round(ex.endpoints[k, 1], 9) + 0.0)
                keys.add((min(p, q), max(p, q), round(ex.radii[k], 9)))
            return keys

        base_set = segment_set(base)
        for op in octahedral_group():
            gt = LatticeGraph(g.nodes @ op.T, g.beams.copy(), g.radii.copy())
            assert segment_set(expand_symmetry(gt, dedup=True)) == base_set

    def test_dedup_keeps_distinct_radii(self):
        # same segment with two different radii stays two entries
        g = LatticeGraph(nodes=[[0, 0, 0], [0.4, 0, 0]],
                         beams=[[0, 1], [0, 1]], radii=[0.05, 0.06])
        ex = expand_symmetry(g, dedup=True)
        assert ex.n_beams == 12


class TestStatistics:

    def test_feature_vector_against_direct_computation(self):
        g = four_beam_graph()
        feats = graph_statistics(g)
        nodes = np.array(FOUR_BEAM_DOC["nodes"])
        pairs = [(0, 1), (1, 2), (2, 3), (3, 0)]
        lengths = np.array([np.linalg.norm(nodes[i] - nodes[j]) for i, j in pairs])
        radii = np.array([0.017, 0.011, 0.016, 0.014])
        expect = np.array([
            4, 4,
            lengths.mean(), lengths.std(), lengths.min(), lengths.max(),
            radii.mean(), radii.std(), radii.min(), radii.max(),
            nodes[:, 0].std(), nodes[:, 1].std(), nodes[:, 2].std(),
            2.0, 2.0,
        ])
        assert feats.shape == (15,)
        assert np.allclose(feats, expect, rtol=1e-12)

    def test_invariant_under_node_relabeling(self):
        g = four_beam_graph()
        perm = np.array([2, 0, 3, 1])
        inv = np.argsort(perm)
        g2 = LatticeGraph(g.nodes[perm], inv[g.beams], g.radii.copy())
        assert np.allclose(graph_statistics(g2), graph_statistics(g))

    def test_zero_beam_graph_rejected(self):
        g = LatticeGraph(nodes=[[0, 0, 0]], beams=np.zeros((0, 2)), radii=[])
        with pytest.raises(ValueError):
            graph_statistics(g)
