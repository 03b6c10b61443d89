import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netuq.fem_diffusion import Mesh, build_benchmark_network
from netuq.network import (
    Component,
    NetworkError,
    NetworkState,
    TriviallyConvergedError,
    apply_F,
    assemble,
    extract_qoi,
    gather_endo,
    relative_residual,
    residual,
    topology_from_json,
    topology_to_json,
)
from netuq.synthetic import scalar_cycle


def linear_prop(endo, exo):
    return 0.5 * endo + 1.0


def two_cycle():
    comps = [Component(1, 1, 0, 1, linear_prop), Component(2, 1, 0, 1, linear_prop)]
    return assemble(comps, [(0, 1), (1, 0)], qoi_slots=[0, 1])


class TestAssemble:
    def test_two_cycle(self):
        net = two_cycle()
        assert (net.n_y, net.n_u, net.n_x) == (2, 0, 2)
        assert net.component_edges() == {(1, 2), (2, 1)}

    def test_repeated_endo_slot(self):
        comps = [Component(1, 1, 0, 1, linear_prop), Component(2, 1, 0, 1, linear_prop)]
        with pytest.raises(NetworkError, match="fed twice"):
            assemble(comps, [(0, 1), (0, 0), (1, 0)])

    def test_missing_source(self):
        comps = [Component(1, 1, 0, 1, linear_prop), Component(2, 1, 0, 1, linear_prop)]
        with pytest.raises(NetworkError, match="without a source"):
            assemble(comps, [(0, 1)])

    def test_self_loop(self):
        comps = [Component(1, 1, 0, 1, linear_prop), Component(2, 0, 0, 1, linear_prop)]
        with pytest.raises(NetworkError, match="feeds its own"):
            assemble(comps, [(0, 0)])

    @pytest.mark.parametrize("edge", [(2, 0), (0, 5)])
    def test_out_of_range(self, edge):
        comps = [Component(1, 1, 0, 1, linear_prop), Component(2, 1, 0, 1, linear_prop)]
        with pytest.raises(NetworkError):
            assemble(comps, [edge, (1, 0)])

    def test_bad_qoi(self):
        comps = [Component(1, 1, 0, 1, linear_prop), Component(2, 1, 0, 1, linear_prop)]
        with pytest.raises(NetworkError):
            assemble(comps, [(0, 1), (1, 0)], qoi_slots=[2])

    def test_duplicate_ids(self):
        comps = [Component(1, 0, 0, 1, linear_prop), Component(1, 0, 0, 1, linear_prop)]
        with pytest.raises(NetworkError):
            assemble(comps, [])

    def test_offsets_contiguous(self):
        comps = [Component(k, k, 1, k + 1, linear_prop) for k in (1, 2, 3)]
        edges = [(0, 3), (1, 0), (2, 1), (3, 2), (4, 0), (5, 4)]
        net = assemble(comps, edges)
        np.testing.assert_array_equal(net.out_offsets, [0, 2, 5, 9])
        np.testing.assert_array_equal(net.endo_offsets, [0, 1, 3, 6])
        assert net.out_slice(1) == slice(2, 5)

    def test_benchmark_2x2_connectivity(self):
        net, _ = build_benchmark_network(Mesh(41, 41), 2, 2)
        assert len(net) == 4
        edges = net.component_edges()
        assert len(edges) == 12
        for cid in net.ids:
            assert len({a for a, b in edges if b == cid}) == 3


class TestGather:
    def test_swap(self):
        np.testing.assert_array_equal(gather_endo(two_cycle(), [3.0, 4.0]), [4.0, 3.0])

    def test_duplicated_output(self):
        comps = [Component(1, 0, 0, 1, linear_prop), Component(2, 2, 0, 1, linear_prop)]
        net = assemble(comps, [(0, 0), (1, 0)])
        np.testing.assert_array_equal(gather_endo(net, [7.0, 0.0]), [7.0, 7.0])

    @settings(max_examples=50)
    @given(
        x=st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2),
        z=st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2),
        a=st.floats(-10, 10),
        b=st.floats(-10, 10),
    )
    def test_linear(self, x, z, a, b):
        net = two_cycle()
        x, z = np.array(x), np.array(z)
        lhs = gather_endo(net, a * x + b * z)
        np.testing.assert_array_equal(lhs, (a * x + b * z)[net.source])
        np.testing.assert_allclose(lhs, a * gather_endo(net, x) + b * gather_endo(net, z), rtol=1e-12, atol=1e-6)


class TestApplyF:
    def test_constant_propagators(self):
        comps = [Component(k, 1, 0, 1, lambda y, u, c=k: np.array([c])) for k in (1, 2, 3)]
        net = assemble(comps, [(0, 2), (1, 0), (2, 1)])
        np.testing.assert_array_equal(apply_F(net, NetworkState(np.array([9.0, 8, 7]), np.zeros(0))), [1, 2, 3])

    def test_linear_cycle_from_zero(self):
        np.testing.assert_array_equal(apply_F(two_cycle(), NetworkState(np.zeros(2), np.zeros(0))), [1.0, 1.0])

    def test_wrong_output_length(self):
        net = assemble([Component(1, 0, 0, 2, lambda y, u: np.zeros(3))], [])
        with pytest.raises(NetworkError, match="returned 3 outputs"):
            apply_F(net, NetworkState(np.zeros(2), np.zeros(0)))

    def test_state_dimension_mismatch(self):
        with pytest.raises(NetworkError):
            apply_F(two_cycle(), NetworkState(np.zeros(3), np.zeros(0)))

    def test_threaded_matches_serial(self):
        net = scalar_cycle(0.3, 2.0, n=7)
        x = np.arange(7.0)
        serial = apply_F(net, NetworkState(x, np.zeros(0)))
        with ThreadPoolExecutor(4) as ex:
            threaded = apply_F(net, NetworkState(x, np.zeros(0)), executor=ex)
        np.testing.assert_array_equal(serial, threaded)

    def test_timings_recorded(self):
        timings = {}
        apply_F(two_cycle(), NetworkState(np.zeros(2), np.zeros(0)), timings)
        assert set(timings) == {1, 2}

    def test_acyclic_converges_within_path_length(self):
        # chain 1 -> 2 -> 3 -> 4, longest path 3
        comps = [Component(1, 0, 1, 1, lambda y, u: u * 2.0)]
        comps += [Component(k, 1, 0, 1, lambda y, u: np.sin(y) + 1.0) for k in (2, 3, 4)]
        net = assemble(comps, [(0, 0), (1, 1), (2, 2)])
        u = np.array([0.7])
        x = np.zeros(4)
        for _ in range(4):
            x = apply_F(net, NetworkState(x, u))
        assert np.linalg.norm(residual(net, NetworkState(x, u))) <= 1e-12


class TestResidual:
    def test_zero_state(self):
        net = two_cycle()
        s = NetworkState(np.zeros(2), np.zeros(0))
        np.testing.assert_array_equal(residual(net, s), [-1.0, -1.0])
        assert relative_residual(net, s) == 1.0

    def test_fixed_point(self):
        net = two_cycle()
        s = NetworkState(np.array([2.0, 2.0]), np.zeros(0))
        np.testing.assert_array_equal(residual(net, s), [0.0, 0.0])
        assert relative_residual(net, s) == 0.0

    def test_trivial_network(self):
        net = assemble([Component(1, 0, 0, 1, lambda y, u: np.zeros(1))], [])
        with pytest.raises(TriviallyConvergedError):
            relative_residual(net, NetworkState(np.zeros(1), np.zeros(0)))


class TestQoi:
    def test_empty(self):
        net = assemble([Component(1, 0, 0, 2, lambda y, u: np.zeros(2))], [])
        assert extract_qoi(net, [1.0, 2.0]).size == 0

    def test_full(self):
        np.testing.assert_array_equal(extract_qoi(two_cycle(), [5.0, 6.0]), [5.0, 6.0])

    def test_benchmark_centre_node(self):
        mesh = Mesh(41, 41)
        net, meta = build_benchmark_network(mesh, 2, 2)
        centre = meta.probe_nodes[0]
        assert centre == 20 * 41 + 20
        x = np.arange(net.n_x, dtype=float)
        np.testing.assert_array_equal(extract_qoi(net, x)[:10], x[meta.probe_slots[centre]])


class TestJson:
    def test_roundtrip(self):
        net = two_cycle()
        doc = json.loads(topology_to_json(net))
        assert doc == {
            "components": [
                {"id": 1, "n_endo": 1, "n_exo": 0, "n_out": 1},
                {"id": 2, "n_endo": 1, "n_exo": 0, "n_out": 1},
            ],
            "edges": [[0, 1], [1, 0]],
            "qoi": [0, 1],
        }
        back = topology_from_json(topology_to_json(net), {1: linear_prop, 2: linear_prop})
        np.testing.assert_array_equal(back.source, net.source)
        np.testing.assert_array_equal(back.qoi_slots, net.qoi_slots)
