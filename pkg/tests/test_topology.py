import random
from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from dagsim.topology import (ConfigError, PeerGraph, TopologyConfig, generate_watts_strogatz,
                             zipf_weights)


def _mean_path_length(g: PeerGraph) -> float:
    total = pairs = 0
    for i in range(g.n):
        d = g.bfs_distances(i)
        total += sum(x for j, x in enumerate(d) if j != i)
        pairs += g.n - 1
    return total / pairs


def test_lattice_ring():
    g = generate_watts_strogatz(TopologyConfig(6, 2, 0.0), random.Random(0))
    assert g.neighbors(0) == [1, 5]
    assert all(len(g.neighbors(i)) == 2 for i in range(6))


def test_rewiring_shortens_paths():
    lattice = generate_watts_strogatz(TopologyConfig(20, 4, 0.0), random.Random(5))
    rewired = generate_watts_strogatz(TopologyConfig(20, 4, 0.5), random.Random(5))
    assert _mean_path_length(rewired) < _mean_path_length(lattice)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(6, 60), half=st.integers(1, 3), gamma=st.floats(0, 1),
       seed=st.integers(0, 2**32))
def test_graph_invariants(n, half, gamma, seed):
    k = 2 * half
    if n <= k:
        n = k + 1
    g = generate_watts_strogatz(TopologyConfig(n, k, gamma), random.Random(seed))
    assert g.is_connected()
    assert g.edge_count == n * k // 2
    for i in range(n):
        assert i not in g.neighbors(i)
        for j in g.neighbors(i):
            assert g.has_edge(j, i)


def test_same_rng_same_graph():
    cfg = TopologyConfig(50, 4, 0.7)
    assert (generate_watts_strogatz(cfg, random.Random(9)).edges()
            == generate_watts_strogatz(cfg, random.Random(9)).edges())


def test_gives_up_after_max_attempts(monkeypatch):
    import dagsim.topology as topo
    calls = []

    def disconnected(n, k, gamma, rng):
        calls.append(1)
        return PeerGraph(n, [(0, 1)])

    monkeypatch.setattr(topo, "_watts_strogatz_once", disconnected)
    with pytest.raises(ConfigError, match="connected"):
        generate_watts_strogatz(TopologyConfig(10, 2, 1.0), random.Random(1), max_attempts=4)
    assert len(calls) == 4


@pytest.mark.parametrize("cfg", [TopologyConfig(10, 3), TopologyConfig(4, 4),
                                 TopologyConfig(10, 2, 1.5), TopologyConfig(10, 2, 0.5, -1)])
def test_topology_validation(cfg):
    with pytest.raises(ConfigError):
        cfg.validate()


def test_zipf_uniform():
    assert zipf_weights(3, 0) == pytest.approx([1 / 3] * 3)


def test_zipf_harmonic_by_hand():
    expected = [Fraction(6, 11), Fraction(3, 11), Fraction(2, 11)]
    assert zipf_weights(3, 1) == pytest.approx([float(x) for x in expected], abs=1e-15)


@given(n=st.integers(1, 300), s=st.floats(0, 4))
def test_zipf_normalised_and_ordered(n, s):
    w = zipf_weights(n, s)
    assert sum(w) == pytest.approx(1.0, abs=1e-12)
    assert all(a >= b for a, b in zip(w, w[1:]))
    assert all(x > 0 for x in w)


def test_write_edge_list(tmp_path):
    g = PeerGraph(3, [(0, 1), (2, 1)])
    path = tmp_path / "g.txt"
    g.write_edge_list(path)
    assert path.read_text() == "0 1\n1 2\n"


def test_default_scale_graph():
    g = generate_watts_strogatz(TopologyConfig(), random.Random(2024))
    assert g.edge_count == 4000
    assert g.is_connected()


def test_zipf_default_head_weight():
    expected = 1.0 / sum(j ** -0.9 for j in range(1, 1001))
    w = zipf_weights(1000, 0.9)
    assert w[0] == pytest.approx(expected, rel=1e-12)
    assert sum(w) == pytest.approx(1.0, abs=1e-12)


def test_steeper_zipf_concentrates_top_rank():
    assert zipf_weights(100, 2)[0] > zipf_weights(100, 0.9)[0]
