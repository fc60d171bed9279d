import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynaperc.errors import CapabilityError, InputError
from dynaperc.torus import (TorusGraph, VertexSet, edge_boundary, iso_profile,
                            neighbors)


def test_counts():
    g = TorusGraph(d=2, n=4)
    assert g.n_vertices == 16
    assert g.n_edges == 32
    g1 = TorusGraph(d=1, n=5)
    assert g1.n_edges == 5


def test_invalid_params():
    with pytest.raises(InputError):
        TorusGraph(d=0, n=4)
    with pytest.raises(InputError):
        TorusGraph(d=1, n=2)


def test_vertex_coords_roundtrip():
    g = TorusGraph(d=3, n=3)
    for v in range(g.n_vertices):
        assert g.vertex_index(g.coords(v)) == v


def test_shift_wraps():
    g = TorusGraph(d=2, n=4)
    v = g.vertex_index((3, 0))
    assert g.coords(g.shift(v, 0, +1)) == (0, 0)
    assert g.coords(g.shift(v, 1, -1)) == (3, 3)


def test_edge_endpoints_consistent():
    g = TorusGraph(d=2, n=4)
    for e in range(g.n_edges):
        u, v = g.edge_endpoints(e)
        assert g.edge_id(u, e % g.d) == e
        assert v == g.shift(u, e % g.d, +1)


def test_neighbors_symmetric():
    g = TorusGraph(d=2, n=4)
    for v in range(g.n_vertices):
        nb = neighbors(g, v)
        assert len(nb) == 2 * g.d
        for u, e in nb:
            assert (v, e) in neighbors(g, u)


@given(d=st.integers(1, 2), n=st.integers(3, 5))
@settings(max_examples=20, deadline=None)
def test_degree_regular(d, n):
    g = TorusGraph(d=d, n=n)
    counts = np.zeros(g.n_vertices, dtype=int)
    for e in range(g.n_edges):
        u, v = g.edge_endpoints(e)
        counts[u] += 1
        counts[v] += 1
    assert (counts == 2 * d).all()


def test_vertexset_constructors_agree():
    g = TorusGraph(d=1, n=6)
    s1 = VertexSet(g, [0, 2, 5])
    s2 = VertexSet(g, s1.mask)
    s3 = VertexSet(g, s1.to_bitmask())
    assert (s1.mask == s2.mask).all() and (s1.mask == s3.mask).all()
    assert s1.size == 3 and s1.pi_mass == 0.5


def test_vertexset_mutation_and_complement():
    g = TorusGraph(d=1, n=5)
    s = VertexSet(g, [1])
    s.add(3)
    s.add(3)
    assert s.size == 2
    s.remove(1)
    assert s.size == 1 and 3 in s
    c = s.complement()
    assert c.size == 4 and 3 not in c


def test_edge_boundary_self_dual():
    g = TorusGraph(d=2, n=4)
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = VertexSet(g, rng.random(g.n_vertices) < 0.5)
        b1 = edge_boundary(g, s)
        b2 = edge_boundary(g, s.complement())
        assert np.array_equal(b1, b2)


def test_edge_boundary_interval():
    # contiguous arc of a cycle has exactly two boundary edges
    g = TorusGraph(d=1, n=8)
    s = VertexSet(g, [2, 3, 4])
    assert len(edge_boundary(g, s)) == 2


def test_iso_profile_cycle():
    # on a cycle the minimizer is any half arc: |boundary| = 2, exponent 0
    g = TorusGraph(d=1, n=6)
    r = iso_profile(g)
    assert r.value == 2.0
    assert len(edge_boundary(g, r.minimizer(g))) == 2


def test_iso_profile_square_torus():
    # a full row of Z_4^2 has 8 boundary edges and |S|^(1/2) = 2
    g = TorusGraph(d=2, n=4)
    r = iso_profile(g)
    row = VertexSet(g, [g.vertex_index((0, j)) for j in range(4)])
    row_ratio = len(edge_boundary(g, row)) / row.size ** 0.5
    assert r.value <= row_ratio + 1e-12
    assert r.value > 0


def test_iso_profile_cap():
    with pytest.raises(CapabilityError):
        iso_profile(TorusGraph(d=2, n=5))
