"""Lattice construction, exact geometry, distances and invariants."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdwalk import (LatticeParams, SpacePoint, Vertex, build_lattice,
                    geodesic_distance, graph_distance, segment_clears_disc)
from vdwalk.errors import ContractViolation, ParameterError
from vdwalk.lattice import DARNING, PLANE, RAY, embed


def brute_force_darning_degree(k, eps, window_radius):
    """Independent enumeration of the darning neighbors: one ray vertex
    plus every in-window plane point strictly outside the closed disc
    with an axis neighbor inside it."""
    q = eps.denominator
    rhs = eps.numerator ** 2 * 4 ** k
    cells = int(window_radius * 2 ** k)

    def inside(i, j):
        return (i * i + j * j) * q * q <= rhs

    count = 1  # Ray(1)
    for i in range(-cells, cells + 1):
        for j in range(-cells, cells + 1):
            if inside(i, j):
                continue
            if any(inside(i + di, j + dj)
                   for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))):
                count += 1
    return count


def test_darning_degree_matches_brute_force():
    params = LatticeParams(k=6, epsilon=Fraction(1, 8),
                           window_radius=Fraction(1, 2))
    lat = build_lattice(params)
    expected = brute_force_darning_degree(6, Fraction(1, 8), Fraction(1, 2))
    assert lat.degree[lat.darning_index] == expected


def test_interior_plane_vertex_degree_and_mass(lat5):
    h = lat5.params.mesh
    idx = lat5.index_of(Vertex.plane(10, 10))  # r ~ 0.44, far from disc and rim
    assert lat5.degree[idx] == 4
    assert lat5.mass[idx] == h * h


def test_interior_ray_vertex_degree_and_mass(lat5):
    h = lat5.params.mesh
    idx = lat5.index_of(Vertex.ray(2))
    assert lat5.degree[idx] == 2
    assert lat5.mass[idx] == h


def test_theory_regime_darning_bounds():
    params = LatticeParams(k=10, epsilon=Fraction(1, 128),
                           window_radius=Fraction(1, 16))
    assert params.theory_regime
    lat = build_lattice(params)
    eps = params.epsilon
    assert lat.mass[0] < 2.0 ** -10
    assert lat.degree[0] <= 56 * float(eps) * 2 ** 10 + 28


@pytest.mark.parametrize("k", [5, 6])
def test_invariants_hold(k):
    lat = build_lattice(LatticeParams(k=k, epsilon=Fraction(1, 8),
                                      window_radius=Fraction(3, 4)))
    lat.check_invariants()


def test_invalid_params_rejected():
    with pytest.raises(ParameterError):
        LatticeParams(k=5, epsilon=Fraction(9, 10), window_radius=Fraction(3, 4))
    with pytest.raises(ParameterError):
        LatticeParams(k=5, epsilon=Fraction(1, 8), window_radius=Fraction(1, 4))
    with pytest.raises(ParameterError):
        LatticeParams(k=0, epsilon=Fraction(1, 8), window_radius=Fraction(3, 4))
    with pytest.raises(ParameterError):
        LatticeParams(k=5, epsilon=Fraction(1, 3), window_radius=Fraction(3, 4))


def test_mass_exact_matches_float(lat5):
    exact = lat5.mass_exact()
    assert np.allclose([float(v) for v in exact], lat5.mass, rtol=0, atol=0)


def test_graph_distance_examples(lat5):
    h = lat5.params.mesh
    d = Vertex.darning()
    assert graph_distance(lat5, d, d) == 0.0
    assert graph_distance(lat5, d, Vertex.ray(1)) == h
    assert graph_distance(lat5, Vertex.ray(3), Vertex.ray(7)) == pytest.approx(4 * h)
    plane_nb = next(lat5.vertex(int(i)) for i in lat5.neighbors(0)
                    if lat5.kind[i] == PLANE)
    assert graph_distance(lat5, plane_nb, Vertex.ray(1)) == pytest.approx(2 * h)


def test_graph_distance_dominates_geodesic(lat_tiny):
    eps = float(lat_tiny.params.epsilon)
    n = lat_tiny.n_vertices
    pts = [lat_tiny.embed(lat_tiny.vertex(i)) for i in range(n)]
    d0 = lat_tiny.distances_from(0)
    for i in range(n):
        di = lat_tiny.distances_from(i)
        for j in range(i + 1, n):
            assert di[j] >= geodesic_distance(pts[i], pts[j], eps) - 1e-12
    assert np.isfinite(d0).all()


def test_geodesic_examples():
    eps = 1.0 / 128
    p = SpacePoint("plane", 0.5, 0.0)
    q = SpacePoint("plane", -0.5, 0.0)
    assert geodesic_distance(p, q, eps) == pytest.approx(0.984375)
    r = SpacePoint("ray", 0.25)
    s = SpacePoint("plane", 0.25, 0.0)
    assert geodesic_distance(r, s, eps) == pytest.approx(0.4921875)
    a = SpacePoint("darning")
    assert geodesic_distance(a, a, eps) == 0.0


def test_geodesic_symmetry_random():
    rng = np.random.default_rng(7)
    eps = 1.0 / 8
    for _ in range(50):
        x, y = rng.uniform(-1, 1, 2)
        if math.hypot(x, y) <= eps:
            continue
        u, v = rng.uniform(-1, 1, 2)
        if math.hypot(u, v) <= eps:
            continue
        p, q = SpacePoint("plane", x, y), SpacePoint("plane", u, v)
        assert geodesic_distance(p, q, eps) == geodesic_distance(q, p, eps)
        assert geodesic_distance(p, q, eps) >= 0.0


def test_segment_clears_disc_cases():
    params = LatticeParams(k=5, epsilon=Fraction(1, 8), window_radius=Fraction(3, 4))
    # horizontal edge well above the disc
    assert segment_clears_disc(Vertex.plane(1, 6), Vertex.plane(2, 6), params)
    # crossing the vertical axis above the disc: foot of the origin is the
    # i=0 endpoint, which is outside, so the edge clears
    assert segment_clears_disc(Vertex.plane(-1, 5), Vertex.plane(0, 5), params)
    # projection of the origin outside the segment, endpoints outside
    assert segment_clears_disc(Vertex.plane(-2, 4), Vertex.plane(-1, 4), params)
    with pytest.raises(ContractViolation):
        segment_clears_disc(Vertex.plane(0, 4), Vertex.plane(-1, 4), params)
    with pytest.raises(ContractViolation):
        segment_clears_disc(Vertex.plane(0, 6), Vertex.plane(2, 6), params)


def test_embed_examples():
    params = LatticeParams(k=3, epsilon=Fraction(1, 8), window_radius=Fraction(3, 4))
    pt = embed(Vertex.plane(3, -4), params)
    assert (pt.kind, pt.x, pt.y) == ("plane", 0.375, -0.5)
    params2 = LatticeParams(k=2, epsilon=Fraction(1, 8), window_radius=Fraction(3, 2))
    rp = embed(Vertex.ray(5), params2)
    assert (rp.kind, rp.x) == ("ray", 1.25)
    assert embed(Vertex.darning(), params).kind == "darning"


def test_vertex_layout(lat5):
    assert lat5.kind[0] == DARNING
    nr = lat5.n_ray
    assert (lat5.kind[1:nr + 1] == RAY).all()
    assert (lat5.kind[nr + 1:] == PLANE).all()
    # Ray(n) sits at index n
    assert lat5.index_of(Vertex.ray(3)) == 3


def test_degree_symmetry(lat_tiny):
    for x in range(lat_tiny.n_vertices):
        for y in lat_tiny.neighbors(x):
            assert x in lat_tiny.neighbors(int(y))


@settings(max_examples=30, deadline=None)
@given(i=st.integers(-24, 24), j=st.integers(-24, 24))
def test_index_roundtrip(i, j):
    lat = _HYP_LAT
    q, rhs = 8, 16 * 4 ** 5 // 16  # epsilon=1/8, k=5: i^2+j^2 > 16
    if i * i + j * j <= 16 or max(abs(i), abs(j)) > 24:
        return
    v = Vertex.plane(i, j)
    assert lat.vertex(lat.index_of(v)) == v


_HYP_LAT = build_lattice(LatticeParams(k=5, epsilon=Fraction(1, 8),
                                       window_radius=Fraction(3, 4)))


def test_absorbing_mode_marks_rim():
    lat = build_lattice(LatticeParams(k=5, epsilon=Fraction(1, 8),
                                      window_radius=Fraction(3, 4),
                                      boundary_mode="absorbing"))
    assert lat.absorbing.any()
    assert not lat.absorbing[lat.interior_mask(1)].any()


def test_manifest_fields(lat5, tmp_path):
    man = lat5.manifest()
    assert man["n_vertices"] == lat5.n_vertices
    assert man["darning_degree"] == int(lat5.degree[0])
    from vdwalk.lattice import write_manifest
    write_manifest(lat5, tmp_path / "m.json")
    assert (tmp_path / "m.json").exists()
