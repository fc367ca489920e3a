import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dddflow import geometry as GE
from dddflow import shapes as SH
from dddflow.errors import GeometryError


def test_lattice_normalization():
    lat = GE.Lattice(2.0 * np.eye(3))
    assert np.allclose(lat.basis, np.eye(3))
    fcc = 0.5 * np.array([[0.0, 1, 1], [1, 0, 1], [1, 1, 0]])
    latf = GE.Lattice(3.7 * fcc)
    # shortest vector of the scaled fcc basis must come out at length 1
    shortest = GE.Lattice._shortest_vector_length(latf.basis)
    assert shortest == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(GeometryError):
        GE.Lattice(np.zeros((3, 3)))


def test_burgers_vector_validation(lat):
    b = GE.BurgersVector(lat, (1, 1, 0))
    assert np.allclose(b.cartesian, [1, 1, 0])
    assert b.norm == pytest.approx(np.sqrt(2))
    with pytest.raises(GeometryError):
        GE.BurgersVector(lat, (0, 0, 0))
    with pytest.raises(GeometryError):
        GE.BurgersVector(lat, (0.5, 0, 0))


def test_loop_validation(lat):
    b = GE.BurgersVector(lat, (1, 0, 0))
    with pytest.raises(GeometryError):
        GE.Loop(np.array([[0.0, 0, 0], [1, 0, 0]]), b)
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(GeometryError):
        GE.Loop(nodes, b)


def test_mass_polygon(lat):
    lp = SH.circle_loop(lat, 5.0, 64)
    net = GE.DislocationNetwork(lat, [lp], 0.5)
    assert GE.mass(net) == pytest.approx(64 * 2 * 5 * np.sin(np.pi / 64))
    two = GE.DislocationNetwork(
        lat, [lp, SH.circle_loop(lat, 5.0, 64, center=(30.0, 0, 0))], 0.5
    )
    assert GE.mass(two) == pytest.approx(2 * GE.mass(net))
    empty = GE.DislocationNetwork(lat, [], 0.5)
    assert GE.mass(empty) == 0.0
    with pytest.raises(GeometryError):
        GE.mass_ratio(empty)


def test_mass_scaled_by_burgers_norm(lat):
    lp = SH.circle_loop(lat, 5.0, 64, burgers=(1, 1, 0))
    net = GE.DislocationNetwork(lat, [lp], 0.5)
    assert GE.mass(net) == pytest.approx(np.sqrt(2) * 64 * 2 * 5 * np.sin(np.pi / 64))


def test_mass_ratio_circle_window(lat):
    lp = SH.circle_loop(lat, 5.0, 256)
    theta = GE.mass_ratio(GE.DislocationNetwork(lat, [lp], 0.5))
    assert 0.99 * np.pi <= theta <= np.pi


def test_mass_ratio_rigid_motion_invariance(lat, rng):
    from scipy.spatial.transform import Rotation

    lp = SH.random_loop(lat, rng, n_nodes=14)
    net = GE.DislocationNetwork(lat, [lp], 0.2)
    t0 = GE.mass_ratio(net)
    Q = Rotation.random(random_state=3).as_matrix()
    shift = np.array([2.0, -1.0, 0.5])
    moved = GE.Loop(lp.nodes @ Q.T + shift, lp.burgers)
    t1 = GE.mass_ratio(GE.DislocationNetwork(lat, [moved], 0.2))
    assert abs(t1 - t0) <= 1e-10 * t0


def test_mass_ratio_union_monotone(lat, rng):
    l1 = SH.random_loop(lat, rng, n_nodes=12)
    l2 = SH.random_loop(lat, rng, n_nodes=10, center=(1.5, 0.5, 0.0))
    n1 = GE.DislocationNetwork(lat, [l1], 0.2)
    n2 = GE.DislocationNetwork(lat, [l2], 0.2)
    both = GE.DislocationNetwork(lat, [l1, l2], 0.2)
    assert GE.mass_ratio(both) >= max(GE.mass_ratio(n1), GE.mass_ratio(n2)) - 1e-12


def test_mass_ratio_concentric_doubling(lat):
    l1 = SH.circle_loop(lat, 5.0, 256)
    l2 = SH.circle_loop(lat, 5.0 + 1e-7, 256)
    theta = GE.mass_ratio(GE.DislocationNetwork(lat, [l1, l2], 0.5))
    assert theta == pytest.approx(2 * np.pi, rel=2e-4)


def test_mass_ratio_lower_bound(lat, rng):
    nets = [
        GE.DislocationNetwork(lat, [SH.circle_loop(lat, 1.0, 16)], 0.1),
        GE.DislocationNetwork(lat, [SH.square_loop(lat, 2.0, 8)], 0.1),
        GE.DislocationNetwork(lat, [SH.random_loop(lat, rng, 12)], 0.2),
    ]
    for n in nets:
        assert GE.mass_ratio(n) >= 1.0 - 1e-6


def test_pushforward_identity_and_translation(lat):
    lp = SH.circle_loop(lat, 1.0, 32)
    net = GE.DislocationNetwork(lat, [lp], 0.1)
    same = GE.pushforward(net, np.zeros((32, 3)))
    assert np.array_equal(same.loops[0].nodes, lp.nodes)
    shifted = GE.pushforward(net, np.tile([0.3, -0.2, 1.0], (32, 1)))
    assert GE.mass(shifted) == pytest.approx(GE.mass(net), rel=1e-14)


def test_pushforward_radial_shrink(lat):
    lp = SH.circle_loop(lat, 1.0, 64)
    net = GE.DislocationNetwork(lat, [lp], 0.1)
    rhat = lp.nodes / np.linalg.norm(lp.nodes, axis=1)[:, None]
    moved = GE.pushforward(net, -0.1 * rhat)
    assert np.linalg.norm(moved.loops[0].nodes, axis=1) == pytest.approx(0.9)
    assert GE.mass(moved) == pytest.approx(0.9 * GE.mass(net))


def test_pushforward_errors(lat):
    lp = SH.circle_loop(lat, 1.0, 8)
    net = GE.DislocationNetwork(lat, [lp], 0.1)
    with pytest.raises(GeometryError):
        GE.pushforward(net, np.zeros((7, 3)))
    collapse = -lp.nodes  # moves every node to the origin
    with pytest.raises(GeometryError):
        GE.pushforward(net, collapse)


def test_remesh_conforming_fixed_point(lat):
    lp = SH.circle_loop(lat, 1.0, 64)  # h ~ 0.098
    net = GE.DislocationNetwork(lat, [lp], 0.1)
    out = GE.remesh(net, 0.05, 0.12)
    assert out.loops[0] is lp


def test_remesh_octagon(lat):
    lp = SH.circle_loop(lat, 5.0, 8)
    net = GE.DislocationNetwork(lat, [lp], 0.5)
    out = GE.remesh(net, 0.25, 0.5)
    assert len(out.loops[0]) >= 63
    assert GE.mass(out) == pytest.approx(GE.mass(net), rel=5e-3)
    lengths = out.loops[0].segment_lengths()
    assert lengths.min() >= 0.25 - 1e-9 and lengths.max() <= 0.5 + 1e-9
    again = GE.remesh(out, 0.25, 0.5)
    assert np.abs(again.loops[0].nodes - out.loops[0].nodes).max() <= 1e-10


def test_remesh_too_short(lat):
    tiny = SH.circle_loop(lat, 1.0 / (2 * np.pi), 8)  # total length ~ 1
    net = GE.DislocationNetwork(lat, [tiny], 0.5)
    with pytest.raises(GeometryError):
        GE.remesh(net, 0.5, 1.0)


def test_remesh_preconditions(lat):
    net = GE.DislocationNetwork(lat, [SH.circle_loop(lat, 1.0, 16)], 0.1)
    with pytest.raises(GeometryError):
        GE.remesh(net, 0.5, 0.5)


def test_planar_surface_area_and_orientation(lat):
    lp = SH.circle_loop(lat, 5.0, 64)
    surf = GE.make_planar_surface(lp)
    assert surf.total_area == pytest.approx(0.5 * 64 * 25 * np.sin(2 * np.pi / 64))
    assert np.allclose(surf.normals, [0.0, 0.0, 1.0])
    flipped = GE.make_planar_surface(lp.reversed())
    assert np.allclose(flipped.normals, [0.0, 0.0, -1.0])


def test_planar_surface_rejects_bad_loops(lat):
    b = GE.BurgersVector(lat, (0, 0, 1))
    nodes = SH.circle_loop(lat, 1.0, 16).nodes.copy()
    nodes[3, 2] += 1.0
    with pytest.raises(GeometryError):
        GE.make_planar_surface(GE.Loop(nodes, b))
    # planar but not star-shaped about the centroid
    star = SH.circle_loop(lat, 1.0, 16).nodes.copy()
    star[0, :2] = [-0.5, 0.0]  # fold one vertex deep into the polygon
    with pytest.raises(GeometryError):
        GE.make_planar_surface(GE.Loop(star, b))


def test_cone_surface(lat):
    lp = SH.circle_loop(lat, 2.0, 32)
    centroid = lp.nodes.mean(axis=0)
    flat = GE.make_planar_surface(lp)
    cone0 = GE.make_cone_surface(lp, centroid)
    assert np.allclose(flat.triangles, cone0.triangles)
    lifted = GE.make_cone_surface(lp, centroid + [0.0, 0.0, 0.5])
    assert lifted.total_area > flat.total_area
    with pytest.raises(GeometryError):
        GE.make_cone_surface(lp, lp.nodes[4])


def _directed_loop_edges(loop):
    return [
        (tuple(loop.nodes[i]), tuple(loop.nodes[(i + 1) % len(loop)]))
        for i in range(len(loop))
    ]


@pytest.mark.parametrize("refine", ["none", "refined", "split_radial"])
def test_surface_boundary_matches_loop(lat, refine):
    lp = SH.circle_loop(lat, 2.0, 24)
    surf = GE.make_cone_surface(lp, np.array([0.1, -0.2, 1.0]))
    if refine == "refined":
        surf = surf.refined()
    elif refine == "split_radial":
        surf = surf.split_radial()
    boundary = surf.boundary_edges()
    if refine == "none":
        assert sorted(boundary) == sorted(_directed_loop_edges(lp))
    else:
        # each original edge is covered by sub-edges, same orientation
        assert len(boundary) == len(lp) * (2 if refine == "refined" else 1)


def test_node_tangents_and_hairpin(lat):
    lp = SH.circle_loop(lat, 1.0, 32)
    tau, hairpin = lp.node_tangents()
    assert not hairpin.any()
    assert np.allclose(np.linalg.norm(tau, axis=1), 1.0)
    assert np.abs((tau * lp.nodes).sum(axis=1)).max() < 1e-12  # tangent to the circle
    b = GE.BurgersVector(lat, (1, 0, 0))
    spike = GE.Loop(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [1, 1e-14 + 1, 0]]), b)
    # fold-back loop: node 2 reverses direction
    nodes = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [0.5, 1e-9, 0]])
    lp2 = GE.Loop(nodes, b)
    _, flags = lp2.node_tangents()
    assert flags.any()


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.integers(8, 40))
def test_mass_positive_property(radius, n_nodes):
    lat = SH.cubic_lattice()
    net = GE.DislocationNetwork(lat, [SH.circle_loop(lat, radius, n_nodes)], 0.1)
    m = GE.mass(net)
    assert 0 < m <= 2 * np.pi * radius


def test_oversized_segment_advisory(lat):
    lp = SH.circle_loop(lat, 1.0, 8)  # h ~ 0.77
    net = GE.DislocationNetwork(lat, [lp], 0.1)
    flags = net.oversized_segments()
    assert len(flags) == 8 and flags[0] == (0, 0)
    fine = GE.DislocationNetwork(lat, [SH.circle_loop(lat, 1.0, 80)], 0.1)
    assert fine.oversized_segments() == []
