import numpy as np
import pytest

from dmpfem.mesh import P1, Q1, build_structured, symmetric_value, triangle_fan


def hex_fan(radius=1.0, perturb_angle=None):
    """Fan of six equilateral triangles around the origin."""
    angles = np.arange(6) * np.pi / 3.0
    if perturb_angle is not None:
        angles = angles + perturb_angle
    ring = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return triangle_fan((0.0, 0.0), ring)


def test_structured_counts_q1():
    mesh = build_structured(2, 2, kind=Q1)
    assert mesh.n_nodes == 9
    assert mesh.n_elements == 4
    center = 4
    assert len(mesh.neighborhoods[center]) == 9


def test_structured_1x1_all_connected():
    mesh = build_structured(1, 1, kind=Q1)
    assert mesh.n_nodes == 4
    assert mesh.n_elements == 1
    for i in range(4):
        assert set(mesh.neighborhoods[i]) == {0, 1, 2, 3}


def test_structured_p1_counts_and_orientation():
    mesh = build_structured(2, 2, kind=P1)
    assert mesh.n_nodes == 9
    assert mesh.n_elements == 8
    # first cell splits along the lower-left to upper-right diagonal
    assert tuple(mesh.elements[0]) == (0, 1, 4)
    assert tuple(mesh.elements[1]) == (0, 4, 3)


def test_invalid_counts_rejected():
    with pytest.raises(ValueError):
        build_structured(0, 2)
    with pytest.raises(ValueError):
        build_structured(2, -1)


def test_center_symmetric_node_is_mirror():
    mesh = build_structured(2, 2, kind=Q1)
    center, east, west = 4, 5, 3
    sp = mesh.sym_info[(center, east)]
    assert sp.kind == "node"
    assert sp.node == west


@pytest.mark.parametrize("kind", [Q1, P1])
@pytest.mark.parametrize("nx,ny", [(2, 3), (4, 4), (5, 2)])
def test_neighborhood_symmetry(kind, nx, ny):
    mesh = build_structured(nx, ny, kind=kind)
    for i in range(mesh.n_nodes):
        assert i in mesh.neighborhoods[i]
        for j in mesh.neighborhoods[i]:
            assert i in mesh.neighborhoods[j]


def test_neighborhood_symmetry_fan():
    mesh = hex_fan()
    for i in range(mesh.n_nodes):
        for j in mesh.neighborhoods[i]:
            assert i in mesh.neighborhoods[j]


@pytest.mark.parametrize("kind", [Q1, P1])
def test_structured_sym_is_nodal_with_equal_distance(kind):
    mesh = build_structured(4, 4, kind=kind)
    for i in mesh.interior_nodes:
        for j in mesh.neighborhoods[i]:
            if j == i:
                continue
            sp = mesh.sym_info[(i, j)]
            assert sp.kind == "node"
            r = np.linalg.norm(mesh.coords[j] - mesh.coords[i])
            assert abs(sp.dist - r) < 1e-12


@pytest.mark.parametrize("kind", [Q1, P1])
def test_sym_point_geometry(kind):
    mesh = build_structured(3, 4, kind=kind)
    for (i, j), sp in mesh.sym_info.items():
        xi, xj = mesh.coords[i], mesh.coords[j]
        xs = np.array(sp.point)
        # on the line through x_i, x_j and on the opposite side of x_i
        r = xj - xi
        s = xs - xi
        cross = r[0] * s[1] - r[1] * s[0]
        assert abs(cross) < 1e-12
        assert float(s @ r) < 0


def test_symmetric_value_lookup_on_grid():
    mesh = build_structured(2, 2, kind=Q1)
    u = mesh.coords[:, 0].copy()
    center, east, west = 4, 5, 3
    assert symmetric_value(mesh, u, center, east) == pytest.approx(u[west])


def test_boundary_sym_absent():
    mesh = build_structured(2, 2, kind=Q1)
    corner, east = 0, 1
    assert (corner, east) not in mesh.sym_info
    assert symmetric_value(mesh, np.zeros(9), corner, east) is None
    # along-boundary neighbors keep their mirror
    mid_bottom = 1
    assert mesh.sym_info[(mid_bottom, 0)].node == 2


@pytest.mark.parametrize("kind", [Q1, P1])
def test_linear_reproduction_structured(kind):
    mesh = build_structured(3, 3, kind=kind)
    a, b, c = 2.0, 1.0, 0.3
    u = a * mesh.coords[:, 0] + b * mesh.coords[:, 1] + c
    for (i, j), sp in mesh.sym_info.items():
        xs = np.array(sp.point)
        expected = a * xs[0] + b * xs[1] + c
        assert symmetric_value(mesh, u, i, j) == pytest.approx(expected, abs=1e-12)


def test_fan_center_syms_are_opposite_nodes():
    mesh = hex_fan()
    for j in range(1, 7):
        sp = mesh.sym_info[(0, j)]
        assert sp.kind == "node"
        opposite = 1 + (j - 1 + 3) % 6
        assert sp.node == opposite


def test_perturbed_fan_exercises_point_kind():
    # rotating one ring node off its spoke forces an edge-interior exit point
    angles = np.zeros(6)
    angles[3] = 0.25
    mesh = hex_fan(perturb_angle=angles)
    sp = mesh.sym_info[(0, 1)]
    assert sp.kind == "point"
    # gradient extrapolation is exact on linear fields
    u = 2.0 * mesh.coords[:, 0] + mesh.coords[:, 1]
    xs = np.array(sp.point)
    assert symmetric_value(mesh, u, 0, 1) == pytest.approx(2 * xs[0] + xs[1], abs=1e-12)


def test_mesh_is_frozen_after_build():
    mesh = build_structured(2, 2)
    before = mesh.coords.copy()
    _ = mesh.neighborhoods
    assert np.array_equal(mesh.coords, before)
