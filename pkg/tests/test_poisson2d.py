from __future__ import annotations

import numpy as np
import pytest

from junction_asym.experiments import fit_rate
from junction_asym.geometry import PlateDomain
from junction_asym.mesh import mesh_plate
from junction_asym.poisson2d import (FeField, green_functions, h1_seminorm_error, l2_error,
                                     solve_dirichlet, solve_neumann_mean_zero, value_at_anchor)

CENTRE_GREEN_REGULAR = -3.0 / (8.0 * np.pi)


def _disk(size, anchors=((0.0, 0.0),), graded=True):
    plate = PlateDomain(kind="disk", radius=1.0, anchors=anchors)
    return plate, mesh_plate(plate, size, grade_near_anchors=graded)


def test_neumann_zero_data_gives_zero_field(disk_mesh_003):
    res = solve_neumann_mean_zero(disk_mesh_003, 0.0)
    assert np.all(res.field.values == 0.0)
    assert res.subtracted_mean == 0.0


def test_neumann_odd_source_gives_odd_field(symmetric_disk_005):
    m = symmetric_disk_005
    u = solve_neumann_mean_zero(m, lambda x: x[:, 0]).field
    mirrored = u(-m.vertices * (1 - 1e-12))
    assert np.max(np.abs(mirrored + u.values)) < 1e-6
    assert abs(u.mean()) < 1e-10


def test_neumann_projects_constant_source(disk_mesh_003):
    res = solve_neumann_mean_zero(disk_mesh_003, 1.0)
    assert res.subtracted_mean == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(res.field.values)) < 1e-10


@pytest.mark.parametrize("source", [0.0, 1.0, lambda x: np.exp(x[:, 0]) * x[:, 1] ** 2,
                                    lambda x: 5.0 + x[:, 0]])
def test_neumann_result_has_mean_zero(disk_mesh_003, source):
    assert abs(solve_neumann_mean_zero(disk_mesh_003, source).field.mean()) < 1e-10


def test_dirichlet_disk_centre_value():
    _, m = _disk(0.05)
    u = solve_dirichlet(m, 1.0)
    assert u([0.0, 0.0]) == pytest.approx(0.25, abs=5e-3)


def test_dirichlet_zero_data(disk_mesh_003):
    assert np.all(solve_dirichlet(disk_mesh_003, 0.0).values == 0.0)


def test_dirichlet_square_centre_value():
    plate = PlateDomain(kind="polygon", vertices=((0, 0), (1, 0), (1, 1), (0, 1)), anchors=((0.5, 0.5),))
    u = solve_dirichlet(mesh_plate(plate, 0.03), 1.0)
    assert u([0.5, 0.5]) == pytest.approx(0.07367, abs=1e-3)


def test_discrete_maximum_principle():
    _, m = _disk(0.05, graded=False)
    u = solve_dirichlet(m, lambda x: 1.0 + np.sin(3 * x[:, 0]) ** 2)
    assert u.values.min() >= -1e-10


def test_dirichlet_convergence_orders():
    exact = lambda x: 0.25 * (1 - x[:, 0] ** 2 - x[:, 1] ** 2)
    grad = lambda x: -0.5 * x
    l2, h1 = [], []
    sizes = (0.1, 0.05, 0.025)
    for s in sizes:
        _, m = _disk(s, graded=False)
        u = solve_dirichlet(m, 1.0)
        l2.append(l2_error(u, exact))
        h1.append(h1_seminorm_error(u, grad))
    assert fit_rate(zip(sizes, l2)).slope == pytest.approx(2.0, abs=0.25)
    assert fit_rate(zip(sizes, h1)).slope == pytest.approx(1.0, abs=0.25)


def test_green_diagonal_at_disk_centre(unit_disk_centre, disk_mesh_003):
    gd = green_functions(disk_mesh_003, unit_disk_centre.anchors, R0=unit_disk_centre.R0)
    assert gd.Gmatrix[0, 0] == pytest.approx(CENTRE_GREEN_REGULAR, abs=2e-3)
    assert abs(gd.Gmatrix[0, 0] - CENTRE_GREEN_REGULAR) < 1e-4


def test_green_dirichlet_diagonal_vanishes(unit_disk_centre, disk_mesh_003):
    gd = green_functions(disk_mesh_003, unit_disk_centre.anchors, "dirichlet", R0=unit_disk_centre.R0)
    assert abs(gd.Gmatrix[0, 0]) < 2e-3


def test_green_regular_part_matches_radial_oracle(unit_disk_centre, disk_mesh_003):
    gd = green_functions(disk_mesh_003, unit_disk_centre.anchors, R0=unit_disk_centre.R0)
    y = np.array([[0.5, 0.1], [0.0, -0.8], [0.05, 0.0]])
    r = np.linalg.norm(y, axis=1)
    oracle = -np.log(r) / (2 * np.pi) + r**2 / (4 * np.pi) + CENTRE_GREEN_REGULAR
    assert np.max(np.abs(gd.value(0, y) - oracle)) < 2e-3


@pytest.mark.parametrize("anchors", [((0.4, 0.0), (-0.4, 0.0)),
                                     ((0.3, 0.1), (-0.2, -0.35)),
                                     ((0.0, 0.55), (0.1, -0.2))])
@pytest.mark.parametrize("bc", ["neumann_mean_zero", "dirichlet"])
def test_green_matrix_symmetric(anchors, bc):
    plate, m = _disk(0.03, anchors)
    gd = green_functions(m, plate.anchors, bc, R0=plate.R0)
    assert abs(gd.Gmatrix[0, 1] - gd.Gmatrix[1, 0]) < 1e-3
    assert gd.symmetry_defect() < 1e-3


def test_green_functions_have_mean_zero():
    plate, m = _disk(0.03, ((0.3, 0.1), (-0.2, -0.35)))
    gd = green_functions(m, plate.anchors, R0=plate.R0)
    for j in range(2):
        # lumped integral of the singular part is only first-order accurate near the anchor
        total = gd.regular_parts[j].integral() + m.vertex_weights @ gd.singular_part(j, m.vertices)
        assert abs(total) / gd.diagnostics["area"] < 2e-3


def test_green_symmetry_defect_shrinks_under_refinement():
    anchors = ((0.3, 0.1), (-0.2, -0.35))
    defects = []
    for s in (0.08, 0.04, 0.02):
        plate, m = _disk(s, anchors)
        defects.append(green_functions(m, plate.anchors, R0=plate.R0).symmetry_defect())
    assert defects[1] <= 1.2 * defects[0] and defects[2] <= 1.2 * defects[1]


def test_green_requires_cutoff_radius(disk_mesh_003):
    with pytest.raises(ValueError):
        green_functions(disk_mesh_003, [(0.0, 0.0)])
    with pytest.raises(ValueError):
        green_functions(disk_mesh_003, [(0.0, 0.0)], "robin", R0=0.5)


@pytest.fixture(scope="module")
def centre_green(unit_disk_centre, disk_mesh_003):
    return green_functions(disk_mesh_003, unit_disk_centre.anchors, R0=unit_disk_centre.R0)


def test_anchor_value_odd_source(centre_green):
    av = value_at_anchor(centre_green, lambda x: x[:, 0])
    assert abs(av.by_interpolation[0]) < 1e-4
    assert abs(av.by_green_quadrature[0]) < 1e-4


def test_anchor_value_constant_source(centre_green):
    av = value_at_anchor(centre_green, 1.0)
    assert abs(av.by_green_quadrature[0]) < 1e-6
    assert av.subtracted_mean == pytest.approx(1.0)


def test_anchor_value_radial_source(centre_green):
    av = value_at_anchor(centre_green, lambda x: x[:, 0] ** 2 + x[:, 1] ** 2)
    assert av.by_green_quadrature[0] == pytest.approx(-1.0 / 24.0, abs=1e-3)
    assert av.by_interpolation[0] == pytest.approx(-1.0 / 24.0, abs=1e-3)
    assert av.discrepancy < 1e-4


def test_field_rejects_bad_input(disk_mesh_003):
    with pytest.raises(ValueError):
        FeField(disk_mesh_003, np.zeros(3))
    u = FeField(disk_mesh_003, np.zeros(disk_mesh_003.n_vertices))
    with pytest.raises(ValueError):
        u([3.0, 0.0])


def test_field_csv_export(tmp_path, disk_mesh_003):
    u = solve_dirichlet(disk_mesh_003, 1.0)
    u.to_csv(tmp_path / "u.csv")
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert data.shape == (disk_mesh_003.n_vertices, 4)
    assert np.allclose(data[:, 3], u.values, rtol=1e-10, atol=1e-12)
