from __future__ import annotations

import numpy as np
import pytest

from junction_asym.geometry import (CrossSection, PlateDomain, Shape, config_from_dict, load_config,
                                    make_disk_config, validate_config)
from junction_asym.mesh import MeshError, TriMesh, mesh_plate

SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def test_disk_mesh_positive_areas_and_boundary_on_circle():
    plate = PlateDomain(kind="disk", radius=1.0, anchors=((0.0, 0.0),))
    m = mesh_plate(plate, 0.1)
    assert np.all(m.areas() > 0)
    r = np.linalg.norm(m.vertices[m.boundary_vertices("outer")], axis=1)
    assert np.max(np.abs(r - 1.0)) < 5e-3


def test_square_outer_loop_perimeter():
    plate = PlateDomain(kind="polygon", vertices=SQUARE, anchors=((0.5, 0.5),))
    m = mesh_plate(plate, 0.1)
    assert set(m.edge_tags) == {"outer"}
    assert m.boundary_length("outer") == pytest.approx(4.0, rel=0.01)


def test_grading_refines_near_anchor():
    plate = PlateDomain(kind="disk", radius=1.0, anchors=((0.0, 0.0),))
    size = 0.1
    m = mesh_plate(plate, size)
    c = m.vertices[m.triangles].mean(axis=1)
    near = np.linalg.norm(c, axis=1) < 0.05
    assert near.any()
    assert m.diameters()[near].min() < size / 8


def test_meshing_is_deterministic():
    plate = PlateDomain(kind="disk", radius=1.0, anchors=((0.2, -0.1),))
    a, b = mesh_plate(plate, 0.08), mesh_plate(plate, 0.08)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


def test_halving_size_at_least_quadruples_triangles():
    plate = PlateDomain(kind="polygon", vertices=SQUARE, anchors=((0.5, 0.5),))
    coarse = mesh_plate(plate, 0.1, grade_near_anchors=False).n_triangles
    assert mesh_plate(plate, 0.05, grade_near_anchors=False).n_triangles >= 4 * coarse


def test_graded_mesh_grows_under_refinement():
    # the anchor rings keep a fixed count per level, only the bulk quadruples
    plate = PlateDomain(kind="polygon", vertices=SQUARE, anchors=((0.5, 0.5),))
    coarse = mesh_plate(plate, 0.1).n_triangles
    assert mesh_plate(plate, 0.05).n_triangles > 2 * coarse


def test_hole_loop_encloses_its_anchor():
    P = (0.1, 0.2)
    plate = PlateDomain(kind="disk", radius=1.0, anchors=(P,))
    hole = Shape(kind="disk", radius=1.0)
    m = mesh_plate(plate, 0.05, holes=[(P, hole, 0.1)])
    loop = m.vertices[m.boundary_vertices("hole_1")]
    assert np.allclose(loop.mean(axis=0), P, atol=1e-3)
    assert np.all(np.linalg.norm(loop - P, axis=1) > 0.09)


def test_off_roundtrip(tmp_path):
    plate = PlateDomain(kind="disk", radius=1.0, anchors=((0.0, 0.0),))
    m = mesh_plate(plate, 0.2)
    m.export_off(tmp_path / "m.off")
    back = TriMesh.read_off(tmp_path / "m.off")
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert back.edge_tags == m.edge_tags


def test_degenerate_polygon_is_rejected():
    bow = PlateDomain(kind="polygon", vertices=((0, 0), (1, 1), (1, 0), (0, 1)), anchors=((0.5, 0.4),))
    with pytest.raises(MeshError):
        mesh_plate(bow, 0.1)


def test_anchor_too_close_to_boundary_for_grading():
    plate = PlateDomain(kind="disk", radius=1.0, anchors=((0.97, 0.0),))
    with pytest.raises(MeshError):
        mesh_plate(plate, 0.1)


def test_standard_config_is_valid():
    assert validate_config(make_disk_config(h=0.05)) == []


def test_oversized_h_violates_containment():
    msgs = validate_config(make_disk_config(h=1.5))
    assert any("not contained" in m and "1" in m for m in msgs)


def test_overlapping_anchor_balls():
    cfg = make_disk_config(anchors=((0.1, 0.0), (-0.1, 0.0)), cutoff_radius=0.3, h=0.01)
    assert any("anchor balls overlap" in m for m in validate_config(cfg))


@pytest.mark.parametrize("bad, word", [
    (CrossSection(kind="disk", radius=-1.0), "radius"),
    (CrossSection(kind="disk", radius=1.0, gamma=0.0), "gamma"),
    (CrossSection(kind="disk", radius=1.0, length=0.0), "length"),
    (CrossSection(kind="polygon", vertices=((1, 1), (2, 1), (2, 2))), "origin"),
    (CrossSection(kind="polygon", vertices=((-1, -1), (-1, 1), (1, 1), (1, -1))), "oriented"),
])
def test_cross_section_invariants(bad, word):
    assert any(word in m for m in bad.violations(1))


def test_default_cutoff_radius_rule():
    plate = PlateDomain(kind="disk", radius=1.0, anchors=((0.4, 0.0), (-0.4, 0.0)))
    # distance to the boundary 0.6, half separation 0.4
    assert plate.R0 == pytest.approx(0.2)


def test_toml_config_roundtrip(tmp_path):
    text = """
alpha = 0
h_sweep = [0.04, 0.02, 0.01]
[plate]
kind = "polygon"
vertices = [[-1, -1], [1, -1], [1, 1], [-1, 1]]
anchors = [[0.0, 0.0]]
lateral_bc = "dirichlet"
[[rods]]
kind = "polygon"
vertices = [[-1, -1], [1, -1], [0, 1]]
gamma = 2.0
length = 0.5
"""
    p = tmp_path / "c.toml"
    p.write_text(text)
    cfg = load_config(p)
    assert cfg.alpha == 0 and cfg.h == 0.04 and cfg.plate.lateral_bc == "dirichlet"
    assert cfg.rods[0].gamma == 2.0 and cfg.rods[0].length == 0.5
    assert validate_config(cfg) == []
    assert config_from_dict(cfg.raw) == cfg
