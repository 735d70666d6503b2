"""Mesh generator, text round trip, validation and order elevation."""

import numpy as np
import pytest

from memfem.errors import GeometryError, MeshFormatError
from memfem.mesh import (
    ELECTRIC,
    MECHANICAL,
    Mesh,
    Region,
    elevate_order,
    generate_beam_mesh,
    load_mesh,
    validate,
    write_mesh,
)

GEOM = dict(length=300e-6, thickness=0.5e-6, gap=6e-6,
            electrode_length=60e-6,
            electrode_centers=(60e-6, 150e-6, 240e-6))


@pytest.fixture
def beam3():
    return generate_beam_mesh(**GEOM, nx=30, ny_beam=1, ny_gap=3, order=1)


@pytest.fixture
def beam6():
    return generate_beam_mesh(**GEOM, nx=30, ny_beam=1, ny_gap=3, order=2)


class TestGenerator:
    def test_counts(self, beam3):
        assert beam3.n_nodes == 31 * 5
        assert beam3.n_elements == 2 * 30 * 4
        assert validate(beam3) == []

    def test_region_partition(self, beam3):
        names = [beam3.region_of(e).name for e in range(beam3.n_elements)]
        assert set(names) == {"beam", "gap"}
        physics = {r.name: r.physics for r in beam3.regions}
        assert physics == {"beam": MECHANICAL, "gap": ELECTRIC}

    def test_areas_sum_to_rectangles(self, beam3):
        areas = beam3.areas()
        assert (areas > 0).all()
        beam_ids = beam3.elements_in_region("beam")
        gap_ids = beam3.elements_in_region("gap")
        assert areas[beam_ids].sum() == pytest.approx(300e-6 * 0.5e-6, rel=1e-12)
        assert areas[gap_ids].sum() == pytest.approx(300e-6 * 6e-6, rel=1e-12)

    def test_node_sets(self, beam3):
        ns = beam3.node_sets
        for name in ("clamp_left", "clamp_right", "beam_bottom", "beam",
                     "substrate", "electrode_1", "electrode_2", "electrode_3"):
            assert name in ns and len(ns[name]) > 0
        # Clamps span the interface corner up to the beam top.
        assert len(ns["clamp_left"]) == 2
        np.testing.assert_allclose(beam3.nodes[ns["clamp_left"], 0], 0.0)
        np.testing.assert_allclose(beam3.nodes[ns["beam_bottom"], 1], 0.0)
        np.testing.assert_allclose(beam3.nodes[ns["substrate"], 1], -6e-6)
        # Electrodes live on the floor, within their spans, 60 um / 10 um + 1.
        for k, c in enumerate((60e-6, 150e-6, 240e-6), 1):
            xs = beam3.nodes[ns[f"electrode_{k}"], 0]
            assert len(xs) == 7
            assert xs.min() == pytest.approx(c - 30e-6)
            assert xs.max() == pytest.approx(c + 30e-6)

    def test_minimal_strip(self):
        mesh = generate_beam_mesh(length=4.0, thickness=1.0, gap=1.0,
                                  electrode_length=4.0, electrode_centers=(2.0,),
                                  nx=2, ny_beam=1, ny_gap=1, order=1)
        assert mesh.n_nodes == 9
        assert mesh.n_elements == 8
        assert validate(mesh) == []

    def test_overlapping_electrodes_rejected(self):
        with pytest.raises(GeometryError, match="overlap"):
            generate_beam_mesh(length=300e-6, thickness=1e-6, gap=6e-6,
                               electrode_length=100e-6,
                               electrode_centers=(100e-6, 150e-6),
                               nx=30, ny_beam=1, ny_gap=2)

    def test_electrode_outside_beam_rejected(self):
        with pytest.raises(GeometryError, match="leaves"):
            generate_beam_mesh(length=300e-6, thickness=1e-6, gap=6e-6,
                               electrode_length=100e-6,
                               electrode_centers=(20e-6,),
                               nx=30, ny_beam=1, ny_gap=2)

    @pytest.mark.parametrize("bad", [
        dict(length=-1.0), dict(thickness=0.0), dict(gap=0.0),
        dict(nx=0), dict(ny_beam=0), dict(ny_gap=0), dict(order=3),
    ])
    def test_bad_arguments_rejected(self, bad):
        kw = dict(GEOM, nx=4, ny_beam=1, ny_gap=2, order=1)
        kw.update(bad)
        with pytest.raises(GeometryError):
            generate_beam_mesh(**kw)

    def test_mirror_symmetric_grid(self, beam3):
        # Node cloud is symmetric about x = L/2 (even nx, alternating diagonals).
        mirrored = beam3.nodes.copy()
        mirrored[:, 0] = 300e-6 - mirrored[:, 0]
        a = set(map(tuple, np.round(beam3.nodes * 1e12).astype(int)))
        b = set(map(tuple, np.round(mirrored * 1e12).astype(int)))
        assert a == b


class TestElevateOrder:
    def test_two_triangle_square(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        conn = np.full((2, 6), -1, dtype=np.int64)
        conn[0, :3] = (0, 1, 2)
        conn[1, :3] = (0, 2, 3)
        mesh = Mesh(nodes, conn, np.array([3, 3]), np.array([0, 0]),
                    (Region("solid", MECHANICAL, "m"),),
                    {"bottom": np.array([0, 1])})
        fine = elevate_order(mesh)
        assert fine.n_nodes == 9      # 4 corners + 5 unique edges
        assert fine.n_elements == 2
        assert (fine.kinds == 6).all()
        assert validate(fine) == []
        # Shared diagonal gets exactly one mid-side node.
        mid_diag = [n for n in fine.conn[0, 3:] if n in fine.conn[1, 3:]]
        assert len(mid_diag) == 1
        # Set extension: mid-side of edge (0,1) joins "bottom".
        bot = fine.node_sets["bottom"]
        assert len(bot) == 3
        ys = fine.nodes[bot, 1]
        np.testing.assert_allclose(ys, 0.0)

    def test_area_preserved_exactly(self, beam3, beam6):
        assert beam6.areas().sum() == pytest.approx(beam3.areas().sum(), rel=1e-13)

    def test_double_elevation_rejected(self, beam6):
        with pytest.raises(ValueError, match="TRI3"):
            elevate_order(beam6)

    def test_electrode_sets_gain_midsides(self, beam3, beam6):
        # 7 corner columns -> 6 horizontal mid-sides appended.
        assert len(beam6.node_sets["electrode_2"]) == 13
        assert len(beam3.node_sets["electrode_2"]) == 7
        np.testing.assert_allclose(
            beam6.nodes[beam6.node_sets["electrode_2"], 1], -6e-6)

    def test_validate_clean(self, beam6):
        assert validate(beam6) == []


class TestTextFormat:
    def test_round_trip_bit_exact(self, beam6, tmp_path):
        p1 = tmp_path / "a.mesh"
        p2 = tmp_path / "b.mesh"
        write_mesh(beam6, str(p1))
        again = load_mesh(str(p1))
        write_mesh(again, str(p2))
        assert p1.read_bytes() == p2.read_bytes()
        np.testing.assert_array_equal(again.nodes, beam6.nodes)
        np.testing.assert_array_equal(again.conn, beam6.conn)
        assert set(again.node_sets) == set(beam6.node_sets)
        for name in beam6.node_sets:
            np.testing.assert_array_equal(again.node_sets[name],
                                          beam6.node_sets[name])

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "tiny.mesh"
        path.write_text("""
# a comment
NODES
0 0.0 0.0   # trailing comment
1 1.0 0.0
2 0.0 1.0

ELEMENTS
0 TRI3 solid 0 1 2
REGION solid MECHANICAL steel
NODESET base
0 1
""")
        mesh = load_mesh(str(path))
        assert mesh.n_nodes == 3 and mesh.n_elements == 1
        assert mesh.region_of(0).material == "steel"
        np.testing.assert_array_equal(mesh.node_sets["base"], [0, 1])

    def test_clockwise_autofix_logged(self, tmp_path, caplog):
        path = tmp_path / "cw.mesh"
        path.write_text("NODES\n0 0 0\n1 1 0\n2 0 1\n"
                        "ELEMENTS\n0 TRI3 s 0 2 1\n"   # clockwise
                        "REGION s MECHANICAL m\n")
        import logging
        with caplog.at_level(logging.WARNING, logger="memfem.mesh"):
            mesh = load_mesh(str(path))
        assert "clockwise" in caplog.text
        assert validate(mesh) == []

    @pytest.mark.parametrize("body,fragment", [
        ("NODES\n0 0 0\nELEMENTS\n0 TRI3 s 0 1 2\nREGION s MECHANICAL m\n",
         "missing node"),
        ("NODES\n0 0 oops\n", "bad node"),
        ("NODES\n0 0 0\n0 1 1\n", "duplicate node id"),
        ("NODES\n0 0 0\n1 1 0\n2 0 1\nELEMENTS\n0 TRI3 nope 0 1 2\n",
         "undeclared region"),
        ("NODES\n0 0 0\n1 1 0\n2 0 1\nELEMENTS\n0 TRI9 s 0 1 2\n",
         "unknown element kind"),
        ("stray words\n", "outside any section"),
        ("NODES\n0 0 0\n1 1 0\n2 0 1\nELEMENTS\n0 TRI3 s 0 1 2\n"
         "REGION s PLASMA m\n", "physics"),
        ("NODES\n5 0 0\n", "dense"),
    ])
    def test_format_errors(self, tmp_path, body, fragment):
        path = tmp_path / "bad.mesh"
        path.write_text(body)
        with pytest.raises(MeshFormatError, match=fragment):
            load_mesh(str(path))

    def test_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("NODES\n0 0 0\n1 bad 0\n")
        with pytest.raises(MeshFormatError, match="line 3"):
            load_mesh(str(path))


class TestValidate:
    def test_duplicate_coordinates_diagnosed(self):
        # Two triangles meeting along a geometrically shared but topologically
        # split edge: classic non-conformity.
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                          [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        conn = np.full((2, 6), -1, dtype=np.int64)
        conn[0, :3] = (0, 1, 2)
        conn[1, :3] = (3, 5, 4)
        mesh = Mesh(nodes, conn, np.array([3, 3]), np.array([0, 0]),
                    (Region("s", MECHANICAL, "m"),))
        codes = {d.code for d in validate(mesh)}
        assert "duplicate-coordinates" in codes

    def test_orphan_node_diagnosed(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [9.0, 9.0]])
        conn = np.full((1, 6), -1, dtype=np.int64)
        conn[0, :3] = (0, 1, 2)
        mesh = Mesh(nodes, conn, np.array([3]), np.array([0]),
                    (Region("s", MECHANICAL, "m"),))
        codes = {d.code for d in validate(mesh)}
        assert "orphan-nodes" in codes

    def test_degenerate_element_diagnosed(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        conn = np.full((1, 6), -1, dtype=np.int64)
        conn[0, :3] = (0, 1, 2)
        mesh = Mesh(nodes, conn, np.array([3]), np.array([0]),
                    (Region("s", MECHANICAL, "m"),))
        codes = {d.code for d in validate(mesh)}
        assert "nonpositive-area" in codes

    def test_midside_off_midpoint_diagnosed(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                          [0.5, 0.2], [0.5, 0.5], [0.0, 0.5]])
        conn = np.array([[0, 1, 2, 3, 4, 5]])
        mesh = Mesh(nodes, conn, np.array([6]), np.array([0]),
                    (Region("s", MECHANICAL, "m"),))
        codes = {d.code for d in validate(mesh)}
        assert "midside-off-midpoint" in codes

    def test_empty_node_set_diagnosed(self, beam3):
        mesh = Mesh(beam3.nodes, beam3.conn, beam3.kinds, beam3.region_ids,
                    beam3.regions, dict(beam3.node_sets, hollow=np.array([], dtype=np.int64)))
        codes = {d.code for d in validate(mesh)}
        assert "empty-node-set" in codes


class TestMeshQueries:
    def test_nodes_in_physics(self, beam3):
        mech = beam3.nodes_in_physics(MECHANICAL)
        elec = beam3.nodes_in_physics(ELECTRIC)
        # Mechanical nodes: interface + beam rows; electric: gap + interface.
        assert len(mech) == 31 * 2
        assert len(elec) == 31 * 4
        shared = np.intersect1d(mech, elec)
        np.testing.assert_array_equal(shared, beam3.node_sets["beam_bottom"])

    def test_find_node(self, beam3):
        nid = beam3.find_node(150e-6, 0.5e-6)
        np.testing.assert_allclose(beam3.nodes[nid], [150e-6, 0.5e-6])

    def test_immutability(self, beam3):
        with pytest.raises(ValueError):
            beam3.nodes[0, 0] = 1.0

    def test_char_length(self, beam3):
        # Longest edge is a cell diagonal: sqrt(dx^2 + dy^2), dx = 10 um, dy = 2 um.
        assert beam3.char_length() == pytest.approx(np.hypot(10e-6, 2e-6), rel=1e-12)
