import itertools

import numpy as np
import pytest

from voxsel.errors import ValidationError
from voxsel.lattice import (
    build_lattice,
    ising_quadratic_cube,
    ising_quadratic_square,
    isolated_graph,
    pair_count_cube,
    pair_count_square,
    read_coords,
    write_coords,
)


def brute_force_pairs(coords):
    """All-pairs Chebyshev check, independent of the builder's offset trick."""
    coords = np.asarray(coords)
    p = coords.shape[0]
    pairs = set()
    for j1 in range(p):
        for j2 in range(j1 + 1, p):
            if np.max(np.abs(coords[j1] - coords[j2])) == 1:
                pairs.add((j1, j2))
    return pairs


def full_box_coords(extents):
    axes = [range(1, e + 1) for e in extents]
    return np.array(list(itertools.product(*axes)), dtype=np.int64)


class TestBuildLattice:
    def test_single_voxel(self):
        g = build_lattice(extents=(1, 1), dim=2)
        assert g.p == 1
        assert g.n_edges == 0

    def test_2x2_square(self):
        g = build_lattice(extents=(2, 2), dim=2)
        assert g.p == 4
        assert g.n_edges == 6
        assert set(map(tuple, g.edges.tolist())) == brute_force_pairs(g.coords)

    def test_2x2x2_cube(self):
        g = build_lattice(extents=(2, 2, 2), dim=3)
        assert g.p == 8
        # all 8 corners are mutually adjacent: C(8, 2)
        assert g.n_edges == 28

    @pytest.mark.parametrize("extents", [(3, 4), (5, 2), (1, 6)])
    def test_2d_matches_brute_force(self, extents):
        g = build_lattice(extents=extents, dim=2)
        assert set(map(tuple, g.edges.tolist())) == brute_force_pairs(g.coords)

    @pytest.mark.parametrize("extents", [(2, 3, 2), (3, 3, 3), (1, 2, 4)])
    def test_3d_matches_brute_force(self, extents):
        g = build_lattice(extents=extents, dim=3)
        assert set(map(tuple, g.edges.tolist())) == brute_force_pairs(g.coords)

    def test_zero_extent_rejected(self):
        with pytest.raises(ValidationError):
            build_lattice(extents=(0, 3), dim=2)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            build_lattice(extents=(2, 2, 2), dim=2)

    def test_coords_enumeration_is_row_major(self):
        g = build_lattice(extents=(2, 3), dim=2)
        assert g.coords.tolist() == [
            [1, 1], [1, 2], [1, 3], [2, 1], [2, 2], [2, 3],
        ]

    def test_irregular_mask(self):
        # L-shaped mask: the corner voxel touches both arms
        coords = np.array([[1, 1], [1, 2], [2, 1], [4, 4]])
        g = build_lattice(coords=coords)
        assert set(map(tuple, g.edges.tolist())) == brute_force_pairs(coords)
        assert g.degree(3) == 0

    def test_duplicate_coords_rejected(self):
        with pytest.raises(ValidationError):
            build_lattice(coords=np.array([[1, 1], [1, 1]]))

    def test_adjacency_consistent_with_edges(self):
        g = build_lattice(extents=(3, 3, 2), dim=3)
        for j in range(g.p):
            neigh = set(g.neighbors(j).tolist())
            from_edges = {
                b if a == j else a for a, b in g.edges.tolist() if j in (a, b)
            }
            assert neigh == from_edges

    def test_arrays_are_read_only(self):
        g = build_lattice(extents=(2, 2), dim=2)
        with pytest.raises(ValueError):
            g.edges[0, 0] = 99


class TestPairCounts:
    @pytest.mark.parametrize("v,expected", [(1, 0), (2, 6), (3, 20)])
    def test_square_values(self, v, expected):
        assert pair_count_square(v) == expected

    @pytest.mark.parametrize("v,expected", [(1, 0), (2, 28), (3, 158)])
    def test_cube_values(self, v, expected):
        assert pair_count_cube(v) == expected

    @pytest.mark.parametrize("v", range(1, 9))
    def test_square_matches_enumeration(self, v):
        g = build_lattice(extents=(v, v), dim=2)
        assert pair_count_square(v) == g.n_edges
        assert pair_count_square(v) == len(brute_force_pairs(full_box_coords((v, v))))

    @pytest.mark.parametrize("v", range(1, 7))
    def test_cube_matches_enumeration(self, v):
        g = build_lattice(extents=(v, v, v), dim=3)
        assert pair_count_cube(v) == g.n_edges

    def test_zero_rejected(self):
        with pytest.raises(ValidationError):
            pair_count_square(0)
        with pytest.raises(ValidationError):
            pair_count_cube(0)

    @pytest.mark.parametrize("v", [3, 5])
    def test_interior_degree(self, v):
        g2 = build_lattice(extents=(v, v), dim=2)
        g3 = build_lattice(extents=(v, v, v), dim=3)
        # center voxel of an odd box is interior
        center2 = (v * v) // 2
        center3 = (v * v * v) // 2
        assert g2.degree(center2) == 8
        assert g3.degree(center3) == 26


class TestIsingQuadratic:
    def test_square_single_voxel_is_a(self):
        for a, b in [(0.7, 0.3), (-2.0, 1.5)]:
            assert ising_quadratic_square(1, a, b) == pytest.approx(a)

    def test_square_v7_coefficients(self):
        # 49a + 312b
        a, b = 1.0, 0.0
        assert ising_quadratic_square(7, a, b) == 49
        a, b = 0.0, 1.0
        assert ising_quadratic_square(7, a, b) == 312

    def test_square_v2_pure_pairs(self):
        assert ising_quadratic_square(2, 0.0, 1.0) == 12  # 2 * 6 pairs

    def test_cube_v2(self):
        a, b = 3, 5
        assert ising_quadratic_cube(2, a, b) == 8 * a + 56 * b

    def test_cube_v18_coefficients(self):
        assert ising_quadratic_cube(18, 1, 0) == 5832
        assert ising_quadratic_cube(18, 0, 1) == 134776
        slope = -134776 / 5832
        assert slope == pytest.approx(-23.11, abs=0.01)

    def test_cube_v4(self):
        a, b = 2, 7
        assert ising_quadratic_cube(4, a, b) == 64 * a + 936 * b

    @pytest.mark.parametrize("v", range(1, 9))
    def test_square_identity_with_pair_count(self, v):
        a, b = -3, 2  # integers keep the identity exact
        assert ising_quadratic_square(v, a, b) == a * v * v + 2 * b * pair_count_square(v)

    @pytest.mark.parametrize("v", range(1, 7))
    def test_cube_identity_with_pair_count(self, v):
        a, b = -3, 2
        assert ising_quadratic_cube(v, a, b) == a * v**3 + 2 * b * pair_count_cube(v)


class TestCoordsIO:
    def test_round_trip_3d(self, tmp_path):
        g = build_lattice(extents=(2, 3, 2), dim=3)
        path = tmp_path / "coords.csv"
        write_coords(path, g)
        g2 = read_coords(path)
        assert g2.dim == 3
        np.testing.assert_array_equal(g.coords, g2.coords)
        np.testing.assert_array_equal(g.edges, g2.edges)

    def test_round_trip_2d(self, tmp_path):
        g = build_lattice(extents=(3, 2), dim=2)
        path = tmp_path / "coords.csv"
        write_coords(path, g)
        g2 = read_coords(path)
        np.testing.assert_array_equal(g.coords, g2.coords)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "coords.csv"
        path.write_text("a,b,c\n1,1,1\n")
        with pytest.raises(ValidationError):
            read_coords(path)

    def test_missing_j_rejected(self, tmp_path):
        path = tmp_path / "coords.csv"
        path.write_text("j,d1,d2\n1,1,1\n3,1,2\n")
        with pytest.raises(ValidationError):
            read_coords(path)


def test_isolated_graph_has_no_edges():
    g = isolated_graph(5)
    assert g.p == 5
    assert g.n_edges == 0
