import itertools

import numpy as np
import pytest

from fogdrip.contours import (
    ContourFamily,
    IncompatibleFamilyError,
    OrientedContour,
    contour_from_json_obj,
    contour_to_json_obj,
    extract_contours,
    read_contours_json,
    reconstruct_height,
    write_contours_json,
)
from fogdrip.lattice import HeightField, LatticeGeometry, signed_volume


def field_from(interior, hmax):
    interior = np.asarray(interior, dtype=int)
    geo = LatticeGeometry.from_interior(interior.shape[0], hmax=hmax)
    return HeightField.from_interior_array(geo, interior)


def test_single_peak_contour():
    f = field_from([[0, 0, 0], [0, 1, 0], [0, 0, 0]], hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 1
    c = fam[0]
    assert c.sign == 1
    assert c.length == 4
    assert c.interior_area == 1
    assert c.signed_volume == 1
    assert c.canonical_key() == (((3, 3), (3, 5), (5, 5), (5, 3)), 1)
    assert c.interior_cells == frozenset({(2, 2)})


def test_single_dip_contour():
    f = field_from([[0, 0, 0], [0, -1, 0], [0, 0, 0]], hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 1
    c = fam[0]
    assert c.sign == -1
    assert c.length == 4
    assert c.signed_volume == -1
    # counter-clockwise traversal keeps the taller exterior on the right
    assert c.canonical_key() == (((3, 3), (5, 3), (5, 5), (3, 5)), -1)


def test_double_column_gives_stacked_loops():
    f = field_from([[0, 0, 0], [0, 2, 0], [0, 0, 0]], hmax=2)
    fam = extract_contours(f)
    assert len(fam) == 2
    keys = [c.canonical_key() for c in fam]
    assert keys[0] == keys[1]
    assert fam.total_signed_volume() == 2


def test_square_block_dip():
    inner = np.zeros((4, 4), dtype=int)
    inner[1:3, 1:3] = -1
    f = field_from(inner, hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 1
    c = fam[0]
    assert c.sign == -1
    assert c.length == 8
    assert c.interior_area == 4
    assert fam.total_signed_volume() == signed_volume(f) == -4


def test_nested_levels():
    inner = np.ones((3, 3), dtype=int)
    inner[1, 1] = 2
    f = field_from(inner, hmax=2)
    fam = extract_contours(f)
    assert len(fam) == 2
    # levels come out in increasing order
    assert fam[0].interior_area == 9
    assert fam[0].length == 12
    assert fam[1].interior_area == 1
    assert fam.total_signed_volume() == 10
    back = reconstruct_height(fam, f.geometry)
    assert back == f


def test_diagonal_peaks_split_at_saddle():
    # two cells touching at a corner must come out as two simple loops
    f = field_from([[1, 0], [0, 1]], hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 2
    for c in fam:
        assert c.sign == 1
        assert c.length == 4
    assert reconstruct_height(fam, f.geometry) == f


def test_diagonal_dips_split_at_saddle():
    f = field_from([[-1, 0], [0, -1]], hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 2
    for c in fam:
        assert c.sign == -1
        assert c.length == 4
    assert reconstruct_height(fam, f.geometry) == f


def test_peak_next_to_dip_shares_a_bond():
    f = field_from([[1, -1], [0, 0]], hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 2
    assert sorted(c.sign for c in fam) == [-1, 1]
    shared = set(tuple(sorted(b)) for b in fam[0].bonds()) & set(
        tuple(sorted(b)) for b in fam[1].bonds())
    assert shared  # the two loops really do share a dual bond
    fam.check_compatible()
    assert reconstruct_height(fam, f.geometry) == f


def test_ring_with_hole():
    # a flat annulus at height 1: the level has one outer and one inner loop
    inner = np.ones((3, 3), dtype=int)
    inner[1, 1] = 0
    f = field_from(inner, hmax=1)
    fam = extract_contours(f)
    assert len(fam) == 2
    areas = sorted(c.interior_area for c in fam)
    assert areas == [1, 9]
    signs = {c.interior_area: c.sign for c in fam}
    assert signs[9] == 1 and signs[1] == -1
    assert fam.total_signed_volume() == 8
    assert reconstruct_height(fam, f.geometry) == f


def test_exhaustive_roundtrip_2x2():
    geo = LatticeGeometry.from_interior(2, hmax=2)
    for values in itertools.product(range(-2, 3), repeat=4):
        inner = np.array(values, dtype=int).reshape(2, 2)
        f = HeightField.from_interior_array(geo, inner)
        fam = extract_contours(f)
        assert fam.total_signed_volume() == signed_volume(f)
        assert reconstruct_height(fam, geo) == f


def test_random_roundtrip_4x4():
    rng = np.random.default_rng(20260816)
    geo = LatticeGeometry.from_interior(4, hmax=3)
    for _ in range(400):
        inner = rng.integers(-3, 4, size=(4, 4))
        f = HeightField.from_interior_array(geo, inner)
        fam = extract_contours(f)
        assert fam.total_signed_volume() == signed_volume(f)
        assert reconstruct_height(fam, geo) == f
        for c in fam:
            # simple rectilinear loops obey the square isoperimetric bound
            assert c.interior_area <= (c.length / 4) ** 2
            assert len(c.interior_cells) == c.interior_area


def test_incompatible_overlap():
    # dominoes over cells {(1,1),(2,1)} and {(2,1),(3,1)}: overlap, no nesting
    a = OrientedContour(
        np.array([[1, 1], [1, 3], [3, 3], [5, 3], [5, 1], [3, 1]]), 1)
    b = OrientedContour(
        np.array([[3, 1], [3, 3], [5, 3], [7, 3], [7, 1], [5, 1]]), 1)
    assert a.interior_cells == frozenset({(1, 1), (2, 1)})
    assert b.interior_cells == frozenset({(2, 1), (3, 1)})
    fam = ContourFamily([a, b])
    with pytest.raises(IncompatibleFamilyError) as err:
        fam.check_compatible()
    assert err.value.pair == (0, 1)


def test_incompatible_bond_orientation():
    cw = OrientedContour(np.array([[3, 3], [3, 5], [5, 5], [5, 3]]), 1)
    ccw = OrientedContour(np.array([[3, 3], [5, 3], [5, 5], [3, 5]]), -1)
    fam = ContourFamily([cw, ccw])
    with pytest.raises(IncompatibleFamilyError) as err:
        fam.check_compatible()
    assert "orientation" in str(err.value)


def test_contour_constructor_rejects_bad_loops():
    with pytest.raises(ValueError):
        OrientedContour(np.array([[3, 3], [3, 5], [5, 5]]), 1)  # too short
    with pytest.raises(ValueError):
        OrientedContour(np.array([[3, 3], [3, 7], [5, 7], [5, 3]]), 1)  # long step
    with pytest.raises(ValueError):
        OrientedContour(np.array([[3, 3], [3, 5], [5, 5], [5, 3]]), 2)  # bad sign
    with pytest.raises(ValueError):
        OrientedContour(
            np.array([[3, 3], [3, 5], [5, 5], [5, 3], [3, 3], [3, 1], [5, 1], [5, 3]]),
            1)  # revisits


def test_json_roundtrip(tmp_path):
    f = field_from([[1, -1], [0, 1]], hmax=1)
    fam = extract_contours(f)
    obj = contour_to_json_obj(fam[0])
    assert obj["sign"] in ("+", "-")
    assert contour_from_json_obj(obj).canonical_key() == fam[0].canonical_key()
    path = tmp_path / "contours.json"
    write_contours_json(fam, path)
    back = read_contours_json(path)
    assert len(back) == len(fam)
    assert [c.canonical_key() for c in back] == [c.canonical_key() for c in fam]
    assert reconstruct_height(back, f.geometry) == f


def test_reconstruct_rejects_escaping_contour():
    geo = LatticeGeometry.from_interior(2, hmax=1)
    # unit loop around a cell outside the box
    far = OrientedContour(np.array([[21, 3], [21, 5], [23, 5], [23, 3]]), 1)
    with pytest.raises(ValueError):
        reconstruct_height(ContourFamily([far]), geo)
