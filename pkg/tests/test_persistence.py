import numpy as np
import pytest

from toposeg import (
    BinaryMask,
    LikelihoodMap,
    PersistenceDiagram,
    PixelCoord,
    betti_curve,
    betti_numbers,
    binarize,
    compute_persistence,
    diagram_to_csv,
    pairs_from_csv,
)

from oracles import (
    boundary_matrix_diagram,
    euler_characteristic,
    flood_betti,
    random_level_map,
)


def lmap(arr):
    return LikelihoodMap(np.asarray(arr, dtype=np.float64))


def mask(arr):
    return BinaryMask(np.asarray(arr, dtype=np.uint8))


def ring_map(value=0.8):
    arr = np.zeros((16, 16))
    arr[4:9, 4:9] = value
    arr[5:8, 5:8] = 0.0
    return lmap(arr)


def bare_pairs(diagram, dim=None):
    return sorted(
        (p.dim, p.birth, p.death)
        for p in diagram.pairs
        if dim is None or p.dim == dim
    )


class TestBettiNumbers:
    def test_solid_block(self):
        assert betti_numbers(mask(np.ones((8, 8)))) == (1, 0)

    def test_annulus(self):
        arr = np.zeros((8, 8), dtype=np.uint8)
        arr[2:7, 2:7] = 1
        arr[3:6, 3:6] = 0
        assert betti_numbers(mask(arr)) == (1, 1)

    def test_two_blocks(self):
        arr = np.zeros((8, 8), dtype=np.uint8)
        arr[0:2, 0:2] = 1
        arr[5:7, 5:7] = 1
        assert betti_numbers(mask(arr)) == (2, 0)

    def test_checkerboard_is_connected_under_8(self):
        arr = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        assert betti_numbers(mask(arr)) == (1, 0)

    def test_empty_mask(self):
        assert betti_numbers(mask(np.zeros((5, 5)))) == (0, 0)

    def test_hole_touching_border_is_open(self):
        # a U shape: the cavity reaches the border, so it is not a hole
        arr = np.zeros((5, 5), dtype=np.uint8)
        arr[:, 0] = 1
        arr[:, 4] = 1
        arr[4, :] = 1
        assert betti_numbers(mask(arr)) == (1, 0)

    def test_matches_flood_fill_on_random_masks(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            arr = (rng.random((10, 10)) < 0.5).astype(np.uint8)
            assert tuple(betti_numbers(mask(arr))) == flood_betti(arr)

    def test_euler_consistency_on_random_masks(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            h, w = rng.integers(2, 33, size=2)
            arr = (rng.random((h, w)) < 0.45).astype(np.uint8)
            b0, b1 = betti_numbers(mask(arr))
            assert b0 - b1 == euler_characteristic(arr)


class TestComputePersistence:
    def test_constant_zero_is_empty(self):
        assert compute_persistence(lmap(np.zeros((6, 6)))).pairs == ()

    def test_block_fixture(self):
        arr = np.zeros((8, 8))
        arr[2:5, 2:5] = 1.0
        diagram = compute_persistence(lmap(arr))
        assert bare_pairs(diagram) == [(0, 1.0, 0.0)]
        (pair,) = diagram.pairs
        assert pair.essential and pair.death_pixel is None
        assert pair.birth_pixel == PixelCoord(2, 2)  # row-major tie-break

    def test_ring_fixture(self):
        diagram = compute_persistence(ring_map(0.8))
        assert bare_pairs(diagram, dim=0) == [(0, 0.8, 0.0)]
        assert bare_pairs(diagram, dim=1) == [(1, 0.8, 0.0)]

    def test_two_peaks_merge(self):
        # peaks 1.0 and 0.8 joined by a 0.5 bridge: the younger peak dies at
        # the bridge, the global class persists
        arr = np.zeros((3, 5))
        arr[1, 1] = 1.0
        arr[1, 2] = 0.5
        arr[1, 3] = 0.8
        diagram = compute_persistence(lmap(arr))
        assert bare_pairs(diagram, dim=0) == [(0, 0.8, 0.5), (0, 1.0, 0.0)]
        finite = [p for p in diagram.pairs if not p.essential]
        (merge,) = [p for p in finite if p.dim == 0]
        assert merge.birth_pixel == PixelCoord(1, 3)
        assert merge.death_pixel == PixelCoord(1, 2)

    def test_critical_pixel_values_match_births_and_deaths(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            arr = random_level_map(rng, 12, 12, levels=8)
            m = lmap(arr)
            for p in compute_persistence(m).pairs:
                assert arr[p.birth_pixel] == p.birth
                if p.death_pixel is None:
                    assert p.essential and p.death == 0.0
                else:
                    assert arr[p.death_pixel] == p.death
                assert p.birth > p.death

    def test_determinism(self):
        rng = np.random.default_rng(22)
        arr = random_level_map(rng, 16, 16)
        assert compute_persistence(lmap(arr)) == compute_persistence(lmap(arr.copy()))

    def test_sorted_by_dim_then_persistence(self):
        rng = np.random.default_rng(23)
        arr = random_level_map(rng, 16, 16)
        diagram = compute_persistence(lmap(arr))
        keys = [
            (p.dim, -(p.birth - p.death), p.birth, p.birth_pixel.row, p.birth_pixel.col)
            for p in diagram.pairs
        ]
        assert keys == sorted(keys)

    def test_interval_counts_match_betti_curve(self):
        rng = np.random.default_rng(24)
        for _ in range(25):
            arr = random_level_map(rng, 12, 12)
            m = lmap(arr)
            diagram = compute_persistence(m)
            for t in np.unique(arr):
                expected = betti_numbers(binarize(m, float(t)))
                assert diagram.betti_at(float(t)) == expected

    def test_matches_boundary_matrix_reduction(self):
        rng = np.random.default_rng(25)
        for _ in range(15):
            arr = random_level_map(rng, 7, 7, levels=6)
            assert bare_pairs(compute_persistence(lmap(arr))) == boundary_matrix_diagram(arr)

    def test_monotone_rescaling_moves_births_and_deaths(self):
        # compare as multisets: the diagram sort order ranks by persistence,
        # which a nonlinear monotone map does not preserve
        rng = np.random.default_rng(26)
        arr = random_level_map(rng, 12, 12)
        g = lambda v: v**2  # strictly increasing, fixes 0 and 1, keeps ties
        base = compute_persistence(lmap(arr))
        scaled = compute_persistence(lmap(g(arr)))

        def key(p, transform):
            return (p.dim, transform(p.birth), transform(p.death), p.birth_pixel, p.death_pixel)

        assert sorted(key(p, g) for p in base.pairs) == sorted(
            key(q, lambda v: v) for q in scaled.pairs
        )


class TestBettiCurve:
    def test_constant_map(self):
        m = lmap(np.full((4, 4), 0.7))
        assert betti_curve(m, [0.5, 0.9]) == [(1, 0), (0, 0)]

    def test_ring_at_own_level(self):
        assert betti_curve(ring_map(0.8), [0.8]) == [(1, 1)]

    def test_threshold_zero_is_full_rectangle(self):
        rng = np.random.default_rng(31)
        m = lmap(rng.random((5, 7)))
        assert betti_curve(m, [0.0]) == [(1, 0)]


class TestDiagramCsv:
    def test_ring_round_trip(self):
        diagram = compute_persistence(ring_map(0.8))
        text = diagram_to_csv(diagram)
        lines = text.strip().splitlines()
        assert lines[0] == "dim,birth,death,birth_row,birth_col,death_row,death_col"
        assert any(line.startswith("0,0.8,0,") and line.endswith(",,") for line in lines)
        assert any(line.startswith("1,0.8,0,") for line in lines)
        parsed = pairs_from_csv(text)
        assert parsed == diagram.pairs

    def test_dims_filter(self):
        text = diagram_to_csv(compute_persistence(ring_map(0.8)), dims=(1,))
        rows = text.strip().splitlines()[1:]
        assert all(row.startswith("1,") for row in rows)

    def test_nine_significant_digits(self):
        arr = np.zeros((3, 3))
        arr[1, 1] = 1 / 3
        text = diagram_to_csv(compute_persistence(lmap(arr)))
        assert "0.333333333" in text

    def test_round_trip_on_random_maps(self):
        # 9 significant digits: parsed values agree within 1e-9, pixels and
        # structure exactly, and re-serialization is byte-stable
        rng = np.random.default_rng(32)
        for _ in range(10):
            diagram = compute_persistence(lmap(random_level_map(rng, 10, 10)))
            text = diagram_to_csv(diagram)
            parsed = pairs_from_csv(text)
            assert len(parsed) == len(diagram.pairs)
            for q, p in zip(parsed, diagram.pairs):
                assert (q.dim, q.birth_pixel, q.death_pixel, q.essential) == (
                    p.dim,
                    p.birth_pixel,
                    p.death_pixel,
                    p.essential,
                )
                assert abs(q.birth - p.birth) < 1e-9
                assert abs(q.death - p.death) < 1e-9
            reparsed = PersistenceDiagram(parsed, diagram.source_height, diagram.source_width)
            assert diagram_to_csv(reparsed) == text

    def test_rejects_bad_header(self):
        with pytest.raises(ValueError):
            pairs_from_csv("dim,birth\n0,1")


class TestEssentialBookkeeping:
    def test_single_essential_class_per_nonzero_map(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            arr = random_level_map(rng, 10, 10)
            if arr.max() == 0:
                continue
            diagram = compute_persistence(lmap(arr))
            essentials = [p for p in diagram.pairs if p.essential]
            assert len(essentials) == 1
            assert essentials[0].dim == 0
            assert essentials[0].birth == arr.max()
            assert essentials[0].death == 0.0

    def test_no_dim1_essentials(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            diagram = compute_persistence(lmap(random_level_map(rng, 10, 10)))
            assert not any(p.essential for p in diagram.pairs_in_dim(1))
