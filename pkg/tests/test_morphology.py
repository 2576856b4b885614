import numpy as np
import pytest
from helpers import bfs_reachable_oracle, flood_components_oracle

from topopt2d import DensityField, InputError
from topopt2d.morphology import (FilterConfig, apply_filter_pipeline,
                                 fill_small_holes, label_components,
                                 pipeline_config_fixpoint,
                                 remove_floating_islands, remove_peninsulas)


def corner_anchor_config(shape, **kwargs):
    """Anchors in the left column and the bottom-right corner (cantilever-like)."""
    mask = np.zeros(shape, dtype=bool)
    mask[:, 0] = True
    mask[-1, -1] = True
    return FilterConfig(anchor_mask=mask, **kwargs)


def random_binary(rng, shape, p=0.5):
    return (rng.uniform(size=shape) < p).astype(float)


class TestLabelComponents:
    def test_all_ones_single_component(self):
        comps = label_components(np.ones((3, 5)), "material", 8)
        assert comps.n_components == 1
        assert comps.areas.tolist() == [15]

    def test_checkerboard_connectivity(self):
        field = np.array([[1.0, 0.0], [0.0, 1.0]])
        by4 = label_components(field, "material", 4)
        assert by4.n_components == 2
        assert by4.areas.tolist() == [1, 1]
        by8 = label_components(field, "material", 8)
        assert by8.n_components == 1
        assert by8.areas.tolist() == [2]

    def test_empty_field(self):
        comps = label_components(np.zeros((4, 4)), "material", 8)
        assert comps.n_components == 0

    def test_labels_are_first_seen_row_major(self):
        field = np.array([
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        comps = label_components(field, "material", 4)
        assert comps.labels[0, 1] == 1
        assert comps.labels[0, 3] == 2

    def test_rejects_non_binary(self):
        with pytest.raises(InputError):
            label_components(np.full((2, 2), 0.5), "material", 8)

    def test_matches_flood_fill_oracle(self):
        rng = np.random.default_rng(0)
        for conn in (4, 8):
            for _ in range(10):
                field = random_binary(rng, (8, 8))
                comps = label_components(field, "material", conn)
                oracle = flood_components_oracle(field == 1.0, conn)
                assert comps.n_components == len(oracle)
                got = {frozenset(map(tuple, np.argwhere(comps.labels == k)))
                       for k in range(1, comps.n_components + 1)}
                assert got == {frozenset(c) for c in oracle}


class TestRemoveFloatingIslands:
    def test_anchored_component_untouched(self):
        field = np.zeros((4, 6))
        field[:, 0:2] = 1.0
        config = corner_anchor_config(field.shape)
        out = remove_floating_islands(field, config)
        assert np.array_equal(out.values, field)

    def test_unanchored_component_removed(self):
        field = np.zeros((5, 7))
        field[:, 0] = 1.0          # anchored wall
        field[2, 4:6] = 1.0        # floating island
        config = corner_anchor_config(field.shape)
        out = remove_floating_islands(field, config)
        expected = np.zeros_like(field)
        expected[:, 0] = 1.0
        assert np.array_equal(out.values, expected)

    def test_matches_bfs_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            field = random_binary(rng, (8, 8))
            config = corner_anchor_config(field.shape)
            out = remove_floating_islands(field, config)
            keep = bfs_reachable_oracle(field == 1.0, config.anchor_mask, 8)
            assert np.array_equal(out.values, keep.astype(float))


class TestFillSmallHoles:
    def test_single_interior_void_filled(self):
        field = np.ones((5, 5))
        field[2, 2] = 0.0
        config = corner_anchor_config(field.shape, max_hole_area=4)
        out = fill_small_holes(field, config)
        assert np.array_equal(out.values, np.ones((5, 5)))

    def test_large_interior_void_preserved(self):
        field = np.ones((7, 7))
        field[2:5, 2:5] = 0.0      # area 9 > 4
        config = corner_anchor_config(field.shape, max_hole_area=4)
        out = fill_small_holes(field, config)
        assert np.array_equal(out.values, field)

    def test_boundary_void_preserved(self):
        field = np.ones((5, 5))
        field[0, 2] = 0.0          # touches the domain boundary
        config = corner_anchor_config(field.shape, max_hole_area=4)
        out = fill_small_holes(field, config)
        assert np.array_equal(out.values, field)

    def test_checkerboard_cells_filled(self):
        # interior checkerboard: every single-cell void is filled
        field = np.ones((6, 8))
        for i in range(1, 5):
            for j in range(1, 7):
                if (i + j) % 2 == 0:
                    field[i, j] = 0.0
        config = corner_anchor_config(field.shape, max_hole_area=4)
        out = fill_small_holes(field, config)
        # oracle: fill exactly the interior void components with area <= 4
        expected = field.copy()
        for comp in flood_components_oracle(field == 0.0, 4):
            touches_boundary = any(
                i in (0, field.shape[0] - 1) or j in (0, field.shape[1] - 1)
                for i, j in comp
            )
            if len(comp) <= 4 and not touches_boundary:
                for cell in comp:
                    expected[cell] = 1.0
        assert np.array_equal(out.values, expected)
        assert np.array_equal(out.values, np.ones_like(field))


class TestRemovePeninsulas:
    def test_isolated_element_removed(self):
        field = np.zeros((5, 5))
        field[2, 2] = 1.0
        config = corner_anchor_config(field.shape)
        out = remove_peninsulas(field, config)
        assert out.values.sum() == 0.0

    def test_solid_block_intact(self):
        # 3x3 block: corners have 3 neighbors, edges 5, center 8 - all > 2
        field = np.zeros((5, 5))
        field[1:4, 1:4] = 1.0
        config = corner_anchor_config(field.shape)
        out = remove_peninsulas(field, config)
        assert np.array_equal(out.values, field)

    def test_thin_bar_threshold_2_vanishes_in_one_pass(self):
        # hand enumeration for a free-standing 1-wide bar of length 5:
        # tips have 1 material neighbor, interior cells exactly 2, so the
        # whole bar qualifies and the simultaneous pass clears it
        field = np.zeros((5, 9))
        field[2, 2:7] = 1.0
        config = corner_anchor_config(field.shape, peninsula_neighbor_threshold=2,
                                      peninsula_passes=1)
        out = remove_peninsulas(field, config)
        assert out.values.sum() == 0.0

    def test_thin_bar_threshold_1_loses_only_tips(self):
        # with threshold 1 the interior (2 neighbors each) survives pass 1
        field = np.zeros((5, 9))
        field[2, 2:7] = 1.0
        config = corner_anchor_config(field.shape, peninsula_neighbor_threshold=1,
                                      peninsula_passes=1)
        out = remove_peninsulas(field, config)
        expected = np.zeros_like(field)
        expected[2, 3:6] = 1.0
        assert np.array_equal(out.values, expected)

    def test_anchor_elements_exempt(self):
        field = np.zeros((4, 4))
        field[-1, -1] = 1.0        # isolated but anchored
        config = corner_anchor_config(field.shape)
        out = remove_peninsulas(field, config)
        assert out.values[-1, -1] == 1.0

    def test_single_pass_is_simultaneous(self):
        # brute-force oracle: mark against the pre-pass field, clear at once
        rng = np.random.default_rng(2)
        for _ in range(25):
            field = random_binary(rng, (7, 7), p=0.6)
            config = corner_anchor_config(field.shape, peninsula_passes=1)
            out = remove_peninsulas(field, config)
            expected = field.copy()
            marks = []
            for i in range(7):
                for j in range(7):
                    if field[i, j] != 1.0 or config.anchor_mask[i, j]:
                        continue
                    count = 0
                    for di in (-1, 0, 1):
                        for dj in (-1, 0, 1):
                            if (di, dj) == (0, 0):
                                continue
                            ni, nj = i + di, j + dj
                            if 0 <= ni < 7 and 0 <= nj < 7 and field[ni, nj] == 1.0:
                                count += 1
                    if count <= config.peninsula_neighbor_threshold:
                        marks.append((i, j))
            for cell in marks:
                expected[cell] = 0.0
            assert np.array_equal(out.values, expected)

    def test_fixpoint_mode_terminates_clean(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            field = random_binary(rng, (8, 8), p=0.55)
            config = corner_anchor_config(field.shape, peninsula_passes=None)
            out = remove_peninsulas(field, config)
            again = remove_peninsulas(out, config)
            assert np.array_equal(out.values, again.values)


def composite_defect_field():
    """An anchored body plus one floating island, one small hole, one peninsula."""
    field = np.zeros((8, 12))
    field[:, 0:4] = 1.0            # anchored slab (left column anchors)
    field[3, 2] = 0.0              # small interior hole, area 1
    field[0, 4] = 1.0              # peninsula off the slab corner, 2 neighbors
    field[1, 8:10] = 1.0           # floating island
    field[2, 8:10] = 1.0
    return field


class TestFilterPipeline:
    def test_clean_field_unchanged(self):
        field = np.zeros((6, 8))
        field[:, 0:3] = 1.0
        config = corner_anchor_config(field.shape)
        out, report = apply_filter_pipeline(field, config)
        assert np.array_equal(out.values, field)
        assert all(s.added == 0 and s.removed == 0 for s in report.stages)
        assert report.volume_delta == 0.0

    def test_composite_defects_all_fixed(self):
        field = composite_defect_field()
        config = corner_anchor_config(field.shape)
        out, report = apply_filter_pipeline(field, config)
        assert out.values[3, 2] == 1.0                      # hole filled
        assert out.values[0, 4] == 0.0                      # peninsula gone
        assert out.values[1:3, 8:10].sum() == 0.0           # island gone
        assert out.values[2, 1] == 1.0                      # body kept
        stage_names = [s.name for s in report.stages]
        assert stage_names == ["remove_floating_islands", "fill_small_holes",
                               "remove_peninsulas", "remove_floating_islands_final"]
        assert report.stages[0].removed == 4
        assert report.stages[1].added == 1

    def test_idempotent_at_fixpoint_passes(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            field = random_binary(rng, (8, 10), p=0.55)
            config = pipeline_config_fixpoint(corner_anchor_config(field.shape))
            once, _ = apply_filter_pipeline(field, config)
            twice, report = apply_filter_pipeline(once, config)
            assert np.array_equal(once.values, twice.values)
            assert report.volume_delta == 0.0

    def test_output_binary_and_nonbinary_rejected(self):
        config = corner_anchor_config((4, 4))
        out, _ = apply_filter_pipeline(np.zeros((4, 4)), config)
        assert out.binary
        with pytest.raises(InputError):
            apply_filter_pipeline(np.full((4, 4), 0.5), config)
        with pytest.raises(InputError):
            apply_filter_pipeline(DensityField(np.full((4, 4), 0.5)), config)

    def test_postconditions_on_random_fields(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            field = random_binary(rng, (9, 9), p=0.5)
            config = pipeline_config_fixpoint(corner_anchor_config(field.shape))
            out, _ = apply_filter_pipeline(field, config)
            material = out.values == 1.0
            # every material component reaches an anchor
            reach = bfs_reachable_oracle(material, config.anchor_mask, 8)
            assert np.array_equal(material, reach)
            # no interior void component at or below the hole threshold
            for comp in flood_components_oracle(out.values == 0.0, 4):
                touches_boundary = any(
                    i in (0, 8) or j in (0, 8) for i, j in comp
                )
                if not touches_boundary:
                    assert len(comp) > config.max_hole_area
            # fixpoint erosion left no removable non-anchor material
            again = remove_peninsulas(out, config)
            assert np.array_equal(again.values, out.values)
