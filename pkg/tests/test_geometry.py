import pytest
from hypothesis import given, settings, strategies as st

from panelforge.geometry import BBox, cell_in_box, intersection_area, iou, rasterize_box


class TestBBox:
    def test_valid_box(self):
        box = BBox(1, 2, 5, 9)
        assert box.width == 4 and box.height == 7 and box.area == 28

    @pytest.mark.parametrize("coords", [(5, 0, 5, 2), (3, 0, 1, 2), (0, 4, 2, 4), (-1, 0, 2, 2)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(ValueError):
            BBox(*coords)

    def test_non_int_rejected(self):
        with pytest.raises(TypeError):
            BBox(0.5, 0, 2, 2)

    def test_clip(self):
        assert BBox(0, 0, 10, 10).clip(BBox(5, 5, 20, 20)) == BBox(5, 5, 10, 10)
        assert BBox(0, 0, 4, 4).clip(BBox(6, 6, 8, 8)) is None

    def test_inside(self):
        assert BBox(0, 0, 10, 10).inside(10, 10)
        assert not BBox(0, 0, 11, 10).inside(10, 10)


class TestIoU:
    def test_identical(self):
        assert iou(BBox(2, 2, 8, 8), BBox(2, 2, 8, 8)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 2, 2), BBox(4, 4, 6, 6)) == 0.0

    def test_known_overlap(self):
        # 2x2 overlap of two 4x4 boxes: 4 / (16 + 16 - 4)
        assert iou(BBox(0, 0, 4, 4), BBox(2, 2, 6, 6)) == pytest.approx(4 / 28)

    def test_exhaustive_area_sweep_oracle(self):
        """IoU on every box pair within an 8x8 grid vs pixel enumeration."""
        boxes = [
            BBox(x0, y0, x1, y1)
            for x0 in range(0, 7, 2)
            for y0 in range(0, 7, 3)
            for x1 in range(x0 + 1, 8, 2)
            for y1 in range(y0 + 1, 8, 3)
        ]

        def pixels(b):
            return {(x, y) for x in range(b.x0, b.x1) for y in range(b.y0, b.y1)}

        for a in boxes:
            for b in boxes:
                pa, pb = pixels(a), pixels(b)
                inter = len(pa & pb)
                union = len(pa | pb)
                assert intersection_area(a, b) == inter
                assert iou(a, b) == pytest.approx(inter / union)


class TestRasterize:
    def test_full_panel_covers_grid(self):
        cells = rasterize_box(BBox(0, 0, 64, 64), (64, 64), (4, 4))
        assert cells == {(r, c) for r in range(4) for c in range(4)}

    def test_half_panel(self):
        # left half on a 4x4 grid: columns 0-1
        cells = rasterize_box(BBox(0, 0, 32, 64), (64, 64), (4, 4))
        assert cells == {(r, c) for r in range(4) for c in range(2)}

    def test_matches_float_center_oracle(self):
        panel = (48, 40)
        grid = (5, 6)
        box = BBox(7, 3, 29, 31)
        expected = set()
        for r in range(grid[0]):
            for c in range(grid[1]):
                cx = (c + 0.5) * panel[0] / grid[1]
                cy = (r + 0.5) * panel[1] / grid[0]
                if box.x0 <= cx < box.x1 and box.y0 <= cy < box.y1:
                    expected.add((r, c))
        assert rasterize_box(box, panel, grid) == expected

    def test_tiny_box_grows_to_nearest_cell(self):
        # covers no 2x2 cell center on a 64x64 panel -> nearest single cell
        cells = rasterize_box(BBox(1, 1, 3, 3), (64, 64), (2, 2))
        assert cells == {(0, 0)}
        cells = rasterize_box(BBox(60, 60, 62, 62), (64, 64), (2, 2))
        assert cells == {(1, 1)}

    @given(
        x0=st.integers(0, 60), y0=st.integers(0, 60),
        w=st.integers(4, 40), h=st.integers(4, 40),
        scale=st.integers(1, 5),
        gh=st.integers(1, 8), gw=st.integers(1, 8),
    )
    @settings(max_examples=150, deadline=None)
    def test_integer_scale_invariance(self, x0, y0, w, h, scale, gh, gw):
        """Scaling panel and box by the same factor keeps the raster identical."""
        panel = (100, 100)
        box = BBox(x0, y0, min(x0 + w, 100), min(y0 + h, 100))
        scaled = BBox(box.x0 * scale, box.y0 * scale, box.x1 * scale, box.y1 * scale)
        assert rasterize_box(box, panel, (gh, gw)) == rasterize_box(
            scaled, (panel[0] * scale, panel[1] * scale), (gh, gw)
        )

    @given(
        x0=st.integers(0, 56), y0=st.integers(0, 56),
        w=st.integers(1, 30), h=st.integers(1, 30),
        gh=st.integers(1, 8), gw=st.integers(1, 8),
    )
    @settings(max_examples=150, deadline=None)
    def test_never_empty(self, x0, y0, w, h, gh, gw):
        box = BBox(x0, y0, min(x0 + w, 64), min(y0 + h, 64))
        assert rasterize_box(box, (64, 64), (gh, gw))

    def test_cell_in_box_half_open_edges(self):
        # cell (0, 1) center on a 2x2 grid over 4x4 panel is (3, 1);
        # box with x1 == 3 excludes it, box with x0 == 3 includes it
        assert not cell_in_box(0, 1, (2, 2), (4, 4), BBox(0, 0, 3, 4))
        assert cell_in_box(0, 1, (2, 2), (4, 4), BBox(3, 0, 4, 4))
