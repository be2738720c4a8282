"""Integer-pixel bounding boxes and grid rasterization.

All boxes are axis-aligned with half-open pixel semantics: pixel (x, y)
belongs to the box iff x0 <= x < x1 and y0 <= y < y1. Coordinates are
absolute integers in the owning image's pixel space.

Rasterization onto a token/latent grid uses cell-center membership: grid
cell (row, col) on an (gh x gw) grid over a (W x H) panel is "inside" a
box iff the cell's center point lies inside the box. The membership test
is done in exact integer arithmetic so that scaling panel and box by the
same integer factor never flips a boundary cell.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, absolute integer pixels, half-open on the max edge."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not isinstance(v, int):
                raise TypeError(f"BBox.{name} must be int, got {type(v).__name__}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"BBox coordinates must be >= 0, got {self.as_list()}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError(f"BBox must satisfy x0 < x1 and y0 < y1, got {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @staticmethod
    def from_list(coords) -> "BBox":
        if len(coords) != 4:
            raise ValueError(f"bbox must have 4 entries, got {len(coords)}")
        return BBox(int(coords[0]), int(coords[1]), int(coords[2]), int(coords[3]))

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def inside(self, width: int, height: int) -> bool:
        """True if the box lies fully within a (width x height) image."""
        return self.x1 <= width and self.y1 <= height

    def clip(self, other: "BBox") -> "BBox | None":
        """Intersection with `other`, or None if it is empty."""
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)

    def shift(self, dx: int, dy: int) -> "BBox":
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)


def intersection_area(a: BBox, b: BBox) -> int:
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def cell_in_box(row: int, col: int, grid_hw: tuple[int, int], panel_wh: tuple[int, int], box: BBox) -> bool:
    """Cell-center membership test in exact integer arithmetic.

    The center of cell (row, col) is ((col + 0.5) * W / gw, (row + 0.5) * H / gh).
    Half-open membership `x0 <= cx < x1` is equivalent to the integer test
    `2 * x0 * gw <= (2 * col + 1) * W < 2 * x1 * gw`.
    """
    gh, gw = grid_hw
    w, h = panel_wh
    cx2 = (2 * col + 1) * w  # 2 * gw * cx
    cy2 = (2 * row + 1) * h  # 2 * gh * cy
    return (
        2 * box.x0 * gw <= cx2 < 2 * box.x1 * gw
        and 2 * box.y0 * gh <= cy2 < 2 * box.y1 * gh
    )


def rasterize_box(box: BBox, panel_wh: tuple[int, int], grid_hw: tuple[int, int]) -> set[tuple[int, int]]:
    """Cells of an (gh x gw) grid whose centers fall inside `box`.

    A box so small that it covers no cell center is grown to the single
    cell whose center is nearest to the box center (deterministic
    row-then-col tie-break), so a real box never rasterizes to nothing.
    """
    gh, gw = grid_hw
    w, h = panel_wh
    cells = {
        (r, c)
        for r in range(gh)
        for c in range(gw)
        if cell_in_box(r, c, grid_hw, panel_wh, box)
    }
    if cells:
        return cells
    # Nearest cell to the box center; distances compared in exact integers
    # after clearing denominators (cell center and box center both x 2*g).
    bx2 = box.x0 + box.x1  # 2 * box center x
    by2 = box.y0 + box.y1
    best = None
    best_d = None
    for r in range(gh):
        for c in range(gw):
            dx = (2 * c + 1) * w - bx2 * gw  # 2*gw * (cell cx - box cx)
            dy = (2 * r + 1) * h - by2 * gh  # 2*gh * (cell cy - box cy)
            d = (dx * gh) ** 2 + (dy * gw) ** 2
            if best_d is None or d < best_d:
                best_d = d
                best = (r, c)
    assert best is not None
    return {best}
