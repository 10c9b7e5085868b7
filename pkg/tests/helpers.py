"""Independent oracles and shared strategies for the test suite.

The oracles deliberately avoid the library's own arithmetic: IoU is
counted pixel by pixel on a boolean grid, and replacement is a blunt
linear rescan. Library results are checked against these, never against
themselves.
"""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from groundbox.geometry import BBox, iou


def pixel_iou(a, b, span: int = 64) -> float:
    """Count-the-pixels IoU for integer quads within [0, span]."""
    grid_a = np.zeros((span, span), dtype=bool)
    grid_b = np.zeros((span, span), dtype=bool)
    grid_a[a[1]: a[3], a[0]: a[2]] = True
    grid_b[b[1]: b[3], b[0]: b[2]] = True
    inter = int(np.logical_and(grid_a, grid_b).sum())
    union = int(np.logical_or(grid_a, grid_b).sum())
    return inter / union


def pixel_area(q, span: int = 64) -> int:
    grid = np.zeros((span, span), dtype=bool)
    grid[q[1]: q[3], q[0]: q[2]] = True
    return int(grid.sum())


def first_above_oracle(predicted: BBox, boxes, threshold: float) -> int:
    """Linear rescan: index of the first box with IoU strictly above."""
    for i, box in enumerate(boxes):
        if iou(predicted, box) > threshold:
            return i
    return -1


@st.composite
def quads(draw, max_coord: int = 32):
    left = draw(st.integers(0, max_coord - 1))
    top = draw(st.integers(0, max_coord - 1))
    right = draw(st.integers(left + 1, max_coord))
    bottom = draw(st.integers(top + 1, max_coord))
    return (left, top, right, bottom)


def bboxes(max_coord: int = 32):
    return quads(max_coord=max_coord).map(lambda q: BBox(*q))


def random_quad(rng, max_coord: int = 32):
    left = rng.randrange(max_coord)
    top = rng.randrange(max_coord)
    return (
        left,
        top,
        left + rng.randint(1, max_coord - left),
        top + rng.randint(1, max_coord - top),
    )
