"""Exact integer bounding-box arithmetic: the kernel every stage calls.

Boxes live on the integer pixel grid under the half-open convention
``[left, right) x [top, bottom)``, which makes area a pure product and
leaves no ambiguity about whether edge pixels are shared. Intersection
and union areas are computed exactly in integer arithmetic; IoU performs
a single floating-point division at the end, so no accumulation error is
possible.

Two interchangeable kernel backends exist: a compiled Cython extension
(``_fast``) and a pure-Python reference (``_pure``). The compiled one is
selected at import when available; set ``GROUNDBOX_PURE=1`` to force the
pure backend. Both produce bit-identical results; ``backend()`` reports
which one is active.

All operations are pure functions on value types and safe to call from
any number of concurrent workers.
"""

from __future__ import annotations

import numbers
import os
from dataclasses import dataclass
from typing import Optional, Sequence

from groundbox.geometry import _pure

if os.environ.get("GROUNDBOX_PURE") == "1":
    _kernel = _pure
else:
    try:
        from groundbox.geometry import _fast as _kernel  # type: ignore[no-redef]
    except ImportError:
        _kernel = _pure

__all__ = [
    "BBox",
    "ImageDims",
    "area",
    "iou",
    "clamp_to_image",
    "first_match",
    "mean_iou_profile",
    "backend",
]

Quad = tuple[int, int, int, int]


def _as_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True, slots=True)
class BBox:
    """Integer pixel rectangle ``[left, right) x [top, bottom)``.

    Every constructed BBox is valid: coordinates are non-negative and the
    box has strictly positive area. Degenerate geometry is represented by
    None at call sites (see :func:`clamp_to_image`), never by a BBox.
    """

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        for name in ("left", "top", "right", "bottom"):
            object.__setattr__(self, name, _as_int(name, getattr(self, name)))
        if self.left < 0 or self.top < 0:
            raise ValueError(f"box coordinates must be non-negative: {self}")
        if self.right <= self.left or self.bottom <= self.top:
            raise ValueError(f"box must have positive area: {self}")

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    def quad(self) -> Quad:
        """The box as a plain ``(left, top, right, bottom)`` tuple."""
        return (self.left, self.top, self.right, self.bottom)

    def fits(self, dims: "ImageDims") -> bool:
        """Whether the box lies entirely within an image of these dims."""
        return self.right <= dims.width and self.bottom <= dims.height


@dataclass(frozen=True, slots=True)
class ImageDims:
    """Positive pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self):
        for name in ("width", "height"):
            object.__setattr__(self, name, _as_int(name, getattr(self, name)))
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1: {self}")

    @property
    def area(self) -> int:
        return self.width * self.height


def backend() -> str:
    """Name of the active kernel backend: "compiled" or "pure"."""
    return _kernel.BACKEND


def area(box: BBox) -> int:
    """Pixel area of a box: ``(right - left) * (bottom - top)``."""
    return _kernel.area_quad(box.quad())


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Exactly 0.0 for disjoint boxes and exactly 1.0 for equal ones.
    """
    return _kernel.iou_quad(a.quad(), b.quad())


def clamp_to_image(quad: Sequence[int], dims: ImageDims) -> Optional[BBox]:
    """Clip a raw integer quad to image bounds.

    Accepts arbitrary integers (model decoders can emit anything) and
    clips each coordinate to ``[0, width] x [0, height]``. Returns None
    when the clipped box has zero area or inverted coordinates: emptiness
    is a value here, and each downstream stage defines its own handling.
    """
    l, t, r, b = quad
    clipped = _kernel.clamp_quad(
        _as_int("left", l),
        _as_int("top", t),
        _as_int("right", r),
        _as_int("bottom", b),
        dims.width,
        dims.height,
    )
    if clipped is None:
        return None
    return BBox(*clipped)


def first_match(predicted: BBox, boxes: Sequence[BBox], threshold: float) -> int:
    """Index of the first box whose IoU with ``predicted`` is strictly
    above ``threshold``, or -1 when none qualifies."""
    return _kernel.first_match_quad(
        predicted.quad(), [b.quad() for b in boxes], threshold
    )


def mean_iou_profile(boxes: Sequence[BBox]) -> list[float]:
    """Mean IoU of each box against the whole list (self included).

    The self term adds a constant 1/k to every entry, so the argmax is
    the same as for the mean over the other boxes alone.
    """
    return _kernel.mean_iou_profile_quad([b.quad() for b in boxes])
