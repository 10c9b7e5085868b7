"""Pure-Python geometry kernels.

Reference implementation of the hot box operations. The compiled kernel in
``_fast.pyx`` mirrors these functions exactly, including the order of
floating-point operations, so both backends return bit-identical results.

All functions operate on quads ``(left, top, right, bottom)`` of integers
under the half-open pixel convention ``[left, right) x [top, bottom)``.
Areas are computed in exact integer arithmetic; only the final IoU ratio
is a floating-point division.
"""

BACKEND = "pure"


def area_quad(q):
    """Pixel area of a valid quad."""
    return (q[2] - q[0]) * (q[3] - q[1])


def iou_quad(a, b):
    """Intersection over union of two valid quads, 0.0 when disjoint."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def clamp_quad(l, t, r, b, width, height):
    """Clip a raw quad to ``[0, width] x [0, height]``.

    Returns the clipped quad, or None when the result has no area
    (inverted or zero-width/height input, or a box entirely outside).
    """
    cl = min(max(l, 0), width)
    ct = min(max(t, 0), height)
    cr = min(max(r, 0), width)
    cb = min(max(b, 0), height)
    if cr <= cl or cb <= ct:
        return None
    return (cl, ct, cr, cb)


def first_match_quad(pred, quads, threshold):
    """Index of the first quad with IoU strictly above threshold, else -1."""
    for i, q in enumerate(quads):
        if iou_quad(pred, q) > threshold:
            return i
    return -1


def mean_iou_profile_quad(quads):
    """Mean IoU of each quad against the whole list, self included.

    The self term contributes exactly 1.0 to every entry, so it never
    changes which quad attains the maximum.
    """
    k = len(quads)
    sums = [0.0] * k
    for i in range(k):
        for j in range(i + 1, k):
            v = iou_quad(quads[i], quads[j])
            sums[i] += v
            sums[j] += v
    return [(s + 1.0) / k for s in sums]
