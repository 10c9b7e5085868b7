# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled geometry kernels.

Mirrors ``_pure.py`` operation for operation, including the order of
floating-point arithmetic, so results are bit-identical across backends.
Coordinates are assumed to fit in 64-bit signed integers (pixel
coordinates always do).
"""

BACKEND = "compiled"


cdef inline long long _imax(long long a, long long b) noexcept:
    return a if a > b else b


cdef inline long long _imin(long long a, long long b) noexcept:
    return a if a < b else b


cdef inline double _iou8(long long al, long long at, long long ar, long long ab,
                         long long bl, long long bt, long long br, long long bb) noexcept:
    cdef long long iw = _imin(ar, br) - _imax(al, bl)
    cdef long long ih = _imin(ab, bb) - _imax(at, bt)
    cdef long long inter, union_
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union_ = (ar - al) * (ab - at) + (br - bl) * (bb - bt) - inter
    return <double>inter / <double>union_


def area_quad(q):
    """Pixel area of a valid quad."""
    cdef long long l = q[0], t = q[1], r = q[2], b = q[3]
    return (r - l) * (b - t)


def iou_quad(a, b):
    """Intersection over union of two valid quads, 0.0 when disjoint."""
    return _iou8(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3])


def clamp_quad(l, t, r, b, width, height):
    """Clip a raw quad to ``[0, width] x [0, height]``; None when empty."""
    cdef long long w = width, h = height
    cdef long long cl = _imin(_imax(l, 0), w)
    cdef long long ct = _imin(_imax(t, 0), h)
    cdef long long cr = _imin(_imax(r, 0), w)
    cdef long long cb = _imin(_imax(b, 0), h)
    if cr <= cl or cb <= ct:
        return None
    return (cl, ct, cr, cb)


def first_match_quad(pred, quads, double threshold):
    """Index of the first quad with IoU strictly above threshold, else -1."""
    cdef long long pl = pred[0], pt = pred[1], pr = pred[2], pb = pred[3]
    cdef Py_ssize_t i = 0
    for q in quads:
        if _iou8(pl, pt, pr, pb, q[0], q[1], q[2], q[3]) > threshold:
            return i
        i += 1
    return -1


def mean_iou_profile_quad(quads):
    """Mean IoU of each quad against the whole list, self included."""
    cdef Py_ssize_t k = len(quads)
    cdef Py_ssize_t i, j
    cdef double v
    cdef list items = list(quads)
    cdef list sums = [0.0] * k
    for i in range(k):
        a = items[i]
        for j in range(i + 1, k):
            b = items[j]
            v = _iou8(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3])
            sums[i] = <double>sums[i] + v
            sums[j] = <double>sums[j] + v
    return [(<double>s + 1.0) / k for s in sums]
