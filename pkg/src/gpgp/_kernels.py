"""Compiled inner loops for the 2-D renderer (separable blur, bilinear glyph warp)."""

import numpy as np
from numba import njit


@njit(cache=True)
def blur_separable(img, w):
    """Correlate rows then columns with the symmetric kernel ``w``, clamping at edges.

    Work is limited to the neighbourhood of the nonzero bounding box; every
    skipped output would be an exact sum of zeros.
    """
    H, W = img.shape
    r = len(w) // 2
    w0 = w[r]
    out = np.zeros((H, W))
    r0, r1, c0, c1 = H, -1, W, -1
    for i in range(H):
        for j in range(W):
            if img[i, j] != 0.0:
                r0 = min(r0, i)
                r1 = max(r1, i)
                c0 = min(c0, j)
                c1 = max(c1, j)
    if r1 < 0:
        return out
    ia, ib = max(r0 - r, 0), min(r1 + r, H - 1)
    ja, jb = max(c0 - r, 0), min(c1 + r, W - 1)
    # row buffers keep the inner loops on contiguous, non-aliased memory
    n = c1 - c0 + 1
    m = jb - ja + 1
    buf = np.zeros(W + 2 * r)
    acc = np.zeros(W)
    for i in range(ia, ib + 1):
        row = img[i]
        for j in range(n):
            acc[j] = w0 * row[c0 + j]
        for k in range(1, r + 1):
            ra = img[max(i - k, 0)]
            rb = img[min(i + k, H - 1)]
            wk = w[r + k]
            for j in range(n):
                acc[j] += wk * (ra[c0 + j] + rb[c0 + j])
        buf[:] = 0.0
        for j in range(n):
            buf[r + c0 + j] = acc[j]
        if c0 == 0:
            for j in range(r):
                buf[j] = acc[0]
        if c1 == W - 1:
            for j in range(r):
                buf[r + W + j] = acc[n - 1]
        for j in range(m):
            acc[j] = w0 * buf[r + ja + j]
        for k in range(1, r + 1):
            wk = w[r + k]
            for j in range(m):
                acc[j] += wk * (buf[r + ja + j - k] + buf[r + ja + j + k])
        o = out[i]
        for j in range(m):
            v = acc[j]
            o[ja + j] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
    return out


@njit(cache=True)
def warp_glyph(master, mh, mw, size_x, size_y, c, s, x0, y0, nx, ny):
    """Inverse-map an ny-by-nx grid into the zero-bordered master with bilinear lookup."""
    cx = 0.5 * size_x
    cy = 0.5 * size_y
    sx = mw / size_x
    sy = mh / size_y
    out = np.zeros((ny, nx))
    for i in range(ny):
        Y = y0 + i + 0.5 - cy
        for j in range(nx):
            X = x0 + j + 0.5 - cx
            bx = c * X + s * Y + cx
            by = -s * X + c * Y + cy
            u = bx * sx + 0.5
            v = by * sy + 0.5
            if u < 0.0 or u > mw + 1.0 or v < 0.0 or v > mh + 1.0:
                continue
            iu = min(int(np.floor(u)), mw)
            iv = min(int(np.floor(v)), mh)
            fu = u - iu
            fv = v - iv
            val = (master[iv, iu] * (1.0 - fu) + master[iv, iu + 1] * fu) * (1.0 - fv) + (
                master[iv + 1, iu] * (1.0 - fu) + master[iv + 1, iu + 1] * fu
            ) * fv
            out[i, j] = min(max(val, 0.0), 1.0)
    return out


@njit(cache=True)
def _first_at_least(x, W, strict):
    # smallest column j in [0, W] whose center j + 0.5 is >= x (> x when strict)
    if not x < np.inf:
        return W
    if not x > -np.inf:
        return 0
    j = int(min(max(np.ceil(x - 0.5), 0.0), float(W)))
    while j > 0 and ((j - 0.5 > x) if strict else (j - 0.5 >= x)):
        j -= 1
    while j < W and ((j + 0.5 <= x) if strict else (j + 0.5 < x)):
        j += 1
    return j


@njit(cache=True)
def fill_regions(H, W, center, polys, poly_labels, left, right):
    """Label image from a side-of-centerline split and convex polygons painted in order.

    ``center`` is (ua, va, ub, vb); rows beyond its ends use the nearest end.
    ``polys`` is (n, 4, 2) of (u, v) corners. A pixel is inside a polygon
    when its center lies between the row's leftmost and rightmost edge
    crossings, inclusive.
    """
    out = np.empty((H, W), dtype=np.uint8)
    ua, va, ub, vb = center[0], center[1], center[2], center[3]
    n = polys.shape[0]
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(H):
        v = i + 0.5
        if va == vb:
            uc = 0.5 * (ua + ub)
        else:
            t = (v - va) / (vb - va)
            t = min(max(t, 0.0), 1.0)
            uc = ua + t * (ub - ua)
        for p in range(n):
            lo[p] = np.inf
            hi[p] = -np.inf
            for k in range(4):
                pa = polys[p, k]
                pb = polys[p, (k + 1) % 4]
                if pa[1] == pb[1]:
                    if v == pa[1]:
                        lo[p] = min(lo[p], min(pa[0], pb[0]))
                        hi[p] = max(hi[p], max(pa[0], pb[0]))
                    continue
                t = (v - pa[1]) / (pb[1] - pa[1])
                if t >= 0.0 and t <= 1.0:
                    u = pa[0] + t * (pb[0] - pa[0])
                    lo[p] = min(lo[p], u)
                    hi[p] = max(hi[p], u)
        row = out[i]
        split = _first_at_least(uc, W, False) if uc == uc else 0
        row[:split] = left
        row[split:] = right
        for p in range(n):
            if lo[p] <= hi[p]:
                a = _first_at_least(lo[p], W, False)
                b = _first_at_least(hi[p], W, True)
                if a < b:
                    row[a:b] = poly_labels[p]
    return out


@njit(cache=True)
def joint_counts(labels, bins, n_labels, k):
    """(n_labels, k) counts of (label, bin) pairs."""
    out = np.zeros((n_labels, k), dtype=np.int64)
    H, W = labels.shape
    for i in range(H):
        for j in range(W):
            out[labels[i, j], bins[i, j]] += 1
    return out
