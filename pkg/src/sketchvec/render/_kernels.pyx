# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster kernels: the hot twin of _kernels_py.py.

Every expression here mirrors the pure-Python module exactly — both
backends must produce byte-identical buffers. Keep them in sync.
"""

STRIDE = 14


cdef inline double _seg_dist2(double px, double py,
                              double x0, double y0,
                              double x1, double y1) nogil:
    cdef double ex = x1 - x0
    cdef double ey = y1 - y0
    cdef double wx = px - x0
    cdef double wy = py - y0
    cdef double t = (wx * ex + wy * ey) / (ex * ex + ey * ey)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cdef double qx = wx - t * ex
    cdef double qy = wy - t * ey
    return qx * qx + qy * qy


def render_rgba(unsigned char[::1] buf, int width, int height, int ss,
                double[::1] params, int n_shapes):
    """Composite shapes into an RGBA buffer of width x height device pixels."""
    cdef double fss = <double> ss
    cdef int si, o, kind, fill, stroke, x0, y0, x1, y1, px, py
    cdef long row
    cdef double cx, cy, a, b, rc, rs, hs
    cdef double x, y, dx, dy, u, v, au, av, d2, outer, inner
    cdef double fu, fv, gu, gv, ai, bi, hu, hv, h2
    cdef unsigned char fr, fg, fb, sr, sg, sb
    cdef bint has_fill, has_stroke, fill_hit, stroke_hit

    for si in range(n_shapes):
        o = si * STRIDE
        kind = <int> params[o]
        cx = params[o + 1]
        cy = params[o + 2]
        a = params[o + 3]
        b = params[o + 4]
        rc = params[o + 5]
        rs = params[o + 6]
        fill = <int> params[o + 7]
        stroke = <int> params[o + 8]
        hs = params[o + 9]
        x0 = <int> params[o + 10]
        y0 = <int> params[o + 11]
        x1 = <int> params[o + 12]
        y1 = <int> params[o + 13]

        has_fill = fill >= 0
        has_stroke = stroke >= 0 and hs > 0.0
        if not has_fill and not has_stroke:
            continue
        fr = <unsigned char> ((fill >> 16) & 255)
        fg = <unsigned char> ((fill >> 8) & 255)
        fb = <unsigned char> (fill & 255)
        sr = <unsigned char> ((stroke >> 16) & 255)
        sg = <unsigned char> ((stroke >> 8) & 255)
        sb = <unsigned char> (stroke & 255)

        with nogil:
            for py in range(y0, y1):
                y = (py + 0.5) / fss
                dy = y - cy
                row = (<long> py * width + x0) * 4
                for px in range(x0, x1):
                    x = (px + 0.5) / fss
                    dx = x - cx
                    u = dx * rc + dy * rs
                    v = -dx * rs + dy * rc

                    fill_hit = False
                    stroke_hit = False
                    if kind == 0:  # rectangle
                        au = u if u >= 0.0 else -u
                        av = v if v >= 0.0 else -v
                        fill_hit = au <= a and av <= b
                        if has_stroke:
                            stroke_hit = (
                                au <= a + hs
                                and av <= b + hs
                                and not (au < a - hs and av < b - hs)
                            )
                    elif kind == 1:  # circle
                        d2 = dx * dx + dy * dy
                        fill_hit = d2 <= a * a
                        if has_stroke:
                            outer = a + hs
                            inner = a - hs
                            stroke_hit = d2 <= outer * outer and (
                                inner <= 0.0 or d2 >= inner * inner
                            )
                    elif kind == 2:  # ellipse
                        fu = u / a
                        fv = v / b
                        fill_hit = fu * fu + fv * fv <= 1.0
                        if has_stroke:
                            gu = u / (a + hs)
                            gv = v / (b + hs)
                            if gu * gu + gv * gv <= 1.0:
                                ai = a - hs
                                bi = b - hs
                                if ai > 0.0 and bi > 0.0:
                                    hu = u / ai
                                    hv = v / bi
                                    stroke_hit = hu * hu + hv * hv >= 1.0
                                else:
                                    stroke_hit = True
                    else:  # triangle: apex (0,-b), base (-a,b)..(a,b)
                        fill_hit = (
                            -a * (v + b) - 2.0 * b * u <= 0.0
                            and v <= b
                            and -a * (v - b) + 2.0 * b * (u - a) <= 0.0
                        )
                        if has_stroke:
                            h2 = hs * hs
                            if _seg_dist2(u, v, 0.0, -b, -a, b) <= h2:
                                stroke_hit = True
                            elif _seg_dist2(u, v, -a, b, a, b) <= h2:
                                stroke_hit = True
                            elif _seg_dist2(u, v, a, b, 0.0, -b) <= h2:
                                stroke_hit = True

                    if has_stroke and stroke_hit:
                        buf[row] = sr
                        buf[row + 1] = sg
                        buf[row + 2] = sb
                    elif has_fill and fill_hit:
                        buf[row] = fr
                        buf[row + 1] = fg
                        buf[row + 2] = fb
                    row += 4


def box_downsample(const unsigned char[::1] src, int width, int height,
                   int factor, unsigned char[::1] dst):
    """Average factor x factor blocks of an RGBA buffer (rounded to nearest)."""
    cdef int out_w = width // factor
    cdef int out_h = height // factor
    cdef int area = factor * factor
    cdef int half = area // 2
    cdef int oy, ox, ch, sy, sx, base_x, base_y
    cdef long row, total
    with nogil:
        for oy in range(out_h):
            base_y = oy * factor
            for ox in range(out_w):
                base_x = ox * factor
                for ch in range(4):
                    total = 0
                    for sy in range(factor):
                        row = ((<long> base_y + sy) * width + base_x) * 4 + ch
                        for sx in range(factor):
                            total += src[row + sx * 4]
                    dst[(<long> oy * out_w + ox) * 4 + ch] = <unsigned char> ((total + half) // area)
