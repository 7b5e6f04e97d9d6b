"""Pure-Python raster kernels: the fallback twin of _kernels.pyx.

Both backends implement the exact same arithmetic in the same order so
their output is byte-identical; the compiled module is only faster. Keep
every expression in sync with the .pyx file when changing either.

Shape parameter layout (14 doubles per shape, see raster._pack_shapes):
  0 kind (0 rect, 1 circle, 2 ellipse, 3 triangle)
  1 cx   2 cy          center, canvas units
  3 a    4 b           half extents (radii for circle/ellipse)
  5 cos  6 sin         of the clockwise rotation angle
  7 fill 8 stroke      packed 0xRRGGBB, or -1 for no paint
  9 half_stroke        stroke_width / 2
  10..13               device-pixel bbox x0, y0, x1, y1 (x1/y1 exclusive)
"""

from __future__ import annotations

STRIDE = 14


def _seg_dist2(px: float, py: float, x0: float, y0: float, x1: float, y1: float) -> float:
    ex = x1 - x0
    ey = y1 - y0
    wx = px - x0
    wy = py - y0
    t = (wx * ex + wy * ey) / (ex * ex + ey * ey)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx = wx - t * ex
    qy = wy - t * ey
    return qx * qx + qy * qy


def render_rgba(buf: bytearray, width: int, height: int, ss: int, params, n_shapes: int) -> None:
    """Composite shapes into an RGBA buffer of width x height device pixels.

    Device resolution is the canvas size times ``ss``; each device pixel is
    hard-tested at its center (supersampling, not coverage integration).
    """
    fss = float(ss)
    for si in range(n_shapes):
        o = si * STRIDE
        kind = int(params[o])
        cx = params[o + 1]
        cy = params[o + 2]
        a = params[o + 3]
        b = params[o + 4]
        rc = params[o + 5]
        rs = params[o + 6]
        fill = int(params[o + 7])
        stroke = int(params[o + 8])
        hs = params[o + 9]
        x0 = int(params[o + 10])
        y0 = int(params[o + 11])
        x1 = int(params[o + 12])
        y1 = int(params[o + 13])

        has_fill = fill >= 0
        has_stroke = stroke >= 0 and hs > 0.0
        if not has_fill and not has_stroke:
            continue
        fr = (fill >> 16) & 255
        fg = (fill >> 8) & 255
        fb = fill & 255
        sr = (stroke >> 16) & 255
        sg = (stroke >> 8) & 255
        sb = stroke & 255

        for py in range(y0, y1):
            y = (py + 0.5) / fss
            dy = y - cy
            row = (py * width + x0) * 4
            for px in range(x0, x1):
                x = (px + 0.5) / fss
                dx = x - cx
                # Inverse-rotate into the shape's local frame.
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


def box_downsample(src: bytes, width: int, height: int, factor: int, dst: bytearray) -> None:
    """Average factor x factor blocks of an RGBA buffer (rounded to nearest)."""
    out_w = width // factor
    out_h = height // factor
    area = factor * factor
    half = area // 2
    for oy in range(out_h):
        base_y = oy * factor
        for ox in range(out_w):
            base_x = ox * factor
            for ch in range(4):
                total = 0
                for sy in range(factor):
                    row = ((base_y + sy) * width + base_x) * 4 + ch
                    for sx in range(factor):
                        total += src[row + sx * 4]
                dst[(oy * out_w + ox) * 4 + ch] = (total + half) // area
