"""Qualitative spatial relations and a structural distance between diagrams.

This is what the target-aware (oracle) judge optimizes and what revert
feedback and the CLI diff report are phrased in: relations between shape
outlines (alignment, adjacency, containment) rather than pixels.

All functions are pure; concurrent use needs no synchronization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .grammar import Canvas, CanvasMismatch, Diagram, NamedColor, Shape, ShapeType

# Relation tolerances: forgiving enough for LLM-scale coordinates, tight
# enough to stay meaningful.
ALIGN_FRACTION = 0.02        # centers within 2% of the canvas extent on that axis
TOUCH_GAP_PX = 1.0           # boundary gap at most 1px...
TOUCH_OVERLAP_PX = 1.0       # ...and no overlap deeper than 1px
CONTAIN_MARGIN_PX = 1.0      # bbox strictly inside with at least 1px margin

# Per-shape matching cost weights; every term lies in [0, 1] and position
# dominates. The unmatched penalty exceeds any single matched cost.
W_CENTER = 0.5
W_SIZE = 0.2
W_FILL = 0.15
W_STROKE = 0.1
W_ROTATION = 0.05
UNMATCHED_PENALTY = 1.0

#: Totals below this are reported as exact zero (absorbs 4-decimal rounding).
EQUIVALENCE_THRESHOLD = 0.01

#: Largest per-type shape count solved by exact assignment; greedy beyond.
EXACT_MATCH_LIMIT = 10

_ELLIPSE_SEGMENTS = 96


class RelationKind(str, Enum):
    LEFT_OF = "left-of"
    RIGHT_OF = "right-of"
    ABOVE = "above"
    BELOW = "below"
    H_ALIGNED = "horizontally-aligned"
    V_ALIGNED = "vertically-aligned"
    TOUCHING = "touching"
    CONTAINS = "contains"
    LARGER_THAN = "larger-than"
    SAME_COLOR = "same-color"


_KIND_ORDER = {kind: i for i, kind in enumerate(RelationKind)}


@dataclass(frozen=True)
class QualitativeRelation:
    kind: RelationKind
    subject: int
    object: int

    def describe(self, d: Diagram) -> str:
        return (
            f"{_shape_name(d, self.subject)} is {self.kind.value} "
            f"{_shape_name(d, self.object)}"
        )


def _shape_name(d: Diagram, index: int) -> str:
    s = d.shapes[index]
    color = (
        f"{s.fill_color.value} " if s.fill_color is not NamedColor.NONE else ""
    )
    return f"shape {index} ({color}{s.shape_type.value})"


def bounding_box(s: Shape) -> tuple[float, float, float, float]:
    """Tight axis-aligned box of the rotated outline, stroke excluded."""
    from .render.raster import paint_half_extents

    hw, hh = paint_half_extents(s, include_stroke=False)
    return (s.x - hw, s.y - hh, s.x + hw, s.y + hh)


def shape_outline(s: Shape) -> list[tuple[float, float]]:
    """Convex outline polygon in canvas coordinates (ellipses approximated)."""
    theta = math.radians(s.rotation)
    c, sn = math.cos(theta), math.sin(theta)

    def place(u: float, v: float) -> tuple[float, float]:
        return (s.x + u * c - v * sn, s.y + u * sn + v * c)

    if s.shape_type is ShapeType.RECTANGLE:
        a, b = s.scale_x / 2, s.scale_y / 2
        return [place(-a, -b), place(a, -b), place(a, b), place(-a, b)]
    if s.shape_type is ShapeType.TRIANGLE:
        return [place(u - 0, v - 0) for u, v in (
            (0, -s.scale_y / 2),
            (-s.scale_x / 2, s.scale_y / 2),
            (s.scale_x / 2, s.scale_y / 2),
        )]
    a = s.scale_x / 2
    b = a if s.shape_type is ShapeType.CIRCLE else s.scale_y / 2
    points = []
    for i in range(_ELLIPSE_SEGMENTS):
        t = 2 * math.pi * i / _ELLIPSE_SEGMENTS
        points.append(place(a * math.cos(t), b * math.sin(t)))
    return points


def _seg_dist(p: tuple[float, float], q0: tuple[float, float], q1: tuple[float, float]) -> float:
    ex, ey = q1[0] - q0[0], q1[1] - q0[1]
    wx, wy = p[0] - q0[0], p[1] - q0[1]
    denom = ex * ex + ey * ey
    t = 0.0 if denom == 0 else max(0.0, min(1.0, (wx * ex + wy * ey) / denom))
    return math.hypot(wx - t * ex, wy - t * ey)


def _polygon_gap(pa: list[tuple[float, float]], pb: list[tuple[float, float]]) -> float:
    """Min distance between two disjoint convex polygon boundaries."""
    best = math.inf
    for i, p in enumerate(pa):
        for j in range(len(pb)):
            best = min(best, _seg_dist(p, pb[j], pb[(j + 1) % len(pb)]))
    for i, p in enumerate(pb):
        for j in range(len(pa)):
            best = min(best, _seg_dist(p, pa[j], pa[(j + 1) % len(pa)]))
    return best


def _project(poly: list[tuple[float, float]], ax: float, ay: float) -> tuple[float, float]:
    values = [px * ax + py * ay for px, py in poly]
    return min(values), max(values)


def polygon_separation(
    pa: list[tuple[float, float]], pb: list[tuple[float, float]]
) -> tuple[float, float]:
    """(gap, penetration) between convex polygons; one of the two is 0.

    Separating-axis test over both polygons' edge normals decides overlap
    and gives the exact penetration depth; the gap of disjoint polygons is
    the minimum boundary distance.
    """
    penetration = math.inf
    separated = False
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            ex = poly[(i + 1) % n][0] - poly[i][0]
            ey = poly[(i + 1) % n][1] - poly[i][1]
            norm = math.hypot(ex, ey)
            if norm == 0:
                continue
            ax, ay = -ey / norm, ex / norm
            min_a, max_a = _project(pa, ax, ay)
            min_b, max_b = _project(pb, ax, ay)
            overlap = min(max_a, max_b) - max(min_a, min_b)
            if overlap < 0:
                separated = True
            else:
                penetration = min(penetration, overlap)
    if separated:
        return _polygon_gap(pa, pb), 0.0
    return 0.0, penetration if penetration < math.inf else 0.0


def _bbox_area(box: tuple[float, float, float, float]) -> float:
    return max(box[2] - box[0], 0.0) * max(box[3] - box[1], 0.0)


def _bbox_inside(
    inner: tuple[float, float, float, float],
    outer: tuple[float, float, float, float],
    margin: float,
) -> bool:
    return (
        inner[0] >= outer[0] + margin
        and inner[1] >= outer[1] + margin
        and inner[2] <= outer[2] - margin
        and inner[3] <= outer[3] - margin
    )


def extract_relations(d: Diagram) -> list[QualitativeRelation]:
    """Every relation whose geometric predicate holds, deterministically ordered."""
    n = len(d.shapes)
    boxes = [bounding_box(s) for s in d.shapes]
    outlines = [shape_outline(s) for s in d.shapes]
    tol_x = ALIGN_FRACTION * d.canvas.width
    tol_y = ALIGN_FRACTION * d.canvas.height

    found: list[QualitativeRelation] = []

    def add(kind: RelationKind, subject: int, obj: int) -> None:
        found.append(QualitativeRelation(kind, subject, obj))

    separations: dict[tuple[int, int], tuple[float, float]] = {}
    for i in range(n):
        for j in range(i + 1, n):
            separations[(i, j)] = polygon_separation(outlines[i], outlines[j])

    for i in range(n):
        si = d.shapes[i]
        for j in range(n):
            if i == j:
                continue
            sj = d.shapes[j]
            dx = sj.x - si.x
            dy = sj.y - si.y
            if dx > tol_x:
                add(RelationKind.LEFT_OF, i, j)
            if -dx > tol_x:
                add(RelationKind.RIGHT_OF, i, j)
            if dy > tol_y:
                add(RelationKind.ABOVE, i, j)
            if -dy > tol_y:
                add(RelationKind.BELOW, i, j)
            if abs(dy) <= tol_y:
                add(RelationKind.H_ALIGNED, i, j)
            if abs(dx) <= tol_x:
                add(RelationKind.V_ALIGNED, i, j)
            if _bbox_area(boxes[i]) > _bbox_area(boxes[j]):
                add(RelationKind.LARGER_THAN, i, j)
            if (
                si.fill_color is not NamedColor.NONE
                and si.fill_color is sj.fill_color
            ):
                add(RelationKind.SAME_COLOR, i, j)
            if _bbox_inside(boxes[j], boxes[i], CONTAIN_MARGIN_PX):
                add(RelationKind.CONTAINS, i, j)
            if i < j:
                gap, depth = separations[(i, j)]
                if gap <= TOUCH_GAP_PX and depth <= TOUCH_OVERLAP_PX:
                    add(RelationKind.TOUCHING, i, j)
                    add(RelationKind.TOUCHING, j, i)

    found.sort(key=lambda r: (_KIND_ORDER[r.kind], r.subject, r.object))
    return found


# ---------------------------------------------------------------------------
# Structural distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuralDistance:
    value: float
    matching: tuple[tuple[int, int], ...]


def shape_pair_cost(a: Shape, b: Shape, canvas: Canvas) -> float:
    """Dissimilarity of two same-type shapes; each term bounded to [0, 1]."""
    center = min(math.hypot(a.x - b.x, a.y - b.y) / canvas.diagonal, 1.0)
    area_a = _bbox_area(bounding_box(a))
    area_b = _bbox_area(bounding_box(b))
    size = 0.0 if max(area_a, area_b) == 0 else abs(area_a - area_b) / max(area_a, area_b)
    fill = 0.0 if a.fill_color is b.fill_color else 1.0
    stroke = 0.0 if a.stroke_color is b.stroke_color else 1.0
    ang = abs(a.rotation - b.rotation)
    rotation = min(ang, 360.0 - ang) / 180.0
    return (
        W_CENTER * center
        + W_SIZE * size
        + W_FILL * fill
        + W_STROKE * stroke
        + W_ROTATION * rotation
    )


def _exact_assignment(cost: list[list[float]]) -> list[tuple[int, int]]:
    """Minimal-total-cost assignment by bitmask DP (rows <= cols <= 10)."""
    n_rows, n_cols = len(cost), len(cost[0])
    full = 1 << n_cols
    INF = math.inf
    dp = [[INF] * full for _ in range(n_rows + 1)]
    choice: list[list[int]] = [[-1] * full for _ in range(n_rows + 1)]
    dp[0][0] = 0.0
    for r in range(n_rows):
        for mask in range(full):
            base = dp[r][mask]
            if base == INF:
                continue
            for c in range(n_cols):
                bit = 1 << c
                if mask & bit:
                    continue
                total = base + cost[r][c]
                if total < dp[r + 1][mask | bit]:
                    dp[r + 1][mask | bit] = total
                    choice[r + 1][mask | bit] = c
    best_mask = min(
        (mask for mask in range(full) if dp[n_rows][mask] < INF),
        key=lambda mask: (dp[n_rows][mask], mask),
    )
    pairs = []
    mask = best_mask
    for r in range(n_rows, 0, -1):
        c = choice[r][mask]
        pairs.append((r - 1, c))
        mask ^= 1 << c
    pairs.reverse()
    return pairs


def _greedy_assignment(cost: list[list[float]]) -> list[tuple[int, int]]:
    entries = sorted(
        (cost[r][c], r, c) for r in range(len(cost)) for c in range(len(cost[0]))
    )
    used_r: set[int] = set()
    used_c: set[int] = set()
    pairs = []
    for _, r, c in entries:
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        pairs.append((r, c))
        if len(pairs) == min(len(cost), len(cost[0])):
            break
    return sorted(pairs)


def structural_distance(a: Diagram, b: Diagram) -> StructuralDistance:
    """Matching-based dissimilarity: matched pair costs plus unmatched penalties.

    Symmetric, zero exactly for equivalent diagrams (totals under
    EQUIVALENCE_THRESHOLD snap to zero to absorb serialization rounding).
    """
    if a.canvas != b.canvas:
        raise CanvasMismatch(
            f"canvas {a.canvas.width}x{a.canvas.height} != "
            f"{b.canvas.width}x{b.canvas.height}"
        )
    total = 0.0
    matching: list[tuple[int, int]] = []
    for shape_type in ShapeType:
        idx_a = [i for i, s in enumerate(a.shapes) if s.shape_type is shape_type]
        idx_b = [i for i, s in enumerate(b.shapes) if s.shape_type is shape_type]
        if not idx_a or not idx_b:
            total += UNMATCHED_PENALTY * (len(idx_a) + len(idx_b))
            continue
        swapped = len(idx_a) > len(idx_b)
        rows, cols = (idx_b, idx_a) if swapped else (idx_a, idx_b)
        cost = [
            [shape_pair_cost(a.shapes[ra] if not swapped else a.shapes[ca],
                             b.shapes[ca] if not swapped else b.shapes[ra],
                             a.canvas)
             for ca in cols]
            for ra in rows
        ]
        if len(cols) <= EXACT_MATCH_LIMIT:
            pairs = _exact_assignment(cost)
        else:
            pairs = _greedy_assignment(cost)
        for r, c in pairs:
            total += cost[r][c]
            ia, ib = (cols[c], rows[r]) if swapped else (rows[r], cols[c])
            matching.append((ia, ib))
        total += UNMATCHED_PENALTY * (len(cols) - len(rows))
    matching.sort()
    if total < EQUIVALENCE_THRESHOLD:
        total = 0.0
    return StructuralDistance(total, tuple(matching))
