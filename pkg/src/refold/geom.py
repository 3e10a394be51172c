"""Exact 2D geometry kernel: points, isometries, simple polygons, overlay.

All constructions are closed over the rationals, so with Fraction coordinates
every predicate is decided exactly.  With float coordinates the same code runs
through the tolerant comparisons in refold.scalar.
"""

from __future__ import annotations

import functools
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

from .scalar import Scalar, eq, is_zero, le, lt, sign


class GeomError(Exception):
    pass


class LengthMismatch(GeomError):
    pass


class DegenerateSegment(GeomError):
    pass


class NotATiling(GeomError):
    pass


class BadPolygon(GeomError):
    pass


class Vec:
    """A point or vector in the plane.

    Integer coordinates are stored as Fractions so that later divisions stay
    exact instead of decaying to float.
    """

    __slots__ = ("x", "y")

    def __init__(self, x: Scalar, y: Scalar):
        self.x = Fraction(x) if isinstance(x, int) else x
        self.y = Fraction(y) if isinstance(y, int) else y

    def __add__(self, o: "Vec") -> "Vec":
        return Vec(self.x + o.x, self.y + o.y)

    def __sub__(self, o: "Vec") -> "Vec":
        return Vec(self.x - o.x, self.y - o.y)

    def __mul__(self, s: Scalar) -> "Vec":
        return Vec(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec":
        return Vec(-self.x, -self.y)

    def dot(self, o: "Vec") -> Scalar:
        return self.x * o.x + self.y * o.y

    def cross(self, o: "Vec") -> Scalar:
        return self.x * o.y - self.y * o.x

    def len2(self) -> Scalar:
        return self.x * self.x + self.y * self.y

    def perp(self) -> "Vec":
        return Vec(-self.y, self.x)

    def close_to(self, o: "Vec") -> bool:
        return eq(self.x, o.x) and eq(self.y, o.y)

    def to_float(self) -> "Vec":
        return Vec(float(self.x), float(self.y))

    def __repr__(self):
        return f"Vec({self.x!r}, {self.y!r})"

    def __iter__(self):
        yield self.x
        yield self.y


def orient(a: Vec, b: Vec, c: Vec) -> int:
    """Sign of the signed area of triangle abc (+1 = counterclockwise)."""
    return sign((b - a).cross(c - a))


def point_at(a: Vec, b: Vec, t: Scalar) -> Vec:
    return Vec(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))


def param_on_segment(a: Vec, b: Vec, p: Vec) -> Scalar:
    """Parameter t with p = a + t*(b-a); p is assumed on line ab."""
    d = b - a
    l2 = d.len2()
    if is_zero(l2):
        raise DegenerateSegment("zero-length segment")
    return (p - a).dot(d) / l2


def on_segment(a: Vec, b: Vec, p: Vec) -> bool:
    if orient(a, b, p) != 0:
        return False
    t = param_on_segment(a, b, p)
    return le(0, t) and le(t, 1)


def segments_share_point(p1: Vec, p2: Vec, q1: Vec, q2: Vec) -> bool:
    """Whether closed segments p1p2 and q1q2 have any common point."""
    d1 = orient(p1, p2, q1)
    d2 = orient(p1, p2, q2)
    d3 = orient(q1, q2, p1)
    d4 = orient(q1, q2, p2)
    if d1 != d2 and d3 != d4 and d1 * d2 <= 0 and d3 * d4 <= 0:
        if (d1 != 0 or d2 != 0) and (d3 != 0 or d4 != 0):
            return True
    for (a, b, p) in ((p1, p2, q1), (p1, p2, q2), (q1, q2, p1), (q1, q2, p2)):
        if on_segment(a, b, p):
            return True
    return False


def intersect_lines(p: Vec, d: Vec, q: Vec, e: Vec) -> Optional[Vec]:
    """Intersection of lines p + t*d and q + s*e, or None if parallel."""
    den = d.cross(e)
    if is_zero(den):
        return None
    t = (q - p).cross(e) / den
    return point_at(p, p + d, t)


# ---------------------------------------------------------------------------
# Isometries


class Isometry:
    """Affine map x -> M x + t with M orthogonal (det = +-1)."""

    __slots__ = ("a", "b", "c", "d", "tx", "ty")

    def __init__(self, a, b, c, d, tx, ty):
        self.a, self.b, self.c, self.d = a, b, c, d
        self.tx, self.ty = tx, ty

    @staticmethod
    def identity() -> "Isometry":
        return Isometry(1, 0, 0, 1, 0, 0)

    @staticmethod
    def translation(v: Vec) -> "Isometry":
        return Isometry(1, 0, 0, 1, v.x, v.y)

    @staticmethod
    def rotation180(center: Vec) -> "Isometry":
        return Isometry(-1, 0, 0, -1, 2 * center.x, 2 * center.y)

    def apply(self, p: Vec) -> Vec:
        return Vec(self.a * p.x + self.b * p.y + self.tx,
                   self.c * p.x + self.d * p.y + self.ty)

    def apply_vector(self, v: Vec) -> Vec:
        return Vec(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)

    def compose(self, inner: "Isometry") -> "Isometry":
        """self o inner (apply inner first)."""
        a = self.a * inner.a + self.b * inner.c
        b = self.a * inner.b + self.b * inner.d
        c = self.c * inner.a + self.d * inner.c
        d = self.c * inner.b + self.d * inner.d
        t = self.apply(Vec(inner.tx, inner.ty))
        return Isometry(a, b, c, d, t.x, t.y)

    def inverse(self) -> "Isometry":
        det = self.a * self.d - self.b * self.c
        ia = self.d / det
        ib = -self.b / det
        ic = -self.c / det
        id_ = self.a / det
        tx = -(ia * self.tx + ib * self.ty)
        ty = -(ic * self.tx + id_ * self.ty)
        return Isometry(ia, ib, ic, id_, tx, ty)

    @property
    def orientation_preserving(self) -> bool:
        return sign(self.a * self.d - self.b * self.c) > 0

    def is_identity(self) -> bool:
        return (eq(self.a, 1) and eq(self.b, 0) and eq(self.c, 0)
                and eq(self.d, 1) and is_zero(self.tx) and is_zero(self.ty))

    def __repr__(self):
        return (f"Isometry({self.a!r},{self.b!r},{self.c!r},{self.d!r},"
                f"{self.tx!r},{self.ty!r})")


def segment_map(a1: Vec, b1: Vec, a2: Vec, b2: Vec,
                orientation_preserving: bool = True) -> Isometry:
    """The unique isometry of the given orientation with a1->a2, b1->b2.

    Requires |a1 b1| = |a2 b2| > 0.  Stays rational for rational inputs.
    """
    u = b1 - a1
    v = b2 - a2
    l2 = u.len2()
    if is_zero(l2):
        raise DegenerateSegment("map from zero-length segment")
    if not eq(l2, v.len2()):
        raise LengthMismatch(f"segment lengths differ: {l2} vs {v.len2()}")
    if orientation_preserving:
        c = u.dot(v) / l2
        s = u.cross(v) / l2
        m = Isometry(c, -s, s, c, 0, 0)
    else:
        a = (u.x * v.x - u.y * v.y) / l2
        b = (u.y * v.x + u.x * v.y) / l2
        m = Isometry(a, b, b, -a, 0, 0)
    t = a2 - m.apply(a1)
    return Isometry(m.a, m.b, m.c, m.d, t.x, t.y)


def segment_rigid_map(a1: Vec, b1: Vec, a2: Vec, b2: Vec) -> Isometry:
    """The unique rotation-and-translation with a1->a2 and b1->b2."""
    return segment_map(a1, b1, a2, b2, orientation_preserving=True)


def find_reflection(a1: Vec, b1: Vec, a2: Vec, b2: Vec) -> Optional[Isometry]:
    """Pure (non-glide) reflection taking a1->a2 and b1->b2, if one exists.

    The unique orientation-reversing isometry matching the endpoints is a pure
    reflection exactly when it is an involution.
    """
    f = segment_map(a1, b1, a2, b2, orientation_preserving=False)
    # f o f = x + (M t + t); pure reflection iff that translation vanishes.
    mt = f.apply_vector(Vec(f.tx, f.ty))
    if is_zero(mt.x + f.tx) and is_zero(mt.y + f.ty):
        return f
    return None


# ---------------------------------------------------------------------------
# Polygons


class SimplePolygon:
    """Simple polygon, counterclockwise, no three consecutive collinear vertices.

    The vertex order given by the caller is preserved (edge k runs from vertex
    k to vertex k+1); clockwise input is rejected rather than silently
    reversed because edge indices carry gluing bookkeeping.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices: Sequence[Vec], normalize: bool = True):
        pts = list(vertices)
        if normalize:
            pts = _drop_redundant_vertices(pts)
        if len(pts) < 3:
            raise BadPolygon("fewer than 3 vertices after normalization")
        self.vertices = pts
        a2 = _signed_area2(pts)
        if sign(a2) <= 0:
            raise BadPolygon("polygon must be counterclockwise with positive area")
        self._check_simple()

    def _check_simple(self):
        pts = self.vertices
        n = len(pts)
        for i in range(n):
            a1, b1 = pts[i], pts[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                a2, b2 = pts[j], pts[(j + 1) % n]
                if segments_share_point(a1, b1, a2, b2):
                    raise BadPolygon(f"self-intersection between edges {i} and {j}")

    def __len__(self):
        return len(self.vertices)

    def vertex(self, i: int) -> Vec:
        return self.vertices[i % len(self.vertices)]

    def edge(self, i: int) -> Tuple[Vec, Vec]:
        return self.vertex(i), self.vertex(i + 1)

    def edges(self):
        for i in range(len(self.vertices)):
            yield i, self.vertex(i), self.vertex(i + 1)

    def edge_len2(self, i: int) -> Scalar:
        a, b = self.edge(i)
        return (b - a).len2()

    def edge_point(self, i: int, t: Scalar) -> Vec:
        a, b = self.edge(i)
        return point_at(a, b, t)

    def area2(self) -> Scalar:
        return _signed_area2(self.vertices)

    def area(self) -> Scalar:
        a2 = self.area2()
        if isinstance(a2, float):
            return a2 / 2.0
        return Fraction(a2) / 2

    def is_convex(self) -> bool:
        n = len(self.vertices)
        for i in range(n):
            if orient(self.vertex(i), self.vertex(i + 1), self.vertex(i + 2)) <= 0:
                return False
        return True

    def is_strictly_convex(self) -> bool:
        return self.is_convex()

    def contains_point(self, p: Vec) -> int:
        """1 interior, 0 on the boundary, -1 exterior."""
        n = len(self.vertices)
        for i in range(n):
            a, b = self.edge(i)
            if on_segment(a, b, p):
                return 0
        # Crossing number against a ray in +x, with vertex-degeneracy handled
        # by the half-open rule on y-spans.
        inside = False
        for i in range(n):
            a, b = self.edge(i)
            ay, by = a.y, b.y
            if (lt(ay, p.y) and le(p.y, by)) or (lt(by, p.y) and le(p.y, ay)):
                o = orient(a, b, p)
                if lt(ay, by):
                    if o > 0:
                        inside = not inside
                else:
                    if o < 0:
                        inside = not inside
        return 1 if inside else -1

    def locate_boundary_point(self, p: Vec) -> Optional[Tuple[int, Scalar]]:
        """(edge index, parameter) for a boundary point; vertices get t=0."""
        n = len(self.vertices)
        for i in range(n):
            if p.close_to(self.vertex(i)):
                return i, 0 if not isinstance(p.x, float) else 0.0
        for i in range(n):
            a, b = self.edge(i)
            if on_segment(a, b, p):
                return i, param_on_segment(a, b, p)
        return None

    def transformed(self, iso: Isometry) -> "SimplePolygon":
        pts = [iso.apply(v) for v in self.vertices]
        if not iso.orientation_preserving:
            pts = list(reversed(pts))
        return SimplePolygon(pts, normalize=False)

    def to_float(self) -> "SimplePolygon":
        return SimplePolygon([v.to_float() for v in self.vertices], normalize=False)

    def __repr__(self):
        return f"SimplePolygon({self.vertices!r})"


def _signed_area2(pts: Sequence[Vec]) -> Scalar:
    s = 0
    n = len(pts)
    for i in range(n):
        s = s + pts[i].cross(pts[(i + 1) % n])
    return s


def _drop_redundant_vertices(pts: List[Vec]) -> List[Vec]:
    out: List[Vec] = []
    for p in pts:
        if out and p.close_to(out[-1]):
            continue
        out.append(p)
    if len(out) > 1 and out[0].close_to(out[-1]):
        out.pop()
    changed = True
    while changed and len(out) >= 3:
        changed = False
        n = len(out)
        for i in range(n):
            a, b, c = out[(i - 1) % n], out[i], out[(i + 1) % n]
            if orient(a, b, c) == 0 and sign((b - a).dot(c - b)) > 0:
                out.pop(i)
                changed = True
                break
    return out


# ---------------------------------------------------------------------------
# Triangulation (deterministic ear clipping, lowest-index ear first)


def _point_in_triangle(a: Vec, b: Vec, c: Vec, p: Vec) -> bool:
    return (orient(a, b, p) >= 0 and orient(b, c, p) >= 0
            and orient(c, a, p) >= 0)


def triangulate_polygon(poly: SimplePolygon) -> List[Tuple[Vec, Vec, Vec]]:
    pts = list(poly.vertices)
    tris: List[Tuple[Vec, Vec, Vec]] = []
    while len(pts) > 3:
        n = len(pts)
        clipped = False
        for i in range(n):
            a, b, c = pts[(i - 1) % n], pts[i], pts[(i + 1) % n]
            if orient(a, b, c) <= 0:
                continue
            ok = True
            for j in range(n):
                if j in ((i - 1) % n, i, (i + 1) % n):
                    continue
                if _point_in_triangle(a, b, c, pts[j]):
                    ok = False
                    break
            if ok:
                tris.append((a, b, c))
                pts.pop(i)
                clipped = True
                break
        if not clipped:
            raise BadPolygon("ear clipping failed (degenerate polygon?)")
    tris.append((pts[0], pts[1], pts[2]))
    return tris


# ---------------------------------------------------------------------------
# Convex clipping (Sutherland-Hodgman) and polygon intersection


def clip_by_halfplane(pts: List[Vec], a: Vec, b: Vec) -> List[Vec]:
    """Keep the part of the loop on or left of directed line ab."""
    out: List[Vec] = []
    n = len(pts)
    for i in range(n):
        p, q = pts[i], pts[(i + 1) % n]
        sp, sq = orient(a, b, p), orient(a, b, q)
        if sp >= 0:
            out.append(p)
        if sp * sq < 0:
            den = (b - a).cross(q - p)
            if not is_zero(den):
                t = (b - a).cross(a - p) / den
                out.append(point_at(p, q, t))
    return out


def convex_intersection(p: SimplePolygon, clip: SimplePolygon) -> Optional[SimplePolygon]:
    """Intersection of a polygon with a convex polygon (None if measure zero)."""
    pts = list(p.vertices)
    for i in range(len(clip.vertices)):
        a, b = clip.edge(i)
        pts = clip_by_halfplane(pts, a, b)
        if len(pts) < 3:
            return None
    pts = _drop_redundant_vertices(pts)
    if len(pts) < 3 or sign(_signed_area2(pts)) <= 0:
        return None
    return SimplePolygon(pts, normalize=False)


def polygons_interior_overlap(p: SimplePolygon, q: SimplePolygon) -> bool:
    """Whether two polygons share interior area."""
    area = 0
    for tp in _convex_parts(p):
        for tq in _convex_parts(q):
            inter = convex_intersection(tp, tq)
            if inter is not None:
                area = area + inter.area2()
    return not is_zero(area)


def _convex_parts(p: SimplePolygon) -> List[SimplePolygon]:
    if p.is_convex():
        return [p]
    return [SimplePolygon([a, b, c], normalize=False)
            for a, b, c in triangulate_polygon(p)]


def intersect_polygons(p: SimplePolygon, q: SimplePolygon) -> List[SimplePolygon]:
    """Connected components of the intersection of two simple polygons."""
    if q.is_convex():
        inter = convex_intersection(p, q)
        return [inter] if inter is not None else []
    if p.is_convex():
        inter = convex_intersection(q, p)
        return [inter] if inter is not None else []
    bits: List[SimplePolygon] = []
    for tp in _convex_parts(p):
        for tq in _convex_parts(q):
            inter = convex_intersection(tp, tq)
            if inter is not None:
                bits.append(inter)
    if not bits:
        return []
    return merge_fragments(bits)


# ---------------------------------------------------------------------------
# Fragment merging: fuse interior-disjoint polygons sharing boundary pieces
# into maximal simple polygons (used for nonconvex intersection components
# and for piece merges).


def merge_fragments(frags: List[SimplePolygon]) -> List[SimplePolygon]:
    verts: List[Vec] = []

    def vid(p: Vec) -> int:
        for i, v in enumerate(verts):
            if v.close_to(p):
                return i
        verts.append(p)
        return len(verts) - 1

    raw_edges: List[Tuple[int, int]] = []
    for f in frags:
        for _, a, b in f.edges():
            raw_edges.append((vid(a), vid(b)))

    # Split every edge at every vertex lying in its interior so that
    # overlapping anti-parallel portions match up exactly.
    sub_edges: List[Tuple[int, int]] = []
    for (ia, ib) in raw_edges:
        a, b = verts[ia], verts[ib]
        cuts = []
        for j, v in enumerate(verts):
            if j in (ia, ib):
                continue
            if on_segment(a, b, v):
                cuts.append((param_on_segment(a, b, v), j))
        cuts.sort(key=lambda c: c[0])
        chain = [ia] + [j for _, j in cuts] + [ib]
        for k in range(len(chain) - 1):
            if chain[k] != chain[k + 1]:
                sub_edges.append((chain[k], chain[k + 1]))

    # Cancel opposite directed sub-edges (interior seams).
    remaining: List[Tuple[int, int]] = []
    count = {}
    for e in sub_edges:
        count[e] = count.get(e, 0) + 1
    for (ia, ib), c in sorted(count.items()):
        opp = count.get((ib, ia), 0)
        keep = c - min(c, opp)
        remaining.extend([(ia, ib)] * keep)
    if not remaining:
        raise GeomError("fragment merge cancelled all edges")

    # Trace boundary cycles; at a pinch vertex take the first outgoing edge
    # clockwise from the reversed incoming direction, which keeps each
    # component on its own cycle.
    out_edges = {}
    for e in remaining:
        out_edges.setdefault(e[0], []).append(e[1])
    unused = set()
    for e in remaining:
        if remaining.count(e) > 1:
            raise GeomError("duplicate boundary edge; fragments overlap")
        unused.add(e)

    def pick_next(prev: int, at: int) -> int:
        cands = [t for t in out_edges.get(at, []) if (at, t) in unused]
        if not cands:
            raise GeomError("dangling boundary while merging fragments")
        if len(cands) == 1:
            return cands[0]
        r = verts[prev] - verts[at]  # reversed incoming direction

        def cos_proxy(x, c2):
            # monotone in cos = x/sqrt(c2), exact on rationals
            return sign(x) * x * x / c2

        def cw_key(tgt: int):
            # ascending clockwise angle from r, U-turn (angle 2 pi) last
            c = verts[tgt] - verts[at]
            x, y = r.dot(c), r.cross(c)
            c2 = c.len2()
            if is_zero(y):
                return (3, 0) if sign(x) > 0 else (1, 0)
            if sign(y) < 0:  # clockwise half: angle in (0, pi), descending cos
                return (0, -cos_proxy(x, c2))
            return (2, cos_proxy(x, c2))  # angle in (pi, 2 pi), ascending cos

        cands.sort(key=cw_key)
        return cands[0]

    cycles: List[List[int]] = []
    while unused:
        start = sorted(unused)[0]
        cyc = [start[0], start[1]]
        unused.discard(start)
        while cyc[-1] != cyc[0]:
            nxt = pick_next(cyc[-2], cyc[-1])
            unused.discard((cyc[-1], nxt))
            cyc.append(nxt)
        cycles.append(cyc[:-1])

    polys = []
    for cyc in cycles:
        pts = [verts[i] for i in cyc]
        if sign(_signed_area2(pts)) < 0:
            raise GeomError("fragment merge produced a hole")
        polys.append(SimplePolygon(pts))
    return polys


# ---------------------------------------------------------------------------
# Splitting a polygon along an interior polyline


def clip_polyline_to_polygon(poly: SimplePolygon, pts: Sequence[Vec]) -> List[List[Vec]]:
    """Maximal portions of an open polyline lying inside a polygon."""
    pieces: List[List[Vec]] = []
    cur: List[Vec] = []
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        params = [0 if not isinstance(a.x, float) else 0.0, 1]
        for i in range(len(poly.vertices)):
            ea, eb = poly.edge(i)
            den = (b - a).cross(eb - ea)
            if not is_zero(den):
                t = (ea - a).cross(eb - ea) / den
                s = (ea - a).cross(b - a) / den
                if le(0, t) and le(t, 1) and le(0, s) and le(s, 1):
                    params.append(t)
            else:
                for v in (ea, eb):
                    if on_segment(a, b, v):
                        params.append(param_on_segment(a, b, v))
        params = sorted(params)
        dedup = [params[0]]
        for t in params[1:]:
            if not eq(t, dedup[-1]):
                dedup.append(t)
        for j in range(len(dedup) - 1):
            lo, hi = dedup[j], dedup[j + 1]
            mid = point_at(a, b, (lo + hi) / 2)
            if poly.contains_point(mid) >= 0:
                p0, p1 = point_at(a, b, lo), point_at(a, b, hi)
                if cur and cur[-1].close_to(p0):
                    cur.append(p1)
                else:
                    if len(cur) >= 2:
                        pieces.append(cur)
                    cur = [p0, p1]
            else:
                if len(cur) >= 2:
                    pieces.append(cur)
                cur = []
    if len(cur) >= 2:
        pieces.append(cur)
    return pieces


class SplitResult:
    """Outcome of cutting one polygon along a boundary-to-boundary polyline.

    remap entries translate old boundary coordinates to the two sub-pieces:
    (old_edge, lo, hi, side, new_edge) means the old-edge parameter range
    [lo, hi] became the full new edge `new_edge` of sub-piece `side` ('L' or
    'R'), parameters rescaled affinely and direction preserved.
    cut_edges_left/right list the new edge indices along the cut polyline,
    left side ordered start->end, right side end->start.
    """

    def __init__(self, left, right, remap, cut_edges_left, cut_edges_right):
        self.left = left
        self.right = right
        self.remap = remap
        self.cut_edges_left = cut_edges_left
        self.cut_edges_right = cut_edges_right


def split_polygon(poly: SimplePolygon, polyline: Sequence[Vec]) -> SplitResult:
    """Split a polygon into its left and right parts along a polyline.

    The polyline must start and end on the boundary and otherwise run through
    the interior; the left piece is the one lying left of the directed cut.
    """
    pts = [p for p in polyline]
    if len(pts) < 2:
        raise BadPolygon("cut polyline needs at least two points")
    loc_a = poly.locate_boundary_point(pts[0])
    loc_b = poly.locate_boundary_point(pts[-1])
    if loc_a is None or loc_b is None:
        raise BadPolygon("cut polyline endpoints must lie on the boundary")
    for p in pts[1:-1]:
        if poly.contains_point(p) != 1:
            raise BadPolygon("cut polyline interior point not inside the piece")
    for k in range(len(pts) - 1):
        mid = point_at(pts[k], pts[k + 1], Fraction(1, 2)
                       if not isinstance(pts[k].x, float) else 0.5)
        if poly.contains_point(mid) != 1:
            raise BadPolygon("cut polyline leaves the piece")
    if loc_a == loc_b and pts[0].close_to(pts[-1]):
        raise BadPolygon("cut polyline is a loop")

    n = len(poly.vertices)

    def boundary_arc(frm, to):
        """CCW walk of the old boundary from one location to another.

        Returns (intermediate vertices, segments), each segment an
        (old_edge, lo, hi) parameter range; len(segs) == len(arc_pts) + 1.
        """
        (e0, t0), (e1, t1) = frm, to
        arc_pts: List[Vec] = []
        segs: List[Tuple[int, Scalar, Scalar]] = []
        if e0 == e1 and lt(t0, t1):
            segs.append((e0, t0, t1))
            return arc_pts, segs
        segs.append((e0, t0, 1))
        e = (e0 + 1) % n
        arc_pts.append(poly.vertex(e))
        guard = 0
        while e != e1:
            segs.append((e, 0, 1))
            e = (e + 1) % n
            arc_pts.append(poly.vertex(e))
            guard += 1
            if guard > n + 1:
                raise BadPolygon("boundary walk failed")
        if eq(t1, 0):
            arc_pts.pop()  # last corner is the cut endpoint itself
        else:
            segs.append((e1, 0, t1))
        if len(segs) != len(arc_pts) + 1:
            raise BadPolygon("boundary walk bookkeeping mismatch")
        return arc_pts, segs

    # Arc from cut end to cut start (CCW) + forward polyline = LEFT piece
    # (a CCW piece whose boundary contains the cut forward has the cut on
    # its right side, i.e. the piece lies left of the directed cut).
    arc_l_pts, arc_l_segs = boundary_arc(loc_b, loc_a)
    arc_r_pts, arc_r_segs = boundary_arc(loc_a, loc_b)

    left_pts = [pts[-1]] + arc_l_pts + [pts[0]] + pts[1:-1]
    right_pts = [pts[0]] + arc_r_pts + [pts[-1]] + list(reversed(pts[1:-1]))

    try:
        left = SimplePolygon(left_pts, normalize=False)
        right = SimplePolygon(right_pts, normalize=False)
    except BadPolygon as exc:
        raise BadPolygon(f"cut does not split the piece cleanly: {exc}")

    if len(arc_l_segs) + len(pts) - 1 != len(left.vertices):
        raise BadPolygon("left piece edge bookkeeping mismatch")
    if len(arc_r_segs) + len(pts) - 1 != len(right.vertices):
        raise BadPolygon("right piece edge bookkeeping mismatch")

    # Edge layout per piece: old-boundary segments 0..len(segs)-1, then the
    # polyline edges.
    remap = []
    for k, (e, lo, hi) in enumerate(arc_l_segs):
        remap.append((e, lo, hi, "L", k))
    for k, (e, lo, hi) in enumerate(arc_r_segs):
        remap.append((e, lo, hi, "R", k))
    # cut_edges_*[k] covers polyline segment pts[k] -> pts[k+1]; the left
    # piece traverses it forward, the right piece backward.
    nseg = len(pts) - 1
    cut_left = [len(arc_l_segs) + k for k in range(nseg)]
    cut_right = [len(arc_r_segs) + (nseg - 1 - k) for k in range(nseg)]
    return SplitResult(left, right, remap, cut_left, cut_right)


# ---------------------------------------------------------------------------
# Overlay of decompositions of a common region


def overlay(decomp_a, decomp_b):
    """Overlay two decompositions of the same rectangle.

    Each input is a list of (SimplePolygon, Isometry) placements; the output
    is a list of (piece, origin_a, origin_b) with pieces in placed
    coordinates, the connected components of pairwise intersections.
    """
    placed_a = [p.transformed(iso) for p, iso in decomp_a]
    placed_b = [p.transformed(iso) for p, iso in decomp_b]
    _check_tiling(placed_a, "first decomposition")
    _check_tiling(placed_b, "second decomposition")
    area_a = sum_scalars(p.area2() for p in placed_a)
    area_b = sum_scalars(p.area2() for p in placed_b)
    if not eq(area_a, area_b):
        raise NotATiling("decompositions cover different total areas")
    out = []
    for i, pa in enumerate(placed_a):
        for j, pb in enumerate(placed_b):
            if _bbox_disjoint(pa, pb):
                continue
            for piece in intersect_polygons(pa, pb):
                out.append((piece, i, j))
    got = sum_scalars(p.area2() for p, _, _ in out)
    if not eq(got, area_a):
        raise NotATiling("overlay lost or duplicated area")
    return out


def sum_scalars(vals: Iterable[Scalar]) -> Scalar:
    s = 0
    for v in vals:
        s = s + v
    return s


def _bbox(p: SimplePolygon):
    xs = [v.x for v in p.vertices]
    ys = [v.y for v in p.vertices]
    return min(xs), min(ys), max(xs), max(ys)


def _bbox_disjoint(p, q) -> bool:
    ax0, ay0, ax1, ay1 = _bbox(p)
    bx0, by0, bx1, by1 = _bbox(q)
    return lt(ax1, bx0) or lt(bx1, ax0) or lt(ay1, by0) or lt(by1, ay0)


def _check_tiling(pieces: List[SimplePolygon], what: str):
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            if _bbox_disjoint(pieces[i], pieces[j]):
                continue
            if polygons_interior_overlap(pieces[i], pieces[j]):
                raise NotATiling(f"{what}: pieces {i} and {j} overlap")


# ---------------------------------------------------------------------------
# Angle comparison (exact, used for largest-interior-angle selection)


def compare_angles(u1: Vec, v1: Vec, u2: Vec, v2: Vec) -> int:
    """Compare angle(u1,v1) with angle(u2,v2), both in (0, pi).

    Returns -1 / 0 / +1 for smaller / equal / larger.  Exact on rationals:
    compares cosines via squared magnitudes.
    """
    d1, d2 = u1.dot(v1), u2.dot(v2)
    a1 = u1.len2() * v1.len2()
    a2 = u2.len2() * v2.len2()
    s1, s2 = sign(d1), sign(d2)
    if s1 >= 0 and s2 < 0:
        return -1
    if s1 < 0 and s2 >= 0:
        return 1
    lhs = d1 * d1 * a2
    rhs = d2 * d2 * a1
    if s1 >= 0:  # both cosines >= 0: larger |cos| = smaller angle
        c = sign(lhs - rhs)
        return -c
    c = sign(lhs - rhs)
    return c
