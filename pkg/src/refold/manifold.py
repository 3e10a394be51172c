"""Polyhedral manifolds: flat polygonal pieces with partial boundary gluings.

A gluing identifies two equal-length boundary intervals.  Interval endpoints
are stored as normalized edge parameters in [0, 1] (fractions of the edge),
which keeps all bookkeeping rational: true arclength is irrational for
general rational coordinates, while length comparisons work on squared
lengths and the identification map between two glued intervals has rational
slope because the interval lengths agree.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import geom
from .geom import Isometry, SimplePolygon, Vec, segment_map
from .scalar import Scalar, eq, format_scalar, is_zero, le, lt, parse_scalar, sign


class ManifoldError(Exception):
    pass


class InvalidManifold(ManifoldError):
    pass


class DisconnectingCut(ManifoldError):
    pass


class BadGlue(ManifoldError):
    pass


class BadSubdivision(ManifoldError):
    pass


class BadMerge(ManifoldError):
    pass


class UnmatchedCut(ManifoldError):
    pass


FWD = "fwd"
BWD = "bwd"


@dataclass
class EdgeInterval:
    """A directed parameter interval on one edge of one piece.

    lo/hi are normalized parameters (0 <= lo < hi <= 1). `direction` gives the
    orientation of the identification: offset u in [0,1] along the interval
    sits at parameter lo + u*(hi-lo) when forward, hi - u*(hi-lo) when
    backward.
    """

    piece: int
    edge: int
    lo: Scalar
    hi: Scalar
    direction: str = FWD

    def __post_init__(self):
        if isinstance(self.lo, int):
            self.lo = Fraction(self.lo)
        if isinstance(self.hi, int):
            self.hi = Fraction(self.hi)

    def length_param(self) -> Scalar:
        return self.hi - self.lo

    def param_at(self, u: Scalar) -> Scalar:
        if self.direction == FWD:
            return self.lo + u * (self.hi - self.lo)
        return self.hi - u * (self.hi - self.lo)

    def offset_of(self, t: Scalar) -> Scalar:
        if self.direction == FWD:
            return (t - self.lo) / (self.hi - self.lo)
        return (self.hi - t) / (self.hi - self.lo)

    def reversed_dir(self) -> "EdgeInterval":
        return EdgeInterval(self.piece, self.edge, self.lo, self.hi,
                            BWD if self.direction == FWD else FWD)

    def copy(self) -> "EdgeInterval":
        return EdgeInterval(self.piece, self.edge, self.lo, self.hi, self.direction)

    def key(self):
        return (self.piece, self.edge, self.lo, self.hi, self.direction)


@dataclass
class Gluing:
    """Identification of two equal-length boundary intervals (offset u <-> u)."""

    a: EdgeInterval
    b: EdgeInterval

    def sides(self):
        return (self.a, self.b)

    def same_sense(self) -> bool:
        return self.a.direction == self.b.direction

    def copy(self) -> "Gluing":
        return Gluing(self.a.copy(), self.b.copy())

    def restricted(self, side: int, new_lo: Scalar, new_hi: Scalar) -> "Gluing":
        """Restrict one side to [new_lo, new_hi] (within its interval); the
        partner side shrinks to the corresponding sub-interval."""
        s = self.a if side == 0 else self.b
        o = self.b if side == 0 else self.a
        if lt(new_lo, s.lo) or lt(s.hi, new_hi) or not lt(new_lo, new_hi):
            raise ValueError("restriction outside interval")
        if s.direction == FWD:
            u0 = (new_lo - s.lo) / (s.hi - s.lo)
            u1 = (new_hi - s.lo) / (s.hi - s.lo)
        else:
            u0 = (s.hi - new_hi) / (s.hi - s.lo)
            u1 = (s.hi - new_lo) / (s.hi - s.lo)
        # u0 < u1; the new sub-interval of s keeps s.direction.
        ns = EdgeInterval(s.piece, s.edge, new_lo, new_hi, s.direction)
        ol = o.hi - o.lo
        if o.direction == FWD:
            no = EdgeInterval(o.piece, o.edge, o.lo + u0 * ol, o.lo + u1 * ol, FWD)
        else:
            no = EdgeInterval(o.piece, o.edge, o.hi - u1 * ol, o.hi - u0 * ol, BWD)
        return Gluing(ns, no) if side == 0 else Gluing(no, ns)

    def canonical(self) -> "Gluing":
        """Equivalent gluing with a.direction == fwd and sides ordered."""
        g = self.copy()
        if g.a.direction == BWD:
            g = Gluing(g.a.reversed_dir(), g.b.reversed_dir())
        if g.b.key() < g.a.key():
            g = Gluing(g.b, g.a)
            if g.a.direction == BWD:
                g = Gluing(g.a.reversed_dir(), g.b.reversed_dir())
        return g

    def equivalent(self, other: "Gluing") -> bool:
        ca, cb = self.canonical(), other.canonical()
        return _intervals_eq(ca.a, cb.a) and _intervals_eq(ca.b, cb.b)


def _intervals_eq(x: EdgeInterval, y: EdgeInterval) -> bool:
    return (x.piece == y.piece and x.edge == y.edge and eq(x.lo, y.lo)
            and eq(x.hi, y.hi) and x.direction == y.direction)


@dataclass
class TopologyReport:
    euler_characteristic: int
    orientable: bool
    boundary_components: int


class PolyhedralManifold:
    """Flat polygonal pieces plus a partial gluing of their boundaries."""

    def __init__(self, pieces: Sequence[SimplePolygon], gluings: Sequence[Gluing],
                 label: str = ""):
        self.pieces = list(pieces)
        self.gluings = [g.copy() for g in gluings]
        self.label = label

    def copy(self) -> "PolyhedralManifold":
        return PolyhedralManifold(self.pieces, self.gluings, self.label)

    def area2(self) -> Scalar:
        return geom.sum_scalars(p.area2() for p in self.pieces)

    def area(self) -> Scalar:
        a = self.area2()
        return a / 2.0 if isinstance(a, float) else Fraction(a) / 2

    def interval_length2(self, iv: EdgeInterval) -> Scalar:
        d = iv.hi - iv.lo
        return d * d * self.pieces[iv.piece].edge_len2(iv.edge)

    def interval_endpoints(self, iv: EdgeInterval) -> Tuple[Vec, Vec]:
        """Geometric points at offsets 0 and 1 (direction-aware)."""
        poly = self.pieces[iv.piece]
        return (poly.edge_point(iv.edge, iv.param_at(0)),
                poly.edge_point(iv.edge, iv.param_at(1)))

    # -- validation ---------------------------------------------------------

    def validate(self) -> List[str]:
        """Diagnostics; empty list means the manifold is valid."""
        problems: List[str] = []
        for gi, g in enumerate(self.gluings):
            for iv in g.sides():
                if not (0 <= iv.piece < len(self.pieces)):
                    problems.append(f"gluing {gi}: piece {iv.piece} out of range")
                    continue
                n = len(self.pieces[iv.piece].vertices)
                if not (0 <= iv.edge < n):
                    problems.append(f"gluing {gi}: edge {iv.edge} out of range")
                    continue
                if not (le(0, iv.lo) and lt(iv.lo, iv.hi) and le(iv.hi, 1)):
                    problems.append(
                        f"gluing {gi}: bad interval [{iv.lo},{iv.hi}] on "
                        f"piece {iv.piece} edge {iv.edge}")
                if iv.direction not in (FWD, BWD):
                    problems.append(f"gluing {gi}: bad direction {iv.direction}")
            if not problems:
                la, lb = self.interval_length2(g.a), self.interval_length2(g.b)
                if not eq(la, lb):
                    problems.append(
                        f"gluing {gi}: LengthMismatch (sq lengths {la} vs {lb}) "
                        f"at piece {g.a.piece} edge {g.a.edge} / "
                        f"piece {g.b.piece} edge {g.b.edge}")
        for (p, e), ivs in self._intervals_by_edge().items():
            ivs = sorted(ivs, key=lambda x: (float(x[0].lo), float(x[0].hi)))
            for (i1, g1), (i2, g2) in zip(ivs, ivs[1:]):
                if lt(i2.lo, i1.hi):
                    problems.append(
                        f"gluings {g1} and {g2}: interval overlap on piece {p} "
                        f"edge {e} ([{i1.lo},{i1.hi}] vs [{i2.lo},{i2.hi}])")
        if len(self.pieces) and not self._connected(self.gluings):
            problems.append("Disconnected: piece-adjacency graph is not connected")
        return problems

    def _intervals_by_edge(self) -> Dict[Tuple[int, int], List[Tuple[EdgeInterval, int]]]:
        by_edge: Dict[Tuple[int, int], List[Tuple[EdgeInterval, int]]] = {}
        for gi, g in enumerate(self.gluings):
            for iv in g.sides():
                by_edge.setdefault((iv.piece, iv.edge), []).append((iv, gi))
        return by_edge

    def require_valid(self):
        problems = self.validate()
        if problems:
            raise InvalidManifold("; ".join(problems))

    def _connected(self, gluings: Sequence[Gluing]) -> bool:
        n = len(self.pieces)
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in gluings:
            ra, rb = find(g.a.piece), find(g.b.piece)
            if ra != rb:
                parent[ra] = rb
        return len({find(i) for i in range(n)}) <= 1

    # -- topology -----------------------------------------------------------

    def topology_report(self) -> TopologyReport:
        self.require_valid()
        # 0-cells: piece corners and glued-interval endpoints.  On a valid
        # manifold no interval endpoint lies interior to another glued
        # interval, so the breakpoint set is closed under all gluing maps and
        # every gluing identifies exactly one 1-cell with one 1-cell.
        breakpoints: Dict[Tuple[int, int], List[Scalar]] = {}

        def add_bp(piece, edge, t):
            lst = breakpoints.setdefault((piece, edge), [])
            for s in lst:
                if eq(s, t):
                    return
            lst.append(t)

        for p, poly in enumerate(self.pieces):
            for e in range(len(poly.vertices)):
                add_bp(p, e, 0)
                add_bp(p, e, 1)
        for g in self.gluings:
            for iv in g.sides():
                add_bp(iv.piece, iv.edge, iv.lo)
                add_bp(iv.piece, iv.edge, iv.hi)
        for key in breakpoints:
            breakpoints[key].sort(key=float)

        # Node ids for 0-cells; a corner is shared by its two incident edges.
        node_of: Dict[Tuple[int, int, int], int] = {}
        nodes = 0

        def corner_node(piece, corner):
            nonlocal nodes
            key = ("c", piece, corner)
            if key not in node_of:
                node_of[key] = nodes
                nodes += 1
            return node_of[key]

        def bp_node(piece, edge, idx):
            nonlocal nodes
            n_edges = len(self.pieces[piece].vertices)
            if idx == 0:
                return corner_node(piece, edge)
            if idx == len(breakpoints[(piece, edge)]) - 1:
                return corner_node(piece, (edge + 1) % n_edges)
            key = ("b", piece, edge, idx)
            if key not in node_of:
                node_of[key] = nodes
                nodes += 1
            return node_of[key]

        def bp_index(piece, edge, t):
            lst = breakpoints[(piece, edge)]
            for i, s in enumerate(lst):
                if eq(s, t):
                    return i
            raise InvalidManifold("breakpoint lookup failed")

        # Materialize 1-cells (and with them all 0-cell nodes) first.
        segs: List[Tuple[int, int, int, int]] = []  # (piece, edge, idx_lo, idx_hi)
        for (p, e), lst in sorted(breakpoints.items()):
            for i in range(len(lst) - 1):
                segs.append((p, e, i, i + 1))
        seg_nodes = {}
        for (p, e, i, j) in segs:
            seg_nodes[(p, e, i)] = (bp_node(p, e, i), bp_node(p, e, j))
        uf = list(range(nodes))

        def find(x):
            while uf[x] != x:
                uf[x] = uf[uf[x]]
                x = uf[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                uf[rx] = ry

        # Identify endpoints across each gluing, and pair the glued segments.
        glued_seg: Dict[Tuple[int, int, int], bool] = {}
        n_gluing_idents = 0
        for g in self.gluings:
            ia = bp_index(g.a.piece, g.a.edge, g.a.lo)
            ja = bp_index(g.a.piece, g.a.edge, g.a.hi)
            ib = bp_index(g.b.piece, g.b.edge, g.b.lo)
            jb = bp_index(g.b.piece, g.b.edge, g.b.hi)
            if ja - ia != 1 or jb - ib != 1:
                raise InvalidManifold("glued interval is subdivided; refinement "
                                      "not expected on a valid manifold")
            a_lo_node = bp_node(g.a.piece, g.a.edge, ia)
            a_hi_node = bp_node(g.a.piece, g.a.edge, ja)
            b_lo_node = bp_node(g.b.piece, g.b.edge, ib)
            b_hi_node = bp_node(g.b.piece, g.b.edge, jb)
            # offset 0 of a matches offset 0 of b
            if g.a.direction == FWD:
                a0, a1 = a_lo_node, a_hi_node
            else:
                a0, a1 = a_hi_node, a_lo_node
            if g.b.direction == FWD:
                b0, b1 = b_lo_node, b_hi_node
            else:
                b0, b1 = b_hi_node, b_lo_node
            union(a0, b0)
            union(a1, b1)
            glued_seg[(g.a.piece, g.a.edge, ia)] = True
            glued_seg[(g.b.piece, g.b.edge, ib)] = True
            n_gluing_idents += 1

        n_segments = len(segs)
        E = n_segments - n_gluing_idents
        F = len(self.pieces)
        V = len({find(x) for x in range(nodes)})
        chi = V - E + F

        # Boundary components: segments not glued, on endpoint classes.
        badj: Dict[int, List[int]] = {}
        bseg_count = 0
        for (p, e, i, j) in segs:
            if glued_seg.get((p, e, i)):
                continue
            u, v = seg_nodes[(p, e, i)]
            ru, rv = find(u), find(v)
            badj.setdefault(ru, []).append(rv)
            badj.setdefault(rv, []).append(ru)
            bseg_count += 1
        seen = set()
        boundary_components = 0
        for start in badj:
            if start in seen:
                continue
            boundary_components += 1
            stack = [start]
            while stack:
                x = stack.pop()
                if x in seen:
                    continue
                seen.add(x)
                stack.extend(badj.get(x, []))

        orientable = self.orientation_assignment() is not None
        return TopologyReport(chi, orientable, boundary_components)

    def orientation_assignment(self) -> Optional[List[int]]:
        """Per-piece flip flags making all gluings seam-like, or None.

        A gluing whose two sides are traversed in the same boundary sense
        joins opposite-side pieces; opposite sense keeps the same side.
        """
        n = len(self.pieces)
        color = [-1] * n
        adj: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(n)}
        ok = True
        for g in self.gluings:
            rel = 1 if g.same_sense() else 0  # 1 = flips must differ
            if g.a.piece == g.b.piece:
                if rel == 1:
                    ok = False
                continue
            adj[g.a.piece].append((g.b.piece, rel))
            adj[g.b.piece].append((g.a.piece, rel))
        if not ok:
            return None
        for s in range(n):
            if color[s] != -1:
                continue
            color[s] = 0
            stack = [s]
            while stack:
                x = stack.pop()
                for y, rel in adj[x]:
                    want = color[x] ^ rel
                    if color[y] == -1:
                        color[y] = want
                        stack.append(y)
                    elif color[y] != want:
                        return None
        return color

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        exact = all(not isinstance(v.x, float) and not isinstance(v.y, float)
                    for p in self.pieces for v in p.vertices)
        return {
            "mode": "exact" if exact else "float",
            "label": self.label,
            "pieces": [[[format_scalar(v.x), format_scalar(v.y)]
                        for v in p.vertices] for p in self.pieces],
            "gluings": [_gluing_to_dict(g) for g in self.gluings],
        }

    @staticmethod
    def from_dict(d: dict) -> "PolyhedralManifold":
        exact = d.get("mode", "exact") == "exact"
        pieces = [SimplePolygon([Vec(parse_scalar(x, exact), parse_scalar(y, exact))
                                 for x, y in pts], normalize=False)
                  for pts in d["pieces"]]
        gluings = [_gluing_from_dict(g, exact) for g in d.get("gluings", [])]
        return PolyhedralManifold(pieces, gluings, d.get("label", ""))


def _interval_to_dict(iv: EdgeInterval) -> dict:
    return {"piece": iv.piece, "edge": iv.edge, "lo": format_scalar(iv.lo),
            "hi": format_scalar(iv.hi), "dir": iv.direction}


def _interval_from_dict(d: dict, exact: bool) -> EdgeInterval:
    return EdgeInterval(d["piece"], d["edge"], parse_scalar(d["lo"], exact),
                        parse_scalar(d["hi"], exact), d["dir"])


def _gluing_to_dict(g: Gluing) -> dict:
    return {"a": _interval_to_dict(g.a), "b": _interval_to_dict(g.b)}


def _gluing_from_dict(d: dict, exact: bool) -> Gluing:
    return Gluing(_interval_from_dict(d["a"], exact),
                  _interval_from_dict(d["b"], exact))


# ---------------------------------------------------------------------------
# Boundary coordinate remapping (shared by subdivision and merge)


class Remap:
    """Partial rewrite of boundary coordinates after a piece restructuring.

    entries[(piece, edge)] is a list of (lo, hi, new_piece, new_edge, a, b):
    old parameter t in [lo, hi] becomes a + b*t on the new edge (b > 0, so
    boundary direction is preserved).  Pieces without entries map through
    piece_index_map with edges and parameters unchanged.
    """

    def __init__(self, piece_index_map: Dict[int, int], entries=None):
        self.piece_index_map = piece_index_map
        self.entries = entries or {}

    def split_params(self, iv: EdgeInterval) -> List[Scalar]:
        """Interior parameters of iv where the remap changes target."""
        key = (iv.piece, iv.edge)
        if key not in self.entries:
            return []
        ps = []
        for (lo, hi, *_rest) in self.entries[key]:
            for t in (lo, hi):
                if lt(iv.lo, t) and lt(t, iv.hi):
                    if not any(eq(t, s) for s in ps):
                        ps.append(t)
        ps.sort(key=float)
        return ps

    def map_interval(self, iv: EdgeInterval) -> EdgeInterval:
        """Remap an interval that does not straddle an entry boundary."""
        key = (iv.piece, iv.edge)
        if key not in self.entries:
            np_ = self.piece_index_map.get(iv.piece, iv.piece)
            return EdgeInterval(np_, iv.edge, iv.lo, iv.hi, iv.direction)
        for (lo, hi, npiece, nedge, a, b) in self.entries[key]:
            if le(lo, iv.lo) and le(iv.hi, hi):
                nlo = a + b * iv.lo
                nhi = a + b * iv.hi
                return EdgeInterval(npiece, nedge, nlo, nhi, iv.direction)
        raise ManifoldError(
            f"boundary interval [{iv.lo},{iv.hi}] on piece {iv.piece} edge "
            f"{iv.edge} has no image under the remap")

    def map_gluing(self, g: Gluing) -> List[Gluing]:
        """Remap a gluing, splitting it where either side straddles entries."""
        pending = [g]
        for side in (0, 1):
            nxt = []
            for gg in pending:
                iv = gg.sides()[side]
                ps = self.split_params(iv)
                if not ps:
                    nxt.append(gg)
                    continue
                cur_lo = iv.lo
                for t in ps + [iv.hi]:
                    nxt.append(gg.restricted(side, cur_lo, t))
                    cur_lo = t
            pending = nxt
        return [Gluing(self.map_interval(gg.a), self.map_interval(gg.b))
                for gg in pending]


# ---------------------------------------------------------------------------
# Refolding steps


@dataclass
class RefoldStep:
    """One cut-and-glue step: subdivisions, cuts, glues, merges (in order).

    Subdivisions append the right sub-piece at the end of the piece list (the
    left sub-piece keeps the slot); each merge must remove the current last
    piece (the merged polygon keeps the lower slot).  Under these conventions
    every step has an exact inverse.
    """

    subdivisions: List[Tuple[int, List[Vec]]] = field(default_factory=list)
    cuts: List[Gluing] = field(default_factory=list)
    glues: List[Gluing] = field(default_factory=list)
    merges: List[Tuple[int, int]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.subdivisions or self.cuts or self.glues or self.merges)

    def to_dict(self) -> dict:
        return {
            "subdivisions": [{"piece": p,
                              "polyline": [[format_scalar(v.x), format_scalar(v.y)]
                                           for v in pts]}
                             for p, pts in self.subdivisions],
            "cuts": [_gluing_to_dict(g) for g in self.cuts],
            "glues": [_gluing_to_dict(g) for g in self.glues],
            "merges": [{"a": a, "b": b} for a, b in self.merges],
        }

    @staticmethod
    def from_dict(d: dict, exact: bool = True) -> "RefoldStep":
        subs = [(s["piece"], [Vec(parse_scalar(x, exact), parse_scalar(y, exact))
                              for x, y in s["polyline"]])
                for s in d.get("subdivisions", [])]
        return RefoldStep(
            subdivisions=subs,
            cuts=[_gluing_from_dict(g, exact) for g in d.get("cuts", [])],
            glues=[_gluing_from_dict(g, exact) for g in d.get("glues", [])],
            merges=[(m["a"], m["b"]) for m in d.get("merges", [])],
        )


def subdivide_piece(m: PolyhedralManifold, piece: int, polyline: Sequence[Vec]):
    """Split one piece along a polyline; gluings are re-addressed (and split
    where they straddle a cut endpoint).

    Returns (manifold, remap, cut_edges_left, cut_edges_right); the right
    sub-piece is appended at the end of the piece list.
    """
    if not (0 <= piece < len(m.pieces)):
        raise BadSubdivision(f"piece {piece} out of range")
    try:
        sr = geom.split_polygon(m.pieces[piece], polyline)
    except geom.BadPolygon as exc:
        raise BadSubdivision(str(exc))
    left_idx, right_idx = piece, len(m.pieces)
    entries = {}
    for (old_edge, lo, hi, side, new_edge) in sr.remap:
        tgt = left_idx if side == "L" else right_idx
        if isinstance(lo, int):
            lo = Fraction(lo)
        span = hi - lo
        a, b = -lo / span, (1.0 / span if isinstance(span, float)
                            else Fraction(1) / span)
        entries.setdefault((piece, old_edge), []).append(
            (lo, hi, tgt, new_edge, a, b))
    remap = Remap({}, entries)
    new_pieces = list(m.pieces)
    new_pieces[piece] = sr.left
    new_pieces.append(sr.right)
    new_gluings = []
    for g in m.gluings:
        new_gluings.extend(remap.map_gluing(g))
    out = PolyhedralManifold(new_pieces, new_gluings, m.label)
    return out, remap, sr.cut_edges_left, sr.cut_edges_right


def merge_pieces(m: PolyhedralManifold, i: int, j: int):
    """Fuse pieces i and j along their (fully covering) mutual gluings.

    j must be the last piece index.  Returns (manifold, remap, seam), where
    seam is the cut polyline (merged-piece coordinates, piece i on its left)
    that undoes the merge.
    """
    n = len(m.pieces)
    if j != n - 1 or i == j or not (0 <= i < j):
        raise BadMerge("merge must fuse an earlier piece with the last piece")
    mutual = [g for g in m.gluings
              if {g.a.piece, g.b.piece} == {i, j}]
    if not mutual:
        raise BadMerge(f"no gluings between pieces {i} and {j}")
    oriented = []
    for g in mutual:
        oriented.append(g if g.a.piece == i else Gluing(g.b, g.a))
    g0 = oriented[0]
    pa0, pa1 = m.interval_endpoints(g0.a)
    pb0, pb1 = m.interval_endpoints(g0.b)
    iso = segment_map(pb0, pb1, pa0, pa1, orientation_preserving=True)
    for g in oriented[1:]:
        qa0, qa1 = m.interval_endpoints(g.a)
        qb0, qb1 = m.interval_endpoints(g.b)
        if not (iso.apply(qb0).close_to(qa0) and iso.apply(qb1).close_to(qa1)):
            raise BadMerge("gluings between the pieces are not simultaneously "
                           "realizable by one placement")
    placed_j = m.pieces[j].transformed(iso)

    # Every geometric contact between the two boundaries must be glued.
    glued_on_i: Dict[int, List[Tuple[Scalar, Scalar]]] = {}
    for g in oriented:
        glued_on_i.setdefault(g.a.edge, []).append((g.a.lo, g.a.hi))
    pi = m.pieces[i]
    for ei in range(len(pi.vertices)):
        a1, b1 = pi.edge(ei)
        for ej in range(len(placed_j.vertices)):
            a2, b2 = placed_j.edge(ej)
            if geom.orient(a1, b1, a2) != 0 or geom.orient(a1, b1, b2) != 0:
                continue
            t2a = geom.param_on_segment(a1, b1, a2)
            t2b = geom.param_on_segment(a1, b1, b2)
            lo, hi = min(t2a, t2b), max(t2a, t2b)
            lo = max(lo, 0)
            hi = min(hi, 1)
            if not lt(lo, hi):
                continue
            covered = glued_on_i.get(ei, [])
            # the overlap [lo,hi] must be inside the union of glued ranges
            probe = lo
            ranges = sorted(covered, key=lambda r: float(r[0]))
            for (rl, rh) in ranges:
                if le(rl, probe) and lt(probe, rh):
                    probe = rh
            if lt(probe, hi):
                raise BadMerge("pieces touch along unglued boundary; merge "
                               "would heal a slit")
    merged_list = geom.merge_fragments([pi, placed_j])
    if len(merged_list) != 1:
        raise BadMerge("merge produced multiple components")
    merged = merged_list[0]

    # Re-address every other gluing interval by locating its endpoints.
    def locate_entry(piece_idx, poly, place):
        ent = {}
        for e in range(len(poly.vertices)):
            a, b = poly.edge(e)
            pa, pb = place.apply(a), place.apply(b)
            la = merged.locate_boundary_point(pa)
            lb = merged.locate_boundary_point(pb)
            if la is None and lb is None:
                continue  # edge fully interior (seam)
            # portions of this edge that survive: find by checking gluing use
            ent[(piece_idx, e)] = (pa, pb, la, lb)
        return ent

    locs = {}
    locs.update(locate_entry(i, pi, Isometry.identity()))
    locs.update(locate_entry(j, m.pieces[j], iso))

    def map_iv(iv: EdgeInterval) -> EdgeInterval:
        poly = m.pieces[iv.piece]
        place = Isometry.identity() if iv.piece == i else iso
        p_lo = place.apply(poly.edge_point(iv.edge, iv.lo))
        p_hi = place.apply(poly.edge_point(iv.edge, iv.hi))
        l_lo = merged.locate_boundary_point(p_lo)
        l_hi = merged.locate_boundary_point(p_hi)
        if l_lo is None or l_hi is None:
            raise BadMerge("gluing interval lost in merge")
        e0, t0 = l_lo
        e1, t1 = l_hi
        nedges = len(merged.vertices)
        if e0 == e1 and le(t0, t1) and not eq(t0, t1):
            return EdgeInterval(i, e0, t0, t1, iv.direction)
        # hi endpoint at the far corner of the same edge
        if (e1 == (e0 + 1) % nedges) and eq(t1, 0):
            return EdgeInterval(i, e0, t0, 1, iv.direction)
        if (e0 == (e1 + 1) % nedges) and eq(t0, 0):
            # lo at corner belonging to previous edge's end
            return EdgeInterval(i, e1, t1, 1, iv.direction)
        raise BadMerge("gluing interval spans a merged corner")

    new_gluings = []
    for g in m.gluings:
        if {g.a.piece, g.b.piece} == {i, j}:
            continue
        na = map_iv(g.a) if g.a.piece in (i, j) else EdgeInterval(
            g.a.piece, g.a.edge, g.a.lo, g.a.hi, g.a.direction)
        nb = map_iv(g.b) if g.b.piece in (i, j) else EdgeInterval(
            g.b.piece, g.b.edge, g.b.lo, g.b.hi, g.b.direction)
        new_gluings.append(Gluing(na, nb))

    # Seam polyline for the inverse subdivision: chain of glued segments,
    # oriented so piece i lies on its left (along i's boundary direction).
    seam_segs = []
    for g in oriented:
        p0, p1 = m.interval_endpoints(g.a)
        lo_pt = pi.edge_point(g.a.edge, g.a.lo)
        hi_pt = pi.edge_point(g.a.edge, g.a.hi)
        seam_segs.append((lo_pt, hi_pt))
    seam = _chain_segments(seam_segs)

    new_pieces = list(m.pieces[:-1])
    new_pieces[i] = merged
    out = PolyhedralManifold(new_pieces, new_gluings, m.label)
    return out, seam


def _chain_segments(segs: List[Tuple[Vec, Vec]]) -> List[Vec]:
    """Order directed segments into one simple polyline (direction kept).

    Each segment already runs along the kept piece's boundary direction, so
    the chained polyline has that piece on its left.
    """
    n = len(segs)
    used = [False] * n
    head = None
    for k, (a, _b) in enumerate(segs):
        if not any(j != k and a.close_to(segs[j][1]) for j in range(n)):
            head = k
            break
    if head is None:
        raise BadMerge("seam between merged pieces is a closed loop")
    chain = [segs[head][0], segs[head][1]]
    used[head] = True
    for _ in range(n - 1):
        found = False
        for k in range(n):
            if not used[k] and segs[k][0].close_to(chain[-1]):
                chain.append(segs[k][1])
                used[k] = True
                found = True
                break
        if not found:
            raise BadMerge("seam between merged pieces is not a single chain")
    # drop collinear interior points so the inverse cut is a clean polyline
    cleaned = [chain[0]]
    for k in range(1, len(chain) - 1):
        if geom.orient(cleaned[-1], chain[k], chain[k + 1]) == 0 and \
                sign((chain[k] - cleaned[-1]).dot(chain[k + 1] - chain[k])) > 0:
            continue
        cleaned.append(chain[k])
    cleaned.append(chain[-1])
    return cleaned


# ---------------------------------------------------------------------------
# Step application


def _remove_cut(m: PolyhedralManifold, cut: Gluing) -> None:
    """Remove a sub-gluing (a restriction of one existing gluing) in place."""
    for gi, g in enumerate(m.gluings):
        for swap in (False, True):
            gg = Gluing(g.b, g.a) if swap else g
            ca, ga = cut.a, gg.a
            if (ca.piece, ca.edge) != (ga.piece, ga.edge):
                continue
            if (cut.b.piece, cut.b.edge) != (gg.b.piece, gg.b.edge):
                continue
            if lt(ca.lo, ga.lo) or lt(ga.hi, ca.hi):
                continue
            candidate = gg.restricted(0, ca.lo, ca.hi)
            if not candidate.equivalent(cut):
                continue
            remnants = []
            if lt(ga.lo, ca.lo):
                remnants.append(gg.restricted(0, ga.lo, ca.lo))
            if lt(ca.hi, ga.hi):
                remnants.append(gg.restricted(0, ca.hi, ga.hi))
            m.gluings[gi:gi + 1] = remnants
            return
    raise UnmatchedCut(
        f"cut does not match any gluing: piece {cut.a.piece} edge {cut.a.edge} "
        f"[{cut.a.lo},{cut.a.hi}] <-> piece {cut.b.piece} edge {cut.b.edge} "
        f"[{cut.b.lo},{cut.b.hi}]")


def _add_glue(m: PolyhedralManifold, glue: Gluing) -> None:
    for iv in glue.sides():
        if not (0 <= iv.piece < len(m.pieces)):
            raise BadGlue(f"glue references missing piece {iv.piece}")
        if not (0 <= iv.edge < len(m.pieces[iv.piece].vertices)):
            raise BadGlue(f"glue references missing edge {iv.edge} "
                          f"on piece {iv.piece}")
        if not (le(0, iv.lo) and lt(iv.lo, iv.hi) and le(iv.hi, 1)):
            raise BadGlue(f"glue interval [{iv.lo},{iv.hi}] out of range")
    la, lb = m.interval_length2(glue.a), m.interval_length2(glue.b)
    if not eq(la, lb):
        raise BadGlue(f"glued interval lengths differ (squared {la} vs {lb})")
    existing: List[Tuple[int, int, Scalar, Scalar]] = []
    for g in m.gluings:
        for iv in g.sides():
            existing.append((iv.piece, iv.edge, iv.lo, iv.hi))
    sides = list(glue.sides())
    for k, iv in enumerate(sides):
        others = existing + [(s.piece, s.edge, s.lo, s.hi)
                             for s in sides[:k]]
        for (p, e, lo, hi) in others:
            if (p, e) != (iv.piece, iv.edge):
                continue
            if lt(max(lo, iv.lo), min(hi, iv.hi)):
                raise BadGlue(
                    f"glue overlaps an existing glued interval on piece {p} "
                    f"edge {e}")
    m.gluings.append(glue.copy())


def apply_step(m: PolyhedralManifold, step: RefoldStep,
               with_inverse: bool = False):
    """Execute one refolding step: subdivide, cut, check connectivity, glue,
    merge.  Returns the new manifold (and the inverse step if requested)."""
    m.require_valid()
    area_before = m.area2()
    cur = m.copy()
    inv_merges: List[Tuple[int, int]] = []
    for piece, polyline in step.subdivisions:
        cur, _remap, _cl, _cr = subdivide_piece(cur, piece, polyline)
        inv_merges.append((piece, len(cur.pieces) - 1))
    for cut in step.cuts:
        _remove_cut(cur, cut)
    if not cur._connected(cur.gluings):
        raise DisconnectingCut("cut phase disconnects the manifold")
    for glue in step.glues:
        _add_glue(cur, glue)
    inv_subs: List[Tuple[int, List[Vec]]] = []
    for (i, j) in step.merges:
        cur, seam = merge_pieces(cur, i, j)
        inv_subs.append((i, seam))
    problems = cur.validate()
    if problems:
        raise InvalidManifold("step produced invalid manifold: "
                              + "; ".join(problems))
    if not eq(area_before, cur.area2()):
        raise InvalidManifold("step did not conserve area")
    if not with_inverse:
        return cur
    inverse = RefoldStep(
        subdivisions=list(reversed(inv_subs)),
        cuts=[g.copy() for g in step.glues],
        glues=[g.copy() for g in step.cuts],
        merges=list(reversed(inv_merges)),
    )
    return cur, inverse


# ---------------------------------------------------------------------------
# Unfolding and zipping


@dataclass
class FlatShape:
    """A manifold whose gluings form a spanning tree, with a planar placement
    realizing every glued interval pair; pieces may overlap."""

    manifold: PolyhedralManifold
    placements: List[Isometry]
    tree_gluings: List[int]
    cut_gluings: List[Gluing]

    def placed_pieces(self) -> List[SimplePolygon]:
        return [p.transformed(iso)
                for p, iso in zip(self.manifold.pieces, self.placements)]


def unfold(m: PolyhedralManifold, tree: Optional[List[int]] = None) -> FlatShape:
    """Cut every gluing outside a spanning tree and lay the pieces flat.

    Pieces are placed by composing seam isometries along the tree; pieces on
    the far side of an odd number of flips are placed mirror-reversed.
    """
    m.require_valid()
    n = len(m.pieces)
    adj: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(n)}
    for gi, g in enumerate(m.gluings):
        adj[g.a.piece].append((g.b.piece, gi))
        adj[g.b.piece].append((g.a.piece, gi))
    if tree is None:
        tree = []
        seen = {0}
        queue = [0]
        while queue:
            x = queue.pop(0)
            for (y, gi) in sorted(adj[x], key=lambda t: t[1]):
                if y not in seen:
                    seen.add(y)
                    tree.append(gi)
                    queue.append(y)
        if len(seen) != n:
            raise InvalidManifold("manifold is disconnected")
    else:
        seen = {0}
        for gi in tree:
            g = m.gluings[gi]
            seen.add(g.a.piece)
            seen.add(g.b.piece)
        if len(tree) != n - 1 or len(seen) != n:
            raise InvalidManifold("provided gluing set is not a spanning tree")

    placements: List[Optional[Isometry]] = [None] * n
    flips = [False] * n
    placements[0] = Isometry.identity()
    tree_set = list(tree)
    placed = {0}
    progress = True
    while progress:
        progress = False
        for gi in tree_set:
            g = m.gluings[gi]
            for (src, dst) in ((g.a, g.b), (g.b, g.a)):
                if src.piece in placed and dst.piece not in placed:
                    pa0, pa1 = m.interval_endpoints(src)
                    pb0, pb1 = m.interval_endpoints(dst)
                    pa0 = placements[src.piece].apply(pa0)
                    pa1 = placements[src.piece].apply(pa1)
                    child_flip = flips[src.piece] ^ (src.direction == dst.direction)
                    iso = segment_map(pb0, pb1, pa0, pa1,
                                      orientation_preserving=not child_flip)
                    placements[dst.piece] = iso
                    flips[dst.piece] = child_flip
                    placed.add(dst.piece)
                    progress = True
    if len(placed) != n:
        raise InvalidManifold("spanning tree does not reach every piece")

    kept = [m.gluings[gi].copy() for gi in sorted(tree)]
    cut = [m.gluings[gi].copy() for gi in range(len(m.gluings))
           if gi not in set(tree)]
    flat = PolyhedralManifold(m.pieces, kept, m.label + " (unfolded)")
    shape = FlatShape(flat, [p for p in placements], sorted(tree), cut)
    _verify_flat_placement(shape)
    return shape


def _verify_flat_placement(shape: FlatShape) -> None:
    m = shape.manifold
    for g in m.gluings:
        pa0, pa1 = m.interval_endpoints(g.a)
        pb0, pb1 = m.interval_endpoints(g.b)
        qa0 = shape.placements[g.a.piece].apply(pa0)
        qa1 = shape.placements[g.a.piece].apply(pa1)
        qb0 = shape.placements[g.b.piece].apply(pb0)
        qb1 = shape.placements[g.b.piece].apply(pb1)
        if not (qa0.close_to(qb0) and qa1.close_to(qb1)):
            raise InvalidManifold("flat placement does not realize a gluing")


def zip_boundary(m: PolyhedralManifold) -> PolyhedralManifold:
    """Glue every maximal unglued interval within a single edge to itself,
    folded at its midpoint, leaving no boundary."""
    m.require_valid()
    out = m.copy()
    by_edge = out._intervals_by_edge()
    for p, poly in enumerate(out.pieces):
        for e in range(len(poly.vertices)):
            ivs = sorted(((iv.lo, iv.hi) for iv, _ in by_edge.get((p, e), [])),
                         key=lambda t: float(t[0]))
            gaps = []
            cur = Fraction(0) if not isinstance(poly.vertices[0].x, float) else 0.0
            for (lo, hi) in ivs:
                if lt(cur, lo):
                    gaps.append((cur, lo))
                cur = hi
            if lt(cur, 1):
                gaps.append((cur, 1))
            for (lo, hi) in gaps:
                mid = (lo + hi) / 2 if isinstance(lo, float) or isinstance(hi, float) \
                    else Fraction(lo + hi) / 2
                out.gluings.append(Gluing(
                    EdgeInterval(p, e, lo, mid, FWD),
                    EdgeInterval(p, e, mid, hi, BWD)))
    out.require_valid()
    return out


# ---------------------------------------------------------------------------
# Gluing coalescing, normalization, and combinatorial isomorphism


def coalesce_gluings(m: PolyhedralManifold) -> PolyhedralManifold:
    """Merge gluing records that continue each other into maximal records."""
    out = m.copy()
    glus = [g.canonical() for g in out.gluings]
    changed = True
    while changed:
        changed = False
        for i in range(len(glus)):
            if changed:
                break
            for j in range(len(glus)):
                if i == j:
                    continue
                g1, g2 = glus[i], glus[j]
                if (g1.a.piece, g1.a.edge) != (g2.a.piece, g2.a.edge):
                    continue
                if (g1.b.piece, g1.b.edge) != (g2.b.piece, g2.b.edge):
                    continue
                if g1.b.direction != g2.b.direction:
                    continue
                if not eq(g1.a.hi, g2.a.lo):
                    continue
                if g1.b.direction == FWD and not eq(g1.b.hi, g2.b.lo):
                    continue
                if g1.b.direction == BWD and not eq(g1.b.lo, g2.b.hi):
                    continue
                # ratio consistency comes free from the length invariant
                na = EdgeInterval(g1.a.piece, g1.a.edge, g1.a.lo, g2.a.hi, FWD)
                if g1.b.direction == FWD:
                    nb = EdgeInterval(g1.b.piece, g1.b.edge, g1.b.lo, g2.b.hi, FWD)
                else:
                    nb = EdgeInterval(g1.b.piece, g1.b.edge, g2.b.lo, g1.b.hi, BWD)
                merged = Gluing(na, nb).canonical()
                glus[i] = merged
                glus.pop(j)
                changed = True
                break
    out.gluings = glus
    return out


def _normalize_piece(poly: SimplePolygon):
    """Normalized copy plus an old-edge -> (new_edge, a, b) parameter map."""
    norm = SimplePolygon(list(poly.vertices), normalize=True)
    entries = {}
    for e in range(len(poly.vertices)):
        a_pt, b_pt = poly.edge(e)
        target = None
        for ne in range(len(norm.vertices)):
            na, nb = norm.edge(ne)
            if geom.on_segment(na, nb, a_pt) and geom.on_segment(na, nb, b_pt):
                t0 = geom.param_on_segment(na, nb, a_pt)
                t1 = geom.param_on_segment(na, nb, b_pt)
                if lt(t0, t1):
                    target = (ne, t0, t1 - t0)
                    break
        if target is None:
            raise InvalidManifold("piece normalization lost an edge")
        entries[e] = target
    return norm, entries


def normalize_manifold(m: PolyhedralManifold) -> PolyhedralManifold:
    """Pieces normalized (collinear vertices merged) and gluings coalesced."""
    new_pieces = []
    maps = []
    for poly in m.pieces:
        npoly, entries = _normalize_piece(poly)
        new_pieces.append(npoly)
        maps.append(entries)

    def map_iv(iv: EdgeInterval) -> EdgeInterval:
        ne, a, b = maps[iv.piece][iv.edge]
        return EdgeInterval(iv.piece, ne, a + b * iv.lo, a + b * iv.hi,
                            iv.direction)

    new_gluings = [Gluing(map_iv(g.a), map_iv(g.b)) for g in m.gluings]
    return coalesce_gluings(PolyhedralManifold(new_pieces, new_gluings, m.label))


def congruence_alignments(p: SimplePolygon, q: SimplePolygon):
    """All vertex alignments (k, flip) of two congruent polygons.

    Without flip vertex i of p maps to vertex (i+k) of q; with flip to
    vertex (k-i).  Verified geometrically (exact on rationals)."""
    np_, nq = len(p.vertices), len(q.vertices)
    out = []
    if np_ != nq:
        return out
    for k in range(nq):
        ok = True
        try:
            iso = segment_map(p.vertex(0), p.vertex(1), q.vertex(k), q.vertex(k + 1))
        except geom.GeomError:
            iso = None
        if iso is not None:
            for i in range(np_):
                if not iso.apply(p.vertex(i)).close_to(q.vertex(k + i)):
                    ok = False
                    break
            if ok:
                out.append((k, False))
        ok = True
        try:
            iso = segment_map(p.vertex(0), p.vertex(1), q.vertex(k), q.vertex(k - 1),
                              orientation_preserving=False)
        except geom.GeomError:
            iso = None
        if iso is None:
            continue
        for i in range(np_):
            if not iso.apply(p.vertex(i)).close_to(q.vertex(k - i)):
                ok = False
                break
        if ok:
            out.append((k, True))
    return out


def _transform_interval(iv: EdgeInterval, assignment) -> EdgeInterval:
    q_idx, k, flip, nq = assignment[iv.piece]
    if not flip:
        return EdgeInterval(q_idx, (iv.edge + k) % nq, iv.lo, iv.hi, iv.direction)
    ne = (k - iv.edge - 1) % nq
    return EdgeInterval(q_idx, ne, 1 - iv.hi, 1 - iv.lo,
                        BWD if iv.direction == FWD else FWD)


def manifold_isomorphic(m1: PolyhedralManifold, m2: PolyhedralManifold) -> bool:
    """Combinatorial isomorphism with pieces matched up to congruence."""
    a = normalize_manifold(m1)
    b = normalize_manifold(m2)
    if len(a.pieces) != len(b.pieces):
        return False
    if not eq(a.area2(), b.area2()):
        return False
    targets_canon = [g.canonical() for g in b.gluings]

    # candidate piece matches
    cand: List[List[Tuple[int, int, bool]]] = []
    for p in a.pieces:
        row = []
        for qi, q in enumerate(b.pieces):
            for (k, flip) in congruence_alignments(p, q):
                row.append((qi, k, flip))
        if not row:
            return False
        cand.append(row)

    order = sorted(range(len(a.pieces)), key=lambda i: len(cand[i]))
    assignment: Dict[int, Tuple[int, int, bool, int]] = {}
    used = set()

    glu_by_piece: Dict[int, List[Gluing]] = {}
    for g in a.gluings:
        glu_by_piece.setdefault(g.a.piece, []).append(g)
        if g.b.piece != g.a.piece:
            glu_by_piece.setdefault(g.b.piece, []).append(g)

    def gluings_ok(piece: int) -> bool:
        for g in glu_by_piece.get(piece, []):
            if g.a.piece in assignment and g.b.piece in assignment:
                tg = Gluing(_transform_interval(g.a, assignment),
                            _transform_interval(g.b, assignment)).canonical()
                if not any(tg.equivalent(t) for t in targets_canon):
                    return False
        return True

    def backtrack(idx: int) -> bool:
        if idx == len(order):
            return len(a.gluings) == len(b.gluings)
        p = order[idx]
        for (qi, k, flip) in cand[p]:
            if qi in used:
                continue
            assignment[p] = (qi, k, flip, len(b.pieces[qi].vertices))
            used.add(qi)
            if gluings_ok(p) and backtrack(idx + 1):
                return True
            del assignment[p]
            used.discard(qi)
        return False

    return backtrack(0)
