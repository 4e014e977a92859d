"""Oriented level-set contours of a height field.

Contours live on the dual lattice (half-integer coordinates, stored doubled so
every vertex is an integer pair). Level k separates the upper set {h >= k}
from {h <= k - 1}; the boundary decomposes into closed oriented loops
traversed with the upper set on the right, so plus contours (interior higher
than the immediate exterior) run clockwise and minus contours run
counter-clockwise. A height jump of size m produces m stacked copies of the
same loop, one per level crossed. At saddle vertices the tracer hugs the
upper cells for positive levels and the lower cells otherwise, and any cycle
that revisits a vertex is split there, so every emitted contour is a simple
loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from functools import cached_property

import numpy as np

from .lattice import HeightField, LatticeGeometry


class IncompatibleFamilyError(ValueError):
    """A contour family violating nesting or shared-bond orientation rules."""

    def __init__(self, i, j, reason):
        self.pair = (i, j)
        self.reason = reason
        super().__init__(f"contours {i} and {j} are incompatible: {reason}")


@dataclass(frozen=True)
class OrientedContour:
    """Closed oriented simple loop on the doubled dual lattice.

    vertices: (n, 2) int array, one row per dual vertex, consecutive rows
    (cyclically) at doubled distance 2.
    sign: +1 when the enclosed heights sit above the immediate exterior.
    """

    vertices: np.ndarray
    sign: int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 4:
            raise ValueError("a contour needs at least 4 dual vertices")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        step = np.abs(np.diff(np.vstack([v, v[:1]]), axis=0)).sum(axis=1)
        if np.any(step != 2):
            raise ValueError("consecutive vertices must be dual-lattice neighbours")
        uniq = {(int(a), int(b)) for a, b in v}
        if len(uniq) != len(v):
            raise ValueError("contour revisits a vertex")

    @property
    def length(self) -> int:
        return int(self.vertices.shape[0])

    @cached_property
    def _shoelace_doubled(self) -> int:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return int((x * np.roll(y, -1) - np.roll(x, -1) * y).sum())

    @property
    def interior_area(self) -> int:
        # doubled coordinates scale the shoelace area by 4, plus the usual 1/2
        return abs(self._shoelace_doubled) // 8

    @property
    def signed_volume(self) -> int:
        return self.sign * self.interior_area

    def _vertical_crossings(self):
        """Per vertical bond: (site row, first site column east of it, dy)."""
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        out = []
        for (x1, y1), (x2, y2) in zip(v, nxt):
            if x1 != x2:
                continue
            dy = 1 if y2 > y1 else -1
            sy = (int(y1) + int(y2)) // 4
            cut = (int(x1) + 1) // 2
            out.append((sy, cut, dy))
        return out

    @cached_property
    def interior_cells(self) -> frozenset:
        """Lattice cells enclosed by the loop (nonzero winding)."""
        rows = {}
        for sy, cut, dy in self._vertical_crossings():
            rows.setdefault(sy, []).append((cut, dy))
        interior = set()
        for sy, crossings in rows.items():
            crossings.sort()
            run = 0
            prev = 0
            for cut, w in crossings:
                if run != 0:
                    for sx in range(prev, cut):
                        interior.add((sx, sy))
                run += w
                prev = cut
        return frozenset(interior)

    def canonical_key(self):
        """Rotation-normalized vertex tuple plus sign, for exact matching."""
        v = [(int(a), int(b)) for a, b in self.vertices]
        k = min(range(len(v)), key=lambda i: v[i])
        return (tuple(v[k:] + v[:k]), self.sign)

    def bonds(self):
        """Directed dual bonds as ordered doubled-vertex pairs."""
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        return [((int(a[0]), int(a[1])), (int(b[0]), int(b[1])))
                for a, b in zip(v, nxt)]


@dataclass
class ContourFamily:
    contours: list = dataclass_field(default_factory=list)

    def __iter__(self):
        return iter(self.contours)

    def __len__(self):
        return len(self.contours)

    def __getitem__(self, i):
        return self.contours[i]

    def total_length(self) -> int:
        return sum(c.length for c in self.contours)

    def total_signed_volume(self) -> int:
        return sum(c.signed_volume for c in self.contours)

    def check_compatible(self) -> None:
        """Raise IncompatibleFamilyError on overlap or bond-orientation clash."""
        cs = self.contours
        bond_maps = []
        for c in cs:
            bond_maps.append({tuple(sorted(b)): b for b in c.bonds()})
        cells = [c.interior_cells for c in cs]
        for i in range(len(cs)):
            for j in range(i + 1, len(cs)):
                inter = cells[i] & cells[j]
                if inter and inter != cells[i] and inter != cells[j]:
                    raise IncompatibleFamilyError(
                        i, j, "interiors overlap without nesting")
                for key in bond_maps[i].keys() & bond_maps[j].keys():
                    if bond_maps[i][key] != bond_maps[j][key]:
                        raise IncompatibleFamilyError(
                            i, j, f"dual bond {key} carries opposite orientations")


# unit-step rotations, coordinates x-right y-up
_RIGHT = {(1, 0): (0, -1), (0, -1): (-1, 0), (-1, 0): (0, 1), (0, 1): (1, 0)}
_LEFT = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}


def _level_directed_edges(upper: np.ndarray):
    """Directed dual edges of the boundary of {h >= k}, upper set on the right.

    Returns dict start_vertex -> sorted list of end vertices (doubled coords).
    """
    edges = {}

    def add(s, e):
        edges.setdefault(s, []).append(e)

    diff_x = upper[:-1, :] != upper[1:, :]
    for x, y in zip(*np.nonzero(diff_x)):
        X = 2 * int(x) + 1
        lo, hi = (X, 2 * int(y) - 1), (X, 2 * int(y) + 1)
        if upper[x, y]:
            add(hi, lo)   # upper cell west of the bond: head south
        else:
            add(lo, hi)   # upper cell east: head north

    diff_y = upper[:, :-1] != upper[:, 1:]
    for x, y in zip(*np.nonzero(diff_y)):
        Y = 2 * int(y) + 1
        lo, hi = (2 * int(x) - 1, Y), (2 * int(x) + 1, Y)
        if upper[x, y]:
            add(lo, hi)   # upper cell south: head east
        else:
            add(hi, lo)   # upper cell north: head west

    for s in edges:
        edges[s].sort()
    return edges


def _trace_level(edges, turn):
    """Decompose directed edges into simple loops.

    Every dual vertex has equal in and out degree (1, or 2 at saddles). The
    turn table pairs each incoming direction with one outgoing direction at
    saddles, which splits the edge set into canonical cycles independent of
    the traversal start. Cycles may still revisit saddle vertices; they are
    cut there into simple loops.
    """

    def successor(e):
        u, v = e
        outs = edges[v]
        if len(outs) == 1:
            return (v, outs[0])
        dx, dy = turn[((v[0] - u[0]) // 2, (v[1] - u[1]) // 2)]
        return (v, (v[0] + 2 * dx, v[1] + 2 * dy))

    used = set()
    loops = []
    for u in sorted(edges):
        for v in edges[u]:
            if (u, v) in used:
                continue
            e0 = (u, v)
            cyc = []
            e = e0
            while True:
                used.add(e)
                cyc.append(e[0])
                e = successor(e)
                if e == e0:
                    break
            path = []
            seen = {}
            for w in cyc:
                if w in seen:
                    k = seen[w]
                    loops.append(path[k:])
                    for dropped in path[k:]:
                        del seen[dropped]
                    del path[k:]
                seen[w] = len(path)
                path.append(w)
            if path:
                loops.append(path)
    return loops


def extract_contours(field: HeightField) -> ContourFamily:
    """All oriented contours of the field, levels in increasing order."""
    h = field.h
    out = []
    lo, hi = int(h.min()), int(h.max())
    for k in range(lo + 1, hi + 1):
        upper = h >= k
        turn = _RIGHT if k >= 1 else _LEFT
        edges = _level_directed_edges(upper)
        if not edges:
            continue
        for path in _trace_level(edges, turn):
            v = np.array(path, dtype=np.int64)
            x, y = v[:, 0], v[:, 1]
            shoelace = int((x * np.roll(y, -1) - np.roll(x, -1) * y).sum())
            sign = 1 if shoelace < 0 else -1
            out.append(OrientedContour(vertices=v, sign=sign))
    return ContourFamily(out)


def reconstruct_height(family: ContourFamily, geometry: LatticeGeometry,
                       validate: bool = True) -> HeightField:
    """Sum of signed interior indicators; rejects incompatible families."""
    if validate:
        family.check_compatible()
    side = geometry.side
    diff = np.zeros((side + 1, side), dtype=np.int64)
    for c in family:
        for sy, cut, dy in c._vertical_crossings():
            if not (0 <= sy < side):
                raise ValueError("contour leaves the box")
            if cut < 0 or cut > side:
                raise ValueError("contour leaves the box")
            # for a clockwise (plus) loop the net dy summed west of an
            # interior site is +1, matching a unit height increment
            diff[cut, sy] += dy
    h = np.cumsum(diff, axis=0)[:side, :]
    out = HeightField(geometry)
    out.h[:, :] = h
    out.validate()
    return out


def contour_to_json_obj(c: OrientedContour) -> dict:
    return {"sign": "+" if c.sign > 0 else "-",
            "vertices": [[int(a), int(b)] for a, b in c.vertices]}


def contour_from_json_obj(obj: dict) -> OrientedContour:
    if obj["sign"] not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    return OrientedContour(vertices=np.array(obj["vertices"], dtype=np.int64),
                           sign=1 if obj["sign"] == "+" else -1)


def write_contours_json(family: ContourFamily, path) -> None:
    with open(path, "w") as fh:
        json.dump([contour_to_json_obj(c) for c in family], fh)


def read_contours_json(path) -> ContourFamily:
    with open(path) as fh:
        data = json.load(fh)
    return ContourFamily([contour_from_json_obj(o) for o in data])
