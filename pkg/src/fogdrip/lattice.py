"""Height fields on a square box with zero boundary.

The interface is a height function on the side x side lattice box, pinned to
zero on the boundary ring and truncated to |h| <= hmax inside. Its energy is
the sum of |h_i - h_j| over nearest-neighbour bonds, counting bonds into the
zero boundary; its signed volume is the plain sum of heights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class LatticeGeometry:
    """Box geometry: side = R * N columns per edge, heights cut at hmax."""

    N: int
    R: int = 1
    hmax: int = 4

    def __post_init__(self):
        if self.N < 1 or self.R < 1:
            raise ValueError(f"need N >= 1 and R >= 1, got N={self.N} R={self.R}")
        if self.side < 3:
            # side 2 is all boundary ring, no interior sites
            raise ValueError(f"side = R*N = {self.side} is below the minimum box")
        if not (1 <= self.hmax <= self.N):
            raise ValueError(f"need 1 <= hmax <= N, got hmax={self.hmax} N={self.N}")

    @property
    def side(self) -> int:
        return self.R * self.N

    @property
    def interior_side(self) -> int:
        return max(self.side - 2, 0)

    @property
    def interior_sites(self) -> int:
        return self.interior_side ** 2

    @property
    def alpha_max(self) -> int:
        return self.hmax * self.interior_sites

    @classmethod
    def from_interior(cls, interior_side: int, hmax: int = 1, R: int = 1):
        """Geometry whose interior is interior_side x interior_side (R fixed)."""
        side = interior_side + 2
        if side % R != 0:
            raise ValueError(f"interior {interior_side} + 2 not divisible by R={R}")
        return cls(N=side // R, R=R, hmax=hmax)


class HeightField:
    """Mutable height configuration, stored on the full padded grid.

    h has shape (side, side); the boundary ring is identically zero and the
    interior obeys |h| <= hmax.
    """

    def __init__(self, geometry: LatticeGeometry, h: np.ndarray | None = None):
        self.geometry = geometry
        side = geometry.side
        if h is None:
            self.h = np.zeros((side, side), dtype=np.int64)
        else:
            h = np.asarray(h, dtype=np.int64)
            if h.shape != (side, side):
                raise ValueError(f"height array must be {side}x{side}, got {h.shape}")
            self.h = h.copy()
            self.validate()

    @classmethod
    def from_interior_array(cls, geometry: LatticeGeometry, interior: np.ndarray):
        side = geometry.side
        interior = np.asarray(interior, dtype=np.int64)
        want = (geometry.interior_side, geometry.interior_side)
        if interior.shape != want:
            raise ValueError(f"interior must be {want}, got {interior.shape}")
        h = np.zeros((side, side), dtype=np.int64)
        h[1:side - 1, 1:side - 1] = interior
        return cls(geometry, h)

    def validate(self):
        side = self.geometry.side
        edge = np.concatenate([self.h[0, :], self.h[-1, :], self.h[:, 0], self.h[:, -1]])
        if np.any(edge != 0):
            raise ValueError("boundary ring must be zero")
        inner = self.h[1:side - 1, 1:side - 1]
        if inner.size and np.abs(inner).max() > self.geometry.hmax:
            raise ValueError(f"heights exceed the cutoff |h| <= {self.geometry.hmax}")

    def interior(self) -> np.ndarray:
        side = self.geometry.side
        return self.h[1:side - 1, 1:side - 1]

    def copy(self) -> "HeightField":
        out = HeightField(self.geometry)
        out.h[:, :] = self.h
        return out

    def __eq__(self, other):
        return (isinstance(other, HeightField)
                and self.geometry == other.geometry
                and np.array_equal(self.h, other.h))


def signed_volume(field: HeightField) -> int:
    """Signed volume between the interface and the flat reference, one unit per cell."""
    return int(field.h.sum())


def perimeter_sum(field: HeightField) -> int:
    """Total height drop over nearest-neighbour bonds, boundary bonds included."""
    h = field.h
    return int(np.abs(np.diff(h, axis=0)).sum() + np.abs(np.diff(h, axis=1)).sum())


class MoveDelta(NamedTuple):
    d_energy: int
    d_alpha: int
    valid: bool


def propose_delta(field: HeightField, x: int, y: int, dh: int) -> MoveDelta:
    """Energy and volume increments for a single-site move h[x, y] += dh.

    Only interior sites may move; a move past the height cutoff is flagged
    invalid (zero increments).
    """
    geo = field.geometry
    side = geo.side
    if not (1 <= x <= side - 2 and 1 <= y <= side - 2):
        raise ValueError(f"site ({x}, {y}) is not interior")
    if dh not in (-1, 1):
        raise ValueError(f"dh must be +1 or -1, got {dh}")
    h = field.h
    old = h[x, y]
    new = old + dh
    if abs(new) > geo.hmax:
        return MoveDelta(0, 0, False)
    de = 0
    for nx, ny in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
        hn = h[nx, ny]
        de += abs(new - hn) - abs(old - hn)
    return MoveDelta(int(de), int(dh), True)


def apply_move(field: HeightField, x: int, y: int, dh: int) -> MoveDelta:
    """Apply a valid move in place and return its increments."""
    delta = propose_delta(field, x, y, dh)
    if not delta.valid:
        raise ValueError(f"move at ({x}, {y}) breaks the height cutoff")
    field.h[x, y] += dh
    return delta


def write_snapshot_csv(field: HeightField, path) -> None:
    """One CSV row of integers per lattice row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in field.h:
            writer.writerow([int(v) for v in row])


def read_snapshot_csv(geometry: LatticeGeometry, path) -> HeightField:
    with open(path, newline="") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
    return HeightField(geometry, np.array(rows, dtype=np.int64))
