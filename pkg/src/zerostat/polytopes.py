"""Lattice polytopes in the positive orthant, the moment map of CP^m and
allowed/forbidden region classification.

Everything geometric is exact (integers and ``Fraction``); only the moment map
and the region margin are floating point.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

DEFAULT_MARGIN = 1e-3


class PolytopeError(ValueError):
    pass


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[Sequence[int]]) -> list[tuple[int, int]]:
    """Counterclockwise hull of integer points (monotone chain), collinear points dropped."""
    pts = sorted(set((int(p[0]), int(p[1])) for p in points))
    if len(pts) <= 2:
        return pts
    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[int, int]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def graded_lex_key(alpha: Sequence[int]):
    return (sum(alpha), tuple(alpha))


@dataclass(frozen=True)
class LatticePolytope:
    """Integral convex polytope in R_+^m, m in {1, 2}.

    For ``m == 1`` the vertices are ``((a,), (b,))`` with ``a <= b``; for
    ``m == 2`` they are the extreme points in counterclockwise order.
    """

    m: int
    vertices: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        verts = tuple(tuple(int(c) for c in v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        problems = self.violations()
        if problems:
            raise PolytopeError("; ".join(problems))

    @classmethod
    def interval(cls, a: int, b: int) -> "LatticePolytope":
        return cls(1, ((a,), (b,)))

    @classmethod
    def from_points(cls, points) -> "LatticePolytope":
        """Convex hull of integer points (m inferred from point length)."""
        points = [tuple(int(c) for c in p) for p in points]
        m = len(points[0])
        if m == 1:
            xs = [p[0] for p in points]
            return cls.interval(min(xs), max(xs))
        return cls(2, tuple(convex_hull(points)))

    @classmethod
    def simplex(cls, m: int, d: int) -> "LatticePolytope":
        """The degree-d simplex {alpha >= 0, |alpha| <= d}."""
        if m == 1:
            return cls.interval(0, d)
        return cls(2, ((0, 0), (d, 0), (0, d)))

    def violations(self) -> list[str]:
        out = []
        if self.m not in (1, 2):
            return [f"unsupported polytope dimension m={self.m}"]
        if any(len(v) != self.m for v in self.vertices):
            return [f"vertex length does not match m={self.m}"]
        if any(c < 0 for v in self.vertices for c in v):
            out.append("vertex coordinates must be non-negative")
        if self.m == 1:
            if len(self.vertices) != 2 or self.vertices[0][0] > self.vertices[1][0]:
                out.append("an interval needs two endpoints a <= b")
            return out
        verts = list(self.vertices)
        if len(set(verts)) != len(verts):
            out.append("repeated vertices")
            return out
        if len(verts) >= 3:
            hull = convex_hull(verts)
            if len(hull) != len(verts) or not _same_cycle(hull, verts):
                out.append("vertices are not in counterclockwise convex position")
        return out

    # exact geometry -------------------------------------------------------

    def dilate(self, n: int) -> "LatticePolytope":
        return dilate(self, n)

    def lattice_points(self) -> list[tuple[int, ...]]:
        return lattice_points(self)

    def volume(self) -> Fraction:
        return volume(self)

    def max_degree(self) -> int:
        """Smallest d such that the polytope lies in the degree-d simplex."""
        return max(sum(v) for v in self.vertices)

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def contains(self, point, strict: bool = False) -> bool:
        """Exact membership test for an integer or rational point."""
        point = tuple(Fraction(c) for c in point)
        if self.m == 1:
            a, b = self.vertices[0][0], self.vertices[1][0]
            return a < point[0] < b if strict else a <= point[0] <= b
        if len(self.vertices) == 1:
            return not strict and point == tuple(Fraction(c) for c in self.vertices[0])
        if len(self.vertices) == 2:
            # segment
            p, q = self.vertices
            if strict or _cross(p, q, point) != 0:
                return False
            lo = [min(p[i], q[i]) for i in range(2)]
            hi = [max(p[i], q[i]) for i in range(2)]
            return all(lo[i] <= point[i] <= hi[i] for i in range(2))
        for a, b in self.edges():
            c = _cross(a, b, point)
            if c < 0 or (strict and c == 0):
                return False
        return True

    def is_simple(self) -> bool:
        """Every vertex meets exactly m edges.

        Always true for a nondegenerate interval or polygon; false for the
        lower-dimensional (segment or point) cases.
        """
        if self.m == 1:
            return self.vertices[0][0] < self.vertices[1][0]
        return len(self.vertices) >= 3

    def to_literal(self) -> str:
        if self.m == 1:
            return json.dumps([self.vertices[0][0], self.vertices[1][0]])
        return json.dumps([list(v) for v in self.vertices])


def _same_cycle(a, b) -> bool:
    if len(a) != len(b):
        return False
    if b[0] not in a:
        return False
    i = a.index(b[0])
    return a[i:] + a[:i] == list(b)


def parse_polytope(literal) -> LatticePolytope:
    """Parse ``"[a,b]"`` (m=1) or ``"[[x1,y1],...]"`` (m=2); lists are accepted too.

    Polygon vertices must already be in counterclockwise convex position.
    """
    try:
        data = json.loads(literal) if isinstance(literal, str) else literal
    except json.JSONDecodeError as exc:
        raise PolytopeError(f"cannot parse polytope literal {literal!r}") from exc
    if not isinstance(data, (list, tuple)) or not data:
        raise PolytopeError(f"cannot parse polytope literal {literal!r}")
    if all(isinstance(c, (int, np.integer)) for c in data):
        if len(data) != 2:
            raise PolytopeError("interval literal must be [a, b]")
        return LatticePolytope.interval(int(data[0]), int(data[1]))
    if all(isinstance(v, (list, tuple)) and len(v) == 2 for v in data):
        for v in data:
            if not all(isinstance(c, (int, np.integer)) for c in v):
                raise PolytopeError("polygon vertices must be integer pairs")
        return LatticePolytope(2, tuple(tuple(v) for v in data))
    raise PolytopeError(f"cannot parse polytope literal {literal!r}")


def dilate(P: LatticePolytope, n: int) -> LatticePolytope:
    if n < 1:
        raise PolytopeError("dilation factor must be a positive integer")
    return LatticePolytope(P.m, tuple(tuple(n * c for c in v) for v in P.vertices))


def lattice_points(P: LatticePolytope) -> list[tuple[int, ...]]:
    """All integer points of P in graded lexicographic order."""
    if P.m == 1:
        a, b = P.vertices[0][0], P.vertices[1][0]
        return [(k,) for k in range(a, b + 1)]
    xs = [v[0] for v in P.vertices]
    ys = [v[1] for v in P.vertices]
    pts = [
        (x, y)
        for x in range(min(xs), max(xs) + 1)
        for y in range(min(ys), max(ys) + 1)
        if P.contains((x, y))
    ]
    return sorted(pts, key=graded_lex_key)


def volume(P: LatticePolytope) -> Fraction:
    if P.m == 1:
        return Fraction(P.vertices[1][0] - P.vertices[0][0])
    v = P.vertices
    if len(v) < 3:
        return Fraction(0)
    twice = sum(v[i][0] * v[(i + 1) % len(v)][1] - v[(i + 1) % len(v)][0] * v[i][1] for i in range(len(v)))
    return Fraction(abs(twice), 2)


def moment_map(z) -> np.ndarray:
    """mu(z)_j = |z_j|^2 / (1 + |z|^2); works on a point or a stack of points (last axis = m)."""
    z = np.asarray(z, dtype=complex)
    a = np.abs(z) ** 2
    if z.ndim == 0:
        return a / (1.0 + a)
    return a / (1.0 + a.sum(axis=-1, keepdims=True))


class Region(enum.Enum):
    ALLOWED = "allowed"
    FORBIDDEN = "forbidden"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class RegionLabel:
    region: Region
    margin: float  # signed, positive inside (1/p)P


def region_margin(P: LatticePolytope, p: float, mu) -> float:
    """Signed distance-like margin of a simplex point to the boundary of (1/p)P.

    Inside the polytope this is the exact distance to the boundary. Outside it
    is the most violated edge constraint, which has the right sign but can
    underestimate the Euclidean distance.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if P.m == 1:
        a, b = P.vertices[0][0] / p, P.vertices[1][0] / p
        return float(min(mu[0] - a, b - mu[0]))
    if len(P.vertices) < 3:
        return -np.inf
    best = np.inf
    for (x0, y0), (x1, y1) in P.edges():
        ex, ey = (x1 - x0) / p, (y1 - y0) / p
        length = np.hypot(ex, ey)
        d = (ex * (mu[1] - y0 / p) - ey * (mu[0] - x0 / p)) / length
        best = min(best, d)
    return float(best)


def classify_region(P: LatticePolytope, p: float, z, eps: float = DEFAULT_MARGIN) -> RegionLabel:
    if p <= 0:
        raise ValueError("degree scale p must be positive")
    margin = region_margin(P, p, moment_map(z))
    if margin >= eps:
        kind = Region.ALLOWED
    elif margin <= -eps:
        kind = Region.FORBIDDEN
    else:
        kind = Region.BOUNDARY
    return RegionLabel(kind, margin)
