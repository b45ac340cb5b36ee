"""Exact enumeration and classification of connecting geodesics on flat
2-tori and the unit-square billiard table.

Everything is exact rational arithmetic: lengths are only ever handled as
squared lengths, incidence questions (does this point lie on that geodesic
interior?) are solved over the rationals, and enumeration completeness comes
from integer bounding boxes.  Geodesics on the torus are lattice
displacements v = y - x + lambda; billiard trajectories are straight
segments from x to reflected images of y in the unfolded plane, with
trajectories whose unfolded interior hits a corner image rejected (the
billiard flow is undefined there).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from math import isqrt
from pathlib import Path
from typing import Sequence

from .errors import DomainError, UnsupportedInputError

Vec = tuple[Fraction, Fraction]

__all__ = [
    "RationalPoint",
    "FlatSpace",
    "GeodesicSegment",
    "Classification",
    "IntersectionHit",
    "GeodesicFamily",
    "shortest_vector",
    "enumerate_geodesics",
    "connecting_family",
    "classify",
    "count",
    "point_on_geodesic",
    "intersection_candidates",
    "load_space",
    "family_to_csv",
]


def _frac(x) -> Fraction:
    """Parse exact rationals; strings like '3/4' are accepted."""
    if isinstance(x, float):
        raise DomainError(f"exact rational required, got float {x!r}")
    try:
        return Fraction(x)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise DomainError(f"not an exact rational: {x!r}") from exc


@dataclass(frozen=True, order=True)
class RationalPoint:
    x: Fraction
    y: Fraction

    @classmethod
    def of(cls, x, y) -> "RationalPoint":
        return cls(_frac(x), _frac(y))

    def as_tuple(self) -> Vec:
        return (self.x, self.y)

    def __str__(self) -> str:
        return f"({self.x},{self.y})"


def _sub(a: Vec, b: Vec) -> Vec:
    return (a[0] - b[0], a[1] - b[1])


def _sq(a: Vec) -> Fraction:
    return a[0] * a[0] + a[1] * a[1]


def _cross(a: Vec, b: Vec) -> Fraction:
    return a[0] * b[1] - a[1] * b[0]


def rat_sqrt_upper(q: Fraction) -> Fraction:
    """A rational upper bound on sqrt(q) for q >= 0."""
    if q < 0:
        raise DomainError("negative value has no real square root")
    n, d = q.numerator, q.denominator
    return Fraction(isqrt(n * d) + 1, d)


def _ceil(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


def _floor(q: Fraction) -> int:
    return q.numerator // q.denominator


@dataclass(frozen=True)
class FlatSpace:
    """A flat geometry: a 2-torus given by a lattice basis, or the unit-square
    billiard table.

    delta_sq is the squared injectivity radius: a quarter of the shortest
    nonzero lattice vector's squared length for the torus.  For the billiard
    table only the inequality verifier consumes delta; the conservative
    convention delta = 1/4 is used and recorded in reports.
    """

    kind: str  # "torus" | "billiard"
    b1: Vec | None
    b2: Vec | None
    covolume: Fraction
    shortest_sq: Fraction
    delta_sq: Fraction
    _inv: tuple[Fraction, Fraction, Fraction, Fraction] | None  # rows of B^-1

    BILLIARD_DELTA_CONVENTION = "delta=1/4 (conservative; shortest unfolded closed displacement is 2)"

    @classmethod
    def torus(cls, b1, b2) -> "FlatSpace":
        b1 = (_frac(b1[0]), _frac(b1[1]))
        b2 = (_frac(b2[0]), _frac(b2[1]))
        det = _cross(b1, b2)
        if det == 0:
            raise DomainError("lattice basis is degenerate (zero determinant)")
        inv = (b2[1] / det, -b2[0] / det, -b1[1] / det, b1[0] / det)
        space = cls(
            kind="torus",
            b1=b1,
            b2=b2,
            covolume=abs(det),
            shortest_sq=Fraction(0),
            delta_sq=Fraction(0),
            _inv=inv,
        )
        _, sq = shortest_vector(space)
        object.__setattr__(space, "shortest_sq", sq)
        object.__setattr__(space, "delta_sq", sq / 4)
        return space

    @classmethod
    def unit_torus(cls) -> "FlatSpace":
        return cls.torus((1, 0), (0, 1))

    @classmethod
    def square_billiard(cls) -> "FlatSpace":
        return cls(
            kind="billiard",
            b1=None,
            b2=None,
            covolume=Fraction(1),
            shortest_sq=Fraction(4),  # shortest periodic unfolded closed displacement is 2
            delta_sq=Fraction(1, 16),
            _inv=None,
        )

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    def delta_upper(self) -> Fraction:
        return rat_sqrt_upper(self.delta_sq)

    def to_lattice(self, v: Vec) -> Vec:
        """Coordinates of a plane vector in the lattice basis."""
        m = self._inv
        return (m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1])

    def from_lattice(self, i: Fraction, j: Fraction) -> Vec:
        return (i * self.b1[0] + j * self.b2[0], i * self.b1[1] + j * self.b2[1])

    def reduce_point(self, p: RationalPoint) -> RationalPoint:
        """Canonical fundamental-domain representative of a torus point."""
        if not self.is_torus:
            return p
        i, j = self.to_lattice(p.as_tuple())
        fi, fj = i - _floor(i), j - _floor(j)
        vx, vy = self.from_lattice(fi, fj)
        return RationalPoint(vx, vy)

    def same_point(self, p: RationalPoint, q: RationalPoint) -> bool:
        if self.is_torus:
            return self.reduce_point(p) == self.reduce_point(q)
        return p == q

    def validate_point(self, p: RationalPoint) -> None:
        if self.kind == "billiard" and not (0 < p.x < 1 and 0 < p.y < 1):
            raise UnsupportedInputError(
                f"billiard endpoints must be interior table points, got {p}"
            )


def shortest_vector(space: FlatSpace) -> tuple[Vec, Fraction]:
    """A nonzero lattice vector of minimal squared length.

    Two-dimensional Lagrange-Gauss reduction; minimality is certified by an
    exhaustive scan over small coefficients of the reduced basis.
    """
    if not space.is_torus:
        raise DomainError("shortest_vector is defined for the torus kind only")
    u, v = space.b1, space.b2
    if _sq(u) > _sq(v):
        u, v = v, u
    while True:
        mu = round((u[0] * v[0] + u[1] * v[1]) / _sq(u))
        v = (v[0] - mu * u[0], v[1] - mu * u[1])
        if _sq(v) < _sq(u):
            u, v = v, u
        else:
            break
    best, best_sq = u, _sq(u)
    for i in range(-2, 3):
        for j in range(-2, 3):
            if i == 0 and j == 0:
                continue
            w = (i * u[0] + j * v[0], i * u[1] + j * v[1])
            if _sq(w) < best_sq:
                best, best_sq = w, _sq(w)
    if best[0] < 0 or (best[0] == 0 and best[1] < 0):
        best = (-best[0], -best[1])
    return best, best_sq


@dataclass(frozen=True)
class GeodesicSegment:
    """One oriented connecting segment.

    For the torus, ``displacement`` is the plane vector v = y - x + lambda.
    For the billiard it is the unfolded straight displacement to the chosen
    image of y, and ``image`` holds (sigma1, sigma2, m, n) with unfolded
    endpoint (sigma1*y.x + 2m, sigma2*y.y + 2n).
    """

    space: FlatSpace
    x: RationalPoint
    y: RationalPoint
    displacement: Vec
    sq_length: Fraction
    image: tuple[int, int, int, int] | None = None

    def point_at(self, s: Fraction) -> RationalPoint:
        """The point at parameter s, folded back into the space."""
        px = self.x.x + s * self.displacement[0]
        py = self.x.y + s * self.displacement[1]
        if self.space.is_torus:
            return self.space.reduce_point(RationalPoint(px, py))
        return RationalPoint(_fold_coord(px), _fold_coord(py))

    def sort_key(self):
        return self.displacement


def _fold_coord(u: Fraction) -> Fraction:
    """Fold an unfolded coordinate back into [0, 1] (triangle wave, period 2)."""
    r = u - 2 * _floor(u / 2)
    return r if r <= 1 else 2 - r


def _affine_hits(a1: Fraction, a2: Fraction, c1: Fraction, c2: Fraction) -> list[Fraction]:
    """All s in (0,1) with s*a1 - c1 and s*a2 - c2 both integers.

    (a1, a2) != (0, 0) is assumed; a zero component turns its congruence into
    a plain integrality condition on c.  Over a common denominator q the two
    conditions read s*Aj = Cj (mod q); the first parametrizes s = (C1+iq)/A1
    and the second becomes a linear congruence in i, so the work is
    proportional to the number of hits, not to |a1|.
    """
    if a1 == 0 and a2 == 0:
        raise DomainError("degenerate direction in incidence solve")
    if a1 == 0:
        a1, a2, c1, c2 = a2, a1, c2, c1
    q = math.lcm(a1.denominator, a2.denominator, c1.denominator, c2.denominator)
    A1, A2 = int(a1 * q), int(a2 * q)
    C1, C2 = int(c1 * q), int(c2 * q)

    # second condition: i * (q A2) = C2 A1 - C1 A2  (mod |q A1|)
    mod = abs(q * A1)
    rhs = (C2 * A1 - C1 * A2) % mod
    coef = (q * A2) % mod
    g = math.gcd(coef, mod)
    if rhs % g:
        return []
    step = mod // g
    if coef == 0:
        i0 = 0  # rhs == 0 here and step == 1: every i solves the congruence
    else:
        i0 = (rhs // g * pow(coef // g, -1, step)) % step

    # s in (0,1): C1 + i q strictly between 0 and A1 (orientation by sign)
    lo, hi = (0, A1) if A1 > 0 else (A1, 0)
    # lo < C1 + i q < hi
    i_min = (lo - C1) // q + 1
    i_max = -((-(hi - C1)) // q) - 1
    first = i_min + (i0 - i_min) % step
    hits = []
    for i in range(first, i_max + 1, step):
        val = C1 + i * q
        if lo < val < hi:
            hits.append(Fraction(val, A1))
    hits.sort()
    return hits


def _billiard_images(z: RationalPoint) -> list[tuple[int, int, Vec]]:
    """The four reflection classes of a table point (translations excluded)."""
    out = []
    for s1 in (1, -1):
        for s2 in (1, -1):
            out.append((s1, s2, (s1 * z.x, s2 * z.y)))
    return out


def _segment_hits(segment: GeodesicSegment, z: RationalPoint) -> list[Fraction]:
    """Interior parameters where the segment passes through the point z."""
    space = segment.space
    x = segment.x.as_tuple()
    w = segment.displacement
    if space.is_torus:
        a1, a2 = space.to_lattice(w)
        c1, c2 = space.to_lattice(_sub(z.as_tuple(), x))
        return _affine_hits(a1, a2, c1, c2)
    hits: set[Fraction] = set()
    for _, _, img in _billiard_images(z):
        # x + s*w  ==  img + 2*(m,n):  (s*w - (img - x)) / 2 integral
        c = _sub(img, x)
        hits.update(_affine_hits(w[0] / 2, w[1] / 2, c[0] / 2, c[1] / 2))
    return sorted(hits)


def _torus_enumerate(space: FlatSpace, x: RationalPoint, y: RationalPoint, t_sq: Fraction) -> list[GeodesicSegment]:
    d = _sub(y.as_tuple(), x.as_tuple())
    # (i, j) = B^-1 (v - d) with |v| <= t, so |v - d| <= t + |d|
    reach = rat_sqrt_upper(t_sq) + rat_sqrt_upper(_sq(d))
    m = space._inv
    row1 = rat_sqrt_upper(m[0] * m[0] + m[1] * m[1])
    row2 = rat_sqrt_upper(m[2] * m[2] + m[3] * m[3])
    imax = _floor(row1 * reach) + 1
    jmax = _floor(row2 * reach) + 1

    # integer-scaled inner loop: all candidate displacements share one denominator
    dens = [
        d[0].denominator, d[1].denominator,
        space.b1[0].denominator, space.b1[1].denominator,
        space.b2[0].denominator, space.b2[1].denominator,
    ]
    L = math.lcm(*dens)
    dx, dy = int(d[0] * L), int(d[1] * L)
    b1x, b1y = int(space.b1[0] * L), int(space.b1[1] * L)
    b2x, b2y = int(space.b2[0] * L), int(space.b2[1] * L)
    bound_num = t_sq.numerator * L * L
    bound_den = t_sq.denominator

    segments = []
    for i in range(-imax, imax + 1):
        base_x = dx + i * b1x
        base_y = dy + i * b1y
        for j in range(-jmax, jmax + 1):
            vx = base_x + j * b2x
            vy = base_y + j * b2y
            if vx == 0 and vy == 0:
                continue
            sq_scaled = vx * vx + vy * vy
            if sq_scaled * bound_den > bound_num:
                continue
            v = (Fraction(vx, L), Fraction(vy, L))
            segments.append(
                GeodesicSegment(space, x, y, v, Fraction(sq_scaled, L * L))
            )
    segments.sort(key=GeodesicSegment.sort_key)
    return segments


def _billiard_enumerate(
    space: FlatSpace, x: RationalPoint, y: RationalPoint, t_sq: Fraction
) -> tuple[list[GeodesicSegment], int]:
    space.validate_point(x)
    space.validate_point(y)
    t_up = rat_sqrt_upper(t_sq)
    segments = []
    corner_rejected = 0
    for s1, s2, img in _billiard_images(y):
        # endpoint (s1*y.x + 2m, s2*y.y + 2n) within distance t of x
        m_lo = _ceil((x.x - t_up - img[0]) / 2)
        m_hi = _floor((x.x + t_up - img[0]) / 2)
        n_lo = _ceil((x.y - t_up - img[1]) / 2)
        n_hi = _floor((x.y + t_up - img[1]) / 2)
        for mm in range(m_lo, m_hi + 1):
            ex = img[0] + 2 * mm
            for nn in range(n_lo, n_hi + 1):
                ey = img[1] + 2 * nn
                w = (ex - x.x, ey - x.y)
                sq = _sq(w)
                if sq == 0 or sq > t_sq:
                    continue
                # corner images are the integer points; the flow is undefined there
                if _affine_hits(w[0], w[1], -x.x, -x.y):
                    corner_rejected += 1
                    continue
                segments.append(GeodesicSegment(space, x, y, w, sq, image=(s1, s2, mm, nn)))
    segments.sort(key=GeodesicSegment.sort_key)
    return segments, corner_rejected


def enumerate_geodesics(
    space: FlatSpace, x: RationalPoint, y: RationalPoint, t_sq
) -> list[GeodesicSegment]:
    """All joining geodesics of squared length in (0, t_sq], duplicate-free."""
    t_sq = _frac(t_sq)
    if t_sq <= 0:
        raise DomainError(f"t^2 must be positive, got {t_sq}")
    if space.is_torus:
        return _torus_enumerate(space, x, y, t_sq)
    segments, _ = _billiard_enumerate(space, x, y, t_sq)
    return segments


@dataclass(frozen=True)
class Classification:
    kind: str  # "connecting" | "passes-through-endpoint"
    x_hits: tuple[Fraction, ...]
    y_hits: tuple[Fraction, ...]


def classify(segment: GeodesicSegment) -> Classification:
    """Flag segments whose interior passes through either endpoint."""
    x_hits = tuple(_segment_hits(segment, segment.x))
    y_hits = tuple(_segment_hits(segment, segment.y))
    kind = "passes-through-endpoint" if (x_hits or y_hits) else "connecting"
    return Classification(kind, x_hits, y_hits)


@dataclass(frozen=True)
class GeodesicFamily:
    """All joining geodesics G plus the connecting subfamily Gamma."""

    space: FlatSpace
    x: RationalPoint
    y: RationalPoint
    t_sq: Fraction
    segments: tuple[GeodesicSegment, ...]
    connecting: tuple[int, ...]
    corner_rejected: int

    @property
    def n(self) -> int:
        return len(self.segments)

    @property
    def m(self) -> int:
        return len(self.connecting)

    def connecting_segments(self) -> list[GeodesicSegment]:
        return [self.segments[i] for i in self.connecting]


def connecting_family(space: FlatSpace, x: RationalPoint, y: RationalPoint, t_sq) -> GeodesicFamily:
    t_sq = _frac(t_sq)
    if t_sq <= 0:
        raise DomainError(f"t^2 must be positive, got {t_sq}")
    if space.is_torus:
        segments, rejected = _torus_enumerate(space, x, y, t_sq), 0
    else:
        segments, rejected = _billiard_enumerate(space, x, y, t_sq)
    connecting = tuple(
        i for i, seg in enumerate(segments) if classify(seg).kind == "connecting"
    )
    return GeodesicFamily(space, x, y, t_sq, tuple(segments), connecting, rejected)


def count(space: FlatSpace, x: RationalPoint, y: RationalPoint, t_sq) -> tuple[int, int]:
    """(n, m): all joining geodesics, and those not passing through x or y."""
    fam = connecting_family(space, x, y, t_sq)
    return fam.n, fam.m


def point_on_geodesic(space: FlatSpace, z: RationalPoint, segment: GeodesicSegment) -> list[Fraction]:
    """Interior parameters s in (0,1) where the segment passes through z.

    Empty list means z does not block this segment.
    """
    if space.is_torus:
        zr = space.reduce_point(z)
        if space.same_point(zr, segment.x) or space.same_point(zr, segment.y):
            raise DomainError("z must differ from both endpoints")
    else:
        # blocking points may sit on the walls (reflection points), unlike endpoints
        if not (0 <= z.x <= 1 and 0 <= z.y <= 1):
            raise UnsupportedInputError(f"billiard blocking point must lie in the table, got {z}")
        if z == segment.x or z == segment.y:
            raise DomainError("z must differ from both endpoints")
    return _segment_hits(segment, z)


@dataclass(frozen=True)
class IntersectionHit:
    """A common interior point of two segments.

    Transversal crossings carry the two parameters; a parallel overlap is
    reported once per maximal interval with the representative at its
    midpoint and the interval bounds in the first segment's parameter.
    """

    point: RationalPoint
    s: Fraction
    u: Fraction | None
    s_interval: tuple[Fraction, Fraction] | None = None


def _merge_open_intervals(intervals: list[tuple[Fraction, Fraction]]) -> list[tuple[Fraction, Fraction]]:
    """Union of open intervals as maximal open components.

    Abutting intervals (a,b),(b,c) stay separate: the shared endpoint is not
    in the union.
    """
    out: list[tuple[Fraction, Fraction]] = []
    for lo, hi in sorted(intervals):
        if out and lo < out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _torus_intersections(g1: GeodesicSegment, g2: GeodesicSegment) -> list[IntersectionHit]:
    space = g1.space
    a = space.to_lattice(g1.displacement)
    b = space.to_lattice(g2.displacement)
    cross = _cross(a, b)
    hits: list[IntersectionHit] = []
    if cross != 0:
        # s*a - u*b = (i, j) over integers; enumerate the bounding box of the
        # parallelogram {s*a - u*b : s,u in [0,1]}.  The inner loop runs on a
        # common-denominator integer scaling; s = (i*b1 - j*b0)/cross and
        # u = (i*a1 - j*a0)/cross.
        i_lo = _floor(min(Fraction(0), a[0]) + min(Fraction(0), -b[0]))
        i_hi = _ceil(max(Fraction(0), a[0]) + max(Fraction(0), -b[0]))
        j_lo = _floor(min(Fraction(0), a[1]) + min(Fraction(0), -b[1]))
        j_hi = _ceil(max(Fraction(0), a[1]) + max(Fraction(0), -b[1]))
        den = math.lcm(a[0].denominator, a[1].denominator, b[0].denominator, b[1].denominator)
        a0, a1 = int(a[0] * den), int(a[1] * den)
        b0, b1 = int(b[0] * den), int(b[1] * den)
        xd = a0 * b1 - a1 * b0  # den^2 * cross
        lo_n, hi_n = (0, xd) if xd > 0 else (xd, 0)
        for i in range(i_lo, i_hi + 1):
            for j in range(j_lo, j_hi + 1):
                sn = (i * b1 - j * b0) * den
                if not lo_n < sn < hi_n:
                    continue
                un = (i * a1 - j * a0) * den
                if not lo_n < un < hi_n:
                    continue
                s = Fraction(sn, xd)
                hits.append(IntersectionHit(g1.point_at(s), s, Fraction(un, xd)))
        return hits
    # parallel carriers through the common source point
    c = b[0] / a[0] if a[0] != 0 else b[1] / a[1]
    # (s - u*c)*a integral: solution set is gen*Z
    p1, q1 = a[0].numerator, a[0].denominator
    p2, q2 = a[1].numerator, a[1].denominator
    if p1 == 0:
        gen = Fraction(q2, abs(p2))
    elif p2 == 0:
        gen = Fraction(q1, abs(p1))
    else:
        gen = Fraction(math.lcm(q1, q2), math.gcd(abs(p1), abs(p2)))
    intervals = []
    k_lo = _floor((-abs(c) - 1) / gen)
    k_hi = _ceil((abs(c) + 1) / gen)
    for k in range(k_lo, k_hi + 1):
        tau = k * gen
        # s = u*c + tau with u in (0,1)
        lo, hi = (tau, tau + c) if c > 0 else (tau + c, tau)
        lo, hi = max(lo, Fraction(0)), min(hi, Fraction(1))
        if lo < hi:
            intervals.append((lo, hi))
    for lo, hi in _merge_open_intervals(intervals):
        mid = (lo + hi) / 2
        hits.append(IntersectionHit(g1.point_at(mid), mid, None, s_interval=(lo, hi)))
    return hits


def _billiard_intersections(g1: GeodesicSegment, g2: GeodesicSegment) -> list[IntersectionHit]:
    x = g1.x.as_tuple()
    w1, w2 = g1.displacement, g2.displacement
    den = math.lcm(
        w1[0].denominator, w1[1].denominator,
        w2[0].denominator, w2[1].denominator,
        x[0].denominator, x[1].denominator,
    )
    W2 = (int(w2[0] * den), int(w2[1] * den))
    hits: list[IntersectionHit] = []
    overlap_intervals: list[tuple[Fraction, Fraction]] = []
    for s1 in (1, -1):
        for s2 in (1, -1):
            A = (s1 * w1[0], s2 * w1[1])
            c0 = ((s1 - 1) * x[0], (s2 - 1) * x[1])
            # u*w2 - s*A = c0 + 2*(m, n); integer-scaled inner loop, Fractions
            # built only for actual hits
            Ai = (int(A[0] * den), int(A[1] * den))
            C0 = (int(c0[0] * den), int(c0[1] * den))
            cross = W2[0] * Ai[1] - W2[1] * Ai[0]  # den^2 * cross(w2, A)
            lo0 = min(Fraction(0), w2[0]) + min(Fraction(0), -A[0])
            hi0 = max(Fraction(0), w2[0]) + max(Fraction(0), -A[0])
            lo1 = min(Fraction(0), w2[1]) + min(Fraction(0), -A[1])
            hi1 = max(Fraction(0), w2[1]) + max(Fraction(0), -A[1])
            m_lo, m_hi = _floor((lo0 - c0[0]) / 2), _ceil((hi0 - c0[0]) / 2)
            n_lo, n_hi = _floor((lo1 - c0[1]) / 2), _ceil((hi1 - c0[1]) / 2)
            lo_n, hi_n = (0, cross) if cross > 0 else (cross, 0)
            for mm in range(m_lo, m_hi + 1):
                r0 = C0[0] + 2 * mm * den
                for nn in range(n_lo, n_hi + 1):
                    r1 = C0[1] + 2 * nn * den
                    if cross != 0:
                        # s = (r0 w2y - r1 w2x)/cross(w2,A), u = (r0 Ay - r1 Ax)/cross(w2,A)
                        sn = r0 * W2[1] - r1 * W2[0]
                        if not lo_n < sn < hi_n:
                            continue
                        un = r0 * Ai[1] - r1 * Ai[0]
                        if not lo_n < un < hi_n:
                            continue
                        s = Fraction(sn, cross)
                        hits.append(IntersectionHit(g1.point_at(s), s, Fraction(un, cross)))
                    else:
                        # parallel: u*w2 - s*A = r needs r parallel to A
                        if r0 * Ai[1] - r1 * Ai[0] != 0:
                            continue
                        cpar = Fraction(W2[0], Ai[0]) if Ai[0] else Fraction(W2[1], Ai[1])
                        tau = -Fraction(r0, Ai[0]) if Ai[0] else -Fraction(r1, Ai[1])
                        lo, hi = (tau, tau + cpar) if cpar > 0 else (tau + cpar, tau)
                        lo, hi = max(lo, Fraction(0)), min(hi, Fraction(1))
                        if lo < hi:
                            overlap_intervals.append((lo, hi))
    for lo, hi in _merge_open_intervals(overlap_intervals):
        mid = (lo + hi) / 2
        hits.append(IntersectionHit(g1.point_at(mid), mid, None, s_interval=(lo, hi)))
    return hits


def intersection_candidates(
    space: FlatSpace, g1: GeodesicSegment, g2: GeodesicSegment
) -> list[IntersectionHit]:
    """All points interior to both segments, exact.

    De-duplicated by the folded point; the endpoints x and y never appear
    (interior parameters only).
    """
    if g1.space is not g2.space or g1.x != g2.x or g1.y != g2.y:
        raise DomainError("segments must come from one (space, x, y) family")
    if g1.displacement == g2.displacement:
        raise DomainError("segments must be distinct")
    raw = _torus_intersections(g1, g2) if space.is_torus else _billiard_intersections(g1, g2)
    seen: dict[RationalPoint, IntersectionHit] = {}
    for hit in sorted(raw, key=lambda h: (h.point.x, h.point.y, h.s)):
        seen.setdefault(hit.point, hit)
    out = [h for p, h in sorted(seen.items(), key=lambda kv: (kv[0].x, kv[0].y))]
    return [h for h in out if h.point != g1.x and h.point != g1.y]


def load_space(cfg: dict) -> FlatSpace:
    """Build a flat geometry from a config mapping.

    Torus: {"kind": "torus", "basis": ["1", "0", "0", "1"]} with rationals
    given as p/q strings or integers.  Billiard: {"kind": "billiard"}.
    """
    kind = cfg.get("kind")
    if kind == "billiard":
        return FlatSpace.square_billiard()
    if kind == "torus":
        basis = cfg.get("basis")
        if not isinstance(basis, Sequence) or len(basis) != 4:
            raise DomainError("torus config needs basis: [b1x, b1y, b2x, b2y]")
        vals = [_frac(v) for v in basis]
        return FlatSpace.torus((vals[0], vals[1]), (vals[2], vals[3]))
    raise DomainError(f"unknown flat geometry kind {kind!r}")


def family_to_csv(family: GeodesicFamily, path: str | Path) -> None:
    connecting = set(family.connecting)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vx", "vy", "len2", "class"])
        for i, seg in enumerate(family.segments):
            writer.writerow(
                [
                    str(seg.displacement[0]),
                    str(seg.displacement[1]),
                    str(seg.sq_length),
                    "connecting" if i in connecting else "passes-through-endpoint",
                ]
            )
