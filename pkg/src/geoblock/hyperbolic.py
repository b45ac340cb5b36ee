"""Orbit counting for discrete isometry groups of the hyperbolic plane.

Upper half-plane model throughout, binary64 floats; the error budget grows
linearly in word length and stays far below the 1e-9 deduplication
tolerance for the shipped presets.  Orbit balls realize the exponential
counting regime, and packing bounds on orbit counts turn them into
certified lower bounds on blocking thresholds (count at t over twice the
uniform count bound at t/2).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BudgetExceededError,
    DomainError,
    UnsupportedInputError,
)
from .growth import GrowthClass, GrowthSeries, rate_estimate

__all__ = [
    "MobiusMatrix",
    "FuchsianPreset",
    "OrbitBall",
    "OrbitCountResult",
    "UniformBound",
    "BlockingBound",
    "hyp_distance",
    "load_preset",
    "builtin_presets",
    "orbit_count",
    "entropy_estimate",
    "uniform_count_bound",
    "certified_blocking_lower_bound",
    "blocking_lower_bound_series",
    "word_growth",
    "count_series_to_csv",
]

_DET_TOL = 1e-12
_MATRIX_TOL = 1e-9
_RELATOR_TOL = 1e-9


def hyp_distance(z: complex, w: complex) -> float:
    """Hyperbolic distance in the upper half-plane.

    Uses d = 2*asinh(|z-w| / (2*sqrt(Im z * Im w))), equivalent to
    cosh d = 1 + |z-w|^2 / (2 Im z Im w) but stable near zero.
    """
    if z.imag <= 0 or w.imag <= 0:
        raise DomainError("points must have positive imaginary part")
    return 2.0 * math.asinh(abs(z - w) / (2.0 * math.sqrt(z.imag * w.imag)))


@dataclass(frozen=True)
class MobiusMatrix:
    """Real 2x2 matrix acting on the upper half-plane, det = 1, identified
    with its negation."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self) -> None:
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > 1e-9:
            raise DomainError(f"determinant must be 1, got {det}")

    def apply(self, z: complex) -> complex:
        return (self.a * z + self.b) / (self.c * z + self.d)

    def inverse(self) -> "MobiusMatrix":
        return MobiusMatrix(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "MobiusMatrix") -> "MobiusMatrix":
        return MobiusMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    @property
    def trace(self) -> float:
        return self.a + self.d

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    def close_to(self, other: "MobiusMatrix", tol: float = _MATRIX_TOL) -> bool:
        """Equality up to sign within Frobenius tolerance."""
        s = self.as_array()
        o = other.as_array()
        return min(np.abs(s - o).max(), np.abs(s + o).max()) <= tol

    def isometric_circle(self) -> tuple[float, float]:
        """(center, radius) on the real line; requires c != 0."""
        if self.c == 0:
            raise DomainError("isometric circle undefined for c == 0")
        return (-self.d / self.c, 1.0 / abs(self.c))


def _translation_length(m: MobiusMatrix) -> float:
    half = abs(m.trace) / 2.0
    if half <= 1.0:
        return 0.0
    return 2.0 * math.acosh(half)


@dataclass(frozen=True)
class FuchsianPreset:
    """A validated generating set for a discrete group of hyperbolic-plane
    isometries.

    ``diameter`` and ``area`` are quotient-surface metadata used by the
    rigorous counting bounds (cocompact presets only); ``systole`` is a
    lower bound on the shortest translation length and is valid for both
    kinds.
    """

    name: str
    kind: str  # "schottky" | "cocompact"
    generators: tuple[MobiusMatrix, ...]
    generator_names: tuple[str, ...]
    relator: str | None
    diameter: float | None
    area: float | None
    systole: float | None

    def gens_with_inverses(self) -> list[tuple[str, MobiusMatrix]]:
        out = []
        for name, g in zip(self.generator_names, self.generators):
            out.append((name, g))
            out.append((name.upper(), g.inverse()))
        return out

    def evaluate_word(self, word: str) -> MobiusMatrix:
        table = {name: g for name, g in self.gens_with_inverses()}
        acc = MobiusMatrix(1.0, 0.0, 0.0, 1.0)
        for token in word.split():
            if token not in table:
                raise DomainError(f"unknown generator token {token!r}")
            acc = acc.compose(table[token])
        return acc

    def validate(self) -> None:
        for name, g in zip(self.generator_names, self.generators):
            det = g.a * g.d - g.b * g.c
            if abs(det - 1.0) > 1e-9:
                raise DomainError(f"generator {name}: determinant {det} != 1")
            if abs(g.trace) <= 2.0:
                raise DomainError(f"generator {name} is not hyperbolic (|trace| <= 2)")
        if self.kind == "cocompact":
            if not self.relator:
                raise DomainError("cocompact preset needs a relator word")
            r = self.evaluate_word(self.relator)
            ident = MobiusMatrix(1.0, 0.0, 0.0, 1.0)
            if not r.close_to(ident, _RELATOR_TOL):
                raise DomainError("relator does not evaluate to +-identity")
            if self.diameter is None or self.area is None:
                raise DomainError("cocompact preset needs diameter and area metadata")
        elif self.kind == "schottky":
            # ping-pong certificate: isometric circles of all generators and
            # inverses pairwise disjoint
            circles = []
            for name, g in self.gens_with_inverses():
                center, radius = g.isometric_circle()
                circles.append((name, center, radius))
            for i in range(len(circles)):
                for j in range(i + 1, len(circles)):
                    _, c1, r1 = circles[i]
                    _, c2, r2 = circles[j]
                    if abs(c1 - c2) <= r1 + r2:
                        raise DomainError(
                            f"isometric circles of {circles[i][0]} and {circles[j][0]} overlap"
                        )
        else:
            raise DomainError(f"unknown preset kind {self.kind!r}")

    @classmethod
    def from_json(cls, data: dict) -> "FuchsianPreset":
        gens = tuple(MobiusMatrix(*[float(v) for v in row]) for row in data["generators"])
        names = tuple(data.get("generator_names") or _default_names(len(gens)))
        preset = cls(
            name=data["name"],
            kind=data["kind"],
            generators=gens,
            generator_names=names,
            relator=data.get("relator"),
            diameter=data.get("D"),
            area=data.get("A"),
            systole=data.get("systole"),
        )
        preset.validate()
        return preset


def _default_names(n: int) -> list[str]:
    if n == 4:
        return ["a1", "b1", "a2", "b2"]
    return [f"g{i+1}" for i in range(n)]


def builtin_presets() -> list[str]:
    pkg = resources.files("geoblock.presets")
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def load_preset(name_or_path: str | Path) -> FuchsianPreset:
    """Load and validate a preset from the built-in set or a JSON file."""
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        data = json.loads(path.read_text())
    else:
        res = resources.files("geoblock.presets") / f"{name_or_path}.json"
        try:
            data = json.loads(res.read_text())
        except FileNotFoundError:
            raise DomainError(
                f"unknown preset {name_or_path!r}; built-ins: {builtin_presets()}"
            ) from None
    return FuchsianPreset.from_json(data)


@dataclass(frozen=True)
class OrbitBall:
    """Group elements g with d(x, g y) <= radius, as reduced words plus
    matrices, with the count series over the grid."""

    preset_name: str
    x: complex
    y: complex
    radius: float
    words: tuple[str, ...]
    matrices: np.ndarray  # (N, 2, 2)
    displacements: np.ndarray  # (N,), sorted ascending
    count_series: tuple[tuple[float, int], ...]


@dataclass(frozen=True)
class OrbitCountResult:
    ball: OrbitBall
    series: GrowthSeries
    certified: tuple[bool, ...]
    certified_t: float

    @property
    def fully_certified(self) -> bool:
        return all(self.certified)


class _MatrixDedup:
    """Tolerance dedup for matrices up to sign.

    Keys are per-entry floor quantizations; queries probe the key ranges
    covering +-tol around both signs of the matrix, so two matrices within
    the tolerance always collide regardless of quantization boundaries.
    """

    def __init__(self, quantum: float = 1e-6, tol: float = _MATRIX_TOL):
        self.q = quantum
        self.tol = tol
        self._seen: dict[tuple[int, int, int, int], None] = {}

    def _keys_near(self, flat: np.ndarray) -> Iterable[tuple[int, int, int, int]]:
        los = np.floor((flat - self.tol) / self.q).astype(np.int64)
        his = np.floor((flat + self.tol) / self.q).astype(np.int64)
        keys: list[tuple[int, ...]] = [()]
        for lo, hi in zip(los, his):
            keys = [k + (i,) for k in keys for i in range(lo, hi + 1)]
        return keys  # type: ignore[return-value]

    def seen_or_add(self, flat: np.ndarray) -> bool:
        for sign in (1.0, -1.0):
            for key in self._keys_near(sign * flat):
                if key in self._seen:
                    return True
        own = tuple(np.floor(flat / self.q).astype(np.int64))
        self._seen[own] = None
        return False


def _gen_arrays(preset: FuchsianPreset) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Generator letters, their matrices, and the index of each inverse."""
    letters, mats = [], []
    for name, g in preset.gens_with_inverses():
        letters.append(name)
        mats.append(g.as_array())
    inv_index = np.empty(len(letters), dtype=int)
    for i in range(0, len(letters), 2):
        inv_index[i] = i + 1
        inv_index[i + 1] = i
    return letters, np.stack(mats), inv_index


def _apply_batch(mats: np.ndarray, z: complex) -> np.ndarray:
    num = mats[:, 0, 0] * z + mats[:, 0, 1]
    den = mats[:, 1, 0] * z + mats[:, 1, 1]
    return num / den


def _distances(x: complex, pts: np.ndarray) -> np.ndarray:
    return 2.0 * np.arcsinh(np.abs(pts - x) / (2.0 * np.sqrt(pts.imag * x.imag)))


def orbit_count(
    preset: FuchsianPreset,
    x: complex,
    y: complex,
    t_grid: Sequence[float],
    max_word_len: int = 24,
    slack: float | None = None,
    strict: bool = True,
) -> OrbitCountResult:
    """Exact count of distinct group elements with displacement <= t.

    Breadth-first expansion over reduced words; a word is expanded only
    while its displacement stays within t_max + slack, where slack defaults
    to the maximal generator displacement at the base point.  Completeness
    at the word budget is certified by the final frontier: every unexpanded
    word must already exceed t_max.  With ``strict`` a failed certificate
    raises; otherwise the result carries per-grid-point flags.

    Deduplication is by word for schottky presets (ping-pong makes reduced
    words collision-free) and by matrix up to sign within 1e-9 for
    cocompact presets.
    """
    if x.imag <= 0 or y.imag <= 0:
        raise DomainError("base points must lie in the upper half-plane")
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise DomainError("t grid must be nonempty")
    if sorted(t_grid) != t_grid:
        raise DomainError("t grid must be sorted ascending")
    t_max = t_grid[-1]

    letters, gen_mats, inv_index = _gen_arrays(preset)
    if slack is None:
        slack = float(max(hyp_distance(y, MobiusMatrix(*m.reshape(4)).apply(y)) for m in gen_mats))
    cutoff = t_max + slack

    dedup = _MatrixDedup() if preset.kind == "cocompact" else None

    ident = np.eye(2)
    if dedup is not None:
        dedup.seen_or_add(ident.reshape(4))
    disp0 = hyp_distance(x, y)
    all_words: list[str] = [""]
    all_mats: list[np.ndarray] = [ident]
    all_disp: list[float] = [disp0]

    frontier_mats = ident.reshape(1, 2, 2)
    frontier_words = [""]
    frontier_last = np.array([-1])
    frontier_disp = np.array([disp0])

    level = 0
    budget_frontier_min: float | None = None
    while len(frontier_mats):
        expandable = frontier_disp <= cutoff
        if level >= max_word_len:
            if expandable.any():
                budget_frontier_min = float(frontier_disp[expandable].min())
            break
        frontier_mats = frontier_mats[expandable]
        frontier_words = [w for w, e in zip(frontier_words, expandable) if e]
        frontier_last = frontier_last[expandable]
        if not len(frontier_mats):
            break
        level += 1

        n_f, n_g = len(frontier_mats), len(letters)
        children = np.einsum("fij,gjk->fgik", frontier_mats, gen_mats)
        # no immediate backtracking: skip the inverse of the last letter
        mask = np.ones((n_f, n_g), dtype=bool)
        has_last = frontier_last >= 0
        mask[np.nonzero(has_last)[0], inv_index[frontier_last[has_last]]] = False

        keep_f, keep_g = np.nonzero(mask)
        children = children[keep_f, keep_g]
        pts = _apply_batch(children, y)
        d = _distances(x, pts)

        new_mats, new_words, new_last, new_disp = [], [], [], []
        for idx in range(len(children)):
            if d[idx] > cutoff:
                continue
            word = frontier_words[keep_f[idx]]
            letter = int(keep_g[idx])
            if dedup is not None and dedup.seen_or_add(children[idx].reshape(4)):
                continue
            w = (word + " " + letters[letter]).strip()
            new_mats.append(children[idx])
            new_words.append(w)
            new_last.append(letter)
            new_disp.append(float(d[idx]))
        all_words.extend(new_words)
        all_mats.extend(new_mats)
        all_disp.extend(new_disp)
        frontier_mats = np.array(new_mats).reshape(-1, 2, 2)
        frontier_words = new_words
        frontier_last = np.array(new_last, dtype=int)
        frontier_disp = np.array(new_disp)

    if budget_frontier_min is None:
        certified_t = math.inf
    else:
        certified_t = budget_frontier_min
    if strict and certified_t <= t_max:
        raise BudgetExceededError(
            f"word budget {max_word_len} exhausted; counts certified only for "
            f"t < {certified_t:.6g}"
        )

    order = np.argsort(all_disp, kind="stable")
    disp_sorted = np.array(all_disp)[order]
    words_sorted = tuple(all_words[i] for i in order)
    mats_sorted = np.array(all_mats)[order]

    in_ball = disp_sorted <= t_max
    counts = [int(np.searchsorted(disp_sorted, t, side="right")) for t in t_grid]
    series_pairs = tuple((t, c) for t, c in zip(t_grid, counts))
    ball = OrbitBall(
        preset_name=preset.name,
        x=x,
        y=y,
        radius=t_max,
        words=tuple(w for w, keep in zip(words_sorted, in_ball) if keep),
        matrices=mats_sorted[in_ball],
        displacements=disp_sorted[in_ball],
        count_series=series_pairs,
    )
    certified = tuple(t < certified_t for t in t_grid)
    # zero counts and t = 0 cannot live on a log scale; the raw series keeps them
    positive = [(t, c) for t, c in series_pairs if c > 0 and t > 0]
    if not positive:
        positive = [(max(t_max, 1e-9), 1)]
    series = GrowthSeries.from_pairs(positive, monotone=True)
    return OrbitCountResult(ball, series, certified, certified_t)


def entropy_estimate(series: GrowthSeries, window: float = 0.5) -> GrowthClass:
    """Exponential growth rate of a count series (the entropy proxy)."""
    return rate_estimate(series, "exponential", window)


@dataclass(frozen=True)
class UniformBound:
    """Upper bound on orbit counts uniform over base-point pairs."""

    value: float
    r: float
    mode: str
    certified: bool
    detail: dict


def uniform_count_bound(
    preset: FuchsianPreset,
    r: float,
    mode: str = "rigorous",
    seed: int = 0,
    sample_pairs: int = 3,
) -> UniformBound:
    """Bound sup over base-point pairs of the orbit count at radius r.

    rigorous: area comparison; orbit points of any pair lie withinr + 2D of
    a fixed point, one fundamental domain each, so
    U = 2*pi*(cosh(r + 2D) - 1)/A.  Cocompact presets only.

    systole: packing bound; orbit points are pairwise at least the systole
    apart, so balls of half that radius around them are disjoint inside a
    ball of radius r + systole/2.  Valid for both kinds and much sharper at
    desk scale.

    empirical: max orbit count over a seeded sample of base-point pairs,
    flagged heuristic.

    All variants are floored at 1 (the identity always counts).
    """
    if r < 0:
        raise DomainError("radius must be nonnegative")
    if mode == "rigorous":
        if preset.kind != "cocompact" or preset.area is None or preset.diameter is None:
            raise UnsupportedInputError(
                "rigorous mode needs a cocompact preset with diameter and area"
            )
        raw = 2.0 * math.pi * (math.cosh(r + 2.0 * preset.diameter) - 1.0) / preset.area
        return UniformBound(
            max(raw, 1.0), r, mode, True, {"D": preset.diameter, "A": preset.area}
        )
    if mode == "systole":
        if not preset.systole or preset.systole <= 0:
            raise UnsupportedInputError("systole mode needs a positive systole bound")
        h = preset.systole / 2.0
        raw = (math.cosh(r + h) - 1.0) / (math.cosh(h) - 1.0)
        return UniformBound(max(raw, 1.0), r, mode, True, {"systole": preset.systole})
    if mode == "empirical":
        rng = random.Random(seed)
        worst = 1
        pairs = []
        for _ in range(sample_pairs):
            zx = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.3))
            zy = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.3))
            pairs.append((zx, zy))
            res = orbit_count(preset, zx, zy, [r], strict=False)
            worst = max(worst, res.ball.count_series[0][1])
        return UniformBound(float(worst), r, mode, False, {"pairs": len(pairs), "seed": seed})
    raise DomainError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class BlockingBound:
    """Lower bound on the blocking threshold at radius t.

    value = N(t) / (2 * U(t/2)); the numerator counts all homotopy classes
    (classes through an endpoint are not excluded; for generic base points
    none occur, and `endpoint_hits` records the check when it was run).
    """

    t: float
    value: float
    certified: bool
    count: int
    denominator_bound: float
    bound_mode: str
    endpoint_hits: int | None


def _endpoint_hit_count(ball: OrbitBall, tol: float = 1e-9) -> int:
    """Classes whose geodesic passes through an orbit point of an endpoint.

    Betweenness test: w is interior to the segment [x, g y] iff
    d(x, w) + d(w, g y) = d(x, g y).  Quadratic in the ball size, intended
    for moderate balls.
    """
    x = ball.x
    pts = np.array([MobiusMatrix(*m.reshape(4)).apply(ball.y) for m in ball.matrices])
    hits = 0
    for i, g_pt in enumerate(pts):
        d_total = hyp_distance(x, g_pt)
        if d_total <= tol:
            continue
        for j, w_pt in enumerate(pts):
            if j == i:
                continue
            dx = hyp_distance(x, complex(w_pt))
            dy = hyp_distance(complex(w_pt), complex(g_pt))
            if dx > tol and dy > tol and abs(dx + dy - d_total) <= tol:
                hits += 1
                break
    return hits


def certified_blocking_lower_bound(
    preset: FuchsianPreset,
    x: complex,
    y: complex,
    t: float,
    bound_mode: str = "systole",
    orbit: OrbitCountResult | None = None,
    check_endpoint_hits: bool = False,
) -> BlockingBound:
    """Certified lower bound on the blocking threshold at radius t.

    Splitting every connecting class at a blocking point shows the count at
    t is at most 2 * s_t * sup-count at t/2, so s_t >= N(t) / (2 U(t/2)).
    Certified only when the count at t is certified and U is one of the
    rigorous modes.
    """
    if orbit is None:
        orbit = orbit_count(preset, x, y, [t], strict=False)
    n_t = int(np.searchsorted(orbit.ball.displacements, t, side="right"))
    count_certified = t < orbit.certified_t
    u = uniform_count_bound(preset, t / 2.0, mode=bound_mode)
    hits = None
    if check_endpoint_hits:
        hits = _endpoint_hit_count(orbit.ball)
        n_t = max(n_t - hits, 0)
    value = n_t / (2.0 * u.value)
    return BlockingBound(
        t, value, count_certified and u.certified, n_t, u.value, bound_mode, hits
    )


def blocking_lower_bound_series(
    preset: FuchsianPreset,
    x: complex,
    y: complex,
    t_grid: Sequence[float],
    bound_mode: str = "systole",
    max_word_len: int = 24,
    strict: bool = True,
) -> list[BlockingBound]:
    orbit = orbit_count(preset, x, y, t_grid, max_word_len=max_word_len, strict=strict)
    return [
        certified_blocking_lower_bound(preset, x, y, t, bound_mode=bound_mode, orbit=orbit)
        for t in t_grid
    ]


def word_growth(kind: str, rank: int, n: int) -> int:
    """Ball sizes in word metrics: free groups and free abelian groups.

    free: 1 + sum over lengths i of 2k(2k-1)^(i-1) reduced words.
    abelian: integer points with l1 norm at most n.
    """
    if rank < 1:
        raise DomainError("rank must be >= 1")
    if n < 0:
        raise DomainError("n must be >= 0")
    if kind == "free":
        total = 1
        for i in range(1, n + 1):
            total += 2 * rank * (2 * rank - 1) ** (i - 1)
        return total
    if kind == "abelian":
        total = 0
        for i in range(0, min(rank, n) + 1):
            total += 2**i * math.comb(rank, i) * math.comb(n, i)
        return total
    raise DomainError(f"unknown kind {kind!r}")


def count_series_to_csv(result: OrbitCountResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,count,certified\n")
        for (t, c), cert in zip(result.ball.count_series, result.certified):
            fh.write(f"{t!r},{c},{int(cert)}\n")
