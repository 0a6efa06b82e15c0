"""Measures on the real line: atoms plus piecewise-linear densities.

A ``Measure`` carries a finite atomic part and a finite family of
piecewise-linear density pieces on intervals with disjoint interiors.
Singular-continuous parts are represented by deep atomic approximants
(see :func:`cantor_measure`) and tagged for reporting only.  All
quadrature against the densities is closed form per linear segment, so
downstream transforms add no quadrature error of their own.

``RegionSet`` is the companion type: a finite union of open intervals
used for restrictions, support estimates and Hausdorff comparisons.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    ConstructionError,
    IntegrabilityError,
    RepresentationError,
    ResourceLimitError,
)

# Atom positions closer than this are merged (masses summed, positions
# mass-averaged).  Below typical eigensolver accuracy, so near-duplicate
# eigenvalues never survive as separate atoms.
ATOM_MERGE_TOL = 1e-9

__all__ = [
    "ATOM_MERGE_TOL",
    "AcPiece",
    "Measure",
    "RegionSet",
    "MeasureComparison",
    "build_measure",
    "cantor_measure",
    "restrict",
    "essential_support_ac",
    "compare_measures",
    "measure_to_json",
    "measure_from_json",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(0.5 * np.sum((y[1:] + y[:-1]) * np.diff(x)))


# ---------------------------------------------------------------------------
# RegionSet
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegionSet:
    """Finite union of bounded open intervals, sorted and disjoint.

    Touching intervals are merged on construction; the type identifies
    sets that differ by finitely many points.
    """

    intervals: tuple

    @staticmethod
    def from_intervals(pairs: Iterable[Sequence[float]]) -> "RegionSet":
        cleaned = []
        for a, b in pairs:
            a, b = float(a), float(b)
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ConstructionError("region endpoints must be finite")
            if b > a:
                cleaned.append((a, b))
        cleaned.sort()
        merged: list = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return RegionSet(tuple((a, b) for a, b in merged))

    @staticmethod
    def interval(a: float, b: float) -> "RegionSet":
        return RegionSet.from_intervals([(a, b)])

    @staticmethod
    def empty() -> "RegionSet":
        return RegionSet(())

    def is_empty(self) -> bool:
        return not self.intervals

    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def bounds(self) -> tuple:
        if not self.intervals:
            raise ArgumentError("empty region has no bounds")
        return self.intervals[0][0], self.intervals[-1][1]

    def contains(self, x: float) -> bool:
        """Strict interior membership (intervals are open)."""
        for a, b in self.intervals:
            if a < x < b:
                return True
        return False

    def complement_within(self, lo: float, hi: float) -> "RegionSet":
        gaps = []
        cursor = lo
        for a, b in self.intervals:
            if b <= lo or a >= hi:
                continue
            if a > cursor:
                gaps.append((cursor, min(a, hi)))
            cursor = max(cursor, b)
        if cursor < hi:
            gaps.append((cursor, hi))
        return RegionSet.from_intervals(gaps)

    def intersect(self, other: "RegionSet") -> "RegionSet":
        out = []
        for a, b in self.intervals:
            for c, d in other.intervals:
                lo, hi = max(a, c), min(b, d)
                if hi > lo:
                    out.append((lo, hi))
        return RegionSet.from_intervals(out)

    def union(self, other: "RegionSet") -> "RegionSet":
        return RegionSet.from_intervals(list(self.intervals) + list(other.intervals))

    def distance_to(self, x: float) -> float:
        """Distance from a point to the closure of the set."""
        if not self.intervals:
            return math.inf
        best = math.inf
        for a, b in self.intervals:
            if a <= x <= b:
                return 0.0
            best = min(best, abs(x - a), abs(x - b))
        return best

    def hausdorff_distance(self, other: "RegionSet") -> float:
        if self.is_empty() and other.is_empty():
            return 0.0
        if self.is_empty() or other.is_empty():
            return math.inf
        return max(_directed_hausdorff(self, other), _directed_hausdorff(other, self))

    def to_json(self) -> list:
        return [[a, b] for a, b in self.intervals]

    @staticmethod
    def from_json(data) -> "RegionSet":
        return RegionSet.from_intervals(data)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        parts = ", ".join(f"({a:g}, {b:g})" for a, b in self.intervals)
        return f"RegionSet[{parts}]"


def _directed_hausdorff(src: RegionSet, dst: RegionSet) -> float:
    # sup over the closure of src of the distance to dst; the distance is
    # piecewise linear, so checking interval endpoints and the midpoints
    # of dst's gaps that fall inside src is exact.
    candidates = []
    gap_mids = []
    ivals = dst.intervals
    for (a1, b1), (a2, b2) in zip(ivals[:-1], ivals[1:]):
        gap_mids.append(0.5 * (b1 + a2))
    worst = 0.0
    for a, b in src.intervals:
        candidates = [a, b] + [m for m in gap_mids if a < m < b]
        for x in candidates:
            worst = max(worst, dst.distance_to(x))
    return worst


# ---------------------------------------------------------------------------
# Measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AcPiece:
    """One density piece: nonnegative piecewise-linear values on a grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or grid.size != values.size:
            raise ConstructionError("piece needs matching 1-d grid/values, length >= 2")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(values)):
            raise ConstructionError("piece grid/values must be finite")
        if np.any(np.diff(grid) <= 0):
            raise ConstructionError("piece grid must be strictly increasing")
        if np.any(values < 0):
            raise ConstructionError("densities must be nonnegative")
        object.__setattr__(self, "grid", _frozen_array(grid))
        object.__setattr__(self, "values", _frozen_array(values))

    @property
    def a(self) -> float:
        return float(self.grid[0])

    @property
    def b(self) -> float:
        return float(self.grid[-1])

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid, self.values)
        return np.where((x < self.a) | (x > self.b), 0.0, out)

    def mass(self, lo: float = -math.inf, hi: float = math.inf):
        los = np.asarray(lo, dtype=float)
        his = np.asarray(hi, dtype=float)
        return self._cumulative(his) - self._cumulative(los)

    def _cumulative(self, x) -> np.ndarray:
        # Exact integral of the piecewise-linear density from a to min(x, b).
        x = np.clip(np.asarray(x, dtype=float), self.a, self.b)
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid))]
        )
        idx = np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, self.grid.size - 2)
        g0 = self.grid[idx]
        v0 = self.values[idx]
        vx = np.interp(x, self.grid, self.values)
        return cum[idx] + 0.5 * (v0 + vx) * (x - g0)

    def total_mass(self) -> float:
        return _trapezoid(self.grid, self.values)

    def k1_weight(self) -> float:
        """Exact integral of density(t)/(t^2+1) over the piece."""
        p, q = self.grid[:-1], self.grid[1:]
        slope = (self.values[1:] - self.values[:-1]) / (q - p)
        intercept = self.values[:-1] - slope * p
        term = intercept * (np.arctan(q) - np.arctan(p))
        term += slope * 0.5 * (np.log1p(q * q) - np.log1p(p * p))
        return float(np.sum(term))


@dataclass(frozen=True, eq=False)
class Measure:
    """Finite measure: atoms + piecewise-linear a.c. pieces (+ sc tag)."""

    atom_positions: np.ndarray
    atom_masses: np.ndarray
    pieces: tuple
    sc_tag: Optional[dict] = None

    @property
    def n_atoms(self) -> int:
        return int(self.atom_positions.size)

    def is_purely_atomic(self) -> bool:
        return all(p.total_mass() <= 0.0 for p in self.pieces)

    def has_ac_part(self) -> bool:
        return any(p.total_mass() > 0.0 for p in self.pieces)

    def is_empty(self) -> bool:
        return self.n_atoms == 0 and not self.has_ac_part()

    def total_mass(self) -> float:
        return float(np.sum(self.atom_masses)) + float(
            sum(p.total_mass() for p in self.pieces)
        )

    def k1_weight(self) -> float:
        """Integral of d(mu)/(t^2+1); finite for every valid Measure."""
        atom = float(np.sum(self.atom_masses / (self.atom_positions**2 + 1.0)))
        return atom + float(sum(p.k1_weight() for p in self.pieces))

    def mass_in(self, lo, hi):
        """Mass of the closed interval(s) [lo, hi]; vectorized over arrays."""
        los = np.asarray(lo, dtype=float)
        his = np.asarray(hi, dtype=float)
        total = np.zeros(np.broadcast(los, his).shape)
        if self.n_atoms:
            cum = np.concatenate([[0.0], np.cumsum(self.atom_masses)])
            i_hi = np.searchsorted(self.atom_positions, his, side="right")
            i_lo = np.searchsorted(self.atom_positions, los, side="left")
            total = total + cum[i_hi] - cum[i_lo]
        for p in self.pieces:
            total = total + p.mass(los, his)
        return total if total.shape else float(total)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape if x.shape else (1,))
        for p in self.pieces:
            out = out + p.density(x)
        return out if x.shape else float(out[0])

    def support_hull(self) -> tuple:
        lo, hi = math.inf, -math.inf
        if self.n_atoms:
            lo = min(lo, float(self.atom_positions[0]))
            hi = max(hi, float(self.atom_positions[-1]))
        for p in self.pieces:
            lo, hi = min(lo, p.a), max(hi, p.b)
        if lo > hi:
            raise ArgumentError("empty measure has no support hull")
        return lo, hi

    def scaled(self, factor: float) -> "Measure":
        if factor < 0:
            raise ConstructionError("scale factor must be nonnegative")
        atoms = list(zip(self.atom_positions, factor * self.atom_masses))
        pieces = [(p.grid, factor * p.values) for p in self.pieces]
        return build_measure(atoms, pieces, sc_tag=self.sc_tag)


# ---------------------------------------------------------------------------
# Construction and normalization
# ---------------------------------------------------------------------------


def _merge_atoms(positions: np.ndarray, masses: np.ndarray):
    if positions.size == 0:
        return positions, masses
    order = np.argsort(positions, kind="stable")
    positions, masses = positions[order], masses[order]
    out_pos, out_mass = [], []
    cluster_pos = [positions[0]]
    cluster_mass = [masses[0]]
    for p, m in zip(positions[1:], masses[1:]):
        if p - cluster_pos[-1] <= ATOM_MERGE_TOL:
            cluster_pos.append(p)
            cluster_mass.append(m)
        else:
            w = np.asarray(cluster_mass)
            out_pos.append(float(np.dot(cluster_pos, w) / w.sum()))
            out_mass.append(float(w.sum()))
            cluster_pos, cluster_mass = [p], [m]
    w = np.asarray(cluster_mass)
    out_pos.append(float(np.dot(cluster_pos, w) / w.sum()))
    out_mass.append(float(w.sum()))
    return np.asarray(out_pos), np.asarray(out_mass)


def _normalize_pieces(raw: Sequence[AcPiece]) -> tuple:
    """Sort pieces; clusters with overlapping interiors are re-segmented on
    their union grid with densities summed (exact for piecewise-linear)."""
    pieces = sorted(raw, key=lambda p: (p.a, p.b))
    out = []
    i = 0
    while i < len(pieces):
        cluster = [pieces[i]]
        end = pieces[i].b
        j = i + 1
        while j < len(pieces) and pieces[j].a < end - 0.0:
            cluster.append(pieces[j])
            end = max(end, pieces[j].b)
            j += 1
        if len(cluster) == 1:
            out.append(cluster[0])
        else:
            out.extend(_resegment(cluster))
        i = j
    for prev, nxt in zip(out[:-1], out[1:]):
        if nxt.a < prev.b:
            raise ConstructionError("density pieces overlap after normalization")
    return tuple(out)


def _resegment(cluster) -> list:
    nodes = np.unique(np.concatenate([p.grid for p in cluster]))
    segments = []
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        active = [p for p in cluster if p.a <= lo and hi <= p.b]
        if not active:
            continue
        v_lo = sum(float(p.density(lo)) for p in active)
        v_hi = sum(float(p.density(hi)) for p in active)
        if v_lo == 0.0 and v_hi == 0.0:
            continue
        segments.append(AcPiece(np.array([lo, hi]), np.array([v_lo, v_hi])))
    return segments


def build_measure(atoms=(), ac_pieces=(), sc_tag: Optional[dict] = None) -> Measure:
    """Construct a normalized Measure.

    ``atoms`` is an iterable of (position, mass) pairs with mass > 0;
    positions within ``ATOM_MERGE_TOL`` are merged (masses summed,
    position mass-averaged).  ``ac_pieces`` is an iterable of AcPiece or
    (grid, values) pairs; overlapping pieces are summed exactly.
    """
    atoms = list(atoms)
    if atoms:
        arr = np.asarray(atoms, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ConstructionError("atoms must be (position, mass) pairs")
        positions, masses = arr[:, 0], arr[:, 1]
        if not np.all(np.isfinite(positions)) or not np.all(np.isfinite(masses)):
            raise ConstructionError("atom data must be finite")
        if np.any(masses <= 0):
            raise ConstructionError("atom masses must be strictly positive")
        positions, masses = _merge_atoms(positions, masses)
    else:
        positions = np.empty(0)
        masses = np.empty(0)

    norm_pieces = _normalize_pieces(
        [p if isinstance(p, AcPiece) else AcPiece(p[0], p[1]) for p in ac_pieces]
    )
    mu = Measure(
        _frozen_array(positions), _frozen_array(masses), norm_pieces, sc_tag
    )
    k1 = mu.k1_weight()
    if not math.isfinite(k1):
        raise IntegrabilityError("measure has non-finite integral of 1/(t^2+1)")
    return mu


def cantor_measure(depth: int) -> Measure:
    """Atomic approximant of the middle-thirds Cantor measure.

    Places ``2**depth`` atoms of mass ``2**-depth`` at the midpoints of
    the level-``depth`` construction intervals in [0, 1].
    """
    depth = int(depth)
    if depth < 0:
        raise ArgumentError("depth must be nonnegative")
    if depth > 24:
        raise ResourceLimitError("depth > 24 exceeds the atom budget")
    lefts = np.array([0.0])
    width = 1.0
    for _ in range(depth):
        width /= 3.0
        lefts = np.concatenate([lefts, lefts + 2.0 * width])
    mids = np.sort(lefts) + width / 2.0
    mass = 2.0 ** (-depth)
    tag = {"generator": "middle-thirds-cantor", "depth": depth}
    return build_measure([(float(x), mass) for x in mids], sc_tag=tag)


def restrict(mu: Measure, region: RegionSet) -> Measure:
    """Restrict a measure to an open region (atoms strictly inside kept,
    density pieces clipped at the boundary)."""
    atoms = [
        (float(p), float(m))
        for p, m in zip(mu.atom_positions, mu.atom_masses)
        if region.contains(float(p))
    ]
    pieces = []
    for piece in mu.pieces:
        for a, b in region.intervals:
            lo, hi = max(a, piece.a), min(b, piece.b)
            if hi <= lo:
                continue
            inner = piece.grid[(piece.grid > lo) & (piece.grid < hi)]
            grid = np.concatenate([[lo], inner, [hi]])
            pieces.append(AcPiece(grid, piece.density(grid)))
    return build_measure(atoms, pieces, sc_tag=mu.sc_tag)


# ---------------------------------------------------------------------------
# Essential support of the a.c. part
# ---------------------------------------------------------------------------


def essential_support_ac(
    mu: Measure,
    window: RegionSet,
    resolution: float,
    theta: float = 1e-6,
    big: float = 1e6,
    growth_cap: float = 1.5,
) -> RegionSet:
    """Grid estimate of the set where shrinking symmetric averages of mu
    stay strictly positive and finite.

    Averages mu([x-eps, x+eps]) / (2 eps) are evaluated on a halving
    ladder from above 1 down to ``resolution``.  A cell is kept when the
    finest average lies in (theta, big) and is not still growing across
    the last halving (ratio <= growth_cap); the growth test realizes the
    "finite limit" clause, excluding atoms and sub-resolution spikes at
    every resolution.
    """
    if window.is_empty():
        raise ArgumentError("window must be nonempty")
    if resolution <= 0:
        raise ArgumentError("resolution must be positive")
    if not theta < big:
        raise ArgumentError("need theta < big")

    # Halving ladder from above 1 down to resolution.  Coarse rungs cannot
    # inform a limit criterion, so the decision collapses to the two finest:
    # the finest average is the limit estimate, the ratio against the next
    # rung detects averages still growing (atoms, sub-resolution spikes).
    eps_prev = resolution * 2.0
    eps_last = resolution

    kept = []
    for a, b in window.intervals:
        n_cells = max(1, int(math.ceil((b - a) / resolution)))
        edges = np.linspace(a, b, n_cells + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        avg_prev = mu.mass_in(centers - eps_prev, centers + eps_prev) / (2.0 * eps_prev)
        avg_last = mu.mass_in(centers - eps_last, centers + eps_last) / (2.0 * eps_last)
        grown = avg_last > growth_cap * avg_prev
        ok = (avg_last > theta) & (avg_last < big) & ~grown
        for i in np.nonzero(ok)[0]:
            kept.append((edges[i], edges[i + 1]))
    return RegionSet.from_intervals(kept)


# ---------------------------------------------------------------------------
# Comparison / classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasureComparison:
    """Outcome of compare_measures.

    ``kind`` is one of "equivalent", "mutually-singular", "one-sided",
    "neither".  For "equivalent", ``c <= (second/first) <= C`` holds on
    atoms and densities.  For "one-sided", ``direction`` names which
    measure is absolutely continuous with respect to the other.
    """

    kind: str
    c: Optional[float] = None
    C: Optional[float] = None
    direction: Optional[str] = None
    detail: str = ""


def _match_atoms(pos_a, pos_b, tol):
    """Greedy two-pointer matching of sorted atom positions within tol."""
    pairs = []
    i = j = 0
    while i < pos_a.size and j < pos_b.size:
        d = pos_a[i] - pos_b[j]
        if abs(d) <= tol:
            pairs.append((i, j))
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return pairs


def compare_measures(
    mu: Measure, nu: Measure, region: RegionSet, tol: float
) -> MeasureComparison:
    """Classify the pair (mu, nu) restricted to ``region``.

    Requires both restrictions purely atomic, or both carrying a.c.
    parts (evaluated on the union of their grids); anything else is a
    representation error.
    """
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    mu_r = restrict(mu, region)
    nu_r = restrict(nu, region)

    if mu_r.is_empty() and nu_r.is_empty():
        return MeasureComparison("equivalent", 1.0, 1.0, detail="both empty")

    mu_ac, nu_ac = mu_r.has_ac_part(), nu_r.has_ac_part()
    if mu_ac != nu_ac:
        raise RepresentationError(
            "mixed representations: need both purely atomic or both with a.c. parts"
        )

    pairs = _match_atoms(mu_r.atom_positions, nu_r.atom_positions, tol)
    matched_mu = {i for i, _ in pairs}
    matched_nu = {j for _, j in pairs}
    ratios = [
        nu_r.atom_masses[j] / mu_r.atom_masses[i] for i, j in pairs
    ]
    mu_atoms_covered = len(matched_mu) == mu_r.n_atoms
    nu_atoms_covered = len(matched_nu) == nu_r.n_atoms

    overlap = 0.0
    nu_dominated = nu_atoms_covered
    mu_dominated = mu_atoms_covered
    if mu_ac:
        nodes = np.unique(
            np.concatenate(
                [p.grid for p in mu_r.pieces] + [p.grid for p in nu_r.pieces]
            )
        )
        f = mu_r.density(nodes)
        g = nu_r.density(nodes)
        overlap = _trapezoid(nodes, np.minimum(f, g))
        f_pos, g_pos = f > tol, g > tol
        if np.any(g_pos & ~f_pos):
            nu_dominated = False
        if np.any(f_pos & ~g_pos):
            mu_dominated = False
        both = f_pos & g_pos
        ratios.extend((g[both] / f[both]).tolist())

    if nu_dominated and mu_dominated and ratios:
        c, C = float(min(ratios)), float(max(ratios))
        if 0 < c <= C < math.inf:
            return MeasureComparison("equivalent", c, C)
    if not pairs and overlap < tol:
        return MeasureComparison("mutually-singular")
    if nu_dominated:
        return MeasureComparison(
            "one-sided", direction="second<<first", detail="nu absolutely continuous wrt mu"
        )
    if mu_dominated:
        return MeasureComparison(
            "one-sided", direction="first<<second", detail="mu absolutely continuous wrt nu"
        )
    return MeasureComparison("neither")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def measure_to_json(mu: Measure) -> dict:
    data = {
        "atoms": [[float(p), float(m)] for p, m in zip(mu.atom_positions, mu.atom_masses)],
        "ac": [
            {
                "a": p.a,
                "b": p.b,
                "grid": [float(x) for x in p.grid],
                "values": [float(v) for v in p.values],
            }
            for p in mu.pieces
        ],
    }
    if mu.sc_tag is not None:
        data["sc_tag"] = mu.sc_tag
    return data


def measure_from_json(data) -> Measure:
    if isinstance(data, str):
        data = json.loads(data)
    try:
        atoms = [(float(p), float(m)) for p, m in data.get("atoms", [])]
        pieces = [
            AcPiece(np.asarray(p["grid"], dtype=float), np.asarray(p["values"], dtype=float))
            for p in data.get("ac", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConstructionError(f"malformed measure JSON: {exc}") from exc
    return build_measure(atoms, pieces, sc_tag=data.get("sc_tag"))
