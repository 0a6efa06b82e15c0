"""Finite-volume random tight-binding experiments.

Builds the discrete Laplacian plus i.i.d. on-site disorder on a 1d or 2d
box, extracts site spectral measures from full eigendecompositions, and
runs Monte Carlo diagnostics for the deterministic structure of the
spectrum: occupancy-based estimates of the essential spectrum, smoothed
local densities as the finite-volume proxy for absolutely continuous
support, half-sample stability (the empirical shadow of determinism),
and pairwise eigenvalue-coincidence checks.

Disorder streams are counter based: every site value is a pure function
of (master_seed, sample index, site id) through three rounds of the
SplitMix64 finalizer, so realizations are identical across runs,
machines and thread schedules.  The exact mix is documented in the
README as part of the external interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    ArgumentError,
    ConstructionError,
    NumericError,
    ResourceLimitError,
)
from .measures import RegionSet

__all__ = [
    "Distribution",
    "AndersonModel",
    "OmegaRealization",
    "SpectralSample",
    "HamiltonianMatrix",
    "DeterminismReport",
    "PairwiseReport",
    "sample_omega",
    "with_site_edits",
    "build_hamiltonian",
    "spectral_measure_at_site",
    "estimate_deterministic_sets",
    "pairwise_checks",
    "model_to_json",
    "model_from_json",
]

MAX_SITES = 40000
MAX_DENSE = 2000

CYCLICITY_NOTE = (
    "finite-volume samples cannot verify cyclicity of the essential part; "
    "estimates aggregate the designated-site fibers"
)


# ---------------------------------------------------------------------------
# Disorder distributions and counter-based sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Distribution:
    """Per-site disorder law: uniform(a, b), bernoulli(a, b, p) or constant(c).

    bernoulli takes the value b with probability p and a otherwise.
    """

    kind: str
    params: tuple

    @staticmethod
    def uniform(a: float, b: float) -> "Distribution":
        if not (math.isfinite(a) and math.isfinite(b)) or b < a:
            raise ConstructionError("uniform needs finite a <= b")
        return Distribution("uniform", (float(a), float(b)))

    @staticmethod
    def bernoulli(a: float, b: float, p: float) -> "Distribution":
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ConstructionError("bernoulli needs finite levels")
        if not 0.0 <= p <= 1.0:
            raise ConstructionError("bernoulli needs p in [0, 1]")
        return Distribution("bernoulli", (float(a), float(b), float(p)))

    @staticmethod
    def constant(c: float) -> "Distribution":
        if not math.isfinite(c):
            raise ConstructionError("constant level must be finite")
        return Distribution("constant", (float(c),))

    def inverse_cdf(self, uniforms: np.ndarray) -> np.ndarray:
        if self.kind == "uniform":
            a, b = self.params
            return a + (b - a) * uniforms
        if self.kind == "bernoulli":
            a, b, p = self.params
            return np.where(uniforms < p, b, a)
        if self.kind == "constant":
            return np.full_like(uniforms, self.params[0])
        raise ConstructionError(f"unknown distribution kind {self.kind!r}")

    def mean(self) -> float:
        if self.kind == "uniform":
            a, b = self.params
            return 0.5 * (a + b)
        if self.kind == "bernoulli":
            a, b, p = self.params
            return a + p * (b - a)
        return self.params[0]

    def std(self) -> float:
        if self.kind == "uniform":
            a, b = self.params
            return (b - a) / math.sqrt(12.0)
        if self.kind == "bernoulli":
            a, b, p = self.params
            return abs(b - a) * math.sqrt(p * (1.0 - p))
        return 0.0

    def is_continuous(self) -> bool:
        return self.kind == "uniform" and self.params[1] > self.params[0]

    def bound(self) -> float:
        """sup |value| the distribution can produce."""
        return max(abs(v) for v in self.params[:2]) if self.kind != "constant" else abs(
            self.params[0]
        )


_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = (x + _GAMMA).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(master_seed: int, index: int, n: int) -> np.ndarray:
    """Stateless uniforms in [0, 1): splitmix64 applied to site, then
    xored with the sample index, then with the master seed."""
    sites = np.arange(n, dtype=np.uint64)
    h = _splitmix64(sites)
    h = _splitmix64(h ^ np.uint64(index & 0xFFFFFFFFFFFFFFFF))
    h = _splitmix64(h ^ np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF))
    return (h >> np.uint64(11)).astype(np.float64) * (2.0**-53)


# ---------------------------------------------------------------------------
# Model / realization / sample types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AndersonModel:
    dim: int
    L: int
    boundary: str  # "dirichlet" | "periodic"
    distribution: Distribution
    master_seed: int
    sites: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConstructionError("dim must be 1 or 2")
        if self.L < 1:
            raise ConstructionError("L must be positive")
        if self.n_sites > MAX_SITES:
            raise ResourceLimitError(f"L^dim must not exceed {MAX_SITES}")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ConstructionError("boundary must be 'dirichlet' or 'periodic'")
        sites = tuple(int(s) for s in self.sites)
        if not sites:
            raise ConstructionError("at least one designated site is required")
        if any(s < 0 or s >= self.n_sites for s in sites):
            raise ConstructionError("designated site outside the box")
        object.__setattr__(self, "sites", sites)

    @property
    def n_sites(self) -> int:
        return self.L**self.dim


@dataclass(frozen=True, eq=False)
class OmegaRealization:
    index: int
    values: np.ndarray
    edited: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class SpectralSample:
    omega_index: int
    site: int
    eigenvalues: np.ndarray
    weights: np.ndarray


def sample_omega(model: AndersonModel, index: int) -> OmegaRealization:
    """Deterministic disorder realization number ``index``."""
    if index < 0:
        raise ArgumentError("sample index must be nonnegative")
    uniforms = counter_uniforms(model.master_seed, index, model.n_sites)
    return OmegaRealization(index, model.distribution.inverse_cdf(uniforms))


def with_site_edits(omega: OmegaRealization, edits: dict) -> OmegaRealization:
    """Finite-rank modification: replace the value at the given sites."""
    values = np.array(omega.values)
    for site, value in edits.items():
        values[int(site)] = float(value)
    return OmegaRealization(omega.index, values, edited=True)


# ---------------------------------------------------------------------------
# Hamiltonian construction and eigensolves
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """Symmetric matrix description: tridiagonal storage when possible."""

    diagonal: np.ndarray
    offdiagonal: Optional[np.ndarray]  # set for 1d dirichlet
    dense: Optional[np.ndarray]

    @property
    def n(self) -> int:
        return self.diagonal.size

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return np.array(self.dense)
        out = np.diag(self.diagonal)
        idx = np.arange(self.n - 1)
        out[idx, idx + 1] = self.offdiagonal
        out[idx + 1, idx] = self.offdiagonal
        return out


def build_hamiltonian(model: AndersonModel, omega: OmegaRealization) -> HamiltonianMatrix:
    """Discrete Laplacian (diagonal 2*dim) plus on-site disorder; nearest
    neighbor bonds carry -1, wrapped when the boundary is periodic."""
    n = model.n_sites
    if omega.values.size != n:
        raise ArgumentError("realization does not match the model geometry")
    diag = 2.0 * model.dim + omega.values

    if model.dim == 1 and model.boundary == "dirichlet":
        return HamiltonianMatrix(diag, -np.ones(n - 1) if n > 1 else np.empty(0), None)

    dense = np.zeros((n, n))
    np.fill_diagonal(dense, diag)
    L = model.L
    if model.dim == 1:
        for i in range(n):
            for step in (-1, 1):
                j = i + step
                if model.boundary == "periodic":
                    dense[i, j % n] -= 1.0
                elif 0 <= j < n:
                    dense[i, j] -= 1.0
    else:
        for ix in range(L):
            for iy in range(L):
                i = ix * L + iy
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    jx, jy = ix + dx, iy + dy
                    if model.boundary == "periodic":
                        dense[i, (jx % L) * L + (jy % L)] -= 1.0
                    elif 0 <= jx < L and 0 <= jy < L:
                        dense[i, jx * L + jy] -= 1.0
    return HamiltonianMatrix(diag, None, dense)


def _eigensystem(model: AndersonModel, omega: OmegaRealization, vectors: bool = True):
    ham = build_hamiltonian(model, omega)
    if ham.offdiagonal is not None:
        try:
            if vectors:
                return eigh_tridiagonal(ham.diagonal, ham.offdiagonal)
            return eigh_tridiagonal(ham.diagonal, ham.offdiagonal, eigvals_only=True), None
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise NumericError(f"tridiagonal eigensolver failed: {exc}") from exc
    if ham.n > MAX_DENSE:
        raise ResourceLimitError(
            f"dense eigensolve limited to {MAX_DENSE} sites; "
            "use 1d dirichlet geometry for larger boxes"
        )
    try:
        if vectors:
            return np.linalg.eigh(ham.dense)
        return np.linalg.eigvalsh(ham.dense), None
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise NumericError(f"dense eigensolver failed: {exc}") from exc


def spectral_measure_at_site(
    model: AndersonModel, omega: OmegaRealization, site: int
) -> SpectralSample:
    """Spectral measure of the box Hamiltonian at a delta-site vector:
    atoms at the eigenvalues, weights the squared site components."""
    if site < 0 or site >= model.n_sites:
        raise ArgumentError("site outside the box")
    evals, evecs = _eigensystem(model, omega, vectors=True)
    weights = evecs[site, :] ** 2
    for arr in (evals, weights):
        arr.setflags(write=False)
    return SpectralSample(omega.index, site, evals, weights)


# ---------------------------------------------------------------------------
# Monte Carlo estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeterminismReport:
    sigma_ess: RegionSet
    ac_support: RegionSet
    batch_sigma: tuple
    batch_ac: tuple
    batch_variation: dict
    n_samples: int
    resolution: float
    eps_smooth: float
    theta: float
    occupancy: float
    notes: tuple = (CYCLICITY_NOTE,)

    def to_json(self) -> dict:
        return {
            "sigma_ess": self.sigma_ess.to_json(),
            "ac_support": self.ac_support.to_json(),
            "batch_sigma": [r.to_json() for r in self.batch_sigma],
            "batch_ac": [r.to_json() for r in self.batch_ac],
            "batch_variation": self.batch_variation,
            "n_samples": self.n_samples,
            "resolution": self.resolution,
            "eps_smooth": self.eps_smooth,
            "theta": self.theta,
            "occupancy": self.occupancy,
            "notes": list(self.notes),
        }


def _occupancy_cells(all_evals, edges, counts_required, max_per_sample, gap_cells):
    """Cells occupied in enough samples, with isolated sparse runs removed."""
    n_cells = edges.size - 1
    occupied = np.zeros(n_cells, dtype=int)
    max_count = np.zeros(n_cells, dtype=int)
    for evals in all_evals:
        hist, _ = np.histogram(evals, bins=edges)
        occupied += hist > 0
        max_count = np.maximum(max_count, hist)
    kept = occupied >= counts_required
    # drop kept runs separated from everything else by >= gap_cells empty
    # cells when they never carry more than max_per_sample eigenvalues:
    # the grid-scale version of "isolated point spectrum of finite multiplicity"
    runs = []
    i = 0
    while i < n_cells:
        if not kept[i]:
            i += 1
            continue
        j = i
        while j + 1 < n_cells and kept[j + 1]:
            j += 1
        runs.append((i, j))
        i = j + 1
    final = np.zeros(n_cells, dtype=bool)
    for idx, (i, j) in enumerate(runs):
        left_gap = i - (runs[idx - 1][1] if idx > 0 else -gap_cells - 1) - 1
        right_gap = (runs[idx + 1][0] if idx + 1 < len(runs) else n_cells + gap_cells + 1) - j - 1
        isolated = left_gap >= gap_cells and right_gap >= gap_cells
        sparse = int(np.max(max_count[i : j + 1])) <= max_per_sample
        if not (isolated and sparse):
            final[i : j + 1] = True
    return final


def _region_from_cells(edges: np.ndarray, mask: np.ndarray) -> RegionSet:
    return RegionSet.from_intervals(
        [(edges[k], edges[k + 1]) for k in np.nonzero(mask)[0]]
    )


def estimate_deterministic_sets(
    model: AndersonModel,
    n_samples: int,
    resolution: float,
    eps_smooth: Optional[float] = None,
    theta: float = 0.02,
    occupancy: float = 0.9,
    site_edits: Optional[dict] = None,
) -> DeterminismReport:
    """Monte Carlo estimates of the deterministic spectral sets.

    sigma_ess: cells holding eigenvalues in at least ``occupancy`` of
    the samples, minus isolated sparse runs (gap >= 3 cells, <= 3
    eigenvalues per sample).  ac_support: cells where the site-averaged
    Poisson-smoothed density exceeds ``theta`` in both sample halves.
    batch_variation records the Hausdorff distances between half-sample
    estimates, the empirical determinism diagnostic.
    """
    if n_samples < 2:
        raise ArgumentError("need at least 2 samples")
    if resolution <= 0:
        raise ArgumentError("resolution must be positive")

    all_evals = []
    all_density_inputs = []
    for idx in range(n_samples):
        omega = sample_omega(model, idx)
        if site_edits:
            omega = with_site_edits(omega, site_edits)
        evals, evecs = _eigensystem(model, omega, vectors=True)
        all_evals.append(evals)
        site_weights = np.stack([evecs[s, :] ** 2 for s in model.sites])
        all_density_inputs.append(site_weights.mean(axis=0))

    lo = min(float(e[0]) for e in all_evals)
    hi = max(float(e[-1]) for e in all_evals)
    if eps_smooth is None:
        # mean level spacing scale: purely atomic box spectra need smoothing
        # at this scale to stand in for boundary imaginary parts
        eps_smooth = 4.0 * max(hi - lo, resolution) / model.n_sites
    k_lo = math.floor(lo / resolution) - 1
    k_hi = math.ceil(hi / resolution) + 1
    edges = resolution * np.arange(k_lo, k_hi + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])

    halves = (list(range(0, n_samples // 2)), list(range(n_samples // 2, n_samples)))

    def sigma_for(idx_list):
        need = max(1, int(math.ceil(occupancy * len(idx_list))))
        mask = _occupancy_cells(
            [all_evals[i] for i in idx_list], edges, need, max_per_sample=3, gap_cells=3
        )
        return _region_from_cells(edges, mask)

    def density_for(idx_list):
        rho = np.zeros(centers.size)
        for i in idx_list:
            lam = all_evals[i]
            w = all_density_inputs[i]
            d = centers[:, None] - lam[None, :]
            rho += (w[None, :] * eps_smooth / (d * d + eps_smooth**2)).sum(axis=1) / math.pi
        return rho / len(idx_list)

    sigma_full = sigma_for(list(range(n_samples)))
    sigma_halves = (sigma_for(halves[0]), sigma_for(halves[1]))
    rho_halves = (density_for(halves[0]), density_for(halves[1]))
    ac_mask_full = (rho_halves[0] > theta) & (rho_halves[1] > theta)
    ac_full = _region_from_cells(edges, ac_mask_full)
    ac_halves = (
        _region_from_cells(edges, rho_halves[0] > theta),
        _region_from_cells(edges, rho_halves[1] > theta),
    )

    variation = {
        "sigma_hausdorff": sigma_halves[0].hausdorff_distance(sigma_halves[1]),
        "ac_hausdorff": ac_halves[0].hausdorff_distance(ac_halves[1]),
    }
    return DeterminismReport(
        sigma_ess=sigma_full,
        ac_support=ac_full,
        batch_sigma=sigma_halves,
        batch_ac=ac_halves,
        batch_variation=variation,
        n_samples=n_samples,
        resolution=resolution,
        eps_smooth=float(eps_smooth),
        theta=theta,
        occupancy=occupancy,
    )


@dataclass(frozen=True)
class PairwiseReport:
    identical: bool
    min_eigenvalue_distance: float
    close_fraction: float
    tol: float
    singularity_applicable: bool
    open_set_classification: str  # "empty" | "positive-length" | "not-requested"
    open_set_violation: bool
    intersection_length: float
    note: str = ""

    def to_json(self) -> dict:
        return {
            "identical": self.identical,
            "min_eigenvalue_distance": self.min_eigenvalue_distance,
            "close_fraction": self.close_fraction,
            "tol": self.tol,
            "singularity_applicable": self.singularity_applicable,
            "open_set_classification": self.open_set_classification,
            "open_set_violation": self.open_set_violation,
            "intersection_length": self.intersection_length,
            "note": self.note,
        }


def pairwise_checks(
    model: AndersonModel,
    index_a: int,
    index_b: int,
    region: Optional[RegionSet] = None,
    tol: float = 1e-9,
    sigma_estimate: Optional[RegionSet] = None,
) -> PairwiseReport:
    """Eigenvalue coincidence between two realizations plus the open-set
    classification of the essential-spectrum estimate.

    With continuous disorder, shared eigenvalues are a null event; the
    fraction of eigenvalues within ``tol`` of the partner spectrum is
    the finite-volume analog of mutual singularity of the singular
    parts.  For an open region O, O intersected with the spectrum
    estimate must be empty or of positive length; an intersection
    thinner than half a resolution cell is flagged as a violation at the
    working resolution.
    """
    applicable = model.distribution.is_continuous()
    note = "" if applicable else "disorder law not absolutely continuous; singularity check not applicable"
    if index_a == index_b:
        ev, _ = _eigensystem(model, sample_omega(model, index_a), vectors=False)
        cls, viol, length = _classify_open_set(region, sigma_estimate, model, index_a, index_b)
        return PairwiseReport(
            True, 0.0, 1.0, tol, applicable, cls, viol, length,
            note="identical realization; all eigenvalues shared",
        )

    ev_a, _ = _eigensystem(model, sample_omega(model, index_a), vectors=False)
    ev_b, _ = _eigensystem(model, sample_omega(model, index_b), vectors=False)
    pos = np.searchsorted(ev_b, ev_a)
    pos_lo = np.clip(pos - 1, 0, ev_b.size - 1)
    pos_hi = np.clip(pos, 0, ev_b.size - 1)
    dists = np.minimum(np.abs(ev_a - ev_b[pos_lo]), np.abs(ev_a - ev_b[pos_hi]))
    min_dist = float(np.min(dists))
    close_fraction = float(np.mean(dists < tol))

    cls, viol, length = _classify_open_set(region, sigma_estimate, model, index_a, index_b)
    return PairwiseReport(
        False, min_dist, close_fraction, tol, applicable, cls, viol, length, note=note
    )


def _classify_open_set(region, sigma_estimate, model, index_a, index_b):
    if region is None:
        return "not-requested", False, 0.0
    resolution = 0.05
    if sigma_estimate is None:
        sigma_estimate = estimate_deterministic_sets(
            model, 2, resolution, occupancy=1.0
        ).sigma_ess
    overlap = region.intersect(sigma_estimate)
    length = overlap.measure()
    if overlap.is_empty():
        return "empty", False, 0.0
    violation = length < 0.5 * resolution
    return "positive-length", violation, length


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_to_json(model: AndersonModel) -> dict:
    params = model.distribution.params
    if model.distribution.kind == "uniform":
        pjson = {"a": params[0], "b": params[1]}
    elif model.distribution.kind == "bernoulli":
        pjson = {"a": params[0], "b": params[1], "p": params[2]}
    else:
        pjson = {"c": params[0]}
    return {
        "dim": model.dim,
        "L": model.L,
        "boundary": model.boundary,
        "distribution": {"kind": model.distribution.kind, "params": pjson},
        "master_seed": model.master_seed,
        "sites": list(model.sites),
    }


def model_from_json(data) -> AndersonModel:
    import json as _json

    if isinstance(data, str):
        data = _json.loads(data)
    try:
        dist_data = data["distribution"]
        kind = dist_data["kind"]
        p = dist_data["params"]
        if kind == "uniform":
            dist = Distribution.uniform(p["a"], p["b"])
        elif kind == "bernoulli":
            dist = Distribution.bernoulli(p["a"], p["b"], p["p"])
        elif kind == "constant":
            dist = Distribution.constant(p["c"])
        else:
            raise ConstructionError(f"unknown distribution kind {kind!r}")
        return AndersonModel(
            dim=int(data["dim"]),
            L=int(data["L"]),
            boundary=data["boundary"],
            distribution=dist,
            master_seed=int(data["master_seed"]),
            sites=tuple(data["sites"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConstructionError(f"malformed model JSON: {exc}") from exc
