"""Cauchy transforms of real-line measures and their boundary values.

For a finite measure tau the transform is

    K tau(z) = (1/pi) * integral d tau(t) / (t - z),   Im z > 0,

and K1 tau subtracts the kernel correction t/(t^2+1), which removes the
dependence on distant tails.  Atomic parts are summed exactly; each
linear density segment is integrated in closed form with complex logs,
so there is no quadrature error anywhere in this module.

Boundary values on the real axis are obtained by evaluating along a
geometric schedule x + i*eps and Richardson-extrapolating; the product
pi * eps * Im K tau(x + i*eps) stabilizes at the mass of an atom at x
and decays otherwise, which drives the atom report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ArgumentError, DomainError, IndeterminateRatioError
from .measures import Measure

__all__ = [
    "DEFAULT_SCHEDULE",
    "CauchyEvaluation",
    "RatioLimit",
    "cauchy_transform",
    "transform_values",
    "k1_shift_constant",
    "boundary_value",
    "boundary_table",
    "poltoratski_ratio",
    "richardson_limit",
    "locate_atom",
]

# eps_j = 2^-j for j = 4..40: geometric approach to the real axis that
# mimics vertical limits and supports Richardson extrapolation.
DEFAULT_SCHEDULE = 2.0 ** -np.arange(4, 41)

# Relative spread over four consecutive schedule points below which the
# product pi*eps*Im K is declared stable (an atom).
ATOM_STABILITY = 0.01
_ATOM_WINDOW = 4

_CHUNK = 1 << 22


@dataclass(frozen=True)
class CauchyEvaluation:
    """One transform evaluation, interior or boundary-extrapolated."""

    point: complex
    value: complex
    mode: str  # "interior" | "boundary-extrapolated"
    converged: bool
    residual: float
    atom_mass: Optional[float] = None
    schedule: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RatioLimit:
    value: float
    converged: bool
    residual: float
    imag_residual: float


def _check_schedule(schedule) -> np.ndarray:
    sched = np.asarray(schedule, dtype=float)
    if sched.ndim != 1 or sched.size < 4:
        raise ArgumentError("schedule needs at least 4 entries")
    if np.any(np.diff(sched) >= 0) or np.any(sched <= 0):
        raise ArgumentError("schedule must be strictly decreasing and positive")
    return sched


def k1_shift_constant(mu: Measure) -> float:
    """(1/pi) * integral t/(t^2+1) d mu(t); K1 = K minus this constant."""
    total = float(np.sum(mu.atom_masses * mu.atom_positions / (mu.atom_positions**2 + 1.0)))
    for piece in mu.pieces:
        p, q = piece.grid[:-1], piece.grid[1:]
        slope = (piece.values[1:] - piece.values[:-1]) / (q - p)
        intercept = piece.values[:-1] - slope * p
        # integral t*(A+Bt)/(t^2+1) dt = A/2 log(t^2+1) + B (t - arctan t)
        term = intercept * 0.5 * (np.log1p(q * q) - np.log1p(p * p))
        term += slope * ((q - np.arctan(q)) - (p - np.arctan(p)))
        total += float(np.sum(term))
    return total / math.pi


def transform_values(mu: Measure, z, variant: str = "K") -> np.ndarray:
    """Vectorized K or K1 transform at interior points (Im z > 0)."""
    z = np.asarray(z, dtype=complex)
    flat = z.reshape(-1)
    if np.any(flat.imag <= 0):
        raise DomainError("transform requires Im z > 0")
    out = np.zeros(flat.shape, dtype=complex)

    if mu.n_atoms:
        step = max(1, _CHUNK // max(1, mu.n_atoms))
        for start in range(0, flat.size, step):
            zz = flat[start : start + step, None]
            out[start : start + step] += np.sum(
                mu.atom_masses / (mu.atom_positions - zz), axis=1
            )

    for piece in mu.pieces:
        grid, values = piece.grid, piece.values
        dg = np.diff(grid)
        slope = np.diff(values) / dg
        intercept = values[:-1] - slope * grid[:-1]
        step = max(1, _CHUNK // max(1, grid.size))
        for start in range(0, flat.size, step):
            zz = flat[start : start + step, None]
            logs = np.log(grid[None, :] - zz)
            dlog = logs[:, 1:] - logs[:, :-1]
            out[start : start + step] += np.sum(
                (intercept + slope * zz) * dlog, axis=1
            ) + np.sum(slope * dg)

    out /= math.pi
    if variant == "K1":
        out = out - k1_shift_constant(mu)
    elif variant != "K":
        raise ArgumentError(f"unknown transform variant {variant!r}")
    return out.reshape(z.shape)


def cauchy_transform(mu: Measure, z: complex, variant: str = "K") -> CauchyEvaluation:
    """Evaluate K tau or K1 tau at one interior point of the upper half-plane."""
    z = complex(z)
    value = complex(transform_values(mu, np.array([z]), variant)[0])
    return CauchyEvaluation(z, value, "interior", True, 0.0)


def richardson_limit(values: np.ndarray, schedule: np.ndarray, tol: float):
    """Extrapolate rows of ``values`` sampled at the geometric ``schedule``.

    Two Richardson levels (removing the eps and eps^2 terms) are applied;
    a row converges at the first pair of consecutive second-level
    estimates within ``tol``.  Returns (limits, converged, residuals).
    """
    v = np.atleast_2d(np.asarray(values))
    r = schedule[1] / schedule[0]
    lvl1 = (v[:, 1:] - r * v[:, :-1]) / (1.0 - r)
    r2 = r * r
    lvl2 = (lvl1[:, 1:] - r2 * lvl1[:, :-1]) / (1.0 - r2)
    diffs = np.abs(lvl2[:, 1:] - lvl2[:, :-1])
    ok = diffs < tol
    converged = ok.any(axis=1)
    first = np.argmax(ok, axis=1)
    idx = np.where(converged, first, diffs.shape[1] - 1)
    rows = np.arange(v.shape[0])
    limits = lvl2[rows, idx + 1]
    residuals = diffs[rows, idx]
    return limits, converged, residuals


def _atom_scan(schedule: np.ndarray, values: np.ndarray, tol: float):
    """Return per-row atom mass estimates (nan when absent).

    Scans the sliding product pi*eps*Im K for the last 4-point window
    stable within ATOM_STABILITY and above tol; the window closest to
    the axis gives the most accurate mass.
    """
    v = np.atleast_2d(values)
    prod = math.pi * schedule[None, :] * v.imag
    n = prod.shape[1]
    masses = np.full(v.shape[0], np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(prod, _ATOM_WINDOW, axis=1)
    means = windows.mean(axis=2)
    spreads = windows.max(axis=2) - windows.min(axis=2)
    stable = (means > tol) & (spreads <= ATOM_STABILITY * np.abs(means))
    for i in range(v.shape[0]):
        hits = np.nonzero(stable[i])[0]
        if hits.size:
            masses[i] = means[i, hits[-1]]
    return masses


def boundary_table(
    mu: Measure,
    xs,
    schedule=None,
    tol: float = 1e-9,
    variant: str = "K",
):
    """Boundary extrapolation for many real points at once.

    Returns (limits, converged, residuals, atom_masses, raw_values).
    """
    sched = _check_schedule(DEFAULT_SCHEDULE if schedule is None else schedule)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    z = xs[:, None] + 1j * sched[None, :]
    raw = transform_values(mu, z, variant)
    limits, converged, residuals = richardson_limit(raw, sched, tol)
    masses = _atom_scan(sched, raw, tol)
    return limits, converged, residuals, masses, raw


def boundary_value(
    mu: Measure,
    x: float,
    schedule=None,
    tol: float = 1e-9,
    variant: str = "K",
) -> CauchyEvaluation:
    """Extrapolated boundary value of the transform at a real point.

    ``converged`` is False at atoms (the imaginary part diverges); there
    the atom report carries the stabilized mass pi*eps*Im K.
    """
    sched = _check_schedule(DEFAULT_SCHEDULE if schedule is None else schedule)
    limits, converged, residuals, masses, _ = boundary_table(
        mu, [x], sched, tol, variant
    )
    mass = None if math.isnan(masses[0]) else float(masses[0])
    return CauchyEvaluation(
        complex(x),
        complex(limits[0]),
        "boundary-extrapolated",
        bool(converged[0]),
        float(residuals[0]),
        atom_mass=mass,
        schedule=sched,
    )


def poltoratski_ratio(
    tau_tilde: Measure,
    tau: Measure,
    x: float,
    schedule=None,
    tol: float = 1e-9,
) -> RatioLimit:
    """Extrapolated limit of K(tau_tilde)/K(tau) at x + i*eps as eps -> 0.

    At tau-singular points this recovers the density of tau_tilde with
    respect to tau.
    """
    sched = _check_schedule(DEFAULT_SCHEDULE if schedule is None else schedule)
    z = x + 1j * sched
    denom = transform_values(tau, z)
    numer = transform_values(tau_tilde, z)
    usable = np.abs(denom) > 1e-300
    if not np.any(usable):
        raise IndeterminateRatioError("denominator transform underflowed on the schedule")
    ratios = numer[usable] / denom[usable]
    sub_sched = sched[usable]
    if ratios.size < 4:
        raise IndeterminateRatioError("fewer than 4 usable schedule points")
    limits, converged, residuals = richardson_limit(ratios[None, :], sub_sched, tol)
    limit = complex(limits[0])
    return RatioLimit(
        value=float(limit.real),
        converged=bool(converged[0]),
        residual=float(residuals[0]),
        imag_residual=abs(limit.imag),
    )


def locate_atom(
    transform: Callable[[complex], complex], x: float, eps: float
):
    """Refine an atom near x from one interior evaluation of a transform.

    For K(z) ~ m / (pi (t - z)) the identity t = z + m/(pi K) splits into
    m = -pi*eps / Im(1/K) and t = x + (m/pi) * Re(1/K); background terms
    enter only at second order in eps.
    """
    k = transform(complex(x, eps))
    w = 1.0 / k
    if w.imag >= 0:
        return None
    mass = -math.pi * eps / w.imag
    position = x + (mass / math.pi) * w.real
    return float(position), float(mass)
