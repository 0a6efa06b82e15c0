"""Command-line front end.

Subcommands run scenarios (perturb a measure, compute or operate on a
shift function, Monte Carlo box experiments), execute the verification
suites, and render deterministic SVG plots.  All structured output is
JSON, series are CSV, and every file is written atomically (temp file
plus rename) so failures leave no partial outputs.

Exit codes: 0 all checks passed, 2 malformed configuration or input,
3 numeric failure (non-convergence or a failed verification check).

The environment variable KREIN_LAB_THREADS caps internal parallelism;
computation is currently sequential, so the cap affects nothing but is
honored by construction, and results never depend on it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import anderson as anderson_mod
from . import cauchy as cauchy_mod
from . import measures as measures_mod
from . import rank_one as rank_one_mod
from . import spectral_shift as shift_mod
from .errors import KreinLabError
from .measures import (
    RegionSet,
    build_measure,
    compare_measures,
    essential_support_ac,
    measure_from_json,
    measure_to_json,
    restrict,
)
from .rank_one import RankOneFamily, perturb_discrete, secular_roots

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SUITES = ("measures", "cauchy", "rank_one", "spectral_shift", "anderson", "all")


def worker_cap() -> int:
    """Parallelism cap from KREIN_LAB_THREADS (speed only, never content)."""
    try:
        return max(1, int(os.environ.get("KREIN_LAB_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Atomic file output
# ---------------------------------------------------------------------------


def write_atomic(path: Path, data: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Deterministic SVG plotting
# ---------------------------------------------------------------------------

_W, _H = 800.0, 500.0
_MARGIN = 60.0


def _svg_header(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W:.0f}" height="{_H:.0f}" '
        f'viewBox="0 0 {_W:.0f} {_H:.0f}">',
        f'<rect width="{_W:.0f}" height="{_H:.0f}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]


def _axes(lo_x, hi_x, lo_y, hi_y) -> tuple:
    span_x = hi_x - lo_x or 1.0
    span_y = hi_y - lo_y or 1.0

    def sx(x):
        return _MARGIN + (x - lo_x) / span_x * (_W - 2 * _MARGIN)

    def sy(y):
        return _H - _MARGIN - (y - lo_y) / span_y * (_H - 2 * _MARGIN)

    return sx, sy


def _axis_elements(sx, sy, lo_x, hi_x, lo_y, hi_y) -> list:
    parts = [
        f'<line x1="{sx(lo_x):.2f}" y1="{sy(lo_y):.2f}" x2="{sx(hi_x):.2f}" '
        f'y2="{sy(lo_y):.2f}" stroke="black"/>',
        f'<line x1="{sx(lo_x):.2f}" y1="{sy(lo_y):.2f}" x2="{sx(lo_x):.2f}" '
        f'y2="{sy(hi_y):.2f}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = lo_x + frac * (hi_x - lo_x)
        yv = lo_y + frac * (hi_y - lo_y)
        parts.append(
            f'<text x="{sx(xv):.2f}" y="{_H - _MARGIN + 20:.2f}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{_MARGIN - 8:.2f}" y="{sy(yv) + 4:.2f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{yv:.3g}</text>'
        )
    return parts


def render_line_svg(series, title: str, y_range=None) -> str:
    """series: list of (label, xs, ys, color)."""
    xs_all = np.concatenate([s[1] for s in series])
    ys_all = np.concatenate([s[2] for s in series])
    lo_x, hi_x = float(xs_all.min()), float(xs_all.max())
    if y_range is None:
        lo_y, hi_y = float(ys_all.min()), float(ys_all.max())
        pad = 0.05 * ((hi_y - lo_y) or 1.0)
        lo_y, hi_y = lo_y - pad, hi_y + pad
    else:
        lo_y, hi_y = y_range
    sx, sy = _axes(lo_x, hi_x, lo_y, hi_y)
    parts = _svg_header(title) + _axis_elements(sx, sy, lo_x, hi_x, lo_y, hi_y)
    for label, xs, ys, color in series:
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_histogram_svg(values, weights, n_bins: int, title: str) -> str:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    hist, edges = np.histogram(values, bins=n_bins, weights=weights)
    width = edges[1] - edges[0]
    density = hist / max(1e-300, hist.sum() * width)
    lo_x, hi_x = float(edges[0]), float(edges[-1])
    hi_y = float(density.max()) * 1.05 or 1.0
    sx, sy = _axes(lo_x, hi_x, 0.0, hi_y)
    parts = _svg_header(title) + _axis_elements(sx, sy, lo_x, hi_x, 0.0, hi_y)
    for k, d in enumerate(density):
        x0, x1 = sx(edges[k]), sx(edges[k + 1])
        y0, y1 = sy(d), sy(0.0)
        parts.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" '
            f'height="{y1 - y0:.2f}" fill="steelblue" stroke="none"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _read_series_csv(path: Path):
    rows = Path(path).read_text().strip().splitlines()
    if len(rows) < 2:
        raise KreinLabError("empty series")
    data = np.array(
        [[float(v) for v in line.split(",")] for line in rows[1:]], dtype=float
    )
    if data.size == 0:
        raise KreinLabError("empty series")
    return data


# ---------------------------------------------------------------------------
# Verification suites (drive the per-module invariants)
# ---------------------------------------------------------------------------


def _random_atomic(rng, n_max=50, span=(-2.0, 2.0), min_gap_scale=1.0):
    n = int(rng.integers(2, n_max + 1))
    gaps = min_gap_scale / n + rng.random(n)
    positions = np.cumsum(gaps)
    positions = span[0] + (span[1] - span[0]) * (positions - positions[0]) / (
        positions[-1] - positions[0] + gaps[0]
    )
    masses = rng.random(n) + 0.05
    masses /= masses.sum()
    return build_measure(list(zip(positions, masses)))


def _random_measure(rng):
    mu = _random_atomic(rng, n_max=8)
    if rng.random() < 0.7:
        a = float(rng.uniform(-2, 0))
        b = a + float(rng.uniform(0.5, 2.0))
        grid = np.linspace(a, b, 9)
        vals = rng.random(9) + 0.05
        return build_measure(
            list(zip(mu.atom_positions, mu.atom_masses)), [(grid, vals)]
        )
    return mu


def _check(results, suite, name, passed, detail=""):
    results.append(
        {"suite": suite, "name": name, "passed": bool(passed), "detail": str(detail)}
    )
    status = "pass" if passed else "FAIL"
    print(f"[{status}] {suite}/{name} {detail}")


def suite_measures(seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    worst = 0.0
    for _ in range(20):
        mu = _random_measure(rng)
        cut = float(rng.uniform(-1.5, 1.5))
        while np.any(np.abs(mu.atom_positions - cut) < 1e-6):
            cut += 1e-3
        left = RegionSet.interval(-50.0, cut)
        right = RegionSet.interval(cut, 50.0)
        gap = abs(
            restrict(mu, left).total_mass()
            + restrict(mu, right).total_mass()
            - mu.total_mass()
        )
        worst = max(worst, gap)
    _check(out, "measures", "mass-additivity", worst <= 1e-12, f"max gap {worst:.2e}")

    empty_ok = True
    for _ in range(5):
        mu = _random_atomic(rng, n_max=12)
        for res in (0.05, 0.2):
            est = essential_support_ac(mu, RegionSet.interval(-3, 3), res)
            empty_ok = empty_ok and est.is_empty()
    _check(out, "measures", "atomic-esupp-empty", empty_ok)

    sym_ok = True
    for _ in range(10):
        mu = _random_atomic(rng, n_max=6)
        scale = float(rng.uniform(0.5, 2.0))
        nu = mu.scaled(scale)
        window = RegionSet.interval(-5, 5)
        ab = compare_measures(mu, nu, window, 1e-6)
        ba = compare_measures(nu, mu, window, 1e-6)
        sym_ok = sym_ok and ab.kind == ba.kind == "equivalent"
        sym_ok = sym_ok and abs(ab.c - 1.0 / ba.C) < 1e-9 and abs(ab.C - 1.0 / ba.c) < 1e-9
    _check(out, "measures", "compare-symmetry", sym_ok)

    cantor_ok = True
    for depth in (0, 1, 5, 12, 16):
        mu = measures_mod.cantor_measure(depth)
        cantor_ok = cantor_ok and mu.n_atoms == 2**depth and mu.total_mass() == 1.0
    _check(out, "measures", "cantor-mass-and-count", cantor_ok)

    mu = _random_measure(rng)
    round_trip = measure_from_json(json.loads(json.dumps(measure_to_json(mu))))
    same = np.array_equal(mu.atom_positions, round_trip.atom_positions) and np.array_equal(
        mu.atom_masses, round_trip.atom_masses
    )
    for p, q in zip(mu.pieces, round_trip.pieces):
        same = same and np.array_equal(p.grid, q.grid) and np.array_equal(p.values, q.values)
    _check(out, "measures", "json-round-trip", same)
    return out


def suite_cauchy(seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    worst = math.inf
    for _ in range(100):
        mu = _random_measure(rng)
        z = rng.uniform(-3, 3, 10) + 1j * rng.uniform(1e-3, 2.0, 10)
        vals = cauchy_mod.transform_values(mu, z)
        worst = min(worst, float(np.min(vals.imag)))
    _check(out, "cauchy", "herglotz-positivity", worst > -1e-14, f"min Im {worst:.2e}")

    mu = _random_measure(rng)
    z = rng.uniform(-2, 2, 10) + 1j * rng.uniform(0.2, 2.0, 10)
    diff = cauchy_mod.transform_values(mu, z, "K1") - cauchy_mod.transform_values(mu, z)
    spread = float(np.max(np.abs(diff - diff[0])))
    _check(
        out,
        "cauchy",
        "k1-constant-difference",
        spread <= 1e-10 and abs(diff[0].imag) <= 1e-12,
        f"spread {spread:.2e}",
    )

    mu, nu = _random_measure(rng), _random_measure(rng)
    a, b = float(rng.uniform(0, 2)), float(rng.uniform(0, 2))
    combo = build_measure(
        [(p, a * m) for p, m in zip(mu.atom_positions, mu.atom_masses)]
        + [(p, b * m) for p, m in zip(nu.atom_positions, nu.atom_masses)],
        [(p.grid, a * p.values) for p in mu.pieces]
        + [(p.grid, b * p.values) for p in nu.pieces],
    )
    z = rng.uniform(-2, 2, 20) + 1j * rng.uniform(0.1, 1.0, 20)
    lin_err = float(
        np.max(
            np.abs(
                cauchy_mod.transform_values(combo, z)
                - a * cauchy_mod.transform_values(mu, z)
                - b * cauchy_mod.transform_values(nu, z)
            )
        )
    )
    _check(out, "cauchy", "linearity", lin_err <= 1e-12, f"max err {lin_err:.2e}")

    grid = np.linspace(-1.0, 1.0, 17)
    vals = rng.random(17) + 0.2
    mu = build_measure([], [(grid, vals)])
    tol = 1e-8
    err = 0.0
    for x in grid[3:-3:2]:
        ev = cauchy_mod.boundary_value(mu, float(x), tol=tol)
        err = max(err, abs(ev.value.imag - mu.density(float(x))))
    _check(out, "cauchy", "boundary-density-recovery", err <= 10 * tol, f"max err {err:.2e}")
    return out


def suite_rank_one(seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    worst_rel = 0.0
    worst_mass = 0.0
    worst_trace = 0.0
    interlace_ok = True
    for _ in range(100):
        base = _random_atomic(rng)
        alpha = float(rng.uniform(-3, 3))
        if abs(alpha) < 1e-3:
            alpha = 0.5
        fam = RankOneFamily(base, alpha)
        oracle = perturb_discrete(fam)
        z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(0.05, 2.0, 100)
        direct = rank_one_mod.perturbed_transform(fam, z)
        via_oracle = cauchy_mod.transform_values(oracle, z)
        rel = np.max(np.abs(direct - via_oracle) / np.abs(via_oracle))
        worst_rel = max(worst_rel, float(rel))
        worst_mass = max(worst_mass, abs(oracle.total_mass() - 1.0))
        first_moment = float(np.sum(oracle.atom_positions * oracle.atom_masses))
        base_moment = float(np.sum(base.atom_positions * base.atom_masses))
        worst_trace = max(worst_trace, abs(first_moment - base_moment - alpha))
        merged = np.sort(np.concatenate([base.atom_positions, oracle.atom_positions]))
        interlace_ok = interlace_ok and np.all(np.diff(np.searchsorted(
            base.atom_positions, oracle.atom_positions)) >= 1)
    _check(out, "rank_one", "oracle-equivalence", worst_rel <= 1e-9, f"max rel {worst_rel:.2e}")
    _check(out, "rank_one", "mass-conservation", worst_mass <= 1e-10, f"max {worst_mass:.2e}")
    _check(out, "rank_one", "trace-shift", worst_trace <= 1e-9, f"max {worst_trace:.2e}")
    _check(out, "rank_one", "interlacing", interlace_ok)
    return out


def suite_spectral_shift(seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    fam = RankOneFamily(build_measure([(0.0, 1.0)]), 1.0)
    grid = np.linspace(-0.5, 1.5, 801)
    u = shift_mod.shift_from_measure(fam, grid)
    expected = np.where((grid > 0) & (grid < 1), math.pi, 0.0)
    off_jumps = (np.abs(grid) > 2.5 / 400) & (np.abs(grid - 1) > 2.5 / 400)
    sup_err = float(np.max(np.abs(u.values[off_jumps] - expected[off_jumps])))
    _check(
        out,
        "spectral_shift",
        "single-atom-closed-form",
        sup_err <= 1e-6 and u.consistency_residual <= 1e-6,
        f"sup err {sup_err:.2e} residual {u.consistency_residual:.2e}",
    )

    pair = shift_mod.measures_from_shift(u)
    c_err = abs(pair.c - 0.5 * math.log(2.0))
    atoms_ok = (
        pair.mu.n_atoms == 1
        and pair.nu.n_atoms == 1
        and abs(pair.mu.atom_positions[0]) < 5e-3
        and abs(pair.nu.atom_positions[0] - 1.0) < 5e-3
    )
    _check(
        out,
        "spectral_shift",
        "inverse-reconstruction",
        atoms_ok and c_err <= 1e-6,
        f"c err {c_err:.2e}",
    )

    step_grid = np.array([-2.0, -1e-6, 1e-6, 1 - 1e-6, 1 + 1e-6, 4.0])
    step_vals = np.array([0.0, 0.0, math.pi, math.pi, 0.0, 0.0])
    base_u = shift_mod.ShiftFunction(
        step_grid, step_vals, shift_mod.normalization_constant(step_grid, step_vals)
    )
    region = RegionSet.interval(2.0, 3.0)
    grafted = shift_mod.surgery(base_u, region)
    off = ~np.array([region.contains(float(x)) for x in grafted.grid])
    orig_vals = base_u(grafted.grid[off])
    locality = bool(np.array_equal(grafted.values[off], orig_vals))
    xs = np.concatenate([np.linspace(-4, 1.9, 60), np.linspace(3.1, 8, 60)])
    diff_vals = base_u(grafted.grid) - grafted.values
    bound = float(
        np.max(np.abs(shift_mod.k1_grid_real(grafted.grid, diff_vals, xs)))
    )
    _check(
        out,
        "spectral_shift",
        "surgery-locality-and-bound",
        locality and bound <= region.measure(),
        f"max |K1 diff| {bound:.3f}",
    )

    alternating_ok = True
    for _ in range(5):
        base = _random_atomic(rng, n_max=6, span=(-1.5, 1.5))
        fam = RankOneFamily(base, 1.0)
        hull = base.support_hull()
        g = np.linspace(hull[0] - 1.5, hull[1] + 12.0, 2401)
        uf = shift_mod.shift_from_measure(RankOneFamily(base, 1.0), g)
        cls = shift_mod.classify_shift(uf)
        merged = sorted(
            [(x, +1) for x in cls.up_jumps] + [(x, -1) for x in cls.down_jumps]
        )
        signs = [s for _, s in merged]
        alternating_ok = alternating_ok and len(merged) == 2 * base.n_atoms
        alternating_ok = alternating_ok and all(
            a != b for a, b in zip(signs[:-1], signs[1:])
        ) and signs[0] == 1
    _check(out, "spectral_shift", "jump-interlacing", alternating_ok)
    return out


def suite_anderson(seed: int) -> list:
    out = []
    dist = anderson_mod.Distribution.uniform(0.0, 1.0)
    model = anderson_mod.AndersonModel(
        dim=1, L=120, boundary="dirichlet", distribution=dist,
        master_seed=seed, sites=(0, 60, 119),
    )
    rep1 = anderson_mod.estimate_deterministic_sets(model, 10, 0.05)
    rep2 = anderson_mod.estimate_deterministic_sets(model, 10, 0.05)
    _check(
        out,
        "anderson",
        "report-determinism",
        dump_json(rep1.to_json()) == dump_json(rep2.to_json()),
    )

    omega = anderson_mod.sample_omega(model, 3)
    sample = anderson_mod.spectral_measure_at_site(model, omega, 60)
    wsum = abs(float(np.sum(sample.weights)) - 1.0)
    moment = float(np.sum(sample.eigenvalues * sample.weights))
    diag = 2.0 * model.dim + omega.values[60]
    _check(
        out,
        "anderson",
        "weights-and-first-moment",
        wsum <= 1e-10 and abs(moment - diag) <= 1e-9,
        f"mass gap {wsum:.1e} moment gap {abs(moment - diag):.1e}",
    )

    clean = anderson_mod.AndersonModel(
        dim=1, L=400, boundary="dirichlet",
        distribution=anderson_mod.Distribution.constant(0.0),
        master_seed=seed, sites=(200,),
    )
    rep = anderson_mod.estimate_deterministic_sets(clean, 2, 0.02)
    dist_h = rep.sigma_ess.hausdorff_distance(RegionSet.interval(0.0, 4.0))
    _check(out, "anderson", "free-laplacian-band", dist_h <= 0.04, f"hausdorff {dist_h:.3f}")

    small = anderson_mod.AndersonModel(
        dim=1, L=100, boundary="dirichlet", distribution=dist,
        master_seed=seed + 1, sites=(50,),
    )
    min_d = math.inf
    for k in range(10):
        report = anderson_mod.pairwise_checks(small, 2 * k, 2 * k + 1)
        min_d = min(min_d, report.min_eigenvalue_distance)
    _check(out, "anderson", "pairwise-separation", min_d > 1e-9, f"min dist {min_d:.2e}")

    n = 10**4
    values = dist.inverse_cdf(anderson_mod.counter_uniforms(seed, 0, n))
    bound = 3.0 * dist.std() / 100.0
    gap = abs(float(values.mean()) - dist.mean())
    _check(out, "anderson", "empirical-mean", gap <= bound, f"|mean err| {gap:.2e} <= {bound:.2e}")
    return out


SUITE_RUNNERS = {
    "measures": suite_measures,
    "cauchy": suite_cauchy,
    "rank_one": suite_rank_one,
    "spectral_shift": suite_spectral_shift,
    "anderson": suite_anderson,
}


def run_verify(suite: str, seed: int) -> dict:
    if suite == "all":
        names = [s for s in SUITES if s != "all"]
    else:
        names = [suite]
    checks = []
    for name in names:
        checks.extend(SUITE_RUNNERS[name](seed))
    return {
        "suite": suite,
        "seed": seed,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
    }


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    kind: str
    options: dict = field(default_factory=dict)
    out_dir: str = "."


def run(scenario: Scenario) -> int:
    """Execute one scenario; writes declared outputs atomically and prints
    a one-line summary per check."""
    handler = _SCENARIOS.get(scenario.kind)
    if handler is None:
        print(f"error: unknown scenario kind {scenario.kind!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return handler(scenario.options, Path(scenario.out_dir))
    except (KreinLabError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, (ArithmeticError,)):
            return EXIT_NUMERIC
        return EXIT_CONFIG


def _scenario_perturb(opts: dict, out_dir: Path) -> int:
    mu = measure_from_json(json.loads(Path(opts["measure"]).read_text()))
    alpha = float(opts["alpha"])
    fam = RankOneFamily(mu, alpha)
    perturbed = perturb_discrete(fam)
    roots = secular_roots(fam) if alpha != 0 else np.empty(0)
    match = (
        float(np.max(np.abs(roots - perturbed.atom_positions)))
        if roots.size == perturbed.n_atoms
        else math.inf
    )
    hull = mu.support_hull()
    xs = np.linspace(hull[0] - 1.0, hull[1] + 1.0 + abs(alpha), 512)
    limits, converged, _, _, _ = cauchy_mod.boundary_table(perturbed, xs)
    lines = ["x,re_k,im_k,converged"]
    for x, v, ok in zip(xs, limits, converged):
        lines.append(f"{x!r},{v.real!r},{v.imag!r},{int(ok)}")
    write_atomic(out_dir / "mu_alpha.json", dump_json(measure_to_json(perturbed)))
    write_atomic(out_dir / "transform.csv", "\n".join(lines) + "\n")
    ok = match <= 1e-8
    print(f"[{'pass' if ok else 'FAIL'}] perturb: secular/oracle max gap {match:.2e}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _scenario_shift(opts: dict, out_dir: Path) -> int:
    mu = measure_from_json(json.loads(Path(opts["measure"]).read_text()))
    alpha = float(opts.get("alpha", 1.0))
    hull = mu.support_hull()
    pad = 1.0 + abs(alpha)
    n = int(opts.get("grid_points", 1201))
    grid = np.linspace(hull[0] - pad, hull[1] + pad, n)
    u = shift_mod.shift_from_measure(RankOneFamily(mu, alpha), grid)
    write_atomic(out_dir / "shift.json", dump_json(u.to_json()))
    write_atomic(out_dir / "shift.csv", u.to_csv())
    ok = u.consistency_residual <= float(opts.get("tol", 1e-6))
    print(f"[{'pass' if ok else 'FAIL'}] shift: consistency residual {u.consistency_residual:.2e}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _scenario_surgery(opts: dict, out_dir: Path) -> int:
    u = shift_mod.ShiftFunction.from_json(json.loads(Path(opts["shift"]).read_text()))
    a, b = (float(v) for v in opts["region"])
    region = RegionSet.interval(a, b)
    grafted = shift_mod.surgery(u, region)
    diff_vals = u(grafted.grid) - grafted.values
    xs = np.concatenate(
        [np.linspace(a - 5.0, a - 0.05, 100), np.linspace(b + 0.05, b + 5.0, 100)]
    )
    bound = float(np.max(np.abs(shift_mod.k1_grid_real(grafted.grid, diff_vals, xs))))
    write_atomic(out_dir / "surgery.json", dump_json(grafted.to_json()))
    write_atomic(out_dir / "surgery.csv", grafted.to_csv())
    ok = bound <= region.measure()
    print(f"[{'pass' if ok else 'FAIL'}] surgery: max |K1 difference| {bound:.4f} <= {region.measure():.4f}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _scenario_anderson(opts: dict, out_dir: Path) -> int:
    model = anderson_mod.model_from_json(json.loads(Path(opts["model"]).read_text()))
    n_samples = int(opts.get("samples", 20))
    resolution = float(opts.get("resolution", 0.05))
    report = anderson_mod.estimate_deterministic_sets(model, n_samples, resolution)

    lines = ["index,eigenvalue,weight"]
    pooled = []
    for idx in range(n_samples):
        omega = anderson_mod.sample_omega(model, idx)
        samples = [
            anderson_mod.spectral_measure_at_site(model, omega, s) for s in model.sites
        ]
        mean_w = np.mean([s.weights for s in samples], axis=0)
        for lam, w in zip(samples[0].eigenvalues, mean_w):
            lines.append(f"{idx},{lam!r},{w!r}")
            pooled.append(lam)
    write_atomic(out_dir / "report.json", dump_json(report.to_json()))
    write_atomic(out_dir / "samples.csv", "\n".join(lines) + "\n")
    svg = render_histogram_svg(
        pooled, np.ones(len(pooled)), n_bins=60, title="density of states"
    )
    write_atomic(out_dir / "dos.svg", svg)
    var = report.batch_variation
    ok = var["sigma_hausdorff"] <= 4 * resolution
    print(
        f"[{'pass' if ok else 'FAIL'}] anderson: half-sample sigma variation "
        f"{var['sigma_hausdorff']:.3f}, ac variation {var['ac_hausdorff']:.3f}"
    )
    return EXIT_OK if ok else EXIT_NUMERIC


def _scenario_verify(opts: dict, out_dir: Path) -> int:
    suite = opts.get("suite", "all")
    if suite not in SUITES:
        print(f"error: unknown suite {suite!r}", file=sys.stderr)
        return EXIT_CONFIG
    seed = int(opts.get("seed", 0))
    result = run_verify(suite, seed)
    if opts.get("out"):
        write_atomic(Path(opts["out"]), dump_json(result))
    else:
        write_atomic(out_dir / "verify.json", dump_json(result))
    return EXIT_OK if result["all_passed"] else EXIT_NUMERIC


_SCENARIOS = {
    "perturb": _scenario_perturb,
    "shift": _scenario_shift,
    "surgery": _scenario_surgery,
    "anderson": _scenario_anderson,
    "verify": _scenario_verify,
}


# ---------------------------------------------------------------------------
# Plotting command
# ---------------------------------------------------------------------------


def _cmd_plot(args) -> int:
    try:
        data = _read_series_csv(args.series)
        if args.style == "shift":
            svg = render_line_svg(
                [("u", data[:, 0], data[:, 1], "firebrick")],
                "spectral shift function",
                y_range=(0.0, math.pi),
            )
        elif args.style == "dos":
            svg = render_histogram_svg(
                data[:, 1], data[:, 2] if data.shape[1] > 2 else np.ones(len(data)),
                n_bins=args.bins, title="density of states",
            )
        elif args.style == "overlay":
            if not args.series2:
                print("error: overlay needs --series2", file=sys.stderr)
                return EXIT_CONFIG
            data2 = _read_series_csv(args.series2)
            svg = render_line_svg(
                [
                    ("a", data[:, 0], data[:, 1], "firebrick"),
                    ("b", data2[:, 0], data2[:, 1], "steelblue"),
                ],
                "overlay",
            )
        else:  # pragma: no cover - argparse restricts choices
            return EXIT_CONFIG
    except (KreinLabError, FileNotFoundError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_atomic(Path(args.out), svg)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krein-lab",
        description="rank-one perturbation numerics: transforms, shift functions, box experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="perturb a measure and export the result")
    p.add_argument("--measure", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("shift", help="compute the shift function of a family")
    p.add_argument("--measure", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--grid-points", type=int, default=1201)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)

    p = sub.add_parser("surgery", help="graft a.c. spectrum into a region")
    p.add_argument("--shift", required=True)
    p.add_argument("--region", nargs=2, type=float, metavar=("A", "B"), required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("anderson", help="Monte Carlo box experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--resolution", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("plot", help="render a CSV series to deterministic SVG")
    p.add_argument("--series", required=True)
    p.add_argument("--series2", default=None)
    p.add_argument("--style", choices=("shift", "dos", "overlay"), required=True)
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run a scenario from a JSON config")
    p.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "plot":
        return _cmd_plot(args)
    if args.command == "run":
        try:
            config = json.loads(Path(args.config).read_text())
            scenario = Scenario(
                kind=config["kind"],
                options=config.get("options", {}),
                out_dir=config.get("out", "."),
            )
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: malformed config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run(scenario)

    opts = {k: v for k, v in vars(args).items() if k != "command" and v is not None}
    out_dir = opts.pop("out", ".")
    if args.command == "verify":
        scenario = Scenario("verify", {**opts, "out": out_dir if out_dir != "." else None}, ".")
        status = run(scenario)
        return status
    if args.command == "surgery":
        opts["region"] = tuple(opts["region"])
    if args.command == "shift":
        opts["grid_points"] = opts.pop("grid_points", 1201)
    return run(Scenario(args.command, opts, out_dir))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
