"""krein-lab: desk-scale numerics for rank-one perturbation spectral theory.

Subpackages:

* ``measures`` - real-line measures (atoms + piecewise-linear densities),
  region sets, essential supports, equivalence classification;
* ``cauchy`` - Cauchy transforms, boundary extrapolation, atom detection,
  ratio limits at singular points;
* ``rank_one`` - perturbation families, the transform/matrix-oracle pair,
  secular roots, singular-part separation checks;
* ``spectral_shift`` - shift functions: forward, inverse, surgery,
  jump/a.c. classification;
* ``anderson`` - finite-volume random tight-binding experiments with
  counter-based reproducible disorder;
* ``cli`` - command-line scenarios, verification suites and SVG plots.
"""

from .measures import (
    AcPiece,
    Measure,
    MeasureComparison,
    RegionSet,
    build_measure,
    cantor_measure,
    compare_measures,
    essential_support_ac,
    measure_from_json,
    measure_to_json,
    restrict,
)
from .cauchy import (
    DEFAULT_SCHEDULE,
    CauchyEvaluation,
    RatioLimit,
    boundary_value,
    cauchy_transform,
    poltoratski_ratio,
    transform_values,
)
from .rank_one import (
    AronszajnDonoghueReport,
    RankOneFamily,
    perturb_discrete,
    perturbed_transform,
    secular_roots,
    verify_aronszajn_donoghue,
)
from .spectral_shift import (
    ShiftClassification,
    ShiftFunction,
    ShiftPair,
    classify_shift,
    measures_from_shift,
    shift_from_measure,
    surgery,
)
from .anderson import (
    AndersonModel,
    Distribution,
    OmegaRealization,
    SpectralSample,
    build_hamiltonian,
    estimate_deterministic_sets,
    pairwise_checks,
    sample_omega,
    spectral_measure_at_site,
    with_site_edits,
)

__version__ = "0.1.0"
