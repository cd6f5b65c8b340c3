"""Pseudospectral laboratory for the quintic nonlinear Schrodinger equation
with Wiener-randomized initial data on a periodic box."""

from .spectral import (
    Grid,
    Field,
    Multiplier,
    forward_transform,
    inverse_transform,
    apply_multiplier,
    bessel_weight,
    propagator_multiplier,
    linear_propagator,
    l2_norm,
    lebesgue_norm,
    sobolev_norm,
    scaling_critical_index,
    is_admissible,
    random_field,
)
from .randomize import (
    UnitCubeWindow,
    CoefficientLaw,
    RandomDraw,
    TailFit,
    TailReport,
    occupied_cubes,
    cube_projection,
    wiener_randomize,
    sample_tail,
    fit_log_survival,
)
from .lp import dyadic_ladder, project_leq, project_dyadic
from .norms import (
    Trajectory,
    MixedNormSpec,
    mixed_norm,
    admissible_panel,
    strichartz_s_norm,
    v2_norm,
    ys_norm,
    bilinear_l2,
)
from .solver import (
    EvolutionConfig,
    SolveReport,
    ContinuationReport,
    mass,
    energy,
    free_evolution,
    split_step_solve,
    duhamel_map,
    picard_solve,
    local_existence_probe,
    continuation_monitor,
    save_trajectory,
    load_trajectory,
)
from .experiments import (
    ExperimentConfig,
    StudyResult,
    run_tail_study,
    run_bilinear_study,
    run_existence_study,
    run_continuation_study,
)

__version__ = "0.1.0"
