"""Contrast expansions for high-contrast elliptic problems on triangular meshes.

Scalar problems live in :mod:`hcexpand.pressure`, plane-strain elasticity in
:mod:`hcexpand.elasticity`, the closed-form interval case in
:mod:`hcexpand.oned` and localized characteristic fields in
:mod:`hcexpand.localized`.
"""

from ._accel import backend, set_threads
from .errors import (
    ConfigError,
    ConsistencyError,
    GeometryError,
    HcexpandError,
    MeshFormatError,
    MeshValidationError,
    PreconditionError,
    ResolutionError,
    SolverError,
    ValidationError,
)
from .mesh import (
    Disk,
    GeometrySpec,
    Mesh,
    Polygon,
    Rectangle,
    generate_mesh,
    load_mesh,
    mesh_quality,
    refine_uniform,
    save_mesh,
    sixty_inclusions,
    thirty_six_inclusions,
    validate_mesh,
)
from .pressure import (
    ProblemSpec,
    compute_characteristics,
    compute_u0,
    compute_u00,
    energy_coefficients,
    expand,
    next_term,
    solve_direct,
    terms_needed,
    truncation_report,
)
from .localized import compute_u0_delta, delta_error_sweep, localized_characteristics
from .oned import Interval1DSpec, compare_1d, exact_solution_1d, expansion_terms_1d, bar_example
from .elasticity import (
    ElasticSpec,
    expand_elastic,
    expand_soft_inclusion,
    rb_characteristics,
    solve_direct_elastic,
)
from .config import ExperimentConfig, parse_config

__version__ = "0.1.0"
