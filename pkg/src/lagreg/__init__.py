"""Analysis and coisotropic regularization of singular Lagrangian systems."""

from .chart import ChartSpec, ThickenedChart, thicken
from .expr import Expression, eval_with_gradient, evaluate, hessian_block, parse
from .forms import (
    LagrangianSystem,
    LinearSolveReport,
    hamiltonian_field,
    helmholtz_check,
    hessian_rank,
    lagrangian_energy,
    lagrangian_two_form,
    poincare_cartan,
    reeb_evolution_field,
    sode_residual,
)
from .geometry import (
    SubspaceBasis,
    TensorAtPoint,
    complete_lift,
    lagrangian_complement,
    liouville_field,
    vertical_endomorphism,
    vertical_lift,
    verify_tangent_structure,
)
from .constraints import (
    ConstraintSet,
    KernelReport,
    detect_complete_lift,
    kernel_basis,
    metric_consistency_residuals,
    pca_step,
    primary_constraints,
    run_pca,
    sode_projection,
)
from .regularize import (
    AlmostProductSpec,
    ConnectionSpec,
    RegularizedSystem,
    coisotropy_check,
    regularized_lagrangian,
    restriction_check,
    thickening_correction,
    tulczyjew_inverse,
    tulczyjew_map,
    verify_regularity,
)
from .dynamics import (
    TrajectoryRecord,
    compare_projection,
    integrate,
    monitor_invariants,
    write_trajectory_csv,
)
from .catalog import Scenario, load_scenario, sample_points

__version__ = "0.1.0"
