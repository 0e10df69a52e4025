"""Matrix-free edge-preserving reconstruction of dynamic inverse problems."""

from .exceptions import ConfigError, SingularSystemError, SolverError
from .forward import (
    BlurModel,
    RadonModel,
    assemble_dynamic_forward,
    build_blur_operator,
    build_radon_operator,
    medium_blur,
    radon_angles,
)
from .metrics import QualityReport, build_report, rre, rre_per_frame, ssim
from .operators import (
    LinearOperator,
    blockdiag,
    build_Ls,
    build_diff,
    dense,
    diagonal,
    fold,
    identity,
    kron,
    kron3,
    mode_product,
    tensor,
    unfold,
    vec,
    vstack,
)
from .paramselect import ProjectedPair, default_lambda_grid, gcv_curve, select_lambda
from .phantom import (
    NoiseSpec,
    SceneObject,
    SceneSpec,
    add_noise,
    linear_trajectory,
    moving_disks_scene,
    render_scene,
)
from .regularization import (
    METHOD_NAMES,
    Method,
    RegularizerSpec,
    StaticTVSpec,
    WeightOperator,
    build_D,
    majorant_gradient,
    majorant_value,
    regularizer_value,
    smoothed_objective,
    update_weights,
)
from .solver import (
    IterationRecord,
    ReconstructionProblem,
    SolveResult,
    SolverConfig,
    SolverState,
    check_dp,
    expand_subspace,
    init_state,
    mm_gks_solve,
    projected_pair,
    refresh_penalty,
    seed_subspace,
    solve_projected,
)

__version__ = "0.1.0"
