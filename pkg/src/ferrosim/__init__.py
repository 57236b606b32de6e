"""Spectral stochastic-Galerkin simulator for conductive ferrofluid flow.

The model couples incompressible velocity, internal rotation,
magnetization, and the magnetic field on the periodic box, driven by
transport noise.  The package provides the Fourier bases and operators,
the projected finite-dimensional dynamics, reproducible Euler-Maruyama
integration, and the energy/estimate audit machinery, plus a CLI
(``ferrosim simulate | verify | sweep | inspect``).
"""

from .diagnostics import (
    AdmissibilityParams,
    EnergyLedger,
    EstimateReport,
    LEDGER_TERMS,
    admissibility_check,
    all_energy_brackets,
    apriori_check,
    drift_dual_norm_audit,
    energy_total,
    ito_ledger_step,
    lambda_window,
    pmoment_check,
    translation_diagnostic,
    weak_residual,
)
from .galerkin import (
    DriftVector,
    FieldSet,
    GalerkinState,
    PhysicalParams,
    assemble_diffusion,
    assemble_drift,
    drift_rows,
    local_lipschitz_probe,
)
from .noise import (
    NoiseFamily,
    NoiseModel,
    NoiseValidationReport,
    apply_noise,
    hs_norm_sq,
    make_family,
    validate_assumptions,
)
from .operators import (
    OperatorTensor,
    advect,
    apply_B,
    apply_M0,
    apply_M2,
    apply_R0,
    apply_R1,
    apply_R2,
    apply_R3,
    apply_R5,
    apply_R6,
    apply_stokes,
    cross,
    eval_M1,
    eval_M2,
    operator_tensor,
    trilinear_b,
)
from .sde import (
    BrownianPath,
    RunConfig,
    TrajectoryRecord,
    ensemble_run,
    generate_increments,
    integrate,
    step,
)
from .spectral import (
    Basis,
    DualCoefficients,
    HelmholtzSplit,
    ModeIndex,
    SpectralField,
    build_basis,
    diff_ops,
    dual_norm,
    get_basis,
    helmholtz_split,
    leray_project,
    synthesize,
    analyze,
)

__version__ = "0.1.0"
