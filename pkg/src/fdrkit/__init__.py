"""False discovery rate procedures (BH, BY, e-BH) with Monte Carlo and
oracle-based certification."""

from .core import (
    Calibrator,
    DomainError,
    FdpOutcome,
    RejectionResult,
    bh_procedure,
    by_procedure,
    calibrate_p_to_e,
    calibrated_equivalence,
    counting_processes,
    ebh_procedure,
    fdp,
    harmonic_number,
    is_self_consistent,
    leave_one_out_rejections,
    rejection_threshold,
    simes_statistic,
    step_up,
)
from .simulate import FdrEstimate, ModelSpec, estimate_fdr, generate, martingale_diagnostics

__version__ = "0.1.0"
