"""Kruskal tensor regression with mode-wise hybrid penalties.

Fits rank-R CP-decomposed linear and logistic regression models on
tensor covariates.  Each mode of the coefficient tensor carries its own
mix of sparsity, total-variation, and ridge penalties plus an optional
nonnegativity constraint; mode subproblems are solved with ADMM inside
an alternating outer loop.  Includes BIC rank selection, greedy penalty
tuning, a synthetic estimation benchmark, and binary model/tensor file
formats with a CLI driver.
"""

from .tensor import (
    DenseTensor,
    KruskalModel,
    matricize,
    fold,
    vectorize,
    unvec,
    khatri_rao,
    khatri_rao_excluding,
    mttkrp,
    kruskal_reconstruct,
    inner_product,
    kruskal_inner_product,
)
from .regularizers import (
    ModeRegConfig,
    DifferenceOperator,
    apply_diff,
    apply_diff_transpose,
    soft_threshold,
    project_nonneg,
    penalty_value,
)
from .admm import (
    NumericalError,
    AdmmOptions,
    AdmmState,
    solve_subproblem,
    x_update_linear,
    x_update_logistic,
    z_updates,
    dual_updates,
    convergence_check,
)
from .model import (
    Dataset,
    FitOptions,
    FitReport,
    assemble_design,
    loss_value,
    objective_value,
    fit,
    predict,
    predict_all,
)
from .selection import (
    BicResult,
    LambdaGrid,
    DegenerateFitError,
    effective_params,
    log_likelihood,
    lambda_grid,
    select_rank,
    greedy_lambda_search,
    split_dataset,
)
from .bench import (
    SignalSpec,
    SimConfig,
    generate_signal,
    simulate_dataset,
    estimation_error,
    run_benchmark,
    table_protocol,
)
from .io import (
    FileFormatError,
    read_tensor,
    write_tensor,
    read_model,
    write_model,
    read_dataset,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "DenseTensor", "KruskalModel", "matricize", "fold", "vectorize", "unvec",
    "khatri_rao", "khatri_rao_excluding", "mttkrp", "kruskal_reconstruct",
    "inner_product", "kruskal_inner_product",
    "ModeRegConfig", "DifferenceOperator", "apply_diff", "apply_diff_transpose",
    "soft_threshold", "project_nonneg", "penalty_value",
    "NumericalError", "AdmmOptions", "AdmmState", "solve_subproblem",
    "x_update_linear", "x_update_logistic", "z_updates", "dual_updates",
    "convergence_check",
    "Dataset", "FitOptions", "FitReport", "assemble_design", "loss_value",
    "objective_value", "fit", "predict", "predict_all",
    "BicResult", "LambdaGrid", "DegenerateFitError", "effective_params",
    "log_likelihood", "lambda_grid", "select_rank", "greedy_lambda_search",
    "split_dataset",
    "SignalSpec", "SimConfig", "generate_signal", "simulate_dataset",
    "estimation_error", "run_benchmark", "table_protocol",
    "FileFormatError", "read_tensor", "write_tensor", "read_model",
    "write_model", "read_dataset", "write_dataset",
]
