"""Compositional tensor trains: format, encoders, compression, trainers."""

from .basis import Basis, affine, get_basis, monomial, quadratic, relu_abs
from .bench import (
    ExperimentConfig,
    condition_trace,
    gen_recovery_dataset,
    rank_sweep,
    run_experiment,
    sketch_sweep,
)
from .compress import LayerStats, compress, estimate_layer_stats
from .encode import (
    DNNSpec,
    SparsePolynomial,
    build_gaussian_flow,
    build_markov_density,
    concat_ct,
    encode_affine,
    encode_dnn,
    encode_sparse_poly,
    encode_univariate_poly,
    odd_even_permutation,
    permute_density,
    predicted_permuted_markov_ranks,
    quadratic_form_tt,
    sparse_poly_layer_bound,
    vectorize_activation,
)
from .model import (
    CTTLayer,
    CTTModel,
    Lift,
    loss_and_residual,
    model_load,
    model_save,
    relative_l2_error,
    retraction_first,
    retraction_identity,
    retraction_slots,
)
from .train import (
    CostateSet,
    GramData,
    TrainConfig,
    adam_run,
    adam_step,
    assemble_gram,
    compute_costates,
    gram_diagnostics,
    init_layers,
    msa_run,
    ngd_run,
    ngd_step,
    nystrom_solve,
    sketch_gram,
    train_run,
)
from .tt import (
    CPTensor,
    TTTensor,
    cp_to_tt,
    measured_ranks,
    tt_add,
    tt_dot,
    tt_interior_ranks,
    tt_load,
    tt_norm,
    tt_round,
    tt_save,
    tt_scale,
    tt_svd,
)

__all__ = [
    "Basis",
    "CPTensor",
    "CTTLayer",
    "CTTModel",
    "CostateSet",
    "DNNSpec",
    "ExperimentConfig",
    "GramData",
    "LayerStats",
    "Lift",
    "SparsePolynomial",
    "TTTensor",
    "TrainConfig",
    "adam_run",
    "adam_step",
    "affine",
    "assemble_gram",
    "build_gaussian_flow",
    "build_markov_density",
    "compress",
    "compute_costates",
    "concat_ct",
    "condition_trace",
    "cp_to_tt",
    "encode_affine",
    "encode_dnn",
    "encode_sparse_poly",
    "encode_univariate_poly",
    "estimate_layer_stats",
    "gen_recovery_dataset",
    "get_basis",
    "gram_diagnostics",
    "init_layers",
    "loss_and_residual",
    "measured_ranks",
    "model_load",
    "model_save",
    "monomial",
    "msa_run",
    "ngd_run",
    "ngd_step",
    "nystrom_solve",
    "odd_even_permutation",
    "permute_density",
    "predicted_permuted_markov_ranks",
    "quadratic",
    "quadratic_form_tt",
    "rank_sweep",
    "relative_l2_error",
    "relu_abs",
    "retraction_first",
    "retraction_identity",
    "retraction_slots",
    "run_experiment",
    "sketch_gram",
    "sketch_sweep",
    "sparse_poly_layer_bound",
    "tt_add",
    "tt_dot",
    "tt_interior_ranks",
    "tt_load",
    "tt_norm",
    "tt_round",
    "tt_save",
    "tt_scale",
    "tt_svd",
    "train_run",
    "vectorize_activation",
]
