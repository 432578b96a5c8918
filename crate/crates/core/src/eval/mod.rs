//! Rank-k retrieval evaluation: ranked matching, cross-validated
//! orchestration, uncertainty and correlation statistics, ablation drivers,
//! and report rendering.

mod experiment;
mod ranking;
mod report;
mod stats;

pub use experiment::{
    correlation_matrix, cross_validate, ensemble_rotation_cmc, leave_one_out,
    leave_one_out_ablation, pairwise_improvement, pairwise_improvement_matrix,
    representation_size_sweep, run_rotations, validate_sub_models, EnsembleRotationOutcome,
    ExperimentOutput, ExperimentSettings, RotationEmbeddings, RotationSet, SubModelSpec,
};
pub use ranking::{
    cmc_curve, distance_row, first_match_ranks, rank_k_accuracy, rank_queries,
    vote_first_match_ranks,
};
pub use report::{
    CorrelationMatrix, EvaluationReport, LeaveOneOut, MethodKind, MethodResult,
    PairwiseImprovement, PhaseTimings, SizeSweep,
};
pub use stats::{mean, relative_uncertainty, sample_std, triplet_correlation};
