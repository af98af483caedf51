//! Invariant-constrained loss, candidate evaluation and the CMA-ES search
//! over reservoir hyperparameters.

mod cmaes;
mod loss;
mod pipeline;

pub use cmaes::{
    cma_es_minimize, CmaEsConfig, CmaEsResult, Evaluation, Scale, SearchDimension, SearchSpace,
};
pub use loss::{
    compute_loss, forecast_error, invariant_mismatch, InvariantTargets, LossConfig, LossTerms,
};
pub use pipeline::{
    evaluate_candidate, model_invariants, split_data, truth_range, validation_windows,
    CandidateEvaluation, TrainedModel, ValidationWindow, DEFAULT_WASHOUT, DIVERGENCE_PENALTY,
};
