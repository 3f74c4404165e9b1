//! Embedding simulation, linear detectors, probability of error and regret.

mod detector;
mod embed;
mod eval;
mod io;
mod regret;

pub use detector::{train_detector, training_sweep, DetectorConfig, LinearDetector, TrainDiagnostics, MIN_CONFIDENT_CLASS};
pub use embed::{
    change_probability, embed, embedding_costs, solve_lambda, ternary_entropy, CostModel, EmbedConfig, EmbedOutcome,
    MAX_BISECTION_STEPS,
};
pub use eval::{evaluate, evaluate_scores, sweep, EvalReport, Sweep};
pub use io::{read_detector, write_detector, DetectorHeader, DETECTOR_SCHEMA_VERSION};
pub use regret::{decode_regret_binary, regret, regret_matrix, EvalSet, RegretMatrix, RegretRecord};
