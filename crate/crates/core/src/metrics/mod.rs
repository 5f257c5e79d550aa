//! Pose reward and evaluation metrics.

pub mod azimuth;
pub mod eval;
pub mod oracle;
pub mod reward;

pub use azimuth::{circular_difference, kl_divergence, target_distribution, AzimuthDistribution};
pub use eval::{eval_metrics, summarize, EvalCase, EvalMetrics};
pub use oracle::{
    Crop, Detection, DetectionOracle, FixtureOracle, GroundTruthOracle, ImageRef, OracleError, OrientationOracle,
};
pub use reward::{reward, PoseReward, RewardError, RewardWeights};
