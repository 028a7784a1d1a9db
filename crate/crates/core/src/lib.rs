//! Scaling laws built on a channel-capacity view of language-model training.
//!
//! The crate fits the capacity law and six baseline laws to tabular
//! `(model size, tokens, perturbation level, loss)` observations, scores held-out
//! extrapolation with pooled R², scans fitted loss landscapes for basins, and
//! injects SNR-calibrated Gaussian noise into flat weight vectors.

pub mod dataset;
pub mod error;
pub mod extrapolation;
pub mod fitter;
pub mod landscape;
pub mod laws;
pub mod metrics;
mod numeric;
pub mod perturb;
pub mod wvec;

pub use dataset::{Axis, LevelKey, LevelValue, Normalization, Observation, ObservationSet};
pub use error::{Error, Result};
pub use extrapolation::{make_split, progressive_sweep, run_extrapolation, ExtrapReport, FitMode, Split, SplitMode, SplitSpec};
pub use fitter::{fit, FitConfig, FitResult, JacobianMode, ObjectiveSpace};
pub use landscape::{detect_basin, exponent_report, grid_eval, optimal_along_axis, BasinReport, ExponentReport, GridSpec, LossGrid};
pub use laws::{law_registry, predict_loss, LawId, LawSpec, ParamVector, XOrientation};
pub use metrics::{pooled_r_squared, r_squared, summarize_levels, EvalPairs};
pub use perturb::{inject, measure_snr, noise_sigma2, signal_power, Dtype, PerturbReport, WeightVector};
