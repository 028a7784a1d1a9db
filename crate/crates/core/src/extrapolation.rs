//! Held-out extrapolation protocols scored with pooled R².
//!
//! Three splits are supported:
//!
//! * **token**: per model, the observations at that model's `j` smallest
//!   distinct token counts train; everything else is predicted.
//! * **model**: the `k` smallest distinct model sizes train; larger models are
//!   predicted.
//! * **joint**: the `k` smallest models restricted to their first `j`
//!   checkpoints train; the held-out models are predicted at token counts
//!   strictly above the training horizon. Observations that fall in neither
//!   side are reported as excluded.
//!
//! Ranks are taken over distinct token counts across all perturbation levels,
//! so every level of a checkpoint lands on the same side of the split.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{distinct_axis_values, group_by_level, Axis, LevelValue, Observation, ObservationSet};
use crate::error::{Error, Result};
use crate::fitter::{fit, FitConfig, FitResult};
use crate::laws::LawId;
use crate::metrics::{pooled_r_squared, r_squared, EvalPairs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Token,
    Model,
    Joint,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(SplitMode::Token),
            "model" => Ok(SplitMode::Model),
            "joint" => Ok(SplitMode::Joint),
            other => Err(Error::InvalidArgument(format!("unknown split mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Token checkpoints kept for training.
    pub j: Option<usize>,
    /// Smallest models kept for training.
    pub k: Option<usize>,
    /// Joint mode only: predict every held-out-model observation, not just
    /// those beyond the training token horizon.
    #[serde(default)]
    pub include_all_heldout: bool,
}

impl SplitSpec {
    pub fn token(j: usize) -> Self {
        SplitSpec { mode: SplitMode::Token, j: Some(j), k: None, include_all_heldout: false }
    }

    pub fn model(k: usize) -> Self {
        SplitSpec { mode: SplitMode::Model, j: None, k: Some(k), include_all_heldout: false }
    }

    pub fn joint(k: usize, j: usize) -> Self {
        SplitSpec { mode: SplitMode::Joint, j: Some(j), k: Some(k), include_all_heldout: false }
    }

    pub fn validate(&self) -> Result<()> {
        let need = |v: Option<usize>, name: &str| match v {
            Some(0) => Err(Error::InvalidArgument(format!("{name} must be positive"))),
            Some(_) => Ok(()),
            None => Err(Error::InvalidArgument(format!("{:?} split requires {name}", self.mode))),
        };
        match self.mode {
            SplitMode::Token => need(self.j, "j"),
            SplitMode::Model => need(self.k, "k"),
            SplitMode::Joint => need(self.k, "k").and(need(self.j, "j")),
        }
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.mode, self.k, self.j) {
            (SplitMode::Token, _, Some(j)) => write!(f, "j={j}"),
            (SplitMode::Model, Some(k), _) => write!(f, "k={k}"),
            (SplitMode::Joint, Some(k), Some(j)) => write!(f, "k={k},j={j}"),
            _ => write!(f, "{:?}(invalid)", self.mode),
        }
    }
}

/// Three-way partition of a set: every observation lands in exactly one part.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: ObservationSet,
    pub test: ObservationSet,
    /// Joint mode only: neither trained on nor predicted.
    pub excluded: ObservationSet,
}

impl Split {
    /// Largest training token count.
    pub fn token_horizon(&self) -> Option<f64> {
        self.train.iter().map(|o| o.d_tokens).reduce(f64::max)
    }

    /// Largest training model size.
    pub fn size_horizon(&self) -> Option<f64> {
        self.train.iter().map(|o| o.n_params).reduce(f64::max)
    }
}

fn checkpoint_ranks(set: &ObservationSet) -> HashMap<&str, Vec<f64>> {
    let mut per_model: HashMap<&str, Vec<f64>> = HashMap::new();
    for o in set {
        per_model.entry(o.model_id.as_str()).or_default().push(o.d_tokens);
    }
    for ds in per_model.values_mut() {
        ds.sort_by(f64::total_cmp);
        ds.dedup();
    }
    per_model
}

fn rank_of(ranks: &HashMap<&str, Vec<f64>>, o: &Observation) -> usize {
    let ds = &ranks[o.model_id.as_str()];
    ds.partition_point(|d| *d < o.d_tokens)
}

fn smallest_sizes(set: &ObservationSet, k: usize) -> Result<f64> {
    let sizes = distinct_axis_values(set, Axis::N)?;
    if sizes.len() < k + 1 {
        return Err(Error::UnsatisfiableSplit(format!(
            "k={k} needs at least {} distinct model sizes, found {}",
            k + 1,
            sizes.len()
        )));
    }
    Ok(sizes[k - 1])
}

fn require_checkpoints<'a>(ranks: &HashMap<&'a str, Vec<f64>>, j: usize, models: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut models: Vec<&str> = models.collect();
    models.sort_unstable();
    models.dedup();
    for m in models {
        let have = ranks[m].len();
        if have < j {
            return Err(Error::UnsatisfiableSplit(format!(
                "model {m} has {have} distinct token counts, j={j} requested"
            )));
        }
    }
    Ok(())
}

pub fn make_split(set: &ObservationSet, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if set.is_empty() {
        return Err(Error::EmptySet("make_split"));
    }
    let ranks = checkpoint_ranks(set);
    // 0 = train, 1 = test, 2 = excluded
    let side: Vec<u8> = match spec.mode {
        SplitMode::Token => {
            let j = spec.j.unwrap_or_default();
            require_checkpoints(&ranks, j, set.iter().map(|o| o.model_id.as_str()))?;
            set.iter().map(|o| u8::from(rank_of(&ranks, o) >= j)).collect()
        }
        SplitMode::Model => {
            let cutoff = smallest_sizes(set, spec.k.unwrap_or_default())?;
            set.iter().map(|o| u8::from(o.n_params > cutoff)).collect()
        }
        SplitMode::Joint => {
            let j = spec.j.unwrap_or_default();
            let cutoff = smallest_sizes(set, spec.k.unwrap_or_default())?;
            require_checkpoints(
                &ranks,
                j,
                set.iter().filter(|o| o.n_params <= cutoff).map(|o| o.model_id.as_str()),
            )?;
            let in_train = |o: &Observation| o.n_params <= cutoff && rank_of(&ranks, o) < j;
            let horizon = set
                .iter()
                .filter(|o| in_train(o))
                .map(|o| o.d_tokens)
                .fold(f64::NEG_INFINITY, f64::max);
            set.iter()
                .map(|o| {
                    if in_train(o) {
                        0
                    } else if o.n_params > cutoff && (spec.include_all_heldout || o.d_tokens > horizon) {
                        1
                    } else {
                        2
                    }
                })
                .collect()
        }
    };

    let part = |which: u8| {
        let mut it = side.iter();
        set.filter(|_| *it.next().unwrap() == which)
    };
    let split = Split { train: part(0), test: part(1), excluded: part(2) };
    if split.train.is_empty() {
        return Err(Error::UnsatisfiableSplit(format!("{spec}: empty training set")));
    }
    if split.test.is_empty() {
        return Err(Error::UnsatisfiableSplit(format!("{spec}: empty test set")));
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// One fit per perturbation level.
    PerLevel,
    /// One fit across all levels with X as a covariate.
    JointX,
}

impl FitMode {
    /// X-aware laws fit jointly by default; the rest fit per level.
    pub fn default_for(law: LawId) -> FitMode {
        if law.needs_x() {
            FitMode::JointX
        } else {
            FitMode::PerLevel
        }
    }
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_level" => Ok(FitMode::PerLevel),
            "joint_x" => Ok(FitMode::JointX),
            other => Err(Error::InvalidArgument(format!("unknown fit mode `{other}`"))),
        }
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::PerLevel => "per_level",
            FitMode::JointX => "joint_x",
        })
    }
}

/// Groups by level; a set where no observation has a level is one group
/// labelled `all`.
pub fn levels_or_whole(set: &ObservationSet) -> Result<Vec<(LevelValue, ObservationSet)>> {
    if set.iter().all(|o| set.level_of(o).is_none()) {
        return Ok(vec![(LevelValue::Tag("all".into()), set.clone())]);
    }
    group_by_level(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub level: Option<LevelValue>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub level: LevelValue,
    /// `None` when the level's test targets have fewer than two points or no variance.
    pub r2: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapReport {
    pub law_id: LawId,
    pub split: SplitSpec,
    pub fit_mode: FitMode,
    pub fits: Vec<LevelFit>,
    pub pooled_r2: f64,
    pub per_level_r2: Vec<LevelScore>,
    pub train_count: usize,
    pub test_count: usize,
    pub excluded_count: usize,
}

fn score(predicted: Vec<f64>, observed: Vec<f64>) -> Result<Option<f64>> {
    if observed.len() < 2 {
        return Ok(None);
    }
    match r_squared(&EvalPairs::new(predicted, observed)?) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedVariance) => Ok(None),
        Err(e) => Err(e),
    }
}

fn predict_all(fit: &FitResult, set: &ObservationSet) -> Result<Vec<f64>> {
    set.iter()
        .map(|o| {
            fit.predict(o).map_err(|e| {
                Error::Domain(format!(
                    "prediction failed for {} at d={}: {e}",
                    o.model_id, o.d_tokens
                ))
            })
        })
        .collect()
}

/// Fit on the training side of `spec`, predict the test side, and score.
pub fn run_extrapolation(
    set: &ObservationSet,
    law: LawId,
    spec: &SplitSpec,
    config: &FitConfig,
    fit_mode: FitMode,
) -> Result<ExtrapReport> {
    let split = make_split(set, spec)?;
    evaluate_split(&split, law, spec, config, fit_mode)
}

fn evaluate_split(split: &Split, law: LawId, spec: &SplitSpec, config: &FitConfig, fit_mode: FitMode) -> Result<ExtrapReport> {
    let test_groups = levels_or_whole(&split.test)?;
    let mut fits = Vec::new();
    let mut groups = Vec::with_capacity(test_groups.len());

    match fit_mode {
        FitMode::JointX => {
            let fitted = fit(law, &split.train, config)?;
            for (level, test) in &test_groups {
                let predicted = predict_all(&fitted, test)?;
                groups.push((level.clone(), predicted, test));
            }
            fits.push(LevelFit { level: None, fit: fitted });
        }
        FitMode::PerLevel => {
            let train_groups = levels_or_whole(&split.train)?;
            for (level, test) in &test_groups {
                let train = train_groups
                    .iter()
                    .find(|(l, _)| l == level)
                    .map(|(_, g)| g)
                    .ok_or_else(|| Error::UnsatisfiableSplit(format!("level {level} has no training observations")))?;
                let fitted = fit(law, train, config)?;
                let predicted = predict_all(&fitted, test)?;
                groups.push((level.clone(), predicted, test));
                fits.push(LevelFit { level: Some(level.clone()), fit: fitted });
            }
        }
    }

    let mut per_level_r2 = Vec::with_capacity(groups.len());
    let mut pooled = Vec::with_capacity(groups.len());
    for (level, predicted, test) in groups {
        let observed: Vec<f64> = test.iter().map(|o| o.loss).collect();
        per_level_r2.push(LevelScore {
            level,
            r2: score(predicted.clone(), observed.clone())?,
            count: observed.len(),
        });
        pooled.push(EvalPairs::new(predicted, observed)?);
    }

    Ok(ExtrapReport {
        law_id: law,
        split: *spec,
        fit_mode,
        fits,
        pooled_r2: pooled_r_squared(&pooled)?,
        per_level_r2,
        train_count: split.train.len(),
        test_count: split.test.len(),
        excluded_count: split.excluded.len(),
    })
}

/// Pooled R² when every test observation is predicted by its level's training mean.
pub fn mean_predictor_pooled_r2(split: &Split) -> Result<f64> {
    let train_groups = levels_or_whole(&split.train)?;
    let mut pooled = Vec::new();
    for (level, test) in levels_or_whole(&split.test)? {
        let train = train_groups
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, g)| g)
            .ok_or_else(|| Error::UnsatisfiableSplit(format!("level {level} has no training observations")))?;
        let mean = train.iter().map(|o| o.loss).sum::<f64>() / train.len() as f64;
        let observed: Vec<f64> = test.iter().map(|o| o.loss).collect();
        pooled.push(EvalPairs::new(vec![mean; observed.len()], observed)?);
    }
    pooled_r_squared(&pooled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub pooled_r2: Option<f64>,
    pub error: Option<String>,
    pub fit_mode: FitMode,
    pub train_count: usize,
    pub test_count: usize,
    pub excluded_count: usize,
    pub per_level_r2: Vec<LevelScore>,
    pub fits: Vec<LevelFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub law_id: LawId,
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepColumn {
    pub split: SplitSpec,
    /// Largest training token count, raw units.
    pub train_token_horizon: Option<f64>,
    /// Largest training model size, raw units.
    pub train_size_horizon: Option<f64>,
    /// Held-out model sizes, raw units, ascending.
    pub predicted_sizes: Vec<f64>,
    /// Range of held-out token counts, raw units.
    pub predicted_tokens: Option<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub columns: Vec<SweepColumn>,
    pub rows: Vec<SweepRow>,
}

/// Every `(law, spec)` cell, rows in the given law order. Failures are recorded per cell.
pub fn progressive_sweep(
    set: &ObservationSet,
    laws: &[LawId],
    specs: &[SplitSpec],
    config: &FitConfig,
    fit_mode: Option<FitMode>,
) -> SweepTable {
    let splits: Vec<Result<Split>> = specs.iter().map(|s| make_split(set, s)).collect();
    let columns = specs
        .iter()
        .zip(&splits)
        .map(|(spec, split)| match split {
            Ok(split) => {
                let mut sizes = distinct_axis_values(&split.test, Axis::N).unwrap_or_default();
                sizes.dedup();
                let tokens = split.test.iter().map(|o| o.d_tokens);
                let lo = tokens.clone().fold(f64::INFINITY, f64::min);
                let hi = tokens.fold(f64::NEG_INFINITY, f64::max);
                SweepColumn {
                    split: *spec,
                    train_token_horizon: split.token_horizon(),
                    train_size_horizon: split.size_horizon(),
                    predicted_sizes: sizes,
                    predicted_tokens: Some((lo, hi)),
                    error: None,
                }
            }
            Err(e) => SweepColumn {
                split: *spec,
                train_token_horizon: None,
                train_size_horizon: None,
                predicted_sizes: Vec::new(),
                predicted_tokens: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let rows = laws
        .iter()
        .map(|&law| {
            let mode = fit_mode.unwrap_or_else(|| FitMode::default_for(law));
            let cells = specs
                .iter()
                .zip(&splits)
                .map(|(spec, split)| {
                    let outcome = split
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|split| evaluate_split(split, law, spec, config, mode).map_err(|e| e.to_string()));
                    match outcome {
                        Ok(report) => SweepCell {
                            pooled_r2: Some(report.pooled_r2),
                            error: None,
                            fit_mode: mode,
                            train_count: report.train_count,
                            test_count: report.test_count,
                            excluded_count: report.excluded_count,
                            per_level_r2: report.per_level_r2,
                            fits: report.fits,
                        },
                        Err(error) => SweepCell {
                            pooled_r2: None,
                            error: Some(error),
                            fit_mode: mode,
                            train_count: 0,
                            test_count: 0,
                            excluded_count: 0,
                            per_level_r2: Vec::new(),
                            fits: Vec::new(),
                        },
                    }
                })
                .collect();
            SweepRow { law_id: law, cells }
        })
        .collect();

    SweepTable { columns, rows }
}
