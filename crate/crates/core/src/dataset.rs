//! Loss observations: loading, validation, normalization, grouping.
//!
//! Rows are numbered from 1, counting data rows only (the CSV header and the
//! enclosing JSON array are not counted).

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measured test loss for a model checkpoint, optionally under a perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub model_id: String,
    /// Raw parameter count.
    pub n_params: f64,
    /// Raw training token count.
    pub d_tokens: f64,
    /// Perturbation scalar: SNR in dB, learning rate, bit width...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_level: Option<f64>,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

impl Observation {
    pub fn new(model_id: impl Into<String>, n_params: f64, d_tokens: f64, loss: f64) -> Self {
        Observation {
            model_id: model_id.into(),
            n_params,
            d_tokens,
            x_level: None,
            loss,
            source_tag: None,
        }
    }

    pub fn with_x(mut self, x: f64) -> Self {
        self.x_level = Some(x);
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = Some(tag.into());
        self
    }

    fn check(&self) -> std::result::Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be a positive finite number, got {v}"))
            }
        };
        positive("n_params", self.n_params)?;
        positive("d_tokens", self.d_tokens)?;
        positive("loss", self.loss)?;
        if let Some(x) = self.x_level {
            if !x.is_finite() {
                return Err(format!("x_level must be finite, got {x}"));
            }
        }
        Ok(())
    }

    fn key(&self) -> (String, u64, Option<u64>, Option<String>) {
        (
            self.model_id.clone(),
            self.d_tokens.to_bits(),
            self.x_level.map(f64::to_bits),
            self.source_tag.clone(),
        )
    }
}

/// Divisors applied to raw `N` and `D` before any law sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub n_scale: f64,
    pub d_scale: f64,
}

impl Normalization {
    pub const DEFAULT_SCALE: f64 = 1e9;

    pub fn new(n_scale: f64, d_scale: f64) -> Result<Self> {
        for (name, v) in [("n_scale", n_scale), ("d_scale", d_scale)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Normalization { n_scale, d_scale })
    }

    /// Identity normalization, handy when inputs are already in law units.
    pub fn identity() -> Self {
        Normalization { n_scale: 1.0, d_scale: 1.0 }
    }

    #[inline]
    pub fn n(&self, raw: f64) -> f64 {
        raw / self.n_scale
    }

    #[inline]
    pub fn d(&self, raw: f64) -> f64 {
        raw / self.d_scale
    }
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            n_scale: Self::DEFAULT_SCALE,
            d_scale: Self::DEFAULT_SCALE,
        }
    }
}

/// Which field defines perturbation groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKey {
    #[default]
    XLevel,
    SourceTag,
}

impl FromStr for LevelKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x_level" => Ok(LevelKey::XLevel),
            "source_tag" => Ok(LevelKey::SourceTag),
            other => Err(Error::InvalidArgument(format!(
                "unknown level key `{other}` (expected x_level or source_tag)"
            ))),
        }
    }
}

/// The value identifying one perturbation group.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelValue {
    X(f64),
    Tag(String),
}

impl PartialEq for LevelValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for LevelValue {}

impl PartialOrd for LevelValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LevelValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (LevelValue::X(a), LevelValue::X(b)) => a.total_cmp(b),
            (LevelValue::Tag(a), LevelValue::Tag(b)) => a.cmp(b),
            (LevelValue::X(_), LevelValue::Tag(_)) => Ordering::Less,
            (LevelValue::Tag(_), LevelValue::X(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for LevelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelValue::X(x) => write!(f, "{x}"),
            LevelValue::Tag(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    D,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Axis::N),
            "D" | "d" => Ok(Axis::D),
            other => Err(Error::InvalidArgument(format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    /// Guess from the file extension; anything that is not `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => DataFormat::Json,
            _ => DataFormat::Csv,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "json" => Ok(DataFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown data format `{other}`"))),
        }
    }
}

/// An immutable, validated collection of observations in load order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSet {
    observations: Vec<Observation>,
    normalization: Normalization,
    level_key: LevelKey,
}

impl ObservationSet {
    /// Validates every observation and rejects duplicate keys.
    pub fn new(observations: Vec<Observation>, level_key: LevelKey) -> Result<Self> {
        let mut seen: HashMap<_, usize> = HashMap::with_capacity(observations.len());
        for (i, obs) in observations.iter().enumerate() {
            let row = i + 1;
            obs.check().map_err(|message| Error::InvalidRow { row, message })?;
            if let Some(&first_row) = seen.get(&obs.key()) {
                return Err(Error::DuplicateKey { row, first_row });
            }
            seen.insert(obs.key(), row);
        }
        Ok(ObservationSet {
            observations,
            normalization: Normalization::default(),
            level_key,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn level_key(&self) -> LevelKey {
        self.level_key
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// True when every observation carries an `x_level`.
    pub fn has_x(&self) -> bool {
        self.observations.iter().all(|o| o.x_level.is_some())
    }

    /// A new set holding the observations selected by `keep`, in order.
    pub fn filter(&self, mut keep: impl FnMut(&Observation) -> bool) -> ObservationSet {
        ObservationSet {
            observations: self.observations.iter().filter(|o| keep(o)).cloned().collect(),
            normalization: self.normalization,
            level_key: self.level_key,
        }
    }

    pub fn level_of(&self, obs: &Observation) -> Option<LevelValue> {
        match self.level_key {
            LevelKey::XLevel => obs.x_level.map(LevelValue::X),
            LevelKey::SourceTag => obs.source_tag.clone().map(LevelValue::Tag),
        }
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}

pub fn load_observations(path: &Path, format: DataFormat, level_key: LevelKey) -> Result<ObservationSet> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let observations = match format {
        DataFormat::Csv => parse_csv(&text)?,
        DataFormat::Json => parse_json(&text)?,
    };
    ObservationSet::new(observations, level_key)
}

pub fn parse_csv(text: &str) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Malformed(e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| column(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let model_col = required("model_id")?;
    let n_col = required("n_params")?;
    let d_col = required("d_tokens")?;
    let loss_col = required("loss")?;
    let x_col = column("x_level");
    let tag_col = column("source_tag");

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::InvalidRow { row, message: e.to_string() })?;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let number = |col: usize, name: &str| -> Result<f64> {
            cell(col).parse::<f64>().map_err(|_| Error::InvalidRow {
                row,
                message: format!("non-numeric {name} `{}`", cell(col)),
            })
        };
        let x_level = match x_col {
            Some(c) if !cell(c).is_empty() => Some(number(c, "x_level")?),
            _ => None,
        };
        let source_tag = tag_col.map(cell).filter(|s| !s.is_empty()).map(str::to_string);
        out.push(Observation {
            model_id: cell(model_col).to_string(),
            n_params: number(n_col, "n_params")?,
            d_tokens: number(d_col, "d_tokens")?,
            x_level,
            loss: number(loss_col, "loss")?,
            source_tag,
        });
    }
    Ok(out)
}

pub fn parse_json(text: &str) -> Result<Vec<Observation>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let rows = value
        .as_array()
        .ok_or_else(|| Error::Malformed("expected a JSON array of observations".into()))?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, item) in rows.iter().enumerate() {
        let row = i + 1;
        let obj = item.as_object().ok_or_else(|| Error::InvalidRow {
            row,
            message: "expected an object".into(),
        })?;
        let number = |name: &str| -> Result<f64> {
            match obj.get(name) {
                None => Err(Error::MissingColumn(name.to_string())),
                Some(v) => v.as_f64().ok_or_else(|| Error::InvalidRow {
                    row,
                    message: format!("non-numeric {name} `{v}`"),
                }),
            }
        };
        let model_id = match obj.get("model_id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => return Err(Error::MissingColumn("model_id".into())),
        };
        let x_level = match obj.get("x_level") {
            None | Some(serde_json::Value::Null) => None,
            Some(_) => Some(number("x_level")?),
        };
        let source_tag = obj.get("source_tag").and_then(|v| v.as_str()).map(str::to_string);
        out.push(Observation {
            model_id,
            n_params: number("n_params")?,
            d_tokens: number("d_tokens")?,
            x_level,
            loss: number("loss")?,
            source_tag,
        });
    }
    Ok(out)
}

/// Partition by perturbation level, levels ascending, load order kept inside groups.
pub fn group_by_level(set: &ObservationSet) -> Result<Vec<(LevelValue, ObservationSet)>> {
    let mut groups: Vec<(LevelValue, Vec<Observation>)> = Vec::new();
    for (index, obs) in set.iter().enumerate() {
        let level = set.level_of(obs).ok_or(Error::MissingLevel { index })?;
        match groups.iter_mut().find(|(l, _)| *l == level) {
            Some((_, members)) => members.push(obs.clone()),
            None => groups.push((level, vec![obs.clone()])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(groups
        .into_iter()
        .map(|(level, observations)| {
            let subset = ObservationSet {
                observations,
                normalization: set.normalization,
                level_key: set.level_key,
            };
            (level, subset)
        })
        .collect())
}

/// Sorted unique raw values on one axis.
pub fn distinct_axis_values(set: &ObservationSet, axis: Axis) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::EmptySet("distinct_axis_values"));
    }
    let mut values: Vec<f64> = set
        .iter()
        .map(|o| match axis {
            Axis::N => o.n_params,
            Axis::D => o.d_tokens,
        })
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values)
}
