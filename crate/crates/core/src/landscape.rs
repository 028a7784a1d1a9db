//! Dense loss grids over `(N, D)`, basin detection and per-axis optima.
//!
//! A *basin* is a strict interior global minimum of the lattice: if any
//! lattice cell tied for the minimum sits on the boundary the grid has no
//! basin. Slices are classified by where their minimum sits: at the far end
//! (decreasing), at the near end (increasing) or strictly inside with both
//! ends higher (u-shaped).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Axis, Normalization};
use crate::error::{Error, Result};
use crate::fitter::FitResult;
use crate::laws::{LawId, LawSpec, ParamVector};
use crate::numeric::golden_section;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

impl std::str::FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Spacing::Log),
            "linear" => Ok(Spacing::Linear),
            other => Err(Error::InvalidArgument(format!("unknown spacing `{other}`"))),
        }
    }
}

/// Lattice over raw `N` and `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_min: f64,
    pub n_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub n_steps: usize,
    pub d_steps: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [("n", self.n_min, self.n_max), ("d", self.d_min, self.d_max)] {
            if !(lo > 0.0 && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "{name} range must satisfy 0 < min < max, got [{lo}, {hi}]"
                )));
            }
        }
        if self.n_steps < 2 || self.d_steps < 2 {
            return Err(Error::InvalidArgument("grids need at least 2 steps per axis".into()));
        }
        Ok(())
    }

    pub fn n_axis(&self) -> Vec<f64> {
        axis_samples(self.n_min, self.n_max, self.n_steps, self.spacing)
    }

    pub fn d_axis(&self) -> Vec<f64> {
        axis_samples(self.d_min, self.d_max, self.d_steps, self.spacing)
    }
}

/// `steps` samples from `lo` to `hi` inclusive; log spacing is geometric.
pub fn axis_samples(lo: f64, hi: f64, steps: usize, spacing: Spacing) -> Vec<f64> {
    let last = (steps - 1) as f64;
    (0..steps)
        .map(|i| {
            if i == 0 {
                return lo;
            }
            if i + 1 == steps {
                return hi;
            }
            let t = i as f64 / last;
            match spacing {
                Spacing::Log => 10f64.powf(lo.log10() + t * (hi.log10() - lo.log10())),
                Spacing::Linear => lo + t * (hi - lo),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrid {
    pub spec: GridSpec,
    pub law_id: LawId,
    pub params: ParamVector,
    pub normalization: Normalization,
    pub x: Option<f64>,
    pub n_axis: Vec<f64>,
    pub d_axis: Vec<f64>,
    /// `values[i][j]` is the loss at `(n_axis[i], d_axis[j])`; `None` marks a domain error.
    pub values: Vec<Vec<Option<f64>>>,
}

impl LossGrid {
    pub fn domain_errors(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// CSV with columns `n,d,loss`, row-major over N then D; error cells have an empty loss.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,d,loss")?;
        for (i, n) in self.n_axis.iter().enumerate() {
            for (j, d) in self.d_axis.iter().enumerate() {
                match self.values[i][j] {
                    Some(v) => writeln!(out, "{n:e},{d:e},{v:e}")?,
                    None => writeln!(out, "{n:e},{d:e},")?,
                }
            }
        }
        Ok(())
    }
}

/// Evaluate the law at every lattice point; inputs are divided by `normalization` first.
pub fn grid_eval(
    law: &LawSpec,
    params: &ParamVector,
    normalization: Normalization,
    spec: &GridSpec,
    x: Option<f64>,
) -> Result<LossGrid> {
    spec.validate()?;
    if law.id != params.law_id() {
        return Err(Error::InvalidParams(format!("parameters belong to {}", params.law_id())));
    }
    let n_axis = spec.n_axis();
    let d_axis = spec.d_axis();
    let values: Vec<Vec<Option<f64>>> = n_axis
        .iter()
        .map(|&n| {
            d_axis
                .iter()
                .map(|&d| law.eval(params.values(), normalization.n(n), normalization.d(d), x).ok())
                .collect()
        })
        .collect();
    if values.iter().flatten().all(Option::is_none) {
        return Err(Error::Domain("no grid point is evaluable".into()));
    }
    Ok(LossGrid {
        spec: *spec,
        law_id: law.id,
        params: params.clone(),
        normalization,
        x,
        n_axis,
        d_axis,
        values,
    })
}

/// Grid of a fitted law, using the fit's own normalization and orientation.
pub fn grid_from_fit(fit: &FitResult, spec: &GridSpec, x: Option<f64>) -> Result<LossGrid> {
    grid_eval(&fit.law(), &fit.params, fit.normalization, spec, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceShape {
    Decreasing,
    UShaped,
    Increasing,
}

/// Classify a sequence by where its minimum sits; `None` entries are skipped.
///
/// Returns the shape and whether any entry had to be skipped.
pub fn classify_slice(values: &[Option<f64>]) -> Option<(SliceShape, bool)> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    let partial = present.len() != values.len();
    let min = present.iter().copied().fold(f64::INFINITY, f64::min);
    let first = present.iter().position(|v| *v == min)?;
    let last = present.iter().rposition(|v| *v == min)?;
    let shape = if last + 1 == present.len() {
        SliceShape::Decreasing
    } else if first == 0 {
        SliceShape::Increasing
    } else {
        SliceShape::UShaped
    };
    Some((shape, partial))
}

/// Most common shape. A u-shape wins any tie it is part of; otherwise
/// decreasing beats increasing on a tie.
fn majority(shapes: &[SliceShape]) -> SliceShape {
    let count = |s| shapes.iter().filter(|x| **x == s).count();
    let (dec, u, inc) = (count(SliceShape::Decreasing), count(SliceShape::UShaped), count(SliceShape::Increasing));
    let top = dec.max(u).max(inc);
    if u == top {
        SliceShape::UShaped
    } else if dec == top {
        SliceShape::Decreasing
    } else {
        SliceShape::Increasing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub has_interior_minimum: bool,
    /// Raw `(n, d)` of the first lattice minimum in row-major order.
    pub argmin: (f64, f64),
    pub argmin_index: (usize, usize),
    pub min_value: f64,
    /// True when a lattice minimum lies on the boundary.
    pub boundary_min: bool,
    /// Majority shape along N, over slices at fixed D.
    pub monotonic_n: SliceShape,
    /// Majority shape along D, over slices at fixed N.
    pub monotonic_d: SliceShape,
    /// Slices classified from their evaluable cells only.
    pub partial_slices: usize,
}

pub fn detect_basin(grid: &LossGrid) -> Result<BasinReport> {
    let rows = grid.n_axis.len();
    let cols = grid.d_axis.len();
    if rows < 3 || cols < 3 {
        return Err(Error::InvalidArgument("basin detection needs at least 3 samples per axis".into()));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, row) in grid.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = *v {
                if best.map_or(true, |(_, _, b)| v < b) {
                    best = Some((i, j, v));
                }
            }
        }
    }
    let (bi, bj, min_value) = best.ok_or_else(|| Error::Domain("grid has no evaluable cell".into()))?;
    let on_edge = |i: usize, j: usize| i == 0 || j == 0 || i + 1 == rows || j + 1 == cols;
    let boundary_min = grid.values.iter().enumerate().any(|(i, row)| {
        row.iter()
            .enumerate()
            .any(|(j, v)| *v == Some(min_value) && on_edge(i, j))
    });

    let mut partial_slices = 0;
    let mut along_d = Vec::with_capacity(rows);
    for row in &grid.values {
        if let Some((shape, partial)) = classify_slice(row) {
            along_d.push(shape);
            partial_slices += usize::from(partial);
        }
    }
    let mut along_n = Vec::with_capacity(cols);
    for j in 0..cols {
        let column: Vec<Option<f64>> = grid.values.iter().map(|r| r[j]).collect();
        if let Some((shape, partial)) = classify_slice(&column) {
            along_n.push(shape);
            partial_slices += usize::from(partial);
        }
    }

    Ok(BasinReport {
        has_interior_minimum: !boundary_min,
        argmin: (grid.n_axis[bi], grid.d_axis[bj]),
        argmin_index: (bi, bj),
        min_value,
        boundary_min,
        monotonic_n: majority(&along_n),
        monotonic_d: majority(&along_d),
        partial_slices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisOptimum {
    /// Raw coordinate of the best point along the scanned axis.
    pub arg: f64,
    pub value: f64,
    pub classification: SliceShape,
    pub partial: bool,
}

/// Scan one axis on a log lattice with the other axis held fixed, then refine
/// the best cell by golden-section search in log space.
#[allow(clippy::too_many_arguments)]
pub fn optimal_along_axis(
    law: &LawSpec,
    params: &ParamVector,
    normalization: Normalization,
    fixed_axis: Axis,
    fixed_value: f64,
    search_range: (f64, f64),
    resolution: usize,
    x: Option<f64>,
) -> Result<AxisOptimum> {
    let (lo, hi) = search_range;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("search range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if resolution < 3 {
        return Err(Error::InvalidArgument("resolution must be at least 3".into()));
    }
    if !(fixed_value > 0.0) {
        return Err(Error::InvalidArgument("fixed value must be positive".into()));
    }
    let eval = |t: f64| -> Option<f64> {
        let (n, d) = match fixed_axis {
            Axis::N => (fixed_value, t),
            Axis::D => (t, fixed_value),
        };
        law.eval(params.values(), normalization.n(n), normalization.d(d), x).ok()
    };
    let lattice = axis_samples(lo, hi, resolution, Spacing::Log);
    let values: Vec<Option<f64>> = lattice.iter().map(|&t| eval(t)).collect();
    let (classification, partial) =
        classify_slice(&values).ok_or_else(|| Error::Domain("no point on the slice is evaluable".into()))?;
    let (best, best_value) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });

    let left = lattice[best.saturating_sub(1)].ln();
    let right = lattice[(best + 1).min(resolution - 1)].ln();
    let (log_arg, refined) = golden_section(|s| eval(s.exp()).unwrap_or(f64::INFINITY), left, right, 100);
    let (arg, value) = if refined < best_value {
        (log_arg.exp(), refined)
    } else {
        (lattice[best], best_value)
    };
    Ok(AxisOptimum { arg, value, classification, partial })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NAxisVerdict {
    /// alpha > gamma: growing the model widens capacity faster than it adds noise.
    BandwidthDominates,
    /// gamma > alpha.
    NoiseDominates,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DAxisVerdict {
    /// beta > delta.
    SignalDominates,
    /// delta > beta: more tokens eventually add more noise than signal.
    NoiseDominates,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub delta: f64,
    pub n_axis_verdict: NAxisVerdict,
    pub d_axis_verdict: DAxisVerdict,
}

pub fn exponent_report_from_params(params: &ParamVector) -> Result<ExponentReport> {
    if !params.law_id().is_shannon() {
        return Err(Error::WrongLawFamily(params.law_id()));
    }
    let get = |name| params.get(name).ok_or(Error::WrongLawFamily(params.law_id()));
    let (alpha, beta, gamma, delta) = (get("alpha")?, get("beta")?, get("gamma")?, get("delta")?);
    let n_axis_verdict = if alpha > gamma {
        NAxisVerdict::BandwidthDominates
    } else if gamma > alpha {
        NAxisVerdict::NoiseDominates
    } else {
        NAxisVerdict::Tie
    };
    let d_axis_verdict = if beta > delta {
        DAxisVerdict::SignalDominates
    } else if delta > beta {
        DAxisVerdict::NoiseDominates
    } else {
        DAxisVerdict::Tie
    };
    Ok(ExponentReport { alpha, gamma, beta, delta, n_axis_verdict, d_axis_verdict })
}

pub fn exponent_report(fit: &FitResult) -> Result<ExponentReport> {
    exponent_report_from_params(&fit.params)
}
