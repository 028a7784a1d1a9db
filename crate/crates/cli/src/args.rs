use std::path::{Path, PathBuf};

use capscale::dataset::{load_observations, DataFormat, LevelKey};
use capscale::extrapolation::{FitMode, SplitMode};
use capscale::fitter::{FitConfig, JacobianMode, ObjectiveSpace};
use capscale::landscape::Spacing;
use capscale::{Axis, LawId, Normalization, ObservationSet, XOrientation};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::failure::{CliResult, Failure};

/// Fit, compare and extrapolate scaling laws; scan loss landscapes; perturb weights.
#[derive(Debug, Parser)]
#[command(name = "capscale", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one law and write its FitResult.
    Fit(FitArgs),
    /// Fit several laws per level and tabulate R².
    Compare(CompareArgs),
    /// Score held-out extrapolation with pooled R².
    Extrapolate(ExtrapolateArgs),
    /// Evaluate a fitted law on an (N, D) lattice and export CSV.
    Grid(GridArgs),
    /// Locate the best point along one axis of a fitted law.
    Optimum(OptimumArgs),
    /// Compare bandwidth, signal and noise exponents of a fitted capacity law.
    Exponents(ExponentsArgs),
    /// Add SNR-calibrated Gaussian noise to a weight file.
    Perturb(PerturbArgs),
    /// Measure the SNR between two weight files.
    Measure(MeasureArgs),
    /// Convert between binary and text weight files.
    Convert(ConvertArgs),
}

fn parse<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr<Err = capscale::Error>,
{
    s.parse().map_err(|e: capscale::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Observation file (CSV or JSON).
    #[arg(long)]
    pub data: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Field that defines perturbation levels.
    #[arg(long, default_value = "x_level", value_parser = parse::<LevelKey>)]
    pub level_key: LevelKey,
    /// Divisor applied to parameter counts before fitting.
    #[arg(long, default_value_t = Normalization::DEFAULT_SCALE)]
    pub n_scale: f64,
    /// Divisor applied to token counts before fitting.
    #[arg(long, default_value_t = Normalization::DEFAULT_SCALE)]
    pub d_scale: f64,
}

impl DataArgs {
    pub fn load(&self) -> CliResult<ObservationSet> {
        let format = match self.format.as_deref() {
            Some(f) => f.parse::<DataFormat>()?,
            None => DataFormat::from_path(&self.data),
        };
        let norm = Normalization::new(self.n_scale, self.d_scale)?;
        Ok(load_observations(&self.data, format, self.level_key)?.with_normalization(norm))
    }

    pub fn path(&self) -> &Path {
        &self.data
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitFlags {
    /// Seed for random starts.
    #[arg(long, env = "CAPSCALE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Deterministic starts from combinations of the init values.
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    /// Coordinate values for deterministic starts.
    #[arg(long, value_delimiter = ',', default_value = "1,0.1")]
    pub init_values: Vec<f64>,
    /// Extra log-uniform random starts.
    #[arg(long, default_value_t = 8)]
    pub random_starts: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol_rel_sse: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_grad: f64,
    /// Residual space: loss or log_loss.
    #[arg(long, default_value = "loss", value_parser = parse::<ObjectiveSpace>)]
    pub objective: ObjectiveSpace,
    /// Jacobian evaluation: analytic or finite_difference.
    #[arg(long, default_value = "analytic", value_parser = parse::<JacobianMode>)]
    pub jacobian: JacobianMode,
    /// Central-difference step in log-parameter space.
    #[arg(long, default_value_t = 1e-6)]
    pub fd_step: f64,
    /// Orientation of X for the penalty laws: mitigating or amplifying.
    #[arg(long, value_parser = parse::<XOrientation>)]
    pub x_orientation: Option<XOrientation>,
}

impl FitFlags {
    pub fn config(&self) -> CliResult<FitConfig> {
        let config = FitConfig {
            starts: self.starts,
            init_values: self.init_values.clone(),
            random_starts: self.random_starts,
            seed: self.seed,
            max_iters: self.max_iters,
            tol_rel_sse: self.tol_rel_sse,
            tol_grad: self.tol_grad,
            objective_space: self.objective,
            x_orientation: self.x_orientation,
            fd_step: self.fd_step,
            jacobian: self.jacobian,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputFlags {
    /// Leave the wall-clock timestamp out of the manifest.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Law identifier, e.g. shannon_full or chinchilla.
    #[arg(long, value_parser = parse::<LawId>)]
    pub law: LawId,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Destination for the FitResult JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `all` or a comma-separated list of law identifiers.
    #[arg(long, default_value = "all")]
    pub laws: String,
    /// One column per perturbation level instead of one pooled column.
    #[arg(long)]
    pub group_by_level: bool,
    /// per_level or joint_x; defaults to joint_x for X-aware laws.
    #[arg(long, value_parser = parse::<FitMode>)]
    pub fit_mode: Option<FitMode>,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Reference scores (`{law: {column: r2}}`) to report deltas against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Destination for the comparison JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the text table here.
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtrapolateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// token, model or joint.
    #[arg(long, value_parser = parse::<SplitMode>)]
    pub mode: SplitMode,
    /// Training checkpoints per model; a list gives one column each.
    #[arg(long, value_delimiter = ',')]
    pub j: Vec<usize>,
    /// Smallest models kept for training; a list gives one column each.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Joint mode: predict every held-out observation, not only those past the token horizon.
    #[arg(long)]
    pub include_all_heldout: bool,
    #[arg(long, default_value = "all")]
    pub laws: String,
    #[arg(long, value_parser = parse::<FitMode>)]
    pub fit_mode: Option<FitMode>,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// FitResult JSON written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub n_min: f64,
    #[arg(long)]
    pub n_max: f64,
    #[arg(long)]
    pub d_min: f64,
    #[arg(long)]
    pub d_max: f64,
    #[arg(long, default_value_t = 50)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 50)]
    pub d_steps: usize,
    /// log or linear.
    #[arg(long, default_value = "log", value_parser = parse::<Spacing>)]
    pub spacing: Spacing,
    /// Perturbation level for X-aware laws.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    /// Destination for the grid CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the basin (and, for capacity laws, exponent) report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimumArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// The axis held fixed: n or d.
    #[arg(long, value_parser = parse::<Axis>)]
    pub fixed_axis: Axis,
    /// Raw value of the fixed axis.
    #[arg(long)]
    pub fixed_value: f64,
    /// Lower end of the scanned axis, raw units.
    #[arg(long)]
    pub lo: f64,
    /// Upper end of the scanned axis, raw units.
    #[arg(long)]
    pub hi: f64,
    #[arg(long, default_value_t = 101)]
    pub resolution: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExponentsArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    /// Input weight file (WVEC).
    #[arg(long)]
    pub input: PathBuf,
    /// Target SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: f64,
    #[arg(long, env = "CAPSCALE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Calibrate consecutive segments of these lengths separately.
    #[arg(long, value_delimiter = ',')]
    pub segments: Option<Vec<usize>>,
    /// Destination for the perturbed WVEC file.
    #[arg(long)]
    pub out: PathBuf,
    /// PerturbReport destination; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeasureArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub perturbed: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvertArgs {
    /// A `.wvec` file converts to text; anything else is read as text.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Element type when writing WVEC from text: f32 or f64.
    #[arg(long, default_value = "f64", value_parser = ["f32", "f64"])]
    pub dtype: String,
    #[command(flatten)]
    pub flags: OutputFlags,
}

/// `all` expands to registry order; explicit lists are reordered to registry order.
pub fn parse_law_list(spec: &str) -> CliResult<Vec<LawId>> {
    if spec.trim() == "all" {
        return Ok(LawId::ALL.to_vec());
    }
    let mut requested = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        requested.push(item.parse::<LawId>()?);
    }
    if requested.is_empty() {
        return Err(Failure::validation("--laws names no law"));
    }
    Ok(LawId::ALL.into_iter().filter(|id| requested.contains(id)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn law_lists_follow_registry_order() {
        assert_eq!(parse_law_list("openai,shannon_full").unwrap(), [LawId::ShannonFull, LawId::OpenAi]);
        assert_eq!(parse_law_list("all").unwrap().len(), 10);
        assert!(parse_law_list("nope").is_err());
        assert!(parse_law_list(",").is_err());
    }
}
