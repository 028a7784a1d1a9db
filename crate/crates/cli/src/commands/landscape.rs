use std::io::Write;

use capscale::landscape::{detect_basin, exponent_report, grid_from_fit, optimal_along_axis, AxisOptimum, BasinReport, ExponentReport, GridSpec};
use capscale::FitResult;
use serde::Serialize;

use crate::args::{ExponentsArgs, GridArgs, OptimumArgs};
use crate::failure::{CliResult, Failure};
use crate::output::{read_json, write_json, write_text, RunManifest};
use crate::report::emit;

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub spec: GridSpec,
    pub domain_errors: usize,
    /// Absent when either axis has fewer than 3 samples.
    pub basin: Option<BasinReport>,
    /// Present for capacity-law fits only.
    pub exponents: Option<ExponentReport>,
}

fn load_fit(path: &std::path::Path) -> CliResult<FitResult> {
    read_json(path, "fit_result")
}

pub fn grid(args: &GridArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let fit = load_fit(&args.fit)?;
    let spec = GridSpec {
        n_min: args.n_min,
        n_max: args.n_max,
        d_min: args.d_min,
        d_max: args.d_max,
        n_steps: args.n_steps,
        d_steps: args.d_steps,
        spacing: args.spacing,
    };
    let grid = grid_from_fit(&fit, &spec, args.x)?;
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).map_err(|e| Failure::io(&args.out, e))?;
    crate::output::write_bytes(&args.out, &csv)?;

    let basin = if args.n_steps >= 3 && args.d_steps >= 3 {
        Some(detect_basin(&grid)?)
    } else {
        None
    };
    let report = GridReport {
        spec,
        domain_errors: grid.domain_errors(),
        basin,
        exponents: exponent_report(&fit).ok(),
    };

    let mut manifest = RunManifest::new("grid", args, Some(fit.seed), !args.output.no_timestamp)?;
    manifest.input(&args.fit)?;
    manifest.output(&args.out);
    if let Some(path) = &args.report {
        write_json(path, "grid_report", &report)?;
        manifest.output(path);
    }
    manifest.write_beside(&args.out)?;

    let mut line = format!(
        "grid {}x{} for {}: {} domain errors",
        args.n_steps, args.d_steps, fit.law_id, report.domain_errors
    );
    if let Some(b) = &report.basin {
        line.push_str(&format!(
            "; min {:.6} at n={:.4e} d={:.4e}; interior basin: {}",
            b.min_value,
            b.argmin.0,
            b.argmin.1,
            if b.has_interior_minimum { "yes" } else { "no" }
        ));
    }
    line.push('\n');
    emit(stdout, &line)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimumOutput {
    pub fixed_axis: capscale::Axis,
    pub fixed_value: f64,
    pub range: (f64, f64),
    pub resolution: usize,
    pub optimum: AxisOptimum,
}

pub fn optimum(args: &OptimumArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let fit = load_fit(&args.fit)?;
    let opt = optimal_along_axis(
        &fit.law(),
        &fit.params,
        fit.normalization,
        args.fixed_axis,
        args.fixed_value,
        (args.lo, args.hi),
        args.resolution,
        args.x,
    )?;
    let out = OptimumOutput {
        fixed_axis: args.fixed_axis,
        fixed_value: args.fixed_value,
        range: (args.lo, args.hi),
        resolution: args.resolution,
        optimum: opt,
    };
    write_json(&args.out, "axis_optimum", &out)?;
    let mut manifest = RunManifest::new("optimum", args, None, !args.output.no_timestamp)?;
    manifest.input(&args.fit)?;
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    emit(
        stdout,
        &format!(
            "best at {:.6e} (loss {:.6}); slice is {}{}\n",
            opt.arg,
            opt.value,
            label(&opt.classification),
            if opt.partial { " (partial)" } else { "" }
        ),
    )
}

pub fn exponents(args: &ExponentsArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let fit = load_fit(&args.fit)?;
    let report = exponent_report(&fit)?;
    let json = crate::output::to_json("exponent_report", &report)?;
    write_text(&args.out, &json)?;
    let mut manifest = RunManifest::new("exponents", args, None, !args.output.no_timestamp)?;
    manifest.input(&args.fit)?;
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    emit(
        stdout,
        &format!(
            "alpha={} gamma={} -> {}\nbeta={} delta={} -> {}\n",
            report.alpha,
            report.gamma,
            label(&report.n_axis_verdict),
            report.beta,
            report.delta,
            label(&report.d_axis_verdict)
        ),
    )
}

/// The serde name of a unit enum variant.
fn label<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}
