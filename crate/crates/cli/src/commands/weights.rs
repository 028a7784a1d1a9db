use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use capscale::perturb::{inject_with_mode, measure_snr, signal_power, Dtype, PowerMode};
use capscale::wvec;
use serde::Serialize;

use crate::args::{ConvertArgs, MeasureArgs, PerturbArgs};
use crate::failure::{CliResult, Failure};
use crate::output::{write_json, RunManifest};
use crate::report::emit;

pub fn report_path(args: &PerturbArgs) -> PathBuf {
    args.report.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".report.json");
        PathBuf::from(name)
    })
}

pub fn perturb(args: &PerturbArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let original = wvec::load(&args.input)?;
    let mode = match &args.segments {
        Some(lengths) => PowerMode::PerSegment(lengths.clone()),
        None => PowerMode::Global,
    };
    let (perturbed, report) = inject_with_mode(&original, args.snr_db, args.seed, &mode)?;
    wvec::save(&args.out, &perturbed)?;
    let report_path = report_path(args);
    write_json(&report_path, "perturb_report", &report)?;

    let mut manifest = RunManifest::new("perturb", args, Some(args.seed), !args.output.no_timestamp)?;
    manifest.input(&args.input)?;
    manifest.output(&args.out);
    manifest.output(&report_path);
    manifest.write_beside(&args.out)?;

    let empirical = report
        .empirical_snr_db
        .map_or_else(|| "inf".to_string(), |v| format!("{v:.4}"));
    emit(
        stdout,
        &format!(
            "perturbed {} weights: target {} dB, sigma2 {:e}, measured {empirical} dB\n",
            report.count, report.target_snr_db, report.sigma2
        ),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub count: usize,
    pub signal_power: f64,
    pub snr_db: f64,
}

pub fn measure(args: &MeasureArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let original = wvec::load(&args.original)?;
    let perturbed = wvec::load(&args.perturbed)?;
    let snr_db = measure_snr(&original, &perturbed)?;
    let m = Measurement {
        count: original.len(),
        signal_power: signal_power(&original),
        snr_db,
    };
    write_json(&args.out, "snr_measurement", &m)?;
    let mut manifest = RunManifest::new("measure", args, None, !args.output.no_timestamp)?;
    manifest.input(&args.original)?;
    manifest.input(&args.perturbed)?;
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    emit(stdout, &format!("snr {snr_db:.4} dB over {} weights\n", m.count))
}

fn is_wvec(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wvec"))
}

pub fn convert(args: &ConvertArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dtype: Dtype = args.dtype.parse()?;
    let (w, direction) = if is_wvec(&args.input) {
        let w = wvec::load(&args.input)?;
        let file = File::create(&args.output).map_err(|e| Failure::io(&args.output, e))?;
        let mut out = BufWriter::new(file);
        wvec::write_text(&mut out, &w)
            .and_then(|_| out.flush())
            .map_err(|e| Failure::io(&args.output, e))?;
        (w, "text")
    } else {
        let file = File::open(&args.input).map_err(|e| Failure::io(&args.input, e))?;
        let w = wvec::read_text(BufReader::new(file), dtype)?;
        wvec::save(&args.output, &w)?;
        (w, "wvec")
    };
    let mut manifest = RunManifest::new("convert", args, None, !args.flags.no_timestamp)?;
    manifest.input(&args.input)?;
    manifest.output(&args.output);
    manifest.write_beside(&args.output)?;
    emit(stdout, &format!("wrote {} {} weights as {direction}\n", w.len(), w.dtype()))
}
