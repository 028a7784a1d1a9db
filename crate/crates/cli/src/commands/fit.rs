use std::io::Write;

use capscale::{fit, LawId, LawSpec};

use crate::args::FitArgs;
use crate::failure::{CliResult, Failure};
use crate::output::{write_json, RunManifest};
use crate::report::{emit, fmt_r2};

pub fn run(args: &FitArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let set = args.data.load()?;
    let law = LawSpec::get(args.law);
    if law.needs_x && !set.has_x() {
        return Err(capscale::Error::MissingX { law: args.law }.into());
    }
    if matches!(args.law, LawId::Qid | LawId::Precision) && args.fit.x_orientation.is_none() {
        return Err(Failure::validation(format!(
            "--x-orientation (mitigating or amplifying) is required for law {}",
            args.law
        )));
    }
    let config = args.fit.config()?;
    let result = fit(args.law, &set, &config)?;

    write_json(&args.out, "fit_result", &result)?;
    let mut manifest = RunManifest::new("fit", args, Some(args.fit.seed), !args.output.no_timestamp)?;
    manifest.input(args.data.path())?;
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;

    emit(
        stdout,
        &format!(
            "{}: r2_train={} converged={} sse={:.6e} start={}\n",
            args.law,
            fmt_r2(result.r2_train),
            result.converged,
            result.sse,
            result.start_index_won
        ),
    )
}
