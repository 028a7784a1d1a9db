use std::io::Write;

use capscale::extrapolation::{make_split, progressive_sweep, SplitMode, SplitSpec, SweepTable};
use serde::Serialize;

use crate::args::{parse_law_list, ExtrapolateArgs};
use crate::failure::{CliResult, Failure};
use crate::output::{write_json, write_text, RunManifest};
use crate::report::{deltas, emit, load_reference, render_deltas, Delta};
use crate::table::{best_indices, score_cell, TextTable};

#[derive(Debug, Clone, Serialize)]
pub struct ExtrapolationOutput {
    pub mode: SplitMode,
    /// Column labels such as `k=5,j=12`.
    pub labels: Vec<String>,
    pub table: SweepTable,
    pub reference_deltas: Vec<Delta>,
}

/// One spec per column. Joint mode pairs `k` and `j` element-wise; a single
/// value on either side is broadcast.
pub fn split_specs(args: &ExtrapolateArgs) -> CliResult<Vec<SplitSpec>> {
    let specs: Vec<SplitSpec> = match args.mode {
        SplitMode::Token => {
            if args.j.is_empty() {
                return Err(Failure::validation("--mode token requires --j"));
            }
            args.j.iter().map(|&j| SplitSpec::token(j)).collect()
        }
        SplitMode::Model => {
            if args.k.is_empty() {
                return Err(Failure::validation("--mode model requires --k"));
            }
            args.k.iter().map(|&k| SplitSpec::model(k)).collect()
        }
        SplitMode::Joint => {
            let (ks, js) = (&args.k, &args.j);
            if ks.is_empty() || js.is_empty() {
                return Err(Failure::validation("--mode joint requires both --k and --j"));
            }
            let width = ks.len().max(js.len());
            if (ks.len() != width && ks.len() != 1) || (js.len() != width && js.len() != 1) {
                return Err(Failure::validation("--k and --j lists must have equal length, or one of them a single value"));
            }
            (0..width)
                .map(|i| SplitSpec::joint(ks[i.min(ks.len() - 1)], js[i.min(js.len() - 1)]))
                .collect()
        }
    };
    specs
        .into_iter()
        .map(|mut s| {
            s.include_all_heldout = args.include_all_heldout && s.mode == SplitMode::Joint;
            s.validate()?;
            Ok(s)
        })
        .collect()
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn render(out: &ExtrapolationOutput) -> String {
    let mut header = vec!["Law".to_string()];
    header.extend(out.labels.iter().cloned());
    let mut text = TextTable::new(header);
    let mut best = vec![Vec::new(); out.labels.len()];
    for (col, slot) in best.iter_mut().enumerate() {
        let column: Vec<Option<f64>> = out.table.rows.iter().map(|r| r.cells[col].pooled_r2).collect();
        *slot = best_indices(&column);
    }
    for (i, row) in out.table.rows.iter().enumerate() {
        let mut line = vec![row.law_id.to_string()];
        for (col, cell) in row.cells.iter().enumerate() {
            line.push(score_cell(cell.pooled_r2, best[col].contains(&i)));
        }
        text.push(line);
    }
    let mut s = text.render();
    s.push_str("* best in column; cells are pooled R² over every held-out level.\n");
    for (label, column) in out.labels.iter().zip(&out.table.columns) {
        if let Some(err) = &column.error {
            s.push_str(&format!("{label}: {err}\n"));
            continue;
        }
        let train_d = column.train_token_horizon.map_or("-".into(), sci);
        let train_n = column.train_size_horizon.map_or("-".into(), sci);
        let sizes: Vec<String> = column.predicted_sizes.iter().map(|v| sci(*v)).collect();
        let tokens = column
            .predicted_tokens
            .map_or("-".into(), |(lo, hi)| format!("{}..{}", sci(lo), sci(hi)));
        s.push_str(&format!(
            "{label}: train N<={train_n} D<={train_d}; predict N in {{{}}} D in {tokens}\n",
            sizes.join(", ")
        ));
    }
    s.push_str(&render_deltas(&out.reference_deltas));
    s
}

pub fn run(args: &ExtrapolateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let set = args.data.load()?;
    let laws = parse_law_list(&args.laws)?;
    let config = args.fit.config()?;
    let specs = split_specs(args)?;
    for spec in &specs {
        make_split(&set, spec)?;
    }

    let table = progressive_sweep(&set, &laws, &specs, &config, args.fit_mode);
    let columns: Vec<String> = specs.iter().map(|s| s.to_string()).collect();
    let mut out = ExtrapolationOutput {
        mode: args.mode,
        labels: columns,
        table,
        reference_deltas: Vec::new(),
    };
    if let Some(path) = &args.reference {
        let reference = load_reference(path)?;
        out.reference_deltas = deltas(&reference, &out.labels, |law, col| {
            let row = out.table.rows.iter().find(|r| r.law_id.as_str() == law)?;
            Some(row.cells[col].pooled_r2)
        });
    }

    let text = render(&out);
    write_json(&args.out, "extrapolation", &out)?;
    let mut manifest = RunManifest::new("extrapolate", args, Some(args.fit.seed), !args.output.no_timestamp)?;
    manifest.input(args.data.path())?;
    if let Some(path) = &args.reference {
        manifest.input(path)?;
    }
    manifest.output(&args.out);
    if let Some(path) = &args.text {
        write_text(path, &text)?;
        manifest.output(path);
    }
    manifest.write_beside(&args.out)?;
    emit(stdout, &text)?;

    let cells = out.table.rows.iter().flat_map(|r| &r.cells);
    if cells.clone().all(|c| c.pooled_r2.is_none()) {
        let first = cells.filter_map(|c| c.error.clone()).next().unwrap_or_default();
        return Err(Failure::numerical(format!("every cell failed; first error: {first}")));
    }
    Ok(())
}
