use std::io::Write;

use capscale::extrapolation::{levels_or_whole, FitMode, LevelFit};
use capscale::metrics::LevelSummary;
use capscale::{fit, r_squared, summarize_levels, Error, EvalPairs, FitConfig, LawId, LevelValue, ObservationSet, XOrientation};
use serde::Serialize;

use crate::args::{parse_law_list, CompareArgs};
use crate::failure::{CliResult, Failure};
use crate::output::{write_json, write_text, RunManifest};
use crate::report::{deltas, emit, load_reference, render_deltas, Delta};
use crate::table::{best_indices, score_cell, TextTable};

pub const AVG_COLUMN: &str = "avg";

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub r2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub law_id: LawId,
    pub fit_mode: FitMode,
    pub x_orientation: XOrientation,
    pub cells: Vec<Cell>,
    /// Mean and population std over the levels that produced a score.
    pub summary: Option<LevelSummary>,
    pub fits: Vec<LevelFit>,
    /// Cell indices holding their column's best score; `cells.len()` marks the average column.
    pub best: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub levels: Vec<LevelValue>,
    /// Level labels, plus `avg` when there is more than one level.
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub std_convention: String,
    pub reference_deltas: Vec<Delta>,
}

fn level_r2(predicted: Vec<f64>, observed: Vec<f64>) -> Cell {
    let outcome = EvalPairs::new(predicted, observed).and_then(|p| r_squared(&p));
    match outcome {
        Ok(v) => Cell { r2: Some(v), error: None },
        Err(e) => Cell { r2: None, error: Some(e.to_string()) },
    }
}

fn failed(e: &Error, count: usize) -> Vec<Cell> {
    vec![Cell { r2: None, error: Some(e.to_string()) }; count]
}

fn score_law(
    law: LawId,
    mode: FitMode,
    whole: &ObservationSet,
    groups: &[(LevelValue, ObservationSet)],
    config: &FitConfig,
) -> (Vec<Cell>, Vec<LevelFit>) {
    match mode {
        FitMode::JointX => match fit(law, whole, config) {
            Ok(result) => {
                let cells = groups
                    .iter()
                    .map(|(_, group)| {
                        let predicted: Result<Vec<f64>, Error> = group.iter().map(|o| result.predict(o)).collect();
                        match predicted {
                            Ok(p) => level_r2(p, group.iter().map(|o| o.loss).collect()),
                            Err(e) => Cell { r2: None, error: Some(e.to_string()) },
                        }
                    })
                    .collect();
                (cells, vec![LevelFit { level: None, fit: result }])
            }
            Err(e) => (failed(&e, groups.len()), Vec::new()),
        },
        FitMode::PerLevel => {
            let mut cells = Vec::with_capacity(groups.len());
            let mut fits = Vec::new();
            for (level, group) in groups {
                match fit(law, group, config) {
                    Ok(result) => {
                        cells.push(match result.r2_train {
                            Some(v) => Cell { r2: Some(v), error: None },
                            None => Cell { r2: None, error: Some(Error::UndefinedVariance.to_string()) },
                        });
                        fits.push(LevelFit { level: Some(level.clone()), fit: result });
                    }
                    Err(e) => cells.push(Cell { r2: None, error: Some(e.to_string()) }),
                }
            }
            (cells, fits)
        }
    }
}

pub fn build(args: &CompareArgs, set: &ObservationSet) -> CliResult<ComparisonTable> {
    let laws = parse_law_list(&args.laws)?;
    let config = args.fit.config()?;
    let groups = if args.group_by_level {
        levels_or_whole(set)?
    } else {
        vec![(LevelValue::Tag("all".into()), set.clone())]
    };
    let levels: Vec<LevelValue> = groups.iter().map(|(l, _)| l.clone()).collect();
    let mut columns: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
    let with_avg = levels.len() > 1;
    if with_avg {
        columns.push(AVG_COLUMN.to_string());
    }

    let mut rows = Vec::with_capacity(laws.len());
    for law in laws {
        let mode = args.fit_mode.unwrap_or_else(|| FitMode::default_for(law));
        let spec = config.resolve_law(law);
        let x_orientation = spec.as_ref().map_or(XOrientation::None, |s| s.x_orientation);
        let (cells, fits) = match spec {
            Err(e) => (failed(&e, groups.len()), Vec::new()),
            Ok(spec) if spec.needs_x && !set.has_x() => (failed(&Error::MissingX { law }, groups.len()), Vec::new()),
            Ok(_) => score_law(law, mode, set, &groups, &config),
        };
        let scored: Vec<(LevelValue, f64)> = levels
            .iter()
            .zip(&cells)
            .filter_map(|(l, c)| c.r2.map(|v| (l.clone(), v)))
            .collect();
        let summary = if scored.is_empty() { None } else { summarize_levels(&scored).ok() };
        rows.push(ComparisonRow {
            law_id: law,
            fit_mode: mode,
            x_orientation,
            cells,
            summary,
            fits,
            best: Vec::new(),
        });
    }

    for col in 0..levels.len() {
        let column: Vec<Option<f64>> = rows.iter().map(|r| r.cells[col].r2).collect();
        for i in best_indices(&column) {
            rows[i].best.push(col);
        }
    }
    if with_avg {
        let column: Vec<Option<f64>> = rows.iter().map(|r| r.summary.map(|s| s.mean)).collect();
        for i in best_indices(&column) {
            rows[i].best.push(levels.len());
        }
    }

    Ok(ComparisonTable {
        levels,
        columns,
        rows,
        std_convention: "population".into(),
        reference_deltas: Vec::new(),
    })
}

pub fn render(table: &ComparisonTable) -> String {
    let mut header = vec!["Law".to_string()];
    header.extend(table.levels.iter().map(|l| l.to_string()));
    let with_avg = table.columns.len() > table.levels.len();
    if with_avg {
        header.push("Avg ± Std".into());
    }
    let mut text = TextTable::new(header);
    for row in &table.rows {
        let mut line = vec![row.law_id.to_string()];
        for (i, cell) in row.cells.iter().enumerate() {
            line.push(score_cell(cell.r2, row.best.contains(&i)));
        }
        if with_avg {
            let mark = if row.best.contains(&table.levels.len()) { "*" } else { " " };
            line.push(match row.summary {
                Some(s) => format!("{:.3} ± {:.3}{mark}", s.mean, s.std),
                None => "n/a ".into(),
            });
        }
        text.push(line);
    }
    let mut out = text.render();
    out.push_str("* best in column; Std is the population standard deviation over levels.\n");
    out.push_str(&render_deltas(&table.reference_deltas));
    out
}

pub fn run(args: &CompareArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let set = args.data.load()?;
    let mut table = build(args, &set)?;
    if let Some(path) = &args.reference {
        let reference = load_reference(path)?;
        table.reference_deltas = deltas(&reference, &table.columns, |law, col| {
            let row = table.rows.iter().find(|r| r.law_id.as_str() == law)?;
            Some(if col < table.levels.len() {
                row.cells[col].r2
            } else {
                row.summary.map(|s| s.mean)
            })
        });
    }

    let text = render(&table);
    write_json(&args.out, "comparison", &table)?;
    let mut manifest = RunManifest::new("compare", args, Some(args.fit.seed), !args.output.no_timestamp)?;
    manifest.input(args.data.path())?;
    if let Some(path) = &args.reference {
        manifest.input(path)?;
    }
    manifest.output(&args.out);
    if let Some(path) = &args.text {
        write_text(path, &text)?;
        manifest.output(path);
    }
    manifest.note("std", "population");
    manifest.write_beside(&args.out)?;
    emit(stdout, &text)?;

    if table.rows.iter().all(|r| r.cells.iter().all(|c| c.r2.is_none())) {
        let first = table
            .rows
            .iter()
            .flat_map(|r| r.cells.iter())
            .find_map(|c| c.error.clone())
            .unwrap_or_default();
        return Err(Failure::numerical(format!("every cell failed; first error: {first}")));
    }
    Ok(())
}
