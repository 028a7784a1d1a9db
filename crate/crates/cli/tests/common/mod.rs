#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use capscale::{predict_loss, LawId, LawSpec, ParamVector};

/// Raw units per normalized unit on both axes (the CLI default scale).
pub const SCALE: f64 = 1e9;

pub struct Grid {
    pub models: usize,
    pub checkpoints: usize,
    pub levels: Vec<Option<f64>>,
}

impl Grid {
    /// Model `i` has `0.1 * 100^(i / (models - 1))` normalized parameters;
    /// checkpoint `j` has `300^(j / (checkpoints - 1))` normalized tokens.
    pub fn points(&self) -> Vec<(usize, f64, f64, Option<f64>)> {
        let mut out = Vec::new();
        for i in 0..self.models {
            let n = 0.1 * 100f64.powf(i as f64 / (self.models - 1) as f64);
            for j in 0..self.checkpoints {
                let d = 300f64.powf(j as f64 / (self.checkpoints - 1) as f64);
                for x in &self.levels {
                    out.push((i, n, d, *x));
                }
            }
        }
        out
    }
}

pub fn synthetic_csv(law: LawId, values: &[f64], grid: &Grid) -> String {
    let spec = LawSpec::get(law);
    let params = ParamVector::new(law, values.to_vec()).unwrap();
    let mut text = String::from("model_id,n_params,d_tokens,x_level,loss\n");
    for (i, n, d, x) in grid.points() {
        let loss = predict_loss(&spec, &params, n, d, x).unwrap();
        let x = x.map_or(String::new(), |v| v.to_string());
        writeln!(text, "m{i},{:e},{:e},{x},{loss:e}", n * SCALE, d * SCALE).unwrap();
    }
    text
}

/// a, b, c, d, e, alpha, beta, gamma, delta.
pub const SHANNON: [f64; 9] = [1.2, 2.0, 0.6, 0.5, 0.3, 0.3, 0.45, 0.35, 0.25];
/// a, b, c, alpha, beta.
pub const CHINCHILLA: [f64; 5] = [0.4, 0.6, 1.7, 0.34, 0.28];

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn write_wvec_f64(path: &Path, values: &[f64]) {
    let mut bytes = b"WVEC".to_vec();
    bytes.extend([1u8, 1u8]);
    bytes.extend((values.len() as u64).to_le_bytes());
    for v in values {
        bytes.extend(v.to_le_bytes());
    }
    std::fs::write(path, bytes).unwrap();
}
