//! SNR-calibrated additive Gaussian noise for flat weight vectors.
//!
//! The noise variance is set from the mean squared weight:
//! `sigma^2 = P_w / 10^(snr_db / 10)`, and `w~ = w + sigma * z` with `z`
//! standard normal.
//!
//! Sampling: a ChaCha20 generator (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)` and set to stream `k` for segment `k` (stream 0 in
//! global mode), feeding the ziggurat sampler of `rand_distr::StandardNormal`.
//! Each segment's draws are therefore a pure function of `(seed, k)`. `f32`
//! weights are perturbed in `f64` and rounded once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Dtype> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    /// Rounds to the storage precision.
    fn round(self, v: f64) -> f64 {
        match self {
            Dtype::F32 => v as f32 as f64,
            Dtype::F64 => v,
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        })
    }
}

impl std::str::FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::InvalidArgument(format!("unknown dtype `{other}`"))),
        }
    }
}

/// Non-empty vector of finite weights. `f32` vectors hold values exactly
/// representable in `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    dtype: Dtype,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, dtype: Dtype) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::LengthMismatch("weight vector is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight {i}")));
        }
        let values = values.into_iter().map(|v| dtype.round(v)).collect();
        Ok(WeightVector { values, dtype })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f64).collect(), Dtype::F32)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean squared weight.
pub fn signal_power(w: &WeightVector) -> f64 {
    mean_square(&w.values)
}

fn mean_square(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// `p_w / 10^(snr_db / 10)`.
pub fn noise_sigma2(p_w: f64, snr_db: f64) -> f64 {
    p_w / 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lengths")]
pub enum PowerMode {
    /// One power over the whole vector.
    #[default]
    Global,
    /// Consecutive segments of the given lengths, each calibrated to its own power.
    PerSegment(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub index: usize,
    pub offset: usize,
    pub count: usize,
    pub signal_power: f64,
    pub sigma2: f64,
    pub empirical_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub target_snr_db: f64,
    /// Power of the whole input vector.
    pub signal_power: f64,
    /// `noise_sigma2(signal_power, target_snr_db)`; in per-segment mode this
    /// equals the count-weighted mean of the segment variances.
    pub sigma2: f64,
    /// Measured on the stored (rounded) output; `None` when no weight moved.
    pub empirical_snr_db: Option<f64>,
    pub seed: u64,
    pub count: usize,
    pub dtype: Dtype,
    pub power_mode: PowerMode,
    /// Empty in global mode.
    pub segments: Vec<SegmentReport>,
}

/// Perturb with one global power.
pub fn inject(w: &WeightVector, snr_db: f64, seed: u64) -> Result<(WeightVector, PerturbReport)> {
    inject_with_mode(w, snr_db, seed, &PowerMode::Global)
}

pub fn inject_with_mode(
    w: &WeightVector,
    snr_db: f64,
    seed: u64,
    mode: &PowerMode,
) -> Result<(WeightVector, PerturbReport)> {
    if !snr_db.is_finite() {
        return Err(Error::NonFinite("target SNR".into()));
    }
    let p_w = signal_power(w);
    if p_w == 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    let lengths = match mode {
        PowerMode::Global => vec![w.len()],
        PowerMode::PerSegment(lengths) => {
            if lengths.is_empty() || lengths.contains(&0) || lengths.iter().sum::<usize>() != w.len() {
                return Err(Error::LengthMismatch(format!(
                    "segment lengths must be positive and sum to {}",
                    w.len()
                )));
            }
            lengths.clone()
        }
    };

    let mut out = Vec::with_capacity(w.len());
    let mut segments = Vec::new();
    let mut offset = 0;
    for (index, &count) in lengths.iter().enumerate() {
        let slice = &w.values[offset..offset + count];
        let power = mean_square(slice);
        if power == 0.0 {
            return Err(Error::ZeroSignalPower);
        }
        let sigma2 = noise_sigma2(power, snr_db);
        let sigma = sigma2.sqrt();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let start = out.len();
        out.extend(slice.iter().map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            w.dtype.round(v + sigma * z)
        }));
        if matches!(mode, PowerMode::PerSegment(_)) {
            segments.push(SegmentReport {
                index,
                offset,
                count,
                signal_power: power,
                sigma2,
                empirical_snr_db: finite(snr_of(slice, &out[start..])),
            });
        }
        offset += count;
    }

    let empirical_snr_db = finite(snr_of(&w.values, &out));
    let perturbed = WeightVector { values: out, dtype: w.dtype };
    let report = PerturbReport {
        target_snr_db: snr_db,
        signal_power: p_w,
        sigma2: noise_sigma2(p_w, snr_db),
        empirical_snr_db,
        seed,
        count: w.len(),
        dtype: w.dtype,
        power_mode: mode.clone(),
        segments,
    };
    Ok((perturbed, report))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// dB ratio of signal power to difference power; infinite when nothing moved.
fn snr_of(original: &[f64], perturbed: &[f64]) -> f64 {
    let diff = original.iter().zip(perturbed).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / original.len() as f64;
    10.0 * (mean_square(original) / diff).log10()
}

/// `10 log10(P_w / P_diff)`.
pub fn measure_snr(original: &WeightVector, perturbed: &WeightVector) -> Result<f64> {
    if original.len() != perturbed.len() {
        return Err(Error::LengthMismatch(format!(
            "original has {} weights, perturbed has {}",
            original.len(),
            perturbed.len()
        )));
    }
    if signal_power(original) == 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    if original.values == perturbed.values {
        return Err(Error::InfiniteSnr);
    }
    Ok(snr_of(&original.values, &perturbed.values))
}
