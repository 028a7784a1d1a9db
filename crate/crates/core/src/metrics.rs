//! Coefficient of determination and level summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions paired with their observed targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPairs {
    predicted: Vec<f64>,
    observed: Vec<f64>,
    pub group_label: Option<String>,
}

impl EvalPairs {
    pub fn new(predicted: Vec<f64>, observed: Vec<f64>) -> Result<Self> {
        if predicted.len() != observed.len() {
            return Err(Error::LengthMismatch(format!(
                "{} predictions for {} observations",
                predicted.len(),
                observed.len()
            )));
        }
        if predicted.is_empty() {
            return Err(Error::LengthMismatch("no prediction/observation pairs".into()));
        }
        if predicted.iter().chain(&observed).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction or observation".into()));
        }
        Ok(EvalPairs {
            predicted,
            observed,
            group_label: None,
        })
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.group_label = Some(label.into());
        self
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

/// `1 - SS_res / SS_tot`, with `SS_tot` taken about the mean of the observations.
///
/// Can be negative. Errors with [`Error::UndefinedVariance`] when every
/// observation is identical.
pub fn r_squared(pairs: &EvalPairs) -> Result<f64> {
    r_squared_slices(&pairs.predicted, &pairs.observed)
}

fn r_squared_slices(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if observed.len() < 2 {
        return Err(Error::LengthMismatch("R² needs at least two observations".into()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean) * (o - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (o - p) * (o - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of the single concatenation of every group, with one global mean.
pub fn pooled_r_squared(groups: &[EvalPairs]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::LengthMismatch("pooled R² needs at least one group".into()));
    }
    let predicted: Vec<f64> = groups.iter().flat_map(|g| g.predicted.iter().copied()).collect();
    let observed: Vec<f64> = groups.iter().flat_map(|g| g.observed.iter().copied()).collect();
    r_squared_slices(&predicted, &observed)
}

/// Mean and standard deviation of per-level scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub mean: f64,
    /// Population standard deviation (divides by the number of levels).
    pub std: f64,
}

pub fn summarize_levels<L>(scores: &[(L, f64)]) -> Result<LevelSummary> {
    if scores.is_empty() {
        return Err(Error::LengthMismatch("no level scores to summarize".into()));
    }
    let count = scores.len() as f64;
    let mean = scores.iter().map(|(_, s)| s).sum::<f64>() / count;
    let var = scores.iter().map(|(_, s)| (s - mean) * (s - mean)).sum::<f64>() / count;
    Ok(LevelSummary { mean, std: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(pred: &[f64], obs: &[f64]) -> EvalPairs {
        EvalPairs::new(pred.to_vec(), obs.to_vec()).unwrap()
    }

    #[test]
    fn hand_examples() {
        assert_eq!(r_squared(&pairs(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap(), 1.0);
        assert_eq!(r_squared(&pairs(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(r_squared(&pairs(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0])).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            r_squared(&pairs(&[1.0, 2.0], &[3.0, 3.0])),
            Err(Error::UndefinedVariance)
        ));
        assert!(r_squared(&pairs(&[1.0], &[1.0])).is_err());
        assert!(EvalPairs::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(EvalPairs::new(vec![], vec![]).is_err());
        assert!(EvalPairs::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(pooled_r_squared(&[]).is_err());
    }

    #[test]
    fn negative_r2_is_allowed() {
        let r2 = r_squared(&pairs(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(r2, -3.0);
    }

    #[test]
    fn pooled_examples() {
        let g = pairs(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]);
        assert_eq!(pooled_r_squared(std::slice::from_ref(&g)).unwrap(), r_squared(&g).unwrap());
        let perfect = [pairs(&[1.0, 2.0], &[1.0, 2.0]), pairs(&[5.0, 9.0], &[5.0, 9.0])];
        assert_eq!(pooled_r_squared(&perfect).unwrap(), 1.0);
        let mixed = [pairs(&[0.0, 1.0], &[0.0, 1.0]), pairs(&[11.0, 10.0], &[10.0, 11.0])];
        let r2 = pooled_r_squared(&mixed).unwrap();
        // Concatenated obs [0, 1, 10, 11]: mean 5.5, SS_tot = 2 * (5.5² + 4.5²) = 101, SS_res = 2.
        assert!((r2 - (1.0 - 2.0 / 101.0)).abs() < 1e-15);
        // Each group alone has constant-free variance, but a constant pooled target does not.
        let flat = [pairs(&[1.0], &[2.0]), pairs(&[3.0], &[2.0])];
        assert!(matches!(pooled_r_squared(&flat), Err(Error::UndefinedVariance)));
    }

    #[test]
    fn summaries() {
        let s = summarize_levels(&[(40, 0.9), (30, 0.9), (20, 0.9)]).unwrap();
        assert_eq!(s.mean, 0.9);
        assert!(s.std.abs() < 1e-15);
        assert_eq!(summarize_levels(&[(1, 1.0), (2, 0.0)]).unwrap(), LevelSummary { mean: 0.5, std: 0.5 });
        assert_eq!(summarize_levels(&[((), 0.42)]).unwrap(), LevelSummary { mean: 0.42, std: 0.0 });
        assert!(summarize_levels::<()>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn r2_bounded_and_permutation_invariant(
            data in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
            rot in 0usize..40,
        ) {
            let (pred, obs): (Vec<f64>, Vec<f64>) = data.iter().copied().unzip();
            prop_assume!(obs.iter().any(|o| *o != obs[0]));
            let r2 = r_squared(&pairs(&pred, &obs)).unwrap();
            prop_assert!(r2 <= 1.0);
            let k = rot % data.len();
            let mut rp = pred.clone();
            let mut ro = obs.clone();
            rp.rotate_left(k);
            ro.rotate_left(k);
            let rotated = r_squared(&pairs(&rp, &ro)).unwrap();
            prop_assert!((r2 - rotated).abs() <= 1e-9 * (1.0 + r2.abs()));
        }

        #[test]
        fn pooled_copies_equal_single_group(
            obs in proptest::collection::vec(-5.0f64..5.0, 2..20),
            noise in proptest::collection::vec(-0.5f64..0.5, 20),
            copies in 1usize..5,
        ) {
            prop_assume!(obs.iter().any(|o| *o != obs[0]));
            let pred: Vec<f64> = obs.iter().zip(&noise).map(|(o, e)| o + e).collect();
            let g = pairs(&pred, &obs);
            let many = vec![g.clone(); copies];
            let a = pooled_r_squared(&many).unwrap();
            let b = r_squared(&g).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn mean_predictor_scores_zero(obs in proptest::collection::vec(-5.0f64..5.0, 2..20)) {
            prop_assume!(obs.iter().any(|o| *o != obs[0]));
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            let r2 = r_squared(&pairs(&vec![mean; obs.len()], &obs)).unwrap();
            prop_assert_eq!(r2, 0.0);
        }
    }
}
