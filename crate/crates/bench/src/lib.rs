//! Fixtures shared by the benchmarks in `benches/`.

use capscale::{predict_loss, LawId, LawSpec, LevelKey, Normalization, Observation, ObservationSet, ParamVector};

/// a, b, c, d, e, alpha, beta, gamma, delta.
pub const SHANNON: [f64; 9] = [1.2, 2.0, 0.6, 0.5, 0.3, 0.3, 0.45, 0.35, 0.25];

pub fn shannon_params() -> ParamVector {
    ParamVector::new(LawId::ShannonFull, SHANNON.to_vec()).expect("positive parameters")
}

/// Noise-free observations of `law` on a `models x checkpoints` log grid,
/// normalized units, one level.
pub fn synthetic_set(law: LawId, params: &ParamVector, models: usize, checkpoints: usize) -> ObservationSet {
    let spec = LawSpec::get(law);
    let x = law.needs_x().then_some(2.0);
    let mut obs = Vec::with_capacity(models * checkpoints);
    for i in 0..models {
        let n = 0.1 * 100f64.powf(i as f64 / (models - 1) as f64);
        for j in 0..checkpoints {
            let d = 300f64.powf(j as f64 / (checkpoints - 1) as f64);
            let loss = predict_loss(&spec, params, n, d, x).expect("evaluable grid");
            let mut o = Observation::new(format!("m{i}"), n, d, loss);
            o.x_level = x;
            obs.push(o);
        }
    }
    ObservationSet::new(obs, LevelKey::XLevel)
        .expect("distinct observations")
        .with_normalization(Normalization::identity())
}
