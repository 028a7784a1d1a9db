//! Multistart nonlinear least squares for the registered laws.
//!
//! Parameters are optimized in log coordinates `u = ln(theta)`, so every fitted
//! constant is positive by construction. Each start runs a Levenberg-Marquardt
//! iteration with Marquardt diagonal scaling. Jacobians are closed-form by
//! default; [`JacobianMode::FiniteDifference`] switches to central differences.
//!
//! Start order is fixed: first the lexicographic enumeration of `init_values`
//! over all coordinates (first parameter varies slowest), capped at `starts`;
//! if `starts` exceeds the number of combinations, the remainder and then
//! `random_starts` more are drawn log-uniformly from `[1e-3, 1e2]` using
//! ChaCha8 seeded with `seed`. The winner is the lowest final SSE, ties going to
//! the lowest start index.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Normalization, Observation, ObservationSet};
use crate::error::{Error, Result};
use crate::laws::{LawId, LawSpec, ParamVector, XOrientation};
use crate::metrics::{r_squared, EvalPairs};
use crate::numeric::central_jacobian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSpace {
    #[default]
    Loss,
    LogLoss,
}

impl FromStr for ObjectiveSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(ObjectiveSpace::Loss),
            "log_loss" => Ok(ObjectiveSpace::LogLoss),
            other => Err(Error::InvalidArgument(format!("unknown objective space `{other}`"))),
        }
    }
}

impl fmt::Display for ObjectiveSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveSpace::Loss => "loss",
            ObjectiveSpace::LogLoss => "log_loss",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

impl FromStr for JacobianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(JacobianMode::Analytic),
            "finite_difference" | "fd" => Ok(JacobianMode::FiniteDifference),
            other => Err(Error::InvalidArgument(format!("unknown jacobian mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of deterministic starts drawn from `init_values` combinations.
    pub starts: usize,
    pub init_values: Vec<f64>,
    /// Extra log-uniform random starts.
    pub random_starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol_rel_sse: f64,
    pub tol_grad: f64,
    pub objective_space: ObjectiveSpace,
    pub x_orientation: Option<XOrientation>,
    /// Central-difference step in log-parameter space.
    pub fd_step: f64,
    #[serde(default)]
    pub jacobian: JacobianMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 16,
            init_values: vec![1.0, 0.1],
            random_starts: 8,
            seed: 0,
            max_iters: 10_000,
            tol_rel_sse: 1e-12,
            tol_grad: 1e-10,
            objective_space: ObjectiveSpace::Loss,
            x_orientation: None,
            fd_step: 1e-6,
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.starts == 0 {
            return bad("starts must be at least 1");
        }
        if self.init_values.is_empty() || self.init_values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("init_values must be a non-empty list of positive numbers");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.tol_rel_sse > 0.0 && self.tol_grad > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.fd_step > 0.0 && self.fd_step <= 1e-2) {
            return bad("fd_step must lie in (0, 1e-2]");
        }
        Ok(())
    }

    /// The law with this config's orientation override applied.
    pub fn resolve_law(&self, law: LawId) -> Result<LawSpec> {
        let spec = LawSpec::get(law);
        match self.x_orientation {
            Some(o) if spec.needs_x => spec.with_orientation(o),
            _ => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub law_id: LawId,
    pub x_orientation: XOrientation,
    pub params: ParamVector,
    pub normalization: Normalization,
    pub sse: f64,
    /// `None` when the training losses have zero variance.
    pub r2_train: Option<f64>,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations_used: usize,
    pub start_index_won: usize,
    pub starts_tried: usize,
    pub seed: u64,
    pub objective_space: ObjectiveSpace,
}

impl FitResult {
    pub fn law(&self) -> LawSpec {
        LawSpec {
            x_orientation: self.x_orientation,
            ..LawSpec::get(self.law_id)
        }
    }

    /// Predicted loss at raw (unnormalized) inputs.
    pub fn predict_raw(&self, n_params: f64, d_tokens: f64, x: Option<f64>) -> Result<f64> {
        let n = self.normalization.n(n_params);
        let d = self.normalization.d(d_tokens);
        Ok(self.law().eval(self.params.values(), n, d, x)?)
    }

    pub fn predict(&self, obs: &Observation) -> Result<f64> {
        self.predict_raw(obs.n_params, obs.d_tokens, obs.x_level)
    }
}

/// Outcome of one local solve, in log coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub log_params: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SSE after every accepted step, starting with the initial SSE.
    pub sse_trace: Vec<f64>,
}

impl LocalSolution {
    pub fn params(&self, law: LawId) -> Result<ParamVector> {
        ParamVector::new(law, self.log_params.iter().map(|u| u.exp()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub index: usize,
    pub kind: StartKind,
    pub start: Vec<f64>,
    /// `None` when the start itself was not evaluable.
    pub solution: Option<LocalSolution>,
}

/// A residual vector over log-parameters.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Writes residuals into `out`; returns false when `u` is not evaluable.
    fn residuals(&self, u: &[f64], out: &mut [f64]) -> bool;

    /// `m x p` Jacobian of the residuals; central differences unless overridden.
    fn jacobian(&self, u: &[f64], fd_step: f64) -> Option<DMatrix<f64>> {
        central_jacobian(|u, out| self.residuals(u, out), u, self.n_residuals(), fd_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iters: usize,
    pub tol_rel_sse: f64,
    pub tol_grad: f64,
    pub fd_step: f64,
}

impl From<&FitConfig> for LmOptions {
    fn from(c: &FitConfig) -> Self {
        LmOptions {
            max_iters: c.max_iters,
            tol_rel_sse: c.tol_rel_sse,
            tol_grad: c.tol_grad,
            fd_step: c.fd_step,
        }
    }
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;
const MAX_LOG_STEP: f64 = 10.0;

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg-Marquardt on an arbitrary problem.
///
/// Accepted steps never increase the SSE; the damping shrinks tenfold after an
/// accepted step and grows tenfold after a rejected one. Stops when the
/// gradient `J^T r` falls below `tol_grad` (sup norm), when an accepted step
/// improves SSE by less than `tol_rel_sse` relative, when SSE reaches zero, when
/// no damping level yields descent, or after `max_iters` iterations.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(problem: &P, start: &[f64], opts: &LmOptions) -> Result<LocalSolution> {
    let p = problem.n_params();
    let m = problem.n_residuals();
    if start.len() != p || start.iter().any(|u| !u.is_finite()) {
        return Err(Error::NonFinite("start point".into()));
    }
    let mut u = start.to_vec();
    let mut r = vec![0.0; m];
    if !problem.residuals(&u, &mut r) || r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residuals at the start point".into()));
    }
    let mut sse = sum_sq(&r);
    let mut trace = vec![sse];
    let mut lambda = LAMBDA_INIT;
    let mut trial = vec![0.0; p];
    let mut trial_r = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        if sse == 0.0 {
            converged = true;
            break;
        }
        let Some(jac) = problem.jacobian(&u, opts.fd_step) else {
            break;
        };
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        if grad.amax() <= opts.tol_grad {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = jac.tr_mul(&jac);
        let diag_floor = jtj.diagonal().amax().max(f64::MIN_POSITIVE) * 1e-12;

        let mut accepted = None;
        while lambda <= LAMBDA_MAX {
            let mut a: DMatrix<f64> = jtj.clone();
            for i in 0..p {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&grad)));
            let Some(mut step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                lambda *= 10.0;
                continue;
            };
            let biggest = step.amax();
            if biggest > MAX_LOG_STEP {
                step *= MAX_LOG_STEP / biggest;
            }
            for i in 0..p {
                trial[i] = u[i] + step[i];
            }
            let new_sse = if problem.residuals(&trial, &mut trial_r) {
                sum_sq(&trial_r)
            } else {
                f64::INFINITY
            };
            if new_sse.is_finite() && new_sse <= sse {
                accepted = Some(new_sse);
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                break;
            }
            lambda *= 10.0;
        }

        let Some(new_sse) = accepted else {
            // No damping level descends: a numerical stationary point.
            converged = true;
            break;
        };
        let improvement = sse - new_sse;
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut r, &mut trial_r);
        let old_sse = sse;
        sse = new_sse;
        trace.push(sse);
        if improvement <= opts.tol_rel_sse * old_sse {
            converged = true;
            break;
        }
    }

    Ok(LocalSolution {
        log_params: u,
        sse,
        iterations,
        converged,
        sse_trace: trace,
    })
}

struct LawProblem<'a> {
    law: &'a LawSpec,
    points: Vec<(f64, f64, Option<f64>, f64)>,
    objective: ObjectiveSpace,
    mode: JacobianMode,
    theta: std::cell::RefCell<Vec<f64>>,
}

impl<'a> LawProblem<'a> {
    fn new(law: &'a LawSpec, data: &ObservationSet, objective: ObjectiveSpace, mode: JacobianMode) -> Self {
        let norm = data.normalization();
        LawProblem {
            law,
            points: data
                .iter()
                .map(|o| (norm.n(o.n_params), norm.d(o.d_tokens), o.x_level, o.loss))
                .collect(),
            objective,
            mode,
            theta: std::cell::RefCell::new(vec![0.0; law.n_params()]),
        }
    }
}

impl LeastSquaresProblem for LawProblem<'_> {
    fn n_params(&self) -> usize {
        self.law.n_params()
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, u: &[f64], out: &mut [f64]) -> bool {
        let mut theta = self.theta.borrow_mut();
        for (t, ui) in theta.iter_mut().zip(u) {
            *t = ui.exp();
            if !(t.is_finite() && *t > 0.0) {
                return false;
            }
        }
        for (&(n, d, x, loss), slot) in self.points.iter().zip(out.iter_mut()) {
            let Ok(pred) = self.law.eval(&theta, n, d, x) else {
                return false;
            };
            *slot = match self.objective {
                ObjectiveSpace::Loss => pred - loss,
                ObjectiveSpace::LogLoss => pred.ln() - loss.ln(),
            };
        }
        true
    }

    fn jacobian(&self, u: &[f64], fd_step: f64) -> Option<DMatrix<f64>> {
        if self.mode == JacobianMode::FiniteDifference {
            return central_jacobian(|u, out| self.residuals(u, out), u, self.points.len(), fd_step);
        }
        let theta: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let p = theta.len();
        let mut grad = vec![0.0; p];
        let mut jac = DMatrix::zeros(self.points.len(), p);
        for (row, &(n, d, x, _)) in self.points.iter().enumerate() {
            let pred = self.law.eval_log_grad(&theta, n, d, x, &mut grad).ok()?;
            let scale = match self.objective {
                ObjectiveSpace::Loss => 1.0,
                ObjectiveSpace::LogLoss => 1.0 / pred,
            };
            for (k, g) in grad.iter().enumerate() {
                jac[(row, k)] = g * scale;
            }
        }
        Some(jac)
    }
}

/// Per-observation `predicted - observed`, in raw or log-loss space, in data order.
pub fn residuals(law: &LawSpec, params: &ParamVector, data: &ObservationSet, objective: ObjectiveSpace) -> Result<Vec<f64>> {
    if law.id != params.law_id() {
        return Err(Error::InvalidParams(format!("parameters belong to {}", params.law_id())));
    }
    let norm = data.normalization();
    data.iter()
        .enumerate()
        .map(|(i, o)| {
            let pred = law
                .eval(params.values(), norm.n(o.n_params), norm.d(o.d_tokens), o.x_level)
                .map_err(|e| Error::Domain(format!("observation {}: {e}", i + 1)))?;
            Ok(match objective {
                ObjectiveSpace::Loss => pred - o.loss,
                ObjectiveSpace::LogLoss => pred.ln() - o.loss.ln(),
            })
        })
        .collect()
}

fn check_fit_inputs(law: &LawSpec, data: &ObservationSet) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptySet("fit"));
    }
    if law.needs_x && !data.has_x() {
        return Err(Error::MissingX { law: law.id });
    }
    if data.len() < law.n_params() {
        return Err(Error::InsufficientObservations {
            law: law.id,
            needed: law.n_params(),
            got: data.len(),
        });
    }
    Ok(())
}

/// One local least-squares run from `start` (log coordinates).
pub fn local_solve(law: &LawSpec, data: &ObservationSet, start: &[f64], config: &FitConfig) -> Result<LocalSolution> {
    config.validate()?;
    check_fit_inputs(law, data)?;
    if start.len() != law.n_params() {
        return Err(Error::InvalidParams(format!(
            "start has {} coordinates, {} expects {}",
            start.len(),
            law.id,
            law.n_params()
        )));
    }
    let problem = LawProblem::new(law, data, config.objective_space, config.jacobian);
    levenberg_marquardt(&problem, start, &LmOptions::from(config))
}

/// The full start list in log coordinates, in the documented order.
pub fn start_points(law: &LawSpec, config: &FitConfig) -> Vec<(StartKind, Vec<f64>)> {
    let p = law.n_params();
    let m = config.init_values.len();
    let combos = (m as f64).powi(p as i32);
    let grid_count = if combos < config.starts as f64 { combos as usize } else { config.starts };
    let logs: Vec<f64> = config.init_values.iter().map(|v| v.ln()).collect();

    let mut out = Vec::with_capacity(config.starts + config.random_starts);
    for k in 0..grid_count {
        let mut digits = vec![0.0; p];
        let mut rest = k;
        for slot in digits.iter_mut().rev() {
            *slot = logs[rest % m];
            rest /= m;
        }
        out.push((StartKind::Grid, digits));
    }
    let random = (config.starts - grid_count) + config.random_starts;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = (1e-3f64.ln(), 1e2f64.ln());
    for _ in 0..random {
        out.push((StartKind::Random, (0..p).map(|_| rng.gen_range(lo..hi)).collect()));
    }
    out
}

/// Fit `law` to `data`; see the module docs for the start protocol.
pub fn fit(law: LawId, data: &ObservationSet, config: &FitConfig) -> Result<FitResult> {
    fit_with_starts(law, data, config).map(|(result, _)| result)
}

/// [`fit`] plus the outcome of every individual start.
pub fn fit_with_starts(law: LawId, data: &ObservationSet, config: &FitConfig) -> Result<(FitResult, Vec<StartOutcome>)> {
    config.validate()?;
    let spec = config.resolve_law(law)?;
    check_fit_inputs(&spec, data)?;
    let problem = LawProblem::new(&spec, data, config.objective_space, config.jacobian);
    let opts = LmOptions::from(config);

    let outcomes: Vec<StartOutcome> = start_points(&spec, config)
        .into_iter()
        .enumerate()
        .map(|(index, (kind, start))| {
            let solution = levenberg_marquardt(&problem, &start, &opts)
                .ok()
                .filter(|s| s.sse.is_finite());
            StartOutcome {
                index,
                kind,
                start,
                solution,
            }
        })
        .collect();

    let winner = outcomes
        .iter()
        .filter_map(|o| o.solution.as_ref().map(|s| (o.index, s)))
        .fold(None::<(usize, &LocalSolution)>, |best, (i, s)| match best {
            Some((_, b)) if b.sse <= s.sse => best,
            _ => Some((i, s)),
        })
        .ok_or(Error::AllStartsDiverged(law))?;

    let (start_index_won, solution) = winner;
    let params = solution.params(law)?;
    let observed: Vec<f64> = data.iter().map(|o| o.loss).collect();
    let norm = data.normalization();
    let predicted = data
        .iter()
        .map(|o| spec.eval(params.values(), norm.n(o.n_params), norm.d(o.d_tokens), o.x_level))
        .collect::<Result<Vec<_>, _>>()?;
    let r2_train = if observed.len() < 2 {
        None
    } else {
        match r_squared(&EvalPairs::new(predicted, observed)?) {
            Ok(v) => Some(v),
            Err(Error::UndefinedVariance) => None,
            Err(e) => return Err(e),
        }
    };
    let sse = solution.sse;
    let result = FitResult {
        law_id: law,
        x_orientation: spec.x_orientation,
        params,
        normalization: norm,
        sse,
        r2_train,
        n_obs: data.len(),
        converged: solution.converged,
        iterations_used: solution.iterations,
        start_index_won,
        starts_tried: outcomes.len(),
        seed: config.seed,
        objective_space: config.objective_space,
    };
    Ok((result, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LevelKey, Observation};

    struct Linear {
        a: DMatrix<f64>,
        y: DVector<f64>,
    }

    impl LeastSquaresProblem for Linear {
        fn n_params(&self) -> usize {
            self.a.ncols()
        }
        fn n_residuals(&self) -> usize {
            self.a.nrows()
        }
        fn residuals(&self, u: &[f64], out: &mut [f64]) -> bool {
            let r = &self.a * DVector::from_column_slice(u) - &self.y;
            out.copy_from_slice(r.as_slice());
            true
        }
    }

    fn opts() -> LmOptions {
        LmOptions::from(&FitConfig::default())
    }

    #[test]
    fn linear_problem_converges_fast() {
        let a = DMatrix::from_fn(12, 3, |i, j| ((i + 1) as f64).powi(j as i32) / 10f64.powi(j as i32));
        let truth = DVector::from_column_slice(&[0.7, -1.3, 2.1]);
        let y = &a * &truth;
        // Closed-form least-squares solution is `truth` itself (consistent system).
        let sol = levenberg_marquardt(&Linear { a, y }, &[0.0, 0.0, 0.0], &opts()).unwrap();
        assert!(sol.iterations <= 5, "{} iterations", sol.iterations);
        assert!(sol.sse <= 1e-18, "sse {}", sol.sse);
        for (u, t) in sol.log_params.iter().zip(truth.iter()) {
            assert!((u - t).abs() < 1e-8);
        }
    }

    #[test]
    fn optimal_start_stays_put() {
        let a = DMatrix::from_fn(5, 2, |i, j| (i * (j + 1)) as f64 + 1.0);
        let y = &a * DVector::from_column_slice(&[0.5, 0.25]);
        let sol = levenberg_marquardt(&Linear { a, y }, &[0.5, 0.25], &opts()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        assert_eq!(sol.sse, sol.sse_trace[0]);
    }

    fn chinchilla_grid() -> ObservationSet {
        let p = ParamVector::new(LawId::Chinchilla, vec![2.0, 3.0, 1.0, 0.5, 0.5]).unwrap();
        let law = LawSpec::get(LawId::Chinchilla);
        let mut obs = Vec::new();
        for i in 0..6 {
            let n = 0.1 * 10f64.powf(i as f64 * 2.0 / 5.0);
            for j in 0..8 {
                let d = 10f64.powf(j as f64 * 2.5 / 7.0);
                let loss = crate::laws::predict_loss(&law, &p, n, d, None).unwrap();
                obs.push(Observation::new(format!("m{i}"), n, d, loss));
            }
        }
        ObservationSet::new(obs, LevelKey::XLevel)
            .unwrap()
            .with_normalization(Normalization::identity())
    }

    #[test]
    fn recovers_chinchilla_predictions() {
        let data = chinchilla_grid();
        for jacobian in [JacobianMode::Analytic, JacobianMode::FiniteDifference] {
            let config = FitConfig { jacobian, ..FitConfig::default() };
            let fit = fit(LawId::Chinchilla, &data, &config).unwrap();
            assert!(fit.r2_train.unwrap() >= 1.0 - 1e-9);
            for o in &data {
                let pred = fit.predict(o).unwrap();
                assert!((pred - o.loss).abs() / o.loss <= 1e-6);
            }
            assert!(fit.params.values().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let data = chinchilla_grid();
        for law_id in [LawId::ShannonFull, LawId::OpenAi, LawId::Asymmetric] {
            let law = LawSpec::get(law_id);
            let u: Vec<f64> = (0..law.n_params()).map(|k| (0.2 + 0.1 * k as f64).ln()).collect();
            for objective in [ObjectiveSpace::Loss, ObjectiveSpace::LogLoss] {
                let exact = LawProblem::new(&law, &data, objective, JacobianMode::Analytic).jacobian(&u, 1e-6).unwrap();
                let fd = LawProblem::new(&law, &data, objective, JacobianMode::FiniteDifference)
                    .jacobian(&u, 1e-6)
                    .unwrap();
                let scale = exact.amax();
                assert!((exact - fd).amax() <= 1e-6 * scale, "{law_id} {objective}");
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = chinchilla_grid();
        let config = FitConfig { seed: 42, random_starts: 3, ..FitConfig::default() };
        let a = serde_json::to_string(&fit(LawId::OpenAi, &data, &config).unwrap()).unwrap();
        let b = serde_json::to_string(&fit(LawId::OpenAi, &data, &config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multistart_picks_the_best_start() {
        let data = chinchilla_grid();
        let config = FitConfig { random_starts: 4, max_iters: 30, ..FitConfig::default() };
        let (result, outcomes) = fit_with_starts(LawId::Symmetric, &data, &config).unwrap();
        let best = outcomes
            .iter()
            .filter_map(|o| o.solution.as_ref().map(|s| s.sse))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(result.sse, best);
        assert_eq!(outcomes[result.start_index_won].solution.as_ref().unwrap().sse, best);
        for o in &outcomes {
            if let Some(s) = &o.solution {
                assert!(s.sse_trace.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn max_iters_one_does_not_increase_sse() {
        let data = chinchilla_grid();
        let config = FitConfig { max_iters: 1, ..FitConfig::default() };
        let law = LawSpec::get(LawId::ShannonFull);
        let start = vec![0.0; 9];
        let sol = local_solve(&law, &data, &start, &config).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.sse <= sol.sse_trace[0]);
    }

    #[test]
    fn seed_only_moves_random_starts() {
        let law = LawSpec::get(LawId::ShannonFull);
        let a = start_points(&law, &FitConfig { seed: 1, random_starts: 2, ..FitConfig::default() });
        let b = start_points(&law, &FitConfig { seed: 2, random_starts: 2, ..FitConfig::default() });
        assert_eq!(a.len(), 18);
        assert_eq!(a[..16], b[..16]);
        assert_ne!(a[16..], b[16..]);
        // Lexicographic: the first parameter varies slowest.
        assert!(a[0].1.iter().all(|u| *u == 0.0));
        assert_eq!(a[1].1[8], 0.1f64.ln());
        assert!(a[1].1[..8].iter().all(|u| *u == 0.0));
        // Fewer combinations than requested starts: remainder is random.
        let small = start_points(&LawSpec::get(LawId::OpenAi), &FitConfig { starts: 20, random_starts: 0, ..FitConfig::default() });
        assert_eq!(small.iter().filter(|s| s.0 == StartKind::Grid).count(), 16);
        assert_eq!(small.len(), 20);
    }

    #[test]
    fn residual_spaces() {
        let data = chinchilla_grid();
        let law = LawSpec::get(LawId::Chinchilla);
        let p = ParamVector::new(LawId::Chinchilla, vec![2.0, 3.0, 1.0, 0.5, 0.5]).unwrap();
        let r = residuals(&law, &p, &data, ObjectiveSpace::Loss).unwrap();
        assert_eq!(r.len(), data.len());
        assert!(r.iter().all(|v| v.abs() < 1e-15));

        // Doubling every observed loss target: log residual of pred = 2 * obs is ln 2.
        let halved: Vec<_> = data
            .iter()
            .map(|o| Observation { loss: o.loss / 2.0, ..o.clone() })
            .collect();
        let halved = ObservationSet::new(halved, LevelKey::XLevel)
            .unwrap()
            .with_normalization(Normalization::identity());
        let r = residuals(&law, &p, &halved, ObjectiveSpace::LogLoss).unwrap();
        assert!(r.iter().all(|v| (v - std::f64::consts::LN_2).abs() < 1e-14));

        let one = data.filter(|o| o.model_id == "m0" && o.d_tokens == 1.0);
        assert_eq!(residuals(&law, &p, &one, ObjectiveSpace::Loss).unwrap().len(), 1);
    }

    #[test]
    fn constant_losses_report_undefined_r2() {
        let obs: Vec<_> = (0..8)
            .map(|i| Observation::new("m", 1.0 + i as f64, 2.0 + i as f64, 3.0))
            .collect();
        let data = ObservationSet::new(obs, LevelKey::XLevel).unwrap();
        let config = FitConfig { max_iters: 200, random_starts: 0, starts: 2, ..FitConfig::default() };
        let fit = fit(LawId::Chinchilla, &data, &config).unwrap();
        assert_eq!(fit.r2_train, None);
        let json = serde_json::to_string(&fit).unwrap();
        assert!(!json.contains("NaN"));
        assert!(json.contains("\"r2_train\":null"));
    }

    #[test]
    fn precondition_errors() {
        let data = chinchilla_grid();
        assert!(matches!(
            fit(LawId::Qid, &data, &FitConfig::default()),
            Err(Error::MissingX { law: LawId::Qid })
        ));
        let tiny = data.filter(|o| o.model_id == "m0" && o.d_tokens < 2.0);
        assert!(matches!(
            fit(LawId::Chinchilla, &tiny, &FitConfig::default()),
            Err(Error::InsufficientObservations { .. })
        ));
        let bad = FitConfig { starts: 0, ..FitConfig::default() };
        assert!(fit(LawId::Chinchilla, &data, &bad).is_err());
    }
}
