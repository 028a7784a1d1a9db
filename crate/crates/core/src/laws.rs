//! Registry of scaling-law forms.
//!
//! Every law maps normalized model size `n`, token count `d` and, for the
//! perturbation-aware forms, a perturbation level `x` to an expected test loss.
//! The channel-capacity family computes
//!
//! ```text
//! C    = a * n^alpha * log2(1 + SNR)
//! SNR  = b * d^beta / (c * (d*n)^gamma + d_coef * d^delta + e)
//! loss = 1 / C
//! ```
//!
//! Conceptually `a * n^alpha` plays the role of channel bandwidth, `b * d^beta`
//! the signal power and the denominator the noise power. Those three pieces are
//! aliases only; they are never materialised on their own.
//!
//! All parameters are strictly positive. Laws are evaluated on *normalized*
//! inputs; see [`crate::dataset::Normalization`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::ObservationSet;
use crate::error::{Error, Result};
use crate::numeric::central_jacobian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawId {
    ShannonFull,
    ShannonSimplified,
    ShannonExtended,
    #[serde(rename = "openai")]
    OpenAi,
    Chinchilla,
    Qid,
    Precision,
    Symmetric,
    Asymmetric,
    #[serde(rename = "shannon_sizeonly_ablation")]
    ShannonSizeOnlyAblation,
}

const SHANNON_PARAMS: &[&str] = &["a", "b", "c", "d", "e", "alpha", "beta", "gamma", "delta"];
const SHANNON_SIMPLIFIED_PARAMS: &[&str] = &["a", "c", "alpha", "beta", "gamma", "delta"];
const OPENAI_PARAMS: &[&str] = &["a", "b", "alpha", "beta"];
const CHINCHILLA_PARAMS: &[&str] = &["a", "b", "c", "alpha", "beta"];
const PENALTY_PARAMS: &[&str] = &["a", "b", "c", "d", "alpha", "beta", "alpha_prime", "beta_prime", "gamma"];
const ASYMMETRIC_PARAMS: &[&str] = &["a", "b", "c", "alpha", "beta", "alpha_prime", "beta_prime"];

impl LawId {
    /// Registry order: the channel-capacity law first, then the baselines.
    pub const ALL: [LawId; 10] = [
        LawId::ShannonFull,
        LawId::ShannonSimplified,
        LawId::ShannonExtended,
        LawId::OpenAi,
        LawId::Chinchilla,
        LawId::Qid,
        LawId::Precision,
        LawId::Symmetric,
        LawId::Asymmetric,
        LawId::ShannonSizeOnlyAblation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LawId::ShannonFull => "shannon_full",
            LawId::ShannonSimplified => "shannon_simplified",
            LawId::ShannonExtended => "shannon_extended",
            LawId::OpenAi => "openai",
            LawId::Chinchilla => "chinchilla",
            LawId::Qid => "qid",
            LawId::Precision => "precision",
            LawId::Symmetric => "symmetric",
            LawId::Asymmetric => "asymmetric",
            LawId::ShannonSizeOnlyAblation => "shannon_sizeonly_ablation",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            LawId::ShannonFull | LawId::ShannonExtended | LawId::ShannonSizeOnlyAblation => SHANNON_PARAMS,
            LawId::ShannonSimplified => SHANNON_SIMPLIFIED_PARAMS,
            LawId::OpenAi => OPENAI_PARAMS,
            LawId::Chinchilla | LawId::Symmetric => CHINCHILLA_PARAMS,
            LawId::Qid | LawId::Precision => PENALTY_PARAMS,
            LawId::Asymmetric => ASYMMETRIC_PARAMS,
        }
    }

    pub fn needs_x(self) -> bool {
        matches!(self, LawId::Qid | LawId::Precision | LawId::ShannonExtended)
    }

    pub fn is_shannon(self) -> bool {
        matches!(
            self,
            LawId::ShannonFull | LawId::ShannonSimplified | LawId::ShannonExtended | LawId::ShannonSizeOnlyAblation
        )
    }

    fn default_orientation(self) -> XOrientation {
        match self {
            LawId::Qid | LawId::Precision | LawId::ShannonExtended => XOrientation::Mitigating,
            _ => XOrientation::None,
        }
    }
}

impl fmt::Display for LawId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LawId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LawId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown law `{s}`")))
    }
}

/// Whether a larger perturbation level shrinks or grows the degradation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XOrientation {
    /// Larger X means less degradation (bit width, SNR in dB).
    Mitigating,
    /// Larger X means more degradation (learning rate).
    Amplifying,
    None,
}

impl FromStr for XOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mitigating" => Ok(XOrientation::Mitigating),
            "amplifying" => Ok(XOrientation::Amplifying),
            "none" => Ok(XOrientation::None),
            other => Err(Error::InvalidArgument(format!("unknown x orientation `{other}`"))),
        }
    }
}

impl fmt::Display for XOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XOrientation::Mitigating => "mitigating",
            XOrientation::Amplifying => "amplifying",
            XOrientation::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LawSpec {
    pub id: LawId,
    pub param_names: &'static [&'static str],
    pub needs_x: bool,
    pub x_orientation: XOrientation,
}

impl LawSpec {
    pub fn get(id: LawId) -> LawSpec {
        LawSpec {
            id,
            param_names: id.param_names(),
            needs_x: id.needs_x(),
            x_orientation: id.default_orientation(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    /// Override the X orientation. Only the penalty laws can be flipped; the
    /// extended capacity law always treats X as an SNR multiplier.
    pub fn with_orientation(mut self, orientation: XOrientation) -> Result<Self> {
        match self.id {
            LawId::Qid | LawId::Precision if orientation != XOrientation::None => {
                self.x_orientation = orientation;
                Ok(self)
            }
            LawId::ShannonExtended if orientation == XOrientation::Mitigating => Ok(self),
            _ if !self.needs_x && orientation == XOrientation::None => Ok(self),
            _ => Err(Error::InvalidArgument(format!(
                "law {} does not accept x orientation `{orientation}`",
                self.id
            ))),
        }
    }

    /// Loss at normalized `(n, d, x)` for raw parameter values in registry order.
    ///
    /// Works on a plain slice so the fitter can call it in its inner loop;
    /// [`predict_loss`] is the checked entry point.
    pub fn eval(&self, theta: &[f64], n: f64, d: f64, x: Option<f64>) -> Result<f64, EvalError> {
        if !(n > 0.0 && d > 0.0) {
            return Err(EvalError::NonPositiveInput);
        }
        let loss = match self.id {
            id if id.is_shannon() => 1.0 / shannon_capacity(id, theta, n, d, x)?,
            LawId::OpenAi => {
                let [a, b, alpha, beta] = take(theta);
                ((a / n).powf(alpha / beta) + b / d).powf(beta)
            }
            LawId::Chinchilla => {
                let [a, b, c, alpha, beta] = take(theta);
                chinchilla(a, b, c, alpha, beta, n, d)
            }
            LawId::Qid => {
                let [a, b, c, dc, alpha, beta, alpha_p, beta_p, gamma] = take(theta);
                let x = x.ok_or(EvalError::MissingX)?;
                let modulation = match self.x_orientation {
                    XOrientation::Amplifying => x.powf(gamma),
                    _ => x.powf(-gamma),
                };
                chinchilla(a, b, c, alpha, beta, n, d) + dc * n.powf(alpha_p) * d.powf(beta_p) * modulation
            }
            LawId::Precision => {
                let [a, b, c, dc, alpha, beta, alpha_p, beta_p, gamma] = take(theta);
                let x = x.ok_or(EvalError::MissingX)?;
                let modulation = match self.x_orientation {
                    XOrientation::Amplifying => (gamma * x).exp(),
                    _ => (-x / gamma).exp(),
                };
                chinchilla(a, b, c, alpha, beta, n, d) + dc * d.powf(beta_p) * n.powf(-alpha_p) * modulation
            }
            LawId::Symmetric => {
                let [a, b, c, alpha, beta] = take(theta);
                let ratio = n.powf(alpha) * d.powf(-beta);
                a * ratio + b / ratio + c
            }
            LawId::Asymmetric => {
                let [a, b, c, alpha, beta, alpha_p, beta_p] = take(theta);
                a * n.powf(alpha) * d.powf(-beta) + b * d.powf(beta_p) * n.powf(-alpha_p) + c
            }
            _ => unreachable!(),
        };
        if loss.is_finite() && loss > 0.0 {
            Ok(loss)
        } else if loss.is_infinite() && self.id.is_shannon() {
            Err(EvalError::ZeroCapacity)
        } else {
            Err(EvalError::NonFiniteLoss)
        }
    }

    /// Loss plus its gradient in log coordinates: `grad[k] = theta[k] * dL/dtheta[k]`.
    pub fn eval_log_grad(&self, theta: &[f64], n: f64, d: f64, x: Option<f64>, grad: &mut [f64]) -> Result<f64, EvalError> {
        let loss = self.eval(theta, n, d, x)?;
        let (ln_n, ln_d) = (n.ln(), d.ln());
        match self.id {
            id if id.is_shannon() => shannon_log_grad(id, theta, n, d, x, loss, grad),
            LawId::OpenAi => {
                let [a, b, alpha, beta] = take(theta);
                let r = alpha / beta;
                let ln_ratio = (a / n).ln();
                let p = (a / n).powf(r);
                let q = b / d;
                let s = p + q;
                grad[0] = loss * alpha * p / s;
                grad[1] = loss * beta * q / s;
                grad[2] = loss * alpha * p * ln_ratio / s;
                grad[3] = loss * beta * (s.ln() - r * p * ln_ratio / s);
            }
            LawId::Chinchilla | LawId::Qid | LawId::Precision => {
                let [a, b, c, alpha, beta] = match self.id {
                    LawId::Chinchilla => take(theta),
                    _ => [theta[0], theta[1], theta[2], theta[4], theta[5]],
                };
                let big_a = a * n.powf(-alpha);
                let big_b = b * d.powf(-beta);
                let core = [big_a, big_b, c, -alpha * ln_n * big_a, -beta * ln_d * big_b];
                if self.id == LawId::Chinchilla {
                    grad[..5].copy_from_slice(&core);
                } else {
                    let [_, _, _, dc, _, _, alpha_p, beta_p, gamma] = take(theta);
                    let x = x.ok_or(EvalError::MissingX)?;
                    let amplifying = self.x_orientation == XOrientation::Amplifying;
                    grad[..3].copy_from_slice(&core[..3]);
                    grad[4] = core[3];
                    grad[5] = core[4];
                    if self.id == LawId::Qid {
                        let sign = if amplifying { 1.0 } else { -1.0 };
                        let t = dc * n.powf(alpha_p) * d.powf(beta_p) * x.powf(sign * gamma);
                        grad[3] = t;
                        grad[6] = alpha_p * ln_n * t;
                        grad[7] = beta_p * ln_d * t;
                        grad[8] = sign * gamma * x.ln() * t;
                    } else {
                        let modulation = if amplifying { (gamma * x).exp() } else { (-x / gamma).exp() };
                        let t = dc * d.powf(beta_p) * n.powf(-alpha_p) * modulation;
                        grad[3] = t;
                        grad[6] = -alpha_p * ln_n * t;
                        grad[7] = beta_p * ln_d * t;
                        grad[8] = if amplifying { gamma * x * t } else { x / gamma * t };
                    }
                }
            }
            LawId::Symmetric => {
                let [a, b, c, alpha, beta] = take(theta);
                let ratio = n.powf(alpha) * d.powf(-beta);
                let (u, v) = (a * ratio, b / ratio);
                grad[..5].copy_from_slice(&[u, v, c, alpha * ln_n * (u - v), -beta * ln_d * (u - v)]);
            }
            LawId::Asymmetric => {
                let [a, b, c, alpha, beta, alpha_p, beta_p] = take(theta);
                let u = a * n.powf(alpha) * d.powf(-beta);
                let v = b * d.powf(beta_p) * n.powf(-alpha_p);
                grad[..7].copy_from_slice(&[
                    u,
                    v,
                    c,
                    alpha * ln_n * u,
                    -beta * ln_d * u,
                    -alpha_p * ln_n * v,
                    beta_p * ln_d * v,
                ]);
            }
            _ => unreachable!(),
        }
        if grad[..theta.len()].iter().all(|g| g.is_finite()) {
            Ok(loss)
        } else {
            Err(EvalError::NonFiniteLoss)
        }
    }
}

fn shannon_log_grad(id: LawId, theta: &[f64], n: f64, d: f64, x: Option<f64>, loss: f64, grad: &mut [f64]) {
    let simplified = id == LawId::ShannonSimplified;
    let (b, c, dc, e, alpha, beta, gamma, delta) = if simplified {
        let [_, c, alpha, beta, gamma, delta] = take(theta);
        (1.0, c, 1.0, 0.0, alpha, beta, gamma, delta)
    } else {
        let [_, b, c, dc, e, alpha, beta, gamma, delta] = take(theta);
        (b, c, dc, e, alpha, beta, gamma, delta)
    };
    let (ln_n, ln_d) = (n.ln(), d.ln());
    let mut signal = b * d.powf(beta);
    if let (LawId::ShannonExtended, Some(x)) = (id, x) {
        signal *= x;
    }
    let ln_interaction = match id {
        LawId::ShannonSizeOnlyAblation => ln_n,
        _ => ln_d + ln_n,
    };
    let noise_c = c * (gamma * ln_interaction).exp();
    let noise_d = dc * d.powf(delta);
    let noise = noise_c + noise_d + e;
    let snr = signal / noise;
    // d ln C / d ln S, scaled by -L: the common factor for every SNR parameter.
    let k = -loss * snr / ((1.0 + snr) * snr.ln_1p());
    let g_a = -loss;
    let g_alpha = -loss * alpha * ln_n;
    let g_beta = k * beta * ln_d;
    let g_c = -k * noise_c / noise;
    let g_gamma = g_c * gamma * ln_interaction;
    let g_delta = -k * delta * ln_d * noise_d / noise;
    if simplified {
        grad[..6].copy_from_slice(&[g_a, g_c, g_alpha, g_beta, g_gamma, g_delta]);
    } else {
        grad[..9].copy_from_slice(&[
            g_a,
            k,
            g_c,
            -k * noise_d / noise,
            -k * e / noise,
            g_alpha,
            g_beta,
            g_gamma,
            g_delta,
        ]);
    }
}

#[inline]
fn take<const P: usize>(theta: &[f64]) -> [f64; P] {
    theta[..P].try_into().expect("parameter count checked by ParamVector")
}

#[inline]
fn chinchilla(a: f64, b: f64, c: f64, alpha: f64, beta: f64, n: f64, d: f64) -> f64 {
    a * n.powf(-alpha) + b * d.powf(-beta) + c
}

fn shannon_capacity(id: LawId, theta: &[f64], n: f64, d: f64, x: Option<f64>) -> Result<f64, EvalError> {
    let (a, b, c, dc, e, alpha, beta, gamma, delta) = match id {
        LawId::ShannonSimplified => {
            let [a, c, alpha, beta, gamma, delta] = take(theta);
            (a, 1.0, c, 1.0, 0.0, alpha, beta, gamma, delta)
        }
        _ => {
            let [a, b, c, dc, e, alpha, beta, gamma, delta] = take(theta);
            (a, b, c, dc, e, alpha, beta, gamma, delta)
        }
    };
    let mut signal = b * d.powf(beta);
    if id == LawId::ShannonExtended {
        signal *= x.ok_or(EvalError::MissingX)?;
    }
    let interaction = match id {
        LawId::ShannonSizeOnlyAblation => n.powf(gamma),
        _ => (d * n).powf(gamma),
    };
    let noise = c * interaction + dc * d.powf(delta) + e;
    let snr = signal / noise;
    if !snr.is_finite() {
        return Err(EvalError::SnrOverflow);
    }
    if snr <= -1.0 {
        return Err(EvalError::ZeroCapacity);
    }
    let capacity = a * n.powf(alpha) * snr.ln_1p() / std::f64::consts::LN_2;
    if !capacity.is_finite() {
        Err(EvalError::SnrOverflow)
    } else if capacity <= 0.0 {
        Err(EvalError::ZeroCapacity)
    } else {
        Ok(capacity)
    }
}

/// Lightweight evaluation failure used on hot paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    NonPositiveInput,
    MissingX,
    SnrOverflow,
    ZeroCapacity,
    NonFiniteLoss,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalError::NonPositiveInput => "n and d must be positive",
            EvalError::MissingX => "law requires a perturbation level x",
            EvalError::SnrOverflow => "SNR overflowed to infinity",
            EvalError::ZeroCapacity => "capacity is zero (loss would be infinite)",
            EvalError::NonFiniteLoss => "loss is not a positive finite number",
        })
    }
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        Error::Domain(e.to_string())
    }
}

/// Positive parameter values aligned with a law's `param_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    law_id: LawId,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(law_id: LawId, values: Vec<f64>) -> Result<Self> {
        let names = law_id.param_names();
        if values.len() != names.len() {
            return Err(Error::InvalidParams(format!(
                "{law_id} takes {} parameters, got {}",
                names.len(),
                values.len()
            )));
        }
        if let Some((name, v)) = names.iter().zip(&values).find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
        }
        Ok(ParamVector { law_id, values })
    }

    /// Build from `(name, value)` pairs in any order.
    pub fn from_named(law_id: LawId, pairs: &[(&str, f64)]) -> Result<Self> {
        let values = law_id
            .param_names()
            .iter()
            .map(|name| {
                pairs
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|&(_, v)| v)
                    .ok_or_else(|| Error::InvalidParams(format!("missing parameter `{name}` for {law_id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if pairs.len() != values.len() {
            return Err(Error::InvalidParams(format!("unexpected extra parameters for {law_id}")));
        }
        ParamVector::new(law_id, values)
    }

    pub fn law_id(&self) -> LawId {
        self.law_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.law_id
            .param_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        self.law_id.param_names().iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Serialize, Deserialize)]
struct NamedValue {
    name: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamVectorRepr {
    law_id: LawId,
    values: Vec<NamedValue>,
}

impl Serialize for ParamVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ParamVectorRepr {
            law_id: self.law_id,
            values: self
                .named()
                .map(|(name, value)| NamedValue { name: name.to_string(), value })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParamVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ParamVectorRepr::deserialize(deserializer)?;
        let pairs: Vec<(&str, f64)> = repr.values.iter().map(|nv| (nv.name.as_str(), nv.value)).collect();
        ParamVector::from_named(repr.law_id, &pairs).map_err(serde::de::Error::custom)
    }
}

fn check_family(law: &LawSpec, params: &ParamVector) -> Result<()> {
    if law.id != params.law_id {
        return Err(Error::InvalidParams(format!(
            "parameters belong to {}, not {}",
            params.law_id, law.id
        )));
    }
    Ok(())
}

/// Channel capacity of a shannon-variant law at normalized `(n, d, x)`.
pub fn capacity(params: &ParamVector, n: f64, d: f64, x: Option<f64>) -> Result<f64> {
    let id = params.law_id;
    if !id.is_shannon() {
        return Err(Error::WrongLawFamily(id));
    }
    if !(n > 0.0 && d > 0.0) {
        return Err(EvalError::NonPositiveInput.into());
    }
    Ok(shannon_capacity(id, &params.values, n, d, x)?)
}

/// Expected loss at normalized `(n, d, x)`.
pub fn predict_loss(law: &LawSpec, params: &ParamVector, n: f64, d: f64, x: Option<f64>) -> Result<f64> {
    check_family(law, params)?;
    Ok(law.eval(&params.values, n, d, x)?)
}

/// Central finite-difference Jacobian of the predicted loss with respect to
/// the log-parameters `u = ln(theta)`, one row per observation.
///
/// Inputs are normalized with the set's own normalization. Each log-parameter
/// is stepped by `step_rel`, i.e. a relative step of that size on the raw value.
pub fn jacobian_fd(law: &LawSpec, params: &ParamVector, set: &ObservationSet, step_rel: f64) -> Result<DMatrix<f64>> {
    check_family(law, params)?;
    if !(step_rel > 0.0 && step_rel <= 1e-2) {
        return Err(Error::InvalidArgument(format!("step_rel must lie in (0, 1e-2], got {step_rel}")));
    }
    let norm = set.normalization();
    let points: Vec<_> = set.iter().map(|o| (norm.n(o.n_params), norm.d(o.d_tokens), o.x_level)).collect();
    for (i, &(n, d, x)) in points.iter().enumerate() {
        law.eval(&params.values, n, d, x)
            .map_err(|e| Error::Domain(format!("observation {}: {e}", i + 1)))?;
    }
    let u: Vec<f64> = params.values.iter().map(|v| v.ln()).collect();
    let mut theta = vec![0.0; u.len()];
    central_jacobian(
        |u, out| {
            for (t, ui) in theta.iter_mut().zip(u) {
                *t = ui.exp();
            }
            points.iter().zip(out.iter_mut()).all(|(&(n, d, x), slot)| match law.eval(&theta, n, d, x) {
                Ok(v) => {
                    *slot = v;
                    true
                }
                Err(_) => false,
            })
        },
        &u,
        points.len(),
        step_rel,
    )
    .ok_or_else(|| Error::Domain("finite-difference probe left the evaluable region".into()))
}

/// Every registered law, in stable order.
pub fn law_registry() -> Vec<LawSpec> {
    LawId::ALL.into_iter().map(LawSpec::get).collect()
}
