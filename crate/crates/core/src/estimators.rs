//! Plug-in estimation of natural direct, indirect, and spurious effects and
//! the TV measure, for the observed outcome and for arbitrary prediction
//! functions.
//!
//! Counterfactual strata are realized from observational rows by inverse
//! propensity weighting over the confounders: reweighting the `X = x`
//! stratum by `P(x) / P(x | z)` recovers the interventional distribution of
//! `(Z, W)` under `do(X = x)`. Weights are self-normalized to mean one per
//! stratum. Each estimate carries a plug-in standard error from its
//! per-row influence values.

use serde::{Deserialize, Serialize};

use crate::data::EncodedView;
use crate::effects::EffectId;
use crate::error::{Error, Result};
use crate::mlp::{sigmoid, Adam, Grads, MlpPredictor, OutputHead};

/// A point estimate with its plug-in standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Point estimates and standard errors for the five canonical quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub nde: Estimate,
    pub nie: Estimate,
    pub nse_x0: Estimate,
    pub nse_x1: Estimate,
    pub tv: Estimate,
    /// Sum of the unnormalized inverse-propensity weights.
    pub n_effective: f64,
}

impl EffectEstimates {
    pub fn by_functional(&self, name: &str) -> Option<Estimate> {
        match name {
            "nde" => Some(self.nde),
            "nie" => Some(self.nie),
            "nse_x0" => Some(self.nse_x0),
            "nse_x1" => Some(self.nse_x1),
            "tv" => Some(self.tv),
            _ => None,
        }
    }
}

/// One (possibly weighted) stratum mean inside an effect functional.
///
/// The term averages `f(eval_x, z_i, w_i)` over rows with `X = stratum_x`,
/// using self-normalized inverse propensity weights when `weighted` is set
/// and plain averaging otherwise, then enters the functional with `sign`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanTerm {
    pub stratum_x1: bool,
    pub eval_x1: bool,
    pub weighted: bool,
    pub sign: f64,
}

/// A causal functional expressed as a signed sum of stratum means. All
/// functionals used in training and testing are linear in evaluations of
/// the prediction function, which keeps them differentiable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectFunctional {
    pub name: String,
    pub terms: Vec<MeanTerm>,
}

impl EffectFunctional {
    /// `NDE_{x0,x1} = E[f_{x1, W_{x0}}] - E[f_{x0}]`.
    pub fn nde() -> Self {
        EffectFunctional {
            name: "nde".into(),
            terms: vec![
                MeanTerm { stratum_x1: false, eval_x1: true, weighted: true, sign: 1.0 },
                MeanTerm { stratum_x1: false, eval_x1: false, weighted: true, sign: -1.0 },
            ],
        }
    }

    /// `NIE_{x1,x0} = E[f_{x1, W_{x0}}] - E[f_{x1}]`.
    pub fn nie() -> Self {
        EffectFunctional {
            name: "nie".into(),
            terms: vec![
                MeanTerm { stratum_x1: false, eval_x1: true, weighted: true, sign: 1.0 },
                MeanTerm { stratum_x1: true, eval_x1: true, weighted: true, sign: -1.0 },
            ],
        }
    }

    /// `NSE_{x0} = E[f | x0] - E[f_{x0}]`.
    pub fn nse_x0() -> Self {
        EffectFunctional {
            name: "nse_x0".into(),
            terms: vec![
                MeanTerm { stratum_x1: false, eval_x1: false, weighted: false, sign: 1.0 },
                MeanTerm { stratum_x1: false, eval_x1: false, weighted: true, sign: -1.0 },
            ],
        }
    }

    /// `NSE_{x1} = E[f | x1] - E[f_{x1}]`.
    pub fn nse_x1() -> Self {
        EffectFunctional {
            name: "nse_x1".into(),
            terms: vec![
                MeanTerm { stratum_x1: true, eval_x1: true, weighted: false, sign: 1.0 },
                MeanTerm { stratum_x1: true, eval_x1: true, weighted: true, sign: -1.0 },
            ],
        }
    }

    /// `TV = E[f | x1] - E[f | x0]`.
    pub fn tv() -> Self {
        EffectFunctional {
            name: "tv".into(),
            terms: vec![
                MeanTerm { stratum_x1: true, eval_x1: true, weighted: false, sign: 1.0 },
                MeanTerm { stratum_x1: false, eval_x1: false, weighted: false, sign: -1.0 },
            ],
        }
    }
}

/// Functionals constrained for one effect in the canonical family.
pub fn functionals_for_effect(effect: EffectId) -> Vec<EffectFunctional> {
    match effect {
        EffectId::Direct => vec![EffectFunctional::nde()],
        EffectId::Indirect => vec![EffectFunctional::nie()],
        EffectId::Spurious => vec![EffectFunctional::nse_x0(), EffectFunctional::nse_x1()],
    }
}

/// Calibrated map `z -> P(X = x1 | Z = z)` with clipped outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Group-1 frequency in the fitting fold.
    pub base_rate: f64,
    pub clip: (f64, f64),
    /// Set when the logistic fit was abandoned for the base rate.
    pub fallback: bool,
    pub warning: Option<String>,
    /// Covariance of the fitted coefficients `[weights.., bias]` (inverse
    /// observed information on the fitting fold). Feeds the propensity
    /// component of downstream standard errors.
    pub theta_cov: Option<Vec<Vec<f64>>>,
}

pub const DEFAULT_CLIP: (f64, f64) = (0.01, 0.99);

impl PropensityModel {
    /// Constant model at the group base rate.
    pub fn constant(base_rate: f64) -> PropensityModel {
        PropensityModel {
            weights: vec![],
            bias: 0.0,
            base_rate,
            clip: DEFAULT_CLIP,
            fallback: true,
            warning: None,
            theta_cov: None,
        }
    }

    /// Unclipped `P(X = x1 | Z = z)`; used to decide whether a row's weight
    /// responds to the coefficients at all.
    fn predict_x1_unclipped(&self, z: &[f64]) -> f64 {
        if self.fallback {
            self.base_rate
        } else {
            let mut s = self.bias;
            for (w, v) in self.weights.iter().zip(z.iter()) {
                s += w * v;
            }
            sigmoid(s)
        }
    }

    /// Clipped `P(X = x1 | Z = z)`.
    pub fn predict_x1(&self, z: &[f64]) -> f64 {
        self.predict_x1_unclipped(z).clamp(self.clip.0, self.clip.1)
    }

    /// Unnormalized inverse propensity weight `P(x) / P(x | z)` for a row in
    /// stratum `x`.
    pub fn raw_weight(&self, x1: bool, z: &[f64]) -> f64 {
        let p1 = self.predict_x1(z);
        if x1 {
            self.base_rate / p1
        } else {
            (1.0 - self.base_rate) / (1.0 - p1)
        }
    }
}

/// Full-batch stages: (learning rate, iterations). The decaying tail brings
/// the convex log loss close enough to its optimum that the coefficient
/// covariance describes the remaining error.
const PROPENSITY_STAGES: [(f64, usize); 3] = [(0.05, 800), (0.005, 300), (0.0005, 300)];
const SEPARATION_LOG_LOSS: f64 = 0.01;

/// Invert a small symmetric positive-definite matrix by Gauss-Jordan with
/// partial pivoting; `None` when (numerically) singular.
fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut full = row.clone();
            full.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            full
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        let inv = 1.0 / m[col][col];
        for v in m[col].iter_mut() {
            *v *= inv;
        }
        let pivot_row = m[col].clone();
        for (row, r) in m.iter_mut().enumerate() {
            if row != col {
                let factor = r[col];
                if factor != 0.0 {
                    for (v, p) in r.iter_mut().zip(&pivot_row) {
                        *v -= factor * p;
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[k..].to_vec()).collect())
}

/// Coefficient covariance of the logistic fit: inverse observed information
/// `[sum p(1-p) zbar zbar^T]^{-1}` with `zbar = [z.., 1]`.
fn logistic_theta_cov(view: &EncodedView, model: &PropensityModel) -> Option<Vec<Vec<f64>>> {
    let k = view.z.cols + 1;
    let mut info = vec![vec![0.0; k]; k];
    let mut zbar = vec![0.0; k];
    for i in 0..view.n {
        let z = view.z.row(i);
        zbar[..k - 1].copy_from_slice(z);
        zbar[k - 1] = 1.0;
        let p = model.predict_x1_unclipped(z);
        let s = p * (1.0 - p);
        for a in 0..k {
            for b in 0..k {
                info[a][b] += s * zbar[a] * zbar[b];
            }
        }
    }
    invert_spd(&info)
}

/// Fit the propensity model on a (training-fold) view.
///
/// The logistic coefficients are found with the same adaptive-moment
/// optimizer the learner uses, run full-batch on the convex log loss. Near
/// perfect separation the fit falls back to the group base rate.
pub fn fit_propensity(view: &EncodedView) -> Result<PropensityModel> {
    let idx1 = view.stratum(true);
    let idx0 = view.stratum(false);
    if idx0.is_empty() {
        return Err(Error::EmptyStratum { x: 0 });
    }
    if idx1.is_empty() {
        return Err(Error::EmptyStratum { x: 1 });
    }
    let base_rate = idx1.len() as f64 / view.n as f64;
    if view.z.cols == 0 {
        return Ok(PropensityModel::constant(base_rate));
    }

    // Reuse the MLP machinery as a zero-hidden-layer logistic model.
    let mut model = MlpPredictor::new(view.z.cols, &[], OutputHead::Logistic, 0);
    for w in &mut model.weights {
        w.iter_mut().for_each(|v| *v = 0.0);
    }
    let n = view.n;
    let inputs: Vec<f64> = view.z.data.clone();
    for (lr, iters) in PROPENSITY_STAGES {
        let mut adam = Adam::new(&model, lr);
        for _ in 0..iters {
            let cache = model.forward_batch(&inputs, n);
            let outs = model.outputs(&cache).to_vec();
            // d(mean log loss)/d(output p) = (p - x) / (p (1 - p) n); the
            // logistic head derivative is applied during backprop.
            let dl: Vec<f64> = outs
                .iter()
                .zip(view.x.iter())
                .map(|(p, x)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    (p - x) / (p * (1.0 - p)) / n as f64
                })
                .collect();
            let mut grads = Grads::zeros_like(&model);
            model.backward_batch(&cache, &dl, &mut grads);
            if !grads.is_finite() {
                let mut m = PropensityModel::constant(base_rate);
                m.warning = Some("propensity fit diverged; using group base rate".into());
                return Ok(m);
            }
            adam.step(&mut model, &grads);
        }
    }

    let cache = model.forward_batch(&inputs, n);
    let outs = model.outputs(&cache);
    let mut log_loss = 0.0;
    let mut correct = 0usize;
    for (p, x) in outs.iter().zip(view.x.iter()) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        log_loss -= x * p.ln() + (1.0 - x) * (1.0 - p).ln();
        if (p >= 0.5) == (*x == 1.0) {
            correct += 1;
        }
    }
    log_loss /= n as f64;
    if correct == n && log_loss < SEPARATION_LOG_LOSS {
        let mut m = PropensityModel::constant(base_rate);
        m.warning =
            Some("perfect separation in propensity fit; using group base rate".into());
        return Ok(m);
    }

    let mut fitted = PropensityModel {
        weights: model.weights[0].clone(),
        bias: model.biases[0][0],
        base_rate,
        clip: DEFAULT_CLIP,
        fallback: false,
        warning: None,
        theta_cov: None,
    };
    fitted.theta_cov = logistic_theta_cov(view, &fitted);
    Ok(fitted)
}

type PredictBox = Box<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;

/// Deterministic map `(x, z, w) -> E[Y | x, z, w]` (or `P(Y=1 | ...)`).
pub struct OutcomeModel {
    f: PredictBox,
}

impl OutcomeModel {
    pub fn new(f: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> OutcomeModel {
        OutcomeModel { f: Box::new(f) }
    }

    pub fn predict(&self, x: f64, z: &[f64], w: &[f64]) -> f64 {
        (self.f)(x, z, w)
    }
}

impl std::fmt::Debug for OutcomeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("OutcomeModel(..)")
    }
}

/// Per-stratum rows and self-normalized weights for one view, plus the
/// sensitivity of each weight to the propensity coefficients.
#[derive(Debug, Clone)]
pub struct StratumWeights {
    pub idx: [Vec<usize>; 2],
    /// Normalized to mean one within each stratum.
    pub weights: [Vec<f64>; 2],
    /// Per row `a_i` with `dw_i/dtheta = w_i * a_i * zbar_i`; zero for
    /// clipped rows and for fallback models.
    pub dlogw: [Vec<f64>; 2],
    /// Coefficient covariance of the propensity fit, when available.
    pub theta_cov: Option<Vec<Vec<f64>>>,
    pub raw_sum: f64,
}

/// Compute stratum indices and normalized IPW weights for a view.
pub fn stratum_weights(view: &EncodedView, prop: &PropensityModel) -> Result<StratumWeights> {
    let idx0 = view.stratum(false);
    let idx1 = view.stratum(true);
    if idx0.is_empty() {
        return Err(Error::EmptyStratum { x: 0 });
    }
    if idx1.is_empty() {
        return Err(Error::EmptyStratum { x: 1 });
    }
    let mut raw_sum = 0.0;
    let mut build = |idx: &[usize], x1: bool| -> (Vec<f64>, Vec<f64>) {
        let raw: Vec<f64> = idx
            .iter()
            .map(|&i| prop.raw_weight(x1, view.z.row(i)))
            .collect();
        raw_sum += raw.iter().sum::<f64>();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let normalized = raw.iter().map(|w| w / mean).collect();
        let dlogw = idx
            .iter()
            .map(|&i| {
                let z = view.z.row(i);
                let unclipped = prop.predict_x1_unclipped(z);
                if prop.fallback || unclipped <= prop.clip.0 || unclipped >= prop.clip.1 {
                    0.0
                } else if x1 {
                    -(1.0 - unclipped)
                } else {
                    unclipped
                }
            })
            .collect();
        (normalized, dlogw)
    };
    let (w0, a0) = build(&idx0, false);
    let (w1, a1) = build(&idx1, true);
    Ok(StratumWeights {
        idx: [idx0, idx1],
        weights: [w0, w1],
        dlogw: [a0, a1],
        theta_cov: prop.theta_cov.clone(),
        raw_sum,
    })
}

/// Value source for one functional term.
trait TermValues {
    fn value(&self, term: &MeanTerm, row: usize) -> f64;
}

struct PredictorValues<'a, F: Fn(f64, &[f64], &[f64]) -> f64> {
    view: &'a EncodedView,
    f: &'a F,
}

impl<F: Fn(f64, &[f64], &[f64]) -> f64> TermValues for PredictorValues<'_, F> {
    fn value(&self, term: &MeanTerm, row: usize) -> f64 {
        let x = if term.eval_x1 { 1.0 } else { 0.0 };
        (self.f)(x, self.view.z.row(row), self.view.w.row(row))
    }
}

struct OutcomeValues<'a> {
    view: &'a EncodedView,
    model: &'a OutcomeModel,
}

impl TermValues for OutcomeValues<'_> {
    fn value(&self, term: &MeanTerm, row: usize) -> f64 {
        if term.eval_x1 == term.stratum_x1 {
            // Observed arm: the factual outcome.
            self.view.y[row]
        } else {
            let x = if term.eval_x1 { 1.0 } else { 0.0 };
            self.model.predict(x, self.view.z.row(row), self.view.w.row(row))
        }
    }
}

fn estimate_with(
    values: &dyn TermValues,
    view: &EncodedView,
    sw: &StratumWeights,
    functional: &EffectFunctional,
) -> Estimate {
    let mut total = 0.0;
    let mut infl: [Vec<f64>; 2] = [
        vec![0.0; sw.idx[0].len()],
        vec![0.0; sw.idx[1].len()],
    ];
    // Gradient of the functional with respect to the propensity
    // coefficients [weights.., bias]; weighted terms only.
    let k_theta = view.z.cols + 1;
    let mut grad_theta = vec![0.0; k_theta];
    let correct = sw.theta_cov.is_some();

    for term in &functional.terms {
        let s = term.stratum_x1 as usize;
        let idx = &sw.idx[s];
        let n_s = idx.len() as f64;
        let raw: Vec<f64> = idx.iter().map(|&row| values.value(term, row)).collect();
        let per_row: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(k, v)| if term.weighted { sw.weights[s][k] * v } else { *v })
            .collect();
        let mean = per_row.iter().sum::<f64>() / n_s;
        total += term.sign * mean;
        for (k, a) in per_row.iter().enumerate() {
            infl[s][k] += term.sign * (a - mean) / n_s;
        }
        if term.weighted && correct {
            // Self-normalized mean sensitivity:
            // d(mean)/dtheta = (1/n) sum w~ a (v - mean) zbar.
            for (k, &row) in idx.iter().enumerate() {
                let c = term.sign * sw.weights[s][k] * sw.dlogw[s][k] * (raw[k] - mean) / n_s;
                if c != 0.0 {
                    let z = view.z.row(row);
                    for (g, zj) in grad_theta.iter_mut().zip(z.iter()) {
                        *g += c * zj;
                    }
                    grad_theta[k_theta - 1] += c;
                }
            }
        }
    }

    let mut var: f64 = infl.iter().flatten().map(|d| d * d).sum();
    if let Some(cov) = &sw.theta_cov {
        let mut quad = 0.0;
        for a in 0..k_theta {
            for b in 0..k_theta {
                quad += grad_theta[a] * cov[a][b] * grad_theta[b];
            }
        }
        var += quad.max(0.0);
    }
    Estimate {
        value: total,
        se: var.sqrt(),
    }
}

/// Estimate one functional of a prediction function.
pub fn estimate_functional<F>(
    f: &F,
    view: &EncodedView,
    sw: &StratumWeights,
    functional: &EffectFunctional,
) -> Estimate
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    estimate_with(&PredictorValues { view, f }, view, sw, functional)
}

/// Estimate one functional of the observed outcome, using the outcome model
/// for counterfactual arms.
pub fn estimate_functional_of_outcome(
    view: &EncodedView,
    sw: &StratumWeights,
    outm: &OutcomeModel,
    functional: &EffectFunctional,
) -> Estimate {
    estimate_with(&OutcomeValues { view, model: outm }, view, sw, functional)
}

/// All five canonical quantities for a prediction function.
pub fn estimate_effects_of_predictor<F>(
    f: &F,
    view: &EncodedView,
    prop: &PropensityModel,
) -> Result<EffectEstimates>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    let sw = stratum_weights(view, prop)?;
    Ok(EffectEstimates {
        nde: estimate_functional(f, view, &sw, &EffectFunctional::nde()),
        nie: estimate_functional(f, view, &sw, &EffectFunctional::nie()),
        nse_x0: estimate_functional(f, view, &sw, &EffectFunctional::nse_x0()),
        nse_x1: estimate_functional(f, view, &sw, &EffectFunctional::nse_x1()),
        tv: estimate_functional(f, view, &sw, &EffectFunctional::tv()),
        n_effective: sw.raw_sum,
    })
}

/// All five canonical quantities for the observed outcome; these are the
/// constraint targets of constrained learning.
pub fn estimate_effects_of_outcome(
    view: &EncodedView,
    prop: &PropensityModel,
    outm: &OutcomeModel,
) -> Result<EffectEstimates> {
    let sw = stratum_weights(view, prop)?;
    Ok(EffectEstimates {
        nde: estimate_functional_of_outcome(view, &sw, outm, &EffectFunctional::nde()),
        nie: estimate_functional_of_outcome(view, &sw, outm, &EffectFunctional::nie()),
        nse_x0: estimate_functional_of_outcome(view, &sw, outm, &EffectFunctional::nse_x0()),
        nse_x1: estimate_functional_of_outcome(view, &sw, outm, &EffectFunctional::nse_x1()),
        tv: estimate_functional_of_outcome(view, &sw, outm, &EffectFunctional::tv()),
        n_effective: sw.raw_sum,
    })
}

/// Difference of stratum means `E[f | x1] - E[f | x0]`.
pub fn tv_measure<F>(f: &F, view: &EncodedView) -> Result<f64>
where
    F: Fn(f64, &[f64], &[f64]) -> f64,
{
    let idx0 = view.stratum(false);
    let idx1 = view.stratum(true);
    if idx0.is_empty() {
        return Err(Error::EmptyStratum { x: 0 });
    }
    if idx1.is_empty() {
        return Err(Error::EmptyStratum { x: 1 });
    }
    let mean = |idx: &[usize], x: f64| {
        idx.iter()
            .map(|&i| f(x, view.z.row(i), view.w.row(i)))
            .sum::<f64>()
            / idx.len() as f64
    };
    Ok(mean(&idx1, 1.0) - mean(&idx0, 0.0))
}

/// TV difference between two predictors on identical rows.
pub fn tvd<FA, FB>(f_after: &FA, f_before: &FB, view: &EncodedView) -> Result<f64>
where
    FA: Fn(f64, &[f64], &[f64]) -> f64,
    FB: Fn(f64, &[f64], &[f64]) -> f64,
{
    Ok(tv_measure(f_after, view)? - tv_measure(f_before, view)?)
}

/// TV reduction predicted from the outcome's effect decomposition.
pub fn tvr(effects_of_y: &EffectEstimates, effect: EffectId) -> f64 {
    match effect {
        EffectId::Direct => -effects_of_y.nde.value,
        EffectId::Indirect => effects_of_y.nie.value,
        EffectId::Spurious => -effects_of_y.nse_x1.value + effects_of_y.nse_x0.value,
    }
}

/// Diagnostic residual of the TV decomposition
/// `TV - (NDE - NIE + NSE_x1 - NSE_x0)`.
pub fn tv_decomposition_residual(e: &EffectEstimates) -> f64 {
    e.tv.value - (e.nde.value - e.nie.value + e.nse_x1.value - e.nse_x0.value)
}
