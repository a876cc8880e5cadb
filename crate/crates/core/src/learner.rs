//! Causally-fair constrained learning.
//!
//! A feed-forward predictor is fitted to minimize the base loss plus a
//! penalty `lambda * (S_i(f) - target_i)^2` per constraint functional, where
//! each functional is a differentiable signed sum of (weighted) stratum
//! means of the predictor's outputs. The penalty weight is chosen by binary
//! search: after each fit, every constraint is checked out-of-sample with a
//! two-sided z-test, and the search moves up on any rejection and down when
//! all constraints hold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::data::EncodedView;
use crate::effects::{EffectId, EffectSet};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_functional, estimate_functional_of_outcome, functionals_for_effect, stratum_weights,
    EffectFunctional, Estimate, MeanTerm, OutcomeModel, PropensityModel,
};
use crate::mlp::{Adam, Grads, MlpPredictor, OutputHead};
use crate::seed;

/// Training loss family. Classification trains on the cross-entropy
/// surrogate and reports the complement of the area under the ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    Bce,
}

impl LossKind {
    pub fn output_head(self) -> OutputHead {
        match self {
            LossKind::Mse => OutputHead::Identity,
            LossKind::Bce => OutputHead::Logistic,
        }
    }

    /// Reported evaluation loss: mean squared error, or `1 - AUROC`.
    pub fn report_loss(self, predictions: &[f64], y: &[f64]) -> f64 {
        match self {
            LossKind::Mse => {
                predictions
                    .iter()
                    .zip(y.iter())
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    / predictions.len() as f64
            }
            LossKind::Bce => 1.0 - auroc(predictions, y),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Mse => f.write_str("mse"),
            LossKind::Bce => f.write_str("bce"),
        }
    }
}

/// Area under the ROC curve by the rank statistic with tie correction.
/// Degenerate single-class inputs return 0.5.
pub fn auroc(scores: &[f64], labels: &[f64]) -> f64 {
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg_rank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(ranks.iter())
        .filter(|(l, _)| **l == 1.0)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub restarts: usize,
    /// Relative improvement threshold for the early-stopping objective.
    pub min_delta: f64,
    /// Fraction of the training fold held out for early stopping.
    pub validation_fraction: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || self.patience == 0
            || self.restarts == 0
            || !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0)
        {
            return Err(Error::Training(format!(
                "training config fields must be positive (validation fraction in (0,1)): {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 500,
            batch_size: 512,
            patience: 20,
            restarts: 5,
            min_delta: 1e-5,
            validation_fraction: 0.2,
        }
    }
}

/// Hidden layer widths of the predictor.
pub const HIDDEN_LAYERS: [usize; 2] = [16, 16];

/// Binary-search settings for the penalty weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub epsilon: f64,
    pub alpha_level: f64,
}

impl LambdaSearch {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_low < 0.0
            || self.lambda_low > self.lambda_high
            || self.epsilon <= 0.0
            || !(self.alpha_level > 0.0 && self.alpha_level < 1.0)
        {
            return Err(Error::Training(format!(
                "invalid search settings: {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for LambdaSearch {
    fn default() -> Self {
        LambdaSearch {
            lambda_low: 0.0,
            lambda_high: 1024.0,
            epsilon: 1.0,
            alpha_level: 0.05,
        }
    }
}

/// One constrained effect: a name and the functionals it pins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectDef {
    pub name: String,
    pub functionals: Vec<EffectFunctional>,
}

/// The canonical family for a chosen list of pathway effects.
pub fn canonical_family(ids: &[EffectId]) -> Vec<EffectDef> {
    ids.iter()
        .map(|&id| EffectDef {
            name: id.short_name().to_string(),
            functionals: functionals_for_effect(id),
        })
        .collect()
}

/// Flattened functional list with the owning effect position.
pub fn flatten_family(family: &[EffectDef]) -> Vec<(usize, EffectFunctional)> {
    family
        .iter()
        .enumerate()
        .flat_map(|(pos, def)| def.functionals.iter().map(move |f| (pos, f.clone())))
        .collect()
}

/// Per-functional constraint targets: the outcome's estimated effect for
/// unconstrained pathways, exactly zero for pathways in the constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintTargets {
    pub values: Vec<f64>,
}

impl ConstraintTargets {
    pub fn from_outcome(
        outcome: &[Estimate],
        family: &[EffectDef],
        s: EffectSet,
    ) -> ConstraintTargets {
        let flat = flatten_family(family);
        ConstraintTargets {
            values: flat
                .iter()
                .zip(outcome.iter())
                .map(|((pos, _), est)| if s.contains(*pos) { 0.0 } else { est.value })
                .collect(),
        }
    }
}

/// Precomputed tensors for one training fold: factual and attribute-flipped
/// feature rows, outcomes, strata, and raw inverse-propensity weights.
pub struct TrainingData {
    pub n: usize,
    pub dim: usize,
    pub feats: Vec<f64>,
    pub flip_feats: Vec<f64>,
    pub y: Vec<f64>,
    pub x1: Vec<bool>,
    pub ipw_raw: Vec<f64>,
}

impl TrainingData {
    pub fn new(view: &EncodedView, prop: &PropensityModel) -> TrainingData {
        let dim = view.feature_dim();
        let mut feats = Vec::with_capacity(view.n * dim);
        let mut flip_feats = Vec::with_capacity(view.n * dim);
        let mut row = Vec::with_capacity(dim);
        for i in 0..view.n {
            view.input_row(i, None, &mut row);
            feats.extend_from_slice(&row);
            view.input_row(i, Some(1.0 - view.x[i]), &mut row);
            flip_feats.extend_from_slice(&row);
        }
        let x1: Vec<bool> = view.x.iter().map(|&v| v == 1.0).collect();
        let ipw_raw: Vec<f64> = (0..view.n)
            .map(|i| prop.raw_weight(x1[i], view.z.row(i)))
            .collect();
        TrainingData {
            n: view.n,
            dim,
            feats,
            flip_feats,
            y: view.y.clone(),
            x1,
            ipw_raw,
        }
    }
}

/// Result of evaluating the penalized objective on a batch.
pub struct BatchEval {
    pub objective: f64,
    pub grads: Option<Grads>,
    /// True when a missing stratum forced the penalty terms to be skipped.
    pub penalty_skipped: bool,
}

/// The penalized objective `L(f) + lambda * sum_j (S_j(f) - t_j)^2` on one
/// batch, with its exact parameter gradient when requested.
///
/// Constraint functionals are computed on the batch with inverse-propensity
/// weights renormalized within the batch stratum. A batch missing one of the
/// attribute groups contributes only the base loss.
#[allow(clippy::too_many_arguments)]
pub fn lagrangian_objective(
    model: &MlpPredictor,
    data: &TrainingData,
    rows: &[usize],
    lambda: f64,
    functionals: &[(usize, EffectFunctional)],
    targets: &ConstraintTargets,
    loss_kind: LossKind,
    want_grads: bool,
) -> BatchEval {
    let k = rows.len();
    let dim = data.dim;

    // Batch strata (positions within the batch).
    let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (pos, &row) in rows.iter().enumerate() {
        strata[data.x1[row] as usize].push(pos);
    }
    let with_penalty =
        lambda > 0.0 && !functionals.is_empty() && !strata[0].is_empty() && !strata[1].is_empty();
    let penalty_skipped = lambda > 0.0 && !functionals.is_empty() && !with_penalty;

    // Which strata need counterfactual evaluations.
    let mut need_flip = [false; 2];
    if with_penalty {
        for (_, f) in functionals {
            for t in &f.terms {
                if t.eval_x1 != t.stratum_x1 {
                    need_flip[t.stratum_x1 as usize] = true;
                }
            }
        }
    }

    // Assemble the forward batch: factual rows then flipped rows.
    let mut inputs = Vec::with_capacity((k + k) * dim);
    for &row in rows {
        inputs.extend_from_slice(&data.feats[row * dim..(row + 1) * dim]);
    }
    let mut flip_of = vec![usize::MAX; k];
    let mut n_extra = 0;
    for s in 0..2 {
        if need_flip[s] {
            for &pos in &strata[s] {
                let row = rows[pos];
                inputs.extend_from_slice(&data.flip_feats[row * dim..(row + 1) * dim]);
                flip_of[pos] = k + n_extra;
                n_extra += 1;
            }
        }
    }
    let total_rows = k + n_extra;

    let cache = model.forward_batch(&inputs, total_rows);
    let outs = model.outputs(&cache);

    // Base loss and its output gradient on the factual rows.
    let mut dl = vec![0.0; total_rows];
    let mut objective = 0.0;
    match loss_kind {
        LossKind::Mse => {
            for (pos, &row) in rows.iter().enumerate() {
                let r = outs[pos] - data.y[row];
                objective += r * r;
                dl[pos] = 2.0 * r / k as f64;
            }
            objective /= k as f64;
        }
        LossKind::Bce => {
            for (pos, &row) in rows.iter().enumerate() {
                let p = outs[pos].clamp(1e-12, 1.0 - 1e-12);
                let t = data.y[row];
                objective -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                dl[pos] = (p - t) / (p * (1.0 - p)) / k as f64;
            }
            objective /= k as f64;
        }
    }

    if with_penalty {
        // Batch-normalized weights per stratum.
        let batch_weights: [Vec<f64>; 2] = std::array::from_fn(|s| {
            let raw: Vec<f64> = strata[s].iter().map(|&pos| data.ipw_raw[rows[pos]]).collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            raw.iter().map(|w| w / mean).collect()
        });
        let out_index = |term: &MeanTerm, pos: usize| -> usize {
            if term.eval_x1 == term.stratum_x1 {
                pos
            } else {
                flip_of[pos]
            }
        };
        for (j, (_, func)) in functionals.iter().enumerate() {
            let mut value = 0.0;
            for term in &func.terms {
                let s = term.stratum_x1 as usize;
                let n_s = strata[s].len() as f64;
                let mut mean = 0.0;
                for (kk, &pos) in strata[s].iter().enumerate() {
                    let w = if term.weighted { batch_weights[s][kk] } else { 1.0 };
                    mean += w * outs[out_index(term, pos)];
                }
                value += term.sign * mean / n_s;
            }
            let deviation = value - targets.values[j];
            objective += lambda * deviation * deviation;
            let factor = 2.0 * lambda * deviation;
            if factor != 0.0 {
                for term in &func.terms {
                    let s = term.stratum_x1 as usize;
                    let n_s = strata[s].len() as f64;
                    for (kk, &pos) in strata[s].iter().enumerate() {
                        let w = if term.weighted { batch_weights[s][kk] } else { 1.0 };
                        dl[out_index(term, pos)] += factor * term.sign * w / n_s;
                    }
                }
            }
        }
    }

    let grads = if want_grads {
        let mut g = Grads::zeros_like(model);
        model.backward_batch(&cache, &dl, &mut g);
        Some(g)
    } else {
        None
    };

    BatchEval {
        objective,
        grads,
        penalty_skipped,
    }
}

/// One fitted restart.
struct Trained {
    model: MlpPredictor,
    val_objective: f64,
    penalty_skipped: bool,
}

/// Fit the predictor at a fixed penalty weight: best of `cfg.restarts`
/// early-stopped runs by the held-out objective, deterministic per seed,
/// ties broken by the lowest restart index.
pub fn train_at_lambda(
    data: &TrainingData,
    lambda: f64,
    functionals: &[(usize, EffectFunctional)],
    targets: &ConstraintTargets,
    cfg: &TrainConfig,
    loss_kind: LossKind,
    train_seed: u64,
) -> Result<(MlpPredictor, bool)> {
    cfg.validate()?;
    // Stratified inner split for early stopping.
    let mut fit_rows = Vec::new();
    let mut val_rows = Vec::new();
    {
        use rand::seq::SliceRandom;
        for s in 0..2 {
            let mut idx: Vec<usize> = (0..data.n).filter(|&i| data.x1[i] == (s == 1)).collect();
            if idx.len() < 2 {
                fit_rows.extend_from_slice(&idx);
                continue;
            }
            let mut rng = seed::rng_for(train_seed, 0x5b11 + s as u64);
            idx.shuffle(&mut rng);
            let n_val = ((idx.len() as f64) * cfg.validation_fraction).round() as usize;
            let n_val = n_val.clamp(1, idx.len() - 1);
            val_rows.extend_from_slice(&idx[..n_val]);
            fit_rows.extend_from_slice(&idx[n_val..]);
        }
        fit_rows.sort_unstable();
        val_rows.sort_unstable();
    }
    if fit_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Training("training fold too small to split".into()));
    }

    let results: Vec<std::result::Result<Trained, String>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            run_restart(
                data, &fit_rows, &val_rows, lambda, functionals, targets, cfg, loss_kind,
                seed::derive(train_seed, 0x0e57 + restart as u64),
            )
        })
        .collect();

    let mut best: Option<(usize, Trained)> = None;
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => t.val_objective < b.val_objective,
                };
                if better {
                    best = Some((r, t));
                }
            }
            Err(msg) => failures.push(format!("restart {r}: {msg}")),
        }
    }
    match best {
        Some((_, t)) => Ok((t.model, t.penalty_skipped)),
        None => Err(Error::Training(format!(
            "all {} restarts failed: {}",
            cfg.restarts,
            failures.join("; ")
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_restart(
    data: &TrainingData,
    fit_rows: &[usize],
    val_rows: &[usize],
    lambda: f64,
    functionals: &[(usize, EffectFunctional)],
    targets: &ConstraintTargets,
    cfg: &TrainConfig,
    loss_kind: LossKind,
    restart_seed: u64,
) -> std::result::Result<Trained, String> {
    use rand::seq::SliceRandom;
    let mut model = MlpPredictor::new(
        data.dim,
        &HIDDEN_LAYERS,
        loss_kind.output_head(),
        seed::derive(restart_seed, 1),
    );
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut shuffle_rng = seed::rng_for(restart_seed, 2);

    let mut order: Vec<usize> = fit_rows.to_vec();
    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut stall = 0usize;
    let mut any_skip = false;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let eval = lagrangian_objective(
                &model, data, batch, lambda, functionals, targets, loss_kind, true,
            );
            any_skip |= eval.penalty_skipped;
            if !eval.objective.is_finite() {
                return Err("non-finite objective".into());
            }
            let grads = eval.grads.expect("gradients requested");
            if !grads.is_finite() {
                return Err("non-finite gradient".into());
            }
            adam.step(&mut model, &grads);
        }
        let val = lagrangian_objective(
            &model, data, val_rows, lambda, functionals, targets, loss_kind, false,
        );
        any_skip |= val.penalty_skipped;
        if !val.objective.is_finite() {
            return Err("non-finite validation objective".into());
        }
        let threshold = if best_val.is_finite() {
            best_val - cfg.min_delta * best_val.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        if val.objective < threshold {
            best_val = val.objective;
            best_model = model.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }

    Ok(Trained {
        model: best_model,
        val_objective: best_val,
        penalty_skipped: any_skip,
    })
}

/// Inverse standard normal CDF (rational approximation, |error| < 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Outcome of one out-of-sample constraint test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintTest {
    pub functional: String,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub target_se: f64,
    pub z: f64,
    pub reject: bool,
    /// Zero combined standard error with a nonzero deviation.
    pub degenerate: bool,
}

/// Two-sided z-tests of `estimate == target` per functional, combining the
/// standard errors in quadrature.
pub fn constraint_tests(
    names: &[String],
    estimates: &[Estimate],
    targets: &[Estimate],
    alpha_level: f64,
) -> Vec<ConstraintTest> {
    let crit = normal_quantile(1.0 - alpha_level / 2.0);
    names
        .iter()
        .zip(estimates.iter().zip(targets.iter()))
        .map(|(name, (est, tgt))| {
            let diff = est.value - tgt.value;
            let se = (est.se * est.se + tgt.se * tgt.se).sqrt();
            let (z, reject, degenerate) = if se == 0.0 {
                if diff == 0.0 {
                    (0.0, false, false)
                } else {
                    (f64::INFINITY * diff.signum(), true, true)
                }
            } else {
                let z = diff / se;
                (z, z.abs() > crit, false)
            };
            ConstraintTest {
                functional: name.clone(),
                estimate: est.value,
                se: est.se,
                target: tgt.value,
                target_se: tgt.se,
                z,
                reject,
                degenerate,
            }
        })
        .collect()
}

/// One bisection step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaStep {
    pub lambda: f64,
    pub accepted: bool,
}

/// A trained constrained predictor with its acceptance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairPredictor {
    pub model: MlpPredictor,
    pub s: EffectSet,
    pub lambda_final: f64,
    pub tests: Vec<ConstraintTest>,
    pub eval_loss: f64,
    /// False when no bisection iterate passed all constraint tests.
    pub constraints_met: bool,
    pub trajectory: Vec<LambdaStep>,
    /// True when some batch or validation set lacked an attribute group and
    /// penalties were skipped there.
    pub penalty_skipped: bool,
}

/// Outcome-effect estimates shared by every constraint subset of one
/// train/eval fold pair.
#[derive(Debug, Clone)]
pub struct CfclContext {
    pub prop: PropensityModel,
    /// Per flattened functional, estimated on the training fold.
    pub outcome_train: Vec<Estimate>,
    /// Per flattened functional, estimated on the evaluation fold.
    pub outcome_eval: Vec<Estimate>,
}

impl CfclContext {
    /// Estimate the outcome's value of every functional on both folds.
    pub fn build(
        family: &[EffectDef],
        train: &EncodedView,
        eval: &EncodedView,
        prop: PropensityModel,
        outm: &OutcomeModel,
    ) -> Result<CfclContext> {
        let flat = flatten_family(family);
        let sw_train = stratum_weights(train, &prop)?;
        let sw_eval = stratum_weights(eval, &prop)?;
        let outcome_train = flat
            .iter()
            .map(|(_, f)| estimate_functional_of_outcome(train, &sw_train, outm, f))
            .collect();
        let outcome_eval = flat
            .iter()
            .map(|(_, f)| estimate_functional_of_outcome(eval, &sw_eval, outm, f))
            .collect();
        Ok(CfclContext {
            prop,
            outcome_train,
            outcome_eval,
        })
    }
}

/// Constrained learning for an arbitrary effect family: binary search over
/// the penalty weight with per-iterate out-of-sample constraint tests.
///
/// Returns the predictor of the last iterate whose tests all accepted; if no
/// iterate accepted, the final iterate flagged with `constraints_met: false`.
#[allow(clippy::too_many_arguments)]
pub fn cfcl_generalized(
    train: &EncodedView,
    eval: &EncodedView,
    s: EffectSet,
    family: &[EffectDef],
    cfg: &TrainConfig,
    search: &LambdaSearch,
    ctx: &CfclContext,
    loss_kind: LossKind,
    run_seed: u64,
) -> Result<FairPredictor> {
    search.validate()?;
    let flat = flatten_family(family);
    let names: Vec<String> = flat.iter().map(|(_, f)| f.name.clone()).collect();
    let targets_train = ConstraintTargets::from_outcome(&ctx.outcome_train, family, s);
    let targets_eval: Vec<Estimate> = flat
        .iter()
        .zip(ctx.outcome_eval.iter())
        .map(|((pos, _), est)| Estimate {
            value: if s.contains(*pos) { 0.0 } else { est.value },
            se: if s.contains(*pos) { 0.0 } else { est.se },
        })
        .collect();

    let data = TrainingData::new(train, &ctx.prop);
    let sw_eval = stratum_weights(eval, &ctx.prop)?;

    let mut lo = search.lambda_low;
    let mut hi = search.lambda_high;
    let mut trajectory = Vec::new();
    let mut accepted_iterate: Option<(MlpPredictor, Vec<ConstraintTest>, f64, bool)> = None;
    let mut last_iterate: Option<(MlpPredictor, Vec<ConstraintTest>, f64, bool)> = None;

    let mut iter_idx = 0u64;
    loop {
        let lambda = if (hi - lo).abs() > search.epsilon {
            0.5 * (lo + hi)
        } else if iter_idx == 0 {
            // Degenerate interval: fit once at the lower endpoint.
            lo
        } else {
            break;
        };
        let (model, skipped) = train_at_lambda(
            &data,
            lambda,
            &flat,
            &targets_train,
            cfg,
            loss_kind,
            seed::derive(run_seed, 0x1a3b + iter_idx),
        )?;
        let estimates: Vec<Estimate> = flat
            .iter()
            .map(|(_, f)| {
                let predictor = model_fn(&model);
                estimate_functional(&predictor, eval, &sw_eval, f)
            })
            .collect();
        let tests = constraint_tests(&names, &estimates, &targets_eval, search.alpha_level);
        let accepted = tests.iter().all(|t| !t.reject);
        trajectory.push(LambdaStep { lambda, accepted });
        if accepted {
            hi = lambda;
            accepted_iterate = Some((model.clone(), tests.clone(), lambda, skipped));
        } else {
            lo = lambda;
        }
        last_iterate = Some((model, tests, lambda, skipped));
        iter_idx += 1;
        if (hi - lo).abs() <= search.epsilon {
            break;
        }
    }

    let constraints_met = accepted_iterate.is_some();
    let (model, tests, lambda_final, penalty_skipped) = accepted_iterate
        .or(last_iterate)
        .ok_or_else(|| Error::Training("no bisection iterations ran".into()))?;

    let predictions: Vec<f64> = {
        let f = model_fn(&model);
        (0..eval.n)
            .map(|i| f(eval.x[i], eval.z.row(i), eval.w.row(i)))
            .collect()
    };
    let eval_loss = loss_kind.report_loss(&predictions, &eval.y);

    Ok(FairPredictor {
        model,
        s,
        lambda_final,
        tests,
        eval_loss,
        constraints_met,
        trajectory,
        penalty_skipped,
    })
}

/// Canonical three-effect constrained learning (direct, indirect, spurious
/// functionals as listed in the supplied family).
#[allow(clippy::too_many_arguments)]
pub fn cfcl(
    train: &EncodedView,
    eval: &EncodedView,
    s: EffectSet,
    ids: &[EffectId],
    cfg: &TrainConfig,
    search: &LambdaSearch,
    ctx: &CfclContext,
    loss_kind: LossKind,
    run_seed: u64,
) -> Result<FairPredictor> {
    let family = canonical_family(ids);
    cfcl_generalized(train, eval, s, &family, cfg, search, ctx, loss_kind, run_seed)
}

/// Adapt a model to the `(x, z, w) -> prediction` closure shape used by the
/// estimators.
pub fn model_fn(model: &MlpPredictor) -> impl Fn(f64, &[f64], &[f64]) -> f64 + '_ {
    move |x, z, w| {
        let mut row = Vec::with_capacity(1 + z.len() + w.len());
        row.push(x);
        row.extend_from_slice(z);
        row.extend_from_slice(w);
        model.predict_row(&row)
    }
}

/// Maximum relative error between analytic and central-finite-difference
/// gradients of the full penalized objective on a small batch.
pub fn gradient_check(
    model: &MlpPredictor,
    data: &TrainingData,
    lambda: f64,
    functionals: &[(usize, EffectFunctional)],
    targets: &ConstraintTargets,
    loss_kind: LossKind,
    check_seed: u64,
) -> f64 {
    use rand::Rng;
    let rows: Vec<usize> = (0..data.n.min(64)).collect();
    let analytic = lagrangian_objective(
        model, data, &rows, lambda, functionals, targets, loss_kind, true,
    );
    let grads = analytic.grads.expect("gradients requested");

    let n_params = model.param_count();
    let n_checks = 50.max(n_params.min(60)).min(n_params);
    let mut rng = seed::rng_for(check_seed, 0x9c4d);
    let mut indices: Vec<usize> = (0..n_params).collect();
    // Sample without replacement.
    for i in 0..n_checks {
        let j = i + rng.random_range(0..n_params - i);
        indices.swap(i, j);
    }

    let h = 1e-4;
    let mut max_rel = 0.0f64;
    let mut perturbed = model.clone();
    for &idx in &indices[..n_checks] {
        let original = perturbed.get_param(idx);
        perturbed.set_param(idx, original + h);
        let plus = lagrangian_objective(
            &perturbed, data, &rows, lambda, functionals, targets, loss_kind, false,
        )
        .objective;
        perturbed.set_param(idx, original - h);
        let minus = lagrangian_objective(
            &perturbed, data, &rows, lambda, functionals, targets, loss_kind, false,
        )
        .objective;
        perturbed.set_param(idx, original);
        let fd = (plus - minus) / (2.0 * h);
        let g = MlpPredictor::grad_param(&grads, idx);
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    max_rel
}
