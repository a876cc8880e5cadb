//! End-to-end analysis runs: bootstrap replicates, constrained training for
//! every constraint subset, lattice attribution, aggregation, and report
//! emission.
//!
//! Each replicate resamples the dataset, splits it into train/eval folds,
//! fits the propensity and outcome models on the train fold, runs the
//! constrained learner for all `2^m` subsets, and evaluates every node
//! metric on the replicate's eval fold so the decomposition identities hold
//! exactly within the replicate. Aggregates are means and sample standard
//! deviations over replicates.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    bootstrap_resample, encode, load_csv, split, Dataset, SfmSpec, TaskKind,
};
use crate::effects::{EffectId, EffectSet};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_effects_of_outcome, estimate_functional, fit_propensity, stratum_weights, tvr,
    EffectEstimates, EffectFunctional, OutcomeModel,
};
use crate::lattice::{
    apsel_atvd, build_lattice, cfur, lcfur, pareto_points, shapley, tel, LcfurTable, ParetoPoint,
    PselLattice,
};
use crate::learner::{
    canonical_family, cfcl_generalized, model_fn, train_at_lambda, CfclContext,
    ConstraintTargets, ConstraintTest, LambdaSearch, LossKind, TrainConfig, TrainingData,
};
use crate::seed;
use crate::synth::{sample_linear, LinearScmParams};

pub const REPORT_SCHEMA: &str = "psel-attribution-report/v1";

/// Where the analyzed data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Csv { data: PathBuf, sfm: PathBuf },
    SyntheticLinear { params: LinearScmParams, n: usize },
}

/// Full configuration of one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: DataSource,
    /// Defaults from the task when absent: MSE for regression, the
    /// cross-entropy surrogate for classification.
    pub loss: Option<LossKind>,
    pub effects: Vec<EffectId>,
    pub bootstrap_reps: usize,
    pub master_seed: u64,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub search: LambdaSearch,
    /// Worker threads; `None` uses the global pool. Runtime plumbing, not
    /// part of the analysis configuration echoed in reports.
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Destination for emitted files and partial dumps on failure.
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(source: DataSource) -> RunConfig {
        RunConfig {
            source,
            loss: None,
            effects: vec![EffectId::Direct, EffectId::Indirect, EffectId::Spurious],
            bootstrap_reps: 10,
            master_seed: 0,
            train_fraction: 0.7,
            train: TrainConfig::default(),
            search: LambdaSearch::default(),
            threads: None,
            out_dir: None,
        }
    }
}

/// Per-node training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub subset: String,
    pub mask: u32,
    pub eval_loss: f64,
    pub tv: f64,
    pub lambda_final: f64,
    pub bisection_iterations: usize,
    pub constraints_met: bool,
    pub tests: Vec<ConstraintTest>,
}

/// Per-edge point metrics within one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub from: String,
    pub to: String,
    pub effect: String,
    pub psel: f64,
    pub tvd: f64,
}

/// Everything computed for one bootstrap replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub replicate: usize,
    pub nodes: Vec<NodeReport>,
    pub edges: Vec<EdgeReport>,
    pub apsel: Vec<f64>,
    pub atvd: Vec<f64>,
    pub shapley_psel: Vec<f64>,
    pub shapley_tvd: Vec<f64>,
    pub cfur: Vec<f64>,
    pub lcfur: Vec<LcfurTable>,
    pub tel: f64,
    pub total_tvd: f64,
    pub tvr: Vec<f64>,
    pub outcome_effects_eval: EffectEstimates,
    pub tv_decomposition_residual: f64,
    pub pareto: Vec<ParetoPoint>,
}

/// Mean and sample standard deviation over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

fn stat(values: impl Iterator<Item = f64>) -> Stat {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stat { mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStat {
    pub from: String,
    pub to: String,
    pub effect: String,
    pub psel: Stat,
    pub tvd: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoStat {
    pub subset: String,
    pub mask: u32,
    pub excess_loss: Stat,
    pub tv: Stat,
}

/// Aggregates over replicates. The fairness/utility ratio is the ratio of
/// the aggregated averages (with the zero convention); its `sd` is the
/// spread of the per-replicate ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub tel: Stat,
    pub total_tvd: Stat,
    pub apsel: Vec<Stat>,
    pub atvd: Vec<Stat>,
    pub cfur: Vec<Stat>,
    pub shapley_psel: Vec<Stat>,
    pub shapley_tvd: Vec<Stat>,
    pub tvr: Vec<Stat>,
    pub edges: Vec<EdgeStat>,
    pub node_losses: Vec<Stat>,
    pub node_tvs: Vec<Stat>,
    pub pareto: Vec<ParetoStat>,
}

/// The full analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub config: RunConfig,
    pub task: TaskKind,
    pub loss: LossKind,
    pub effect_names: Vec<String>,
    pub m: usize,
    pub dataset_rows: usize,
    pub dropped_rows: usize,
    pub replicates: Vec<AttributionReport>,
    pub aggregate: AggregateReport,
    pub warnings: Vec<String>,
}

/// Run the full analysis described by the config.
pub fn run_analysis(cfg: &RunConfig) -> Result<Report> {
    match cfg.threads {
        None => run_analysis_inner(cfg),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Training(format!("thread pool: {e}")))?;
            pool.install(|| run_analysis_inner(cfg))
        }
    }
}

fn run_analysis_inner(cfg: &RunConfig) -> Result<Report> {
    if cfg.effects.is_empty() {
        return Err(Error::InvalidSpec("effect list is empty".into()));
    }
    if cfg.bootstrap_reps == 0 {
        return Err(Error::InvalidSpec("bootstrap_reps must be >= 1".into()));
    }
    let mut effects_sorted = cfg.effects.clone();
    effects_sorted.dedup();
    if effects_sorted.len() != cfg.effects.len() {
        return Err(Error::InvalidSpec("duplicate effects in list".into()));
    }

    let (data, spec) = match &cfg.source {
        DataSource::Csv { data, sfm } => {
            let spec = SfmSpec::load_json(sfm)?;
            (load_csv(data, &spec)?, spec)
        }
        DataSource::SyntheticLinear { params, n } => {
            let data = sample_linear(params, *n, seed::derive(cfg.master_seed, 0xda7a))?;
            (data, crate::synth::linear_sfm_spec())
        }
    };
    let loss = cfg.loss.unwrap_or(match spec.task {
        TaskKind::Regression => LossKind::Mse,
        TaskKind::BinaryClassification => LossKind::Bce,
    });
    let m = cfg.effects.len();
    let lattice = build_lattice(m)?;

    let rep_results: Vec<Result<(AttributionReport, Vec<String>)>> = (0..cfg.bootstrap_reps)
        .into_par_iter()
        .map(|rep| replicate_analysis(&data, &spec, cfg, &lattice, loss, rep))
        .collect();

    let mut replicates = Vec::with_capacity(cfg.bootstrap_reps);
    let mut warnings = Vec::new();
    for (rep, res) in rep_results.into_iter().enumerate() {
        match res {
            Ok((report, mut warns)) => {
                replicates.push(report);
                warnings.append(&mut warns);
            }
            Err(e) => {
                // Partial-results dump before aborting.
                if let Some(dir) = &cfg.out_dir {
                    let _ = std::fs::create_dir_all(dir);
                    let partial = serde_json::json!({
                        "schema": REPORT_SCHEMA,
                        "error": format!("replicate {rep} failed: {e}"),
                        "completed_replicates": replicates,
                    });
                    let _ = std::fs::write(
                        dir.join("partial_report.json"),
                        serde_json::to_string_pretty(&partial).unwrap_or_default(),
                    );
                }
                return Err(Error::ReplicateFailed {
                    replicate: rep,
                    source: Box::new(e),
                });
            }
        }
    }

    let aggregate = aggregate_reports(&lattice, &cfg.effects, &replicates);
    Ok(Report {
        schema: REPORT_SCHEMA.to_string(),
        config: cfg.clone(),
        task: spec.task,
        loss,
        effect_names: cfg.effects.iter().map(|e| e.short_name().to_string()).collect(),
        m,
        dataset_rows: data.n,
        dropped_rows: data.dropped_rows,
        replicates,
        aggregate,
        warnings,
    })
}

fn subset_label(set: EffectSet, effects: &[EffectId]) -> String {
    let names: Vec<&str> = effects.iter().map(|e| e.short_name()).collect();
    set.label(&names)
}

fn replicate_analysis(
    data: &Dataset,
    spec: &SfmSpec,
    cfg: &RunConfig,
    lattice: &PselLattice,
    loss: LossKind,
    rep: usize,
) -> Result<(AttributionReport, Vec<String>)> {
    let mut warnings = Vec::new();
    let rep_seed = seed::derive(cfg.master_seed, 0x4e50 + rep as u64);

    let resampled = bootstrap_resample(data, seed::derive(rep_seed, 1));
    let plan = split(&resampled, spec, cfg.train_fraction, seed::derive(rep_seed, 2))?;
    let view = encode(&resampled, spec, &plan)?;
    for w in &view.stats.warnings {
        warnings.push(format!("replicate {rep}: {w}"));
    }
    let train = view.subset(&plan.train);
    let eval = view.subset(&plan.eval);

    let prop = fit_propensity(&train)?;
    if let Some(w) = &prop.warning {
        warnings.push(format!("replicate {rep}: {w}"));
    }

    // Unconstrained fit on the train fold serves as the outcome model for
    // the counterfactual arms of the outcome's own effects.
    let outcome_mlp = {
        let td = TrainingData::new(&train, &prop);
        let targets = ConstraintTargets { values: vec![] };
        let (model, _) = train_at_lambda(
            &td,
            0.0,
            &[],
            &targets,
            &cfg.train,
            loss,
            seed::derive(rep_seed, 3),
        )?;
        model
    };
    let outm = {
        let model = outcome_mlp.clone();
        OutcomeModel::new(move |x, z, w| {
            let mut row = Vec::with_capacity(1 + z.len() + w.len());
            row.push(x);
            row.extend_from_slice(z);
            row.extend_from_slice(w);
            model.predict_row(&row)
        })
    };

    let family = canonical_family(&cfg.effects);
    let ctx = CfclContext::build(&family, &train, &eval, prop.clone(), &outm)?;
    let outcome_effects_eval = estimate_effects_of_outcome(&eval, &prop, &outm)?;

    let n_nodes = 1usize << lattice.m;
    let fitted: Vec<Result<crate::learner::FairPredictor>> = (0..n_nodes as u32)
        .into_par_iter()
        .map(|mask| {
            cfcl_generalized(
                &train,
                &eval,
                EffectSet::from_mask(mask),
                &family,
                &cfg.train,
                &cfg.search,
                &ctx,
                loss,
                seed::derive(rep_seed, 0x100 + mask as u64),
            )
        })
        .collect();

    let mut nodes = Vec::with_capacity(n_nodes);
    let mut node_losses = Vec::with_capacity(n_nodes);
    let mut node_tvs = Vec::with_capacity(n_nodes);
    let mut full_tv_se = None;
    for (mask, res) in fitted.into_iter().enumerate() {
        let fp = res?;
        let label = subset_label(fp.s, &cfg.effects);
        if !fp.constraints_met {
            warnings.push(format!(
                "replicate {rep}: constraints unmet for subset {label} (lambda ceiling reached)"
            ));
        }
        if fp.penalty_skipped {
            warnings.push(format!(
                "replicate {rep}: a batch lacked an attribute group for subset {label}; its penalty was skipped"
            ));
        }
        let f = model_fn(&fp.model);
        let tv_est = {
            let sw = stratum_weights(&eval, &ctx.prop)?;
            estimate_functional(&f, &eval, &sw, &EffectFunctional::tv())
        };
        if mask == n_nodes - 1 {
            full_tv_se = Some(tv_est.se);
        }
        node_losses.push(fp.eval_loss);
        node_tvs.push(tv_est.value);
        nodes.push(NodeReport {
            subset: label,
            mask: mask as u32,
            eval_loss: fp.eval_loss,
            tv: tv_est.value,
            lambda_final: fp.lambda_final,
            bisection_iterations: fp.trajectory.len(),
            constraints_met: fp.constraints_met,
            tests: fp.tests,
        });
    }

    let metrics = lattice.edge_metrics_from_nodes(&node_losses, &node_tvs)?;
    let edges: Vec<EdgeReport> = lattice
        .edges
        .iter()
        .zip(metrics.iter())
        .map(|(e, m)| EdgeReport {
            from: subset_label(e.from, &cfg.effects),
            to: subset_label(e.to, &cfg.effects),
            effect: cfg.effects[e.effect_pos].short_name().to_string(),
            psel: m.psel,
            tvd: m.tvd,
        })
        .collect();

    let (apsel, atvd) = apsel_atvd(lattice, &metrics)?;
    let f1: Vec<f64> = node_losses.iter().map(|v| v - node_losses[0]).collect();
    let f2: Vec<f64> = node_tvs.iter().map(|v| v - node_tvs[0]).collect();
    let shapley_psel = shapley(&f1, lattice.m)?;
    let shapley_tvd = shapley(&f2, lattice.m)?;
    let cfur_values: Vec<f64> = apsel
        .iter()
        .zip(atvd.iter())
        .map(|(&a, &t)| cfur(a, t))
        .collect();
    let lcfur_tables: Vec<LcfurTable> = (0..lattice.m)
        .map(|pos| lcfur(lattice, &metrics, pos))
        .collect::<Result<_>>()?;
    let tvr_values: Vec<f64> = cfg
        .effects
        .iter()
        .map(|&e| tvr(&outcome_effects_eval, e))
        .collect();

    let report = AttributionReport {
        replicate: rep,
        nodes,
        edges,
        apsel,
        atvd,
        shapley_psel,
        shapley_tvd,
        cfur: cfur_values,
        lcfur: lcfur_tables,
        tel: tel(&node_losses),
        total_tvd: node_tvs[n_nodes - 1] - node_tvs[0],
        tvr: tvr_values,
        outcome_effects_eval: outcome_effects_eval.clone(),
        tv_decomposition_residual: crate::estimators::tv_decomposition_residual(
            &outcome_effects_eval,
        ),
        pareto: pareto_points(&node_losses, &node_tvs, full_tv_se),
    };
    Ok((report, warnings))
}

fn aggregate_reports(
    lattice: &PselLattice,
    effects: &[EffectId],
    reps: &[AttributionReport],
) -> AggregateReport {
    let m = lattice.m;
    let n_nodes = 1 << m;
    let per_effect = |f: &dyn Fn(&AttributionReport) -> &Vec<f64>| -> Vec<Stat> {
        (0..m)
            .map(|i| stat(reps.iter().map(|r| f(r)[i])))
            .collect()
    };
    let apsel = per_effect(&|r| &r.apsel);
    let atvd = per_effect(&|r| &r.atvd);
    // Ratio of the aggregated averages, zero convention included; the sd is
    // the spread of per-replicate ratios.
    let cfur_stats: Vec<Stat> = (0..m)
        .map(|i| Stat {
            mean: cfur(apsel[i].mean, atvd[i].mean),
            sd: stat(reps.iter().map(|r| r.cfur[i])).sd,
        })
        .collect();

    AggregateReport {
        tel: stat(reps.iter().map(|r| r.tel)),
        total_tvd: stat(reps.iter().map(|r| r.total_tvd)),
        apsel,
        atvd,
        cfur: cfur_stats,
        shapley_psel: per_effect(&|r| &r.shapley_psel),
        shapley_tvd: per_effect(&|r| &r.shapley_tvd),
        tvr: per_effect(&|r| &r.tvr),
        edges: lattice
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| EdgeStat {
                from: subset_label(e.from, effects),
                to: subset_label(e.to, effects),
                effect: effects[e.effect_pos].short_name().to_string(),
                psel: stat(reps.iter().map(|r| r.edges[k].psel)),
                tvd: stat(reps.iter().map(|r| r.edges[k].tvd)),
            })
            .collect(),
        node_losses: (0..n_nodes)
            .map(|i| stat(reps.iter().map(|r| r.nodes[i].eval_loss)))
            .collect(),
        node_tvs: (0..n_nodes)
            .map(|i| stat(reps.iter().map(|r| r.nodes[i].tv)))
            .collect(),
        pareto: (0..n_nodes)
            .map(|i| ParetoStat {
                subset: subset_label(EffectSet::from_mask(i as u32), effects),
                mask: i as u32,
                excess_loss: stat(reps.iter().map(|r| r.pareto[i].excess_loss)),
                tv: stat(reps.iter().map(|r| r.pareto[i].tv)),
            })
            .collect(),
    }
}

/// Comparison of the measured TV differences against the reductions
/// predicted by the outcome's effect decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvdTvrRow {
    pub effect: String,
    pub atvd_mean: f64,
    pub atvd_sd: f64,
    pub tvr_mean: f64,
    pub tvr_sd: f64,
    /// `|atvd - tvr|` over the combined spread; infinite when both spreads
    /// are zero and the means differ.
    pub z: f64,
}

pub fn compare_tvd_tvr(report: &Report) -> Vec<TvdTvrRow> {
    (0..report.m)
        .map(|i| {
            let atvd = &report.aggregate.atvd[i];
            let tvr = &report.aggregate.tvr[i];
            let diff = (atvd.mean - tvr.mean).abs();
            let combined = (atvd.sd * atvd.sd + tvr.sd * tvr.sd).sqrt();
            let z = if combined == 0.0 {
                if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                diff / combined
            };
            TvdTvrRow {
                effect: report.effect_names[i].clone(),
                atvd_mean: atvd.mean,
                atvd_sd: atvd.sd,
                tvr_mean: tvr.mean,
                tvr_sd: tvr.sd,
                z,
            }
        })
        .collect()
}

/// Write `report.json`, `edges.csv`, `attributions.csv`, `pareto.csv`, and
/// `tvd_vs_tvr.csv` into the directory.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report)? + "\n",
    )?;

    let mut edges = String::from("from,to,effect,psel,psel_sd,tvd,tvd_sd\n");
    for e in &report.aggregate.edges {
        edges.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.from, e.to, e.effect, e.psel.mean, e.psel.sd, e.tvd.mean, e.tvd.sd
        ));
    }
    std::fs::write(dir.join("edges.csv"), edges)?;

    let mut attr = String::from(
        "effect,apsel,apsel_sd,atvd,atvd_sd,cfur,cfur_sd,shapley_psel,shapley_psel_sd,shapley_tvd,shapley_tvd_sd\n",
    );
    for i in 0..report.m {
        let a = &report.aggregate;
        attr.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            report.effect_names[i],
            a.apsel[i].mean,
            a.apsel[i].sd,
            a.atvd[i].mean,
            a.atvd[i].sd,
            a.cfur[i].mean,
            a.cfur[i].sd,
            a.shapley_psel[i].mean,
            a.shapley_psel[i].sd,
            a.shapley_tvd[i].mean,
            a.shapley_tvd[i].sd,
        ));
    }
    std::fs::write(dir.join("attributions.csv"), attr)?;

    let mut pareto = String::from("subset,mask,excess_loss,excess_loss_sd,tv,tv_sd\n");
    for p in &report.aggregate.pareto {
        pareto.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.subset,
            EffectSet::from_mask(p.mask).bit_string(report.m),
            p.excess_loss.mean,
            p.excess_loss.sd,
            p.tv.mean,
            p.tv.sd
        ));
    }
    std::fs::write(dir.join("pareto.csv"), pareto)?;

    let mut cmp = String::from("effect,atvd,atvd_sd,tvr,tvr_sd,z\n");
    for row in compare_tvd_tvr(report) {
        cmp.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.effect, row.atvd_mean, row.atvd_sd, row.tvr_mean, row.tvr_sd, row.z
        ));
    }
    std::fs::write(dir.join("tvd_vs_tvr.csv"), cmp)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny but complete synthetic run used by schema and emission tests.
    pub(crate) fn mini_config(out: Option<PathBuf>) -> RunConfig {
        RunConfig {
            source: DataSource::SyntheticLinear {
                params: LinearScmParams::default(),
                n: 600,
            },
            loss: None,
            effects: vec![EffectId::Direct, EffectId::Indirect],
            bootstrap_reps: 1,
            master_seed: 7,
            train_fraction: 0.7,
            train: TrainConfig {
                epochs: 12,
                batch_size: 256,
                patience: 6,
                restarts: 1,
                ..TrainConfig::default()
            },
            search: LambdaSearch {
                lambda_high: 4.0,
                ..LambdaSearch::default()
            },
            threads: None,
            out_dir: out,
        }
    }

    #[test]
    fn mini_run_emits_expected_files_and_identities() {
        let dir = std::env::temp_dir().join("fairpath-pipeline-test");
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = mini_config(Some(dir.clone()));
        let report = run_analysis(&cfg).unwrap();
        assert_eq!(report.m, 2);
        assert_eq!(report.replicates.len(), 1);
        let rep = &report.replicates[0];
        assert_eq!(rep.nodes.len(), 4);
        assert_eq!(rep.edges.len(), 4);
        assert_eq!(rep.pareto.len(), 4);

        // Per-replicate efficiency: attributions sum to the totals exactly.
        let sum_apsel: f64 = rep.apsel.iter().sum();
        let sum_atvd: f64 = rep.atvd.iter().sum();
        assert!((sum_apsel - rep.tel).abs() < 1e-12);
        assert!((sum_atvd - rep.total_tvd).abs() < 1e-12);

        emit_report(&report, &dir).unwrap();
        for name in [
            "report.json",
            "edges.csv",
            "attributions.csv",
            "pareto.csv",
            "tvd_vs_tvr.csv",
        ] {
            assert!(dir.join(name).exists(), "missing {name}");
        }
        let pareto = std::fs::read_to_string(dir.join("pareto.csv")).unwrap();
        assert_eq!(pareto.lines().count(), 1 + 4);
        let edges = std::fs::read_to_string(dir.join("edges.csv")).unwrap();
        assert_eq!(edges.lines().count(), 1 + 4);

        // The cfur column is the ratio of the aggregate averages.
        for i in 0..report.m {
            let a = &report.aggregate;
            let expected = cfur(a.apsel[i].mean, a.atvd[i].mean);
            assert_eq!(a.cfur[i].mean, expected);
        }

        let rows = compare_tvd_tvr(&report);
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn classification_pipeline_reports_auroc_complement() {
        let dir = std::env::temp_dir().join("fairpath-pipeline-bce");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let scm = crate::synth::DiscreteScm::random(3);
        let data = scm.sample(700, 3).unwrap();
        data.write_csv(&dir.join("data.csv")).unwrap();
        let mut spec = crate::synth::DiscreteScm::sfm_spec();
        spec.task = TaskKind::BinaryClassification;
        spec.write_json(&dir.join("sfm.json")).unwrap();

        let mut cfg = mini_config(None);
        cfg.source = DataSource::Csv {
            data: dir.join("data.csv"),
            sfm: dir.join("sfm.json"),
        };
        cfg.effects = vec![EffectId::Direct, EffectId::Indirect, EffectId::Spurious];
        let report = run_analysis(&cfg).unwrap();
        assert_eq!(report.loss, LossKind::Bce);
        assert_eq!(report.m, 3);
        let rep = &report.replicates[0];
        assert_eq!(rep.nodes.len(), 8);
        assert_eq!(rep.edges.len(), 12);
        // The reported loss is 1 - AUROC, bounded by [0, 1].
        for node in &rep.nodes {
            assert!(node.eval_loss >= 0.0 && node.eval_loss <= 1.0);
        }
    }

    #[test]
    fn repeated_run_is_byte_identical() {
        let cfg = mini_config(None);
        let a = run_analysis(&cfg).unwrap();
        let b = run_analysis(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn rejects_empty_effects_and_zero_reps() {
        let mut cfg = mini_config(None);
        cfg.effects.clear();
        assert!(run_analysis(&cfg).is_err());
        let mut cfg = mini_config(None);
        cfg.bootstrap_reps = 0;
        assert!(run_analysis(&cfg).is_err());
    }
}
