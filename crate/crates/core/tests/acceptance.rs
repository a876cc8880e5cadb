//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Criteria 1 and 2 share one full-size analysis of the linear synthetic
//! family; criterion 6 runs a smaller bootstrap analysis; the rest are
//! direct checks of the math and the control flow.

use std::sync::OnceLock;
use std::time::Instant;

use fairpath::data::{encode, split};
use fairpath::effects::{EffectId, EffectSet};
use fairpath::estimators::{
    estimate_effects_of_predictor, fit_propensity, tv_decomposition_residual,
};
use fairpath::lattice::{apsel_atvd, build_lattice, cfur, lcfur, shapley, tel};
use fairpath::learner::{LambdaSearch, TrainConfig};
use fairpath::pipeline::{run_analysis, DataSource, Report, RunConfig};
use fairpath::synth::{
    enumerate_effects, oracle_mse, oracle_mse_unrestricted, oracle_tv, DiscreteScm, EffectTarget,
    LinearScmParams,
};
use rand::Rng;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Shared full-size linear analysis: n = 2e4, unit parameters, effects
/// {D, I}, defaults for training and the lambda search.
fn linear_run() -> &'static (Report, f64) {
    static RUN: OnceLock<(Report, f64)> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = RunConfig {
            source: DataSource::SyntheticLinear {
                params: LinearScmParams::default(),
                n: 20_000,
            },
            effects: vec![EffectId::Direct, EffectId::Indirect],
            bootstrap_reps: 1,
            master_seed: 0,
            ..RunConfig::new(DataSource::SyntheticLinear {
                params: LinearScmParams::default(),
                n: 20_000,
            })
        };
        let start = Instant::now();
        let report = run_analysis(&cfg).expect("linear analysis runs");
        (report, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_1_linear_oracle_loss_recovery() {
    let (report, elapsed) = linear_run();
    let params = LinearScmParams::default();
    let rep = &report.replicates[0];

    let mut all_ok = true;
    let mut lines = Vec::new();
    for mask in 0..4u32 {
        let s = EffectSet::from_mask(mask);
        let target = oracle_mse(&params, s).unwrap();
        let unrestricted = oracle_mse_unrestricted(&params, s).unwrap();
        let measured = rep.nodes[mask as usize].eval_loss;
        let rel = (measured - target).abs() / target;
        let ok = rel <= 0.05;
        all_ok &= ok;
        let near_unrestricted = (measured - unrestricted).abs() / unrestricted <= 0.08;
        lines.push(format!(
            "  subset {}: measured {measured:.4}, intercept-free-linear oracle {target} (dev {:.1}%, {}), unrestricted-class oracle {unrestricted:.4}{}",
            rep.nodes[mask as usize].subset,
            rel * 100.0,
            verdict(ok),
            if near_unrestricted { " <- matches" } else { "" },
        ));
    }
    let time_ok = *elapsed < 600.0;
    println!(
        "criterion 1: {} - constrained-training loss recovery vs intercept-free linear closed forms (runtime {elapsed:.0}s, limit 600s: {})",
        verdict(all_ok && time_ok),
        verdict(time_ok),
    );
    for line in &lines {
        println!("{line}");
    }
    println!(
        "  note: the trained networks admit intercept and likelihood-ratio terms the\n  intercept-free linear family lacks, so on constrained subsets they reach the\n  strictly lower unrestricted-class optimum; see the unrestricted-class oracle."
    );
    assert!(time_ok, "criterion 1 runtime exceeded 600 s");
    assert!(
        all_ok,
        "criterion 1 failed: constrained losses undercut the intercept-free linear closed forms"
    );
}

#[test]
fn criterion_2_tvd_recovery() {
    let (report, _) = linear_run();
    let rep = &report.replicates[0];
    // Edges are ordered {}-D, {}-I, {D}-DI, {I}-DI for m = 2.
    let tvd_full = rep.total_tvd;
    let tvd_d = rep.edges[0].tvd;
    let full_ok = (tvd_full - -2.0).abs() <= 0.1;
    let d_ok = (tvd_d - -1.0).abs() <= 0.1;
    println!(
        "criterion 2: {} - TVD({{}} -> {{D,I}}) = {tvd_full:.4} (target -2 +- 0.1, {}); TVD({{}} -> {{D}}) = {tvd_d:.4} (target -1 +- 0.1, {})",
        verdict(full_ok && d_ok),
        verdict(full_ok),
        verdict(d_ok),
    );
    assert!(full_ok && d_ok, "criterion 2 failed");
}

#[test]
fn criterion_3_attribution_identities() {
    let mut rng = fairpath::seed::rng_for(33, 0);
    let mut worst: f64 = 0.0;
    for m in 2..=4usize {
        for _ in 0..40 {
            let lat = build_lattice(m).unwrap();
            // Node losses increase along every edge, as constrained optimal
            // losses do; TVs are unrestricted.
            let per_effect: Vec<f64> = (0..m).map(|_| 0.1 + 0.9 * rng.random::<f64>()).collect();
            let losses: Vec<f64> = (0..1u32 << m)
                .map(|mask| {
                    (0..m)
                        .filter(|&i| mask & (1 << i) != 0)
                        .map(|i| per_effect[i])
                        .sum::<f64>()
                        + 0.01 * rng.random::<f64>()
                })
                .collect();
            let tvs: Vec<f64> = (0..1 << m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let metrics = lat.edge_metrics_from_nodes(&losses, &tvs).unwrap();
            let total = tel(&losses);

            // Telescoping along every maximal chain.
            for path in &lat.paths {
                let mut prefix = EffectSet::empty();
                let mut sum = 0.0;
                for &pos in path {
                    let k = lat.edge_index(prefix, pos).unwrap();
                    sum += metrics[k].psel;
                    prefix = prefix.with(pos);
                }
                worst = worst.max((sum - total).abs());
            }

            // Path averages equal Shapley values; attributions are efficient.
            let (apsel, atvd) = apsel_atvd(&lat, &metrics).unwrap();
            let f1: Vec<f64> = losses.iter().map(|v| v - losses[0]).collect();
            let f2: Vec<f64> = tvs.iter().map(|v| v - tvs[0]).collect();
            let phi1 = shapley(&f1, m).unwrap();
            let phi2 = shapley(&f2, m).unwrap();
            for i in 0..m {
                worst = worst.max((apsel[i] - phi1[i]).abs());
                worst = worst.max((atvd[i] - phi2[i]).abs());
            }
            worst = worst.max((apsel.iter().sum::<f64>() - total).abs());
            worst = worst.max((atvd.iter().sum::<f64>() - (tvs[(1 << m) - 1] - tvs[0])).abs());

            // Local ratio tables average back to the global ratio.
            for pos in 0..m {
                let table = lcfur(&lat, &metrics, pos).unwrap();
                if table.defined {
                    worst = worst.max((table.weighted_average - cfur(apsel[pos], atvd[pos])).abs());
                }
            }
        }
    }
    let ok = worst < 1e-12;
    println!(
        "criterion 3: {} - attribution identities for m in 2..=4, worst deviation {worst:.2e} (limit 1e-12)",
        verdict(ok)
    );
    assert!(ok, "criterion 3 failed: worst deviation {worst}");
}

#[test]
fn criterion_4_lattice_combinatorics() {
    let lat = build_lattice(3).unwrap();
    let ok = lat.nodes.len() == 8 && lat.edges.len() == 12 && lat.paths.len() == 6;
    println!(
        "criterion 4: {} - m=3 lattice has {} nodes, {} edges, {} maximal chains (expected 8, 12, 6)",
        verdict(ok),
        lat.nodes.len(),
        lat.edges.len(),
        lat.paths.len()
    );
    assert!(ok, "criterion 4 failed");
}

#[test]
fn criterion_5_estimator_oracle_equivalence() {
    use rayon::prelude::*;
    let n_scms = 100u64;
    let n = 100_000;
    let results: Vec<(usize, usize, f64)> = (0..n_scms)
        .into_par_iter()
        .map(|s| {
            let scm = DiscreteScm::random(1000 + s);
            let data = scm.sample(n, 2000 + s).unwrap();
            let spec = DiscreteScm::sfm_spec();
            let plan = split(&data, &spec, 0.5, 3000 + s).unwrap();
            let view = encode(&data, &spec, &plan).unwrap();
            let train = view.subset(&plan.train);
            let eval = view.subset(&plan.eval);
            let prop = fit_propensity(&train).unwrap();

            // The mechanism's conditional mean as the prediction function,
            // decoded from the frozen z-score transform.
            let stats = view.stats.clone();
            let scm2 = scm.clone();
            let decode = move |feat: &fairpath::data::FeatureStat, v: f64| -> u8 {
                match feat {
                    fairpath::data::FeatureStat::ZScore { mean, scale, .. } => {
                        if v * scale + mean > 0.5 {
                            1
                        } else {
                            0
                        }
                    }
                    _ => unreachable!(),
                }
            };
            let f = move |x: f64, z: &[f64], w: &[f64]| {
                scm2.outcome_mean(
                    if x == 1.0 { 1 } else { 0 },
                    decode(&stats.z_features[0], z[0]),
                    decode(&stats.w_features[0], w[0]),
                )
            };

            let est = estimate_effects_of_predictor(&f, &eval, &prop).unwrap();
            let truth = enumerate_effects(
                &scm,
                EffectTarget::Prediction(&|x, z, w| scm.outcome_mean(x, z, w)),
            )
            .unwrap();
            let pairs = [
                (est.nde, truth.nde),
                (est.nie, truth.nie),
                (est.nse_x0, truth.nse_x0),
                (est.nse_x1, truth.nse_x1),
                (est.tv, truth.tv),
            ];
            // Absolute floor covers exact-match cases where the plug-in SE
            // is zero up to float dust.
            let hits = pairs
                .iter()
                .filter(|(e, t)| (e.value - t.value).abs() <= (3.0 * e.se).max(1e-9))
                .count();
            let combined_se = (est.nde.se.powi(2)
                + est.nie.se.powi(2)
                + est.nse_x0.se.powi(2)
                + est.nse_x1.se.powi(2)
                + est.tv.se.powi(2))
            .sqrt();
            let residual = tv_decomposition_residual(&est).abs();
            let residual_ok = residual <= (3.0 * combined_se).max(1e-12);
            (hits, residual_ok as usize, residual)
        })
        .collect();

    let total_pairs = 5 * n_scms as usize;
    let hits: usize = results.iter().map(|(h, _, _)| h).sum();
    let coverage = hits as f64 / total_pairs as f64;
    let residual_ok = results.iter().all(|(_, ok, _)| *ok == 1);
    let worst_residual = results.iter().map(|(_, _, r)| *r).fold(0.0f64, f64::max);
    let ok = coverage >= 0.95 && residual_ok;
    println!(
        "criterion 5: {} - {hits}/{total_pairs} (scm, effect) pairs within 3 SE of enumeration ({:.1}%, need >= 95%); worst TV-decomposition residual {worst_residual:.2e}",
        verdict(ok),
        coverage * 100.0
    );
    assert!(ok, "criterion 5 failed: coverage {coverage}");
}

#[test]
fn criterion_6_tvd_matches_tvr() {
    let cfg = RunConfig {
        source: DataSource::SyntheticLinear {
            params: LinearScmParams::default(),
            n: 6000,
        },
        effects: vec![EffectId::Direct, EffectId::Indirect],
        bootstrap_reps: 6,
        master_seed: 1,
        train: TrainConfig {
            epochs: 300,
            restarts: 2,
            ..TrainConfig::default()
        },
        ..RunConfig::new(DataSource::SyntheticLinear {
            params: LinearScmParams::default(),
            n: 6000,
        })
    };
    let report = run_analysis(&cfg).expect("bootstrap analysis runs");
    let rows = fairpath::pipeline::compare_tvd_tvr(&report);
    let mut ok = true;
    let mut details = Vec::new();
    for row in &rows {
        let pass = row.z < 2.0;
        ok &= pass;
        details.push(format!(
            "  effect {}: ATVD {:.4} (sd {:.4}) vs TVR {:.4} (sd {:.4}), |diff|/combined sd = {:.2} ({})",
            row.effect, row.atvd_mean, row.atvd_sd, row.tvr_mean, row.tvr_sd, row.z,
            verdict(pass)
        ));
    }
    println!(
        "criterion 6: {} - measured TV differences match the outcome-decomposition reductions within 2 combined SDs",
        verdict(ok)
    );
    for d in details {
        println!("{d}");
    }
    assert!(ok, "criterion 6 failed");
}

#[test]
fn criterion_7_gradient_correctness() {
    use fairpath::learner::{
        canonical_family, flatten_family, gradient_check, ConstraintTargets, LossKind,
        TrainingData, HIDDEN_LAYERS,
    };
    use fairpath::mlp::MlpPredictor;

    let scm = DiscreteScm::random(77);
    let data = scm.sample(64, 77).unwrap();
    let spec = DiscreteScm::sfm_spec();
    let plan = fairpath::data::SplitPlan {
        train: (0..64).collect(),
        eval: vec![],
        fraction: 0.99,
        seed: 0,
    };
    let view = encode(&data, &spec, &plan).unwrap();
    let prop = fairpath::estimators::PropensityModel::constant(0.5);
    let td = TrainingData::new(&view, &prop);
    let family = canonical_family(&[EffectId::Direct, EffectId::Indirect, EffectId::Spurious]);
    let flat = flatten_family(&family);
    let targets = ConstraintTargets {
        values: vec![0.05; flat.len()],
    };
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 10.0] {
        let model = MlpPredictor::new(td.dim, &HIDDEN_LAYERS, LossKind::Mse.output_head(), 5);
        let err = gradient_check(&model, &td, lambda, &flat, &targets, LossKind::Mse, 9);
        worst = worst.max(err);
    }
    let ok = worst < 1e-4;
    println!(
        "criterion 7: {} - max relative gradient error over lambda in {{0, 10}} is {worst:.2e} (limit 1e-4, batch of 64 rows)",
        verdict(ok)
    );
    assert!(ok, "criterion 7 failed: {worst}");
}

#[test]
fn criterion_8_control_flow_and_determinism() {
    let base = RunConfig {
        source: DataSource::SyntheticLinear {
            params: LinearScmParams::default(),
            n: 1500,
        },
        effects: vec![EffectId::Direct, EffectId::Indirect],
        bootstrap_reps: 2,
        master_seed: 11,
        train: TrainConfig {
            epochs: 20,
            batch_size: 256,
            patience: 8,
            restarts: 2,
            ..TrainConfig::default()
        },
        search: LambdaSearch::default(),
        ..RunConfig::new(DataSource::SyntheticLinear {
            params: LinearScmParams::default(),
            n: 1500,
        })
    };

    let mut one = base.clone();
    one.threads = Some(1);
    let mut two = base.clone();
    two.threads = Some(2);

    let r1a = run_analysis(&one).unwrap();
    let r1b = run_analysis(&one).unwrap();
    let r2 = run_analysis(&two).unwrap();

    // Bisection runs exactly ceil(log2(1024 / 1)) = 10 iterations at the
    // default search settings.
    let iterations_ok = r1a
        .replicates
        .iter()
        .flat_map(|rep| rep.nodes.iter())
        .all(|n| n.bisection_iterations == 10);

    let j1a = serde_json::to_string(&r1a).unwrap();
    let j1b = serde_json::to_string(&r1b).unwrap();
    let j2 = serde_json::to_string(&r2).unwrap();
    let rerun_ok = j1a == j1b;
    let threads_ok = j1a == j2;
    let ok = iterations_ok && rerun_ok && threads_ok;
    println!(
        "criterion 8: {} - bisection iterations all 10 ({}), byte-identical rerun ({}), byte-identical across 1 vs 2 threads ({})",
        verdict(ok),
        verdict(iterations_ok),
        verdict(rerun_ok),
        verdict(threads_ok),
    );
    assert!(ok, "criterion 8 failed");
}
