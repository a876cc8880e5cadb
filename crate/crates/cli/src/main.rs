//! Command-line front end: end-to-end analysis runs, synthetic data
//! generation, closed-form oracles, and the gradient self-check.
//!
//! Exit codes: 0 success, 1 error, 2 success with warnings.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fairpath::effects::{EffectId, EffectSet};
use fairpath::estimators::fit_propensity;
use fairpath::learner::{
    canonical_family, flatten_family, gradient_check, ConstraintTargets, LambdaSearch, LossKind,
    TrainConfig, TrainingData, HIDDEN_LAYERS,
};
use fairpath::mlp::MlpPredictor;
use fairpath::pipeline::{emit_report, run_analysis, DataSource, RunConfig};
use fairpath::synth::{
    linear_sfm_spec, oracle_cfur, oracle_mse, oracle_tv, sample_linear, DiscreteScm,
    LinearScmParams,
};

#[derive(Parser)]
#[command(
    name = "fairpath",
    about = "Causal decomposition of fairness-accuracy trade-offs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full attribution analysis on a CSV dataset.
    Analyze(AnalyzeArgs),
    /// Sample a linear synthetic dataset and write CSV plus SFM spec.
    Synth(SynthArgs),
    /// Print closed-form optimal losses, TV measures, and fairness/utility
    /// ratios of the linear family.
    Oracle(OracleArgs),
    /// Check analytic gradients of the penalized objective against central
    /// finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV dataset path.
    #[arg(long)]
    data: PathBuf,
    /// SFM spec JSON path.
    #[arg(long)]
    sfm: PathBuf,
    /// Training loss; defaults from the task in the SFM spec.
    #[arg(long, value_parser = parse_loss)]
    loss: Option<LossKind>,
    /// Comma-separated pathway effects, e.g. `d,i,s`.
    #[arg(long, default_value = "d,i,s")]
    effects: String,
    /// Bootstrap repetitions.
    #[arg(long, default_value_t = 10)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for report files.
    #[arg(long)]
    out: PathBuf,
    /// Training-fold fraction.
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    /// Upper end of the penalty-weight search.
    #[arg(long, default_value_t = 1024.0)]
    lambda_high: f64,
    /// Bisection precision.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Per-test significance level of the constraint tests.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Training epochs per fit.
    #[arg(long)]
    epochs: Option<usize>,
    /// Random restarts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_y: f64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (writes data.csv and sfm.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_y: f64,
    /// Emit machine-readable JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance on the maximum relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "mse" => Ok(LossKind::Mse),
        "bce" => Ok(LossKind::Bce),
        other => Err(format!("unknown loss `{other}` (expected mse or bce)")),
    }
}

fn parse_effects(s: &str) -> Result<Vec<EffectId>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let id = EffectId::parse(part)
            .with_context(|| format!("unknown effect `{part}` (expected d, i, or s)"))?;
        if out.contains(&id) {
            bail!("effect `{part}` listed twice");
        }
        out.push(id);
    }
    if out.is_empty() {
        bail!("effect list is empty");
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(warnings) => {
            if warnings == 0 {
                ExitCode::SUCCESS
            } else {
                eprintln!("completed with {warnings} warning(s)");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Synth(args) => synth(args),
        Command::Oracle(args) => oracle(args),
        Command::Gradcheck(args) => gradcheck_cmd(args),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<usize> {
    let effects = parse_effects(&args.effects)?;
    let mut train = TrainConfig::default();
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    if let Some(r) = args.restarts {
        train.restarts = r;
    }
    if let Some(b) = args.batch_size {
        train.batch_size = b;
    }
    let cfg = RunConfig {
        source: DataSource::Csv {
            data: args.data,
            sfm: args.sfm,
        },
        loss: args.loss,
        effects,
        bootstrap_reps: args.bootstrap,
        master_seed: args.seed,
        train_fraction: args.train_frac,
        train,
        search: LambdaSearch {
            lambda_high: args.lambda_high,
            epsilon: args.epsilon,
            alpha_level: args.alpha,
            ..LambdaSearch::default()
        },
        threads: args.threads,
        out_dir: Some(args.out.clone()),
    };
    let report = run_analysis(&cfg).context("analysis failed")?;
    emit_report(&report, &args.out).context("emitting report files")?;
    println!(
        "analysis complete: {} replicates, TEL = {} (sd {}), report in {}",
        report.replicates.len(),
        report.aggregate.tel.mean,
        report.aggregate.tel.sd,
        args.out.display()
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(report.warnings.len())
}

fn synth(args: SynthArgs) -> Result<usize> {
    let params = LinearScmParams {
        alpha: args.alpha,
        beta: args.beta,
        gamma: args.gamma,
        sigma_w: args.sigma_w,
        sigma_y: args.sigma_y,
    };
    let data = sample_linear(&params, args.n, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    data.write_csv(&args.out.join("data.csv"))?;
    linear_sfm_spec().write_json(&args.out.join("sfm.json"))?;
    println!(
        "wrote {} rows to {} (data.csv, sfm.json)",
        args.n,
        args.out.display()
    );
    Ok(0)
}

fn oracle(args: OracleArgs) -> Result<usize> {
    let params = LinearScmParams {
        alpha: args.alpha,
        beta: args.beta,
        gamma: args.gamma,
        sigma_w: args.sigma_w,
        sigma_y: args.sigma_y,
    };
    let subsets = [
        ("{}", EffectSet::empty()),
        ("{D}", EffectSet::empty().with(0)),
        ("{I}", EffectSet::empty().with(1)),
        ("{D,I}", EffectSet::empty().with(0).with(1)),
    ];
    let cfur = oracle_cfur(&params)?;
    if args.json {
        let nodes: Vec<serde_json::Value> = subsets
            .iter()
            .map(|(label, s)| {
                serde_json::json!({
                    "subset": label,
                    "mse": oracle_mse(&params, *s).expect("subset of {D,I}"),
                    "tv": oracle_tv(&params, *s).expect("subset of {D,I}"),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "params": params,
            "nodes": nodes,
            "cfur": cfur,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("subset   mse                tv");
        for (label, s) in subsets {
            println!(
                "{label:<8} {:<18} {}",
                oracle_mse(&params, s)?,
                oracle_tv(&params, s)?
            );
        }
        println!();
        println!(
            "cfur (example-stated):  D = {}, I = {}",
            cfur.example_stated.direct, cfur.example_stated.indirect
        );
        println!(
            "cfur (single-edge):     D = {}, I = {}",
            cfur.single_edge.direct, cfur.single_edge.indirect
        );
        println!(
            "cfur (path-averaged):   D = {}, I = {}",
            cfur.path_averaged.direct, cfur.path_averaged.indirect
        );
        if let Some(note) = &cfur.discrepancy {
            println!("note: {note}");
        }
    }
    Ok(0)
}

fn gradcheck_cmd(args: GradcheckArgs) -> Result<usize> {
    let scm = DiscreteScm::random(args.seed);
    let data = scm.sample(256, args.seed)?;
    let spec = DiscreteScm::sfm_spec();
    let plan = fairpath::data::split(&data, &spec, 0.7, args.seed)?;
    let view = fairpath::data::encode(&data, &spec, &plan)?;
    let train = view.subset(&plan.train);
    let prop = fit_propensity(&train)?;
    let td = TrainingData::new(&train, &prop);

    let family = canonical_family(&[EffectId::Direct, EffectId::Indirect, EffectId::Spurious]);
    let flat = flatten_family(&family);
    let targets = ConstraintTargets {
        values: vec![0.05; flat.len()],
    };
    let mut worst: f64 = 0.0;
    for (loss, head_seed) in [(LossKind::Mse, 11u64), (LossKind::Bce, 12u64)] {
        for lambda in [0.0, 10.0] {
            let model = MlpPredictor::new(td.dim, &HIDDEN_LAYERS, loss.output_head(), head_seed);
            let err = gradient_check(&model, &td, lambda, &flat, &targets, loss, args.seed);
            println!("loss={loss} lambda={lambda}: max relative error {err:.3e}");
            worst = worst.max(err);
        }
    }
    if worst > args.tolerance {
        bail!("gradient check failed: {worst:.3e} > {}", args.tolerance);
    }
    println!("gradient check passed (worst {worst:.3e} <= {})", args.tolerance);
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effects_parse_and_reject_duplicates() {
        assert_eq!(
            parse_effects("d,i,s").unwrap(),
            vec![EffectId::Direct, EffectId::Indirect, EffectId::Spurious]
        );
        assert!(parse_effects("d,d").is_err());
        assert!(parse_effects("q").is_err());
    }

    #[test]
    fn loss_parse() {
        assert_eq!(parse_loss("MSE").unwrap(), LossKind::Mse);
        assert_eq!(parse_loss("bce").unwrap(), LossKind::Bce);
        assert!(parse_loss("rmse").is_err());
    }
}
