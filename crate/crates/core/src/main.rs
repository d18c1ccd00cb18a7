//! Command-line surface: verification, training, sweeps, estimation and
//! calibration reports.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 3 on
//! verification or run failures.

use clap::{Args, Parser, Subcommand};
use fdpo_lab::config::{load_config, ExperimentConfig};
use fdpo_lab::divergence::{exact_divergence, mc_estimate, DivergenceSpec, FiniteDistribution};
use fdpo_lab::error::Error;
use fdpo_lab::metrics::{compare_calibration, BoundKind};
use fdpo_lab::policy::TabularPolicy;
use fdpo_lab::ppo::{train_ppo, PpoVariant};
use fdpo_lab::preference::PreferenceDataset;
use fdpo_lab::sweep::{emit_csv, run_sweep};
use fdpo_lab::verify::{verify_kkt_single, verify_suite, VerifyScope};
use fdpo_lab::{fdpo, metrics, rng};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fdpo-lab", version, about = "Tabular preference-optimization laboratory")]
struct Cli {
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (0 = default). Also settable via FDPO_LAB_JOBS.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress informational output.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suite.
    Verify {
        /// all | kkt | gradient | estimator | bounds | ordering
        #[arg(long, default_value = "all")]
        scope: String,
    },
    /// Solver-vs-oracle check on ad-hoc random instances.
    VerifyKkt(VerifyKktArgs),
    /// Train a policy on a preference dataset.
    TrainDpo(TrainDpoArgs),
    /// Train a rollout baseline against the config's task.
    TrainPpo(TrainPpoArgs),
    /// Run the config's experiment sweep and emit CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output path override (defaults to sweep.output from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a divergence between two finite distributions.
    Estimate(EstimateArgs),
    /// Calibration report for two policies against a truth conditional.
    Ece(EceArgs),
}

#[derive(Args)]
struct VerifyKktArgs {
    /// rkl | fkl | jsd | alpha:<v>
    #[arg(long)]
    divergence: String,
    /// Constraint coefficient; omit to cycle {0.1, 0.3, 1.0}.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 4)]
    contexts: usize,
    #[arg(long, default_value_t = 8)]
    outcomes: usize,
    #[arg(long, default_value_t = 100)]
    instances: usize,
}

#[derive(Args)]
struct TrainDpoArgs {
    #[arg(long)]
    config: PathBuf,
    /// Preference dataset CSV.
    #[arg(long)]
    dataset: PathBuf,
    /// Where to write the trained policy.
    #[arg(long)]
    out_policy: PathBuf,
    /// Where to write the per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TrainPpoArgs {
    #[arg(long)]
    config: PathBuf,
    /// reward | loss
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    clip_epsilon: Option<f64>,
    #[arg(long)]
    out_policy: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// rkl | fkl | jsd | alpha:<v> | tv | chi2
    #[arg(long)]
    divergence: String,
    /// Comma-separated probabilities of p.
    #[arg(long)]
    p: String,
    /// Comma-separated probabilities of q.
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

#[derive(Args)]
struct EceArgs {
    #[arg(long)]
    policy1: PathBuf,
    #[arg(long)]
    policy2: PathBuf,
    /// Truth conditional as a policy-format table of probabilities
    /// (rows are taken as distributions, not logits).
    #[arg(long)]
    truth: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .or_else(|| {
            std::env::var("FDPO_LAB_JOBS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    fdpo_lab::par::configure_jobs(jobs);
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Parse(_) | Error::Argument(_) | Error::Io { .. } => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn parse_probs(text: &str) -> fdpo_lab::Result<FiniteDistribution> {
    let vals: fdpo_lab::Result<Vec<f64>> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad probability '{t}'")))
        })
        .collect();
    FiniteDistribution::new(vals?)
}

fn run(cli: Cli) -> fdpo_lab::Result<ExitCode> {
    match cli.command {
        Command::Verify { scope } => {
            let scope: VerifyScope = scope.parse()?;
            let report = verify_suite(scope)?;
            println!("{report}");
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::VerifyKkt(args) => {
            let spec: DivergenceSpec = args.divergence.parse()?;
            let betas = match args.beta {
                Some(b) => vec![b],
                None => vec![0.1, 0.3, 1.0],
            };
            let seed = cli.seed.unwrap_or(20_240_101);
            let checks = verify_kkt_single(
                &spec,
                &betas,
                args.contexts,
                args.outcomes,
                args.instances,
                seed,
            )?;
            let mut pass = true;
            for c in &checks {
                println!("{c}");
                pass &= c.pass;
            }
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::TrainDpo(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            if !cli.quiet {
                println!("# effective config\n{cfg}");
            }
            let reference = resolve_reference(&cfg)?;
            let dataset =
                PreferenceDataset::load(&args.dataset, Some(reference.space().clone()))?;
            let tc = cfg.train.to_train_config(
                cfg.train.divergence,
                cfg.train.beta,
                cfg.train.seed,
            );
            let (policy, trace) = fdpo::train(&dataset, &reference, &tc)?;
            policy.save(&args.out_policy)?;
            if let Some(path) = args.trace {
                trace.save(&path)?;
            }
            if !cli.quiet {
                let last = trace.records.last();
                println!(
                    "trained {} iterations; final loss {}",
                    trace.records.len(),
                    last.map(|r| format!("{:.6}", r.loss)).unwrap_or_default()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::TrainPpo(args) => {
            let mut cfg = load_config(&args.config)?;
            if let Some(v) = args.variant {
                cfg.ppo.variant = v.parse::<PpoVariant>()?;
            }
            if let Some(eps) = args.clip_epsilon {
                cfg.ppo.clip_epsilon = eps;
            }
            if let Some(seed) = cli.seed {
                cfg.ppo.seed = seed;
            }
            if !cli.quiet {
                println!("# effective config\n{cfg}");
            }
            let reward = cfg.task.build_reward()?;
            let reference = cfg.task.build_reference(&reward)?;
            let pc = cfg.ppo.to_ppo_config(
                cfg.ppo.variant,
                cfg.ppo.divergence,
                cfg.ppo.beta,
                cfg.ppo.seed,
            );
            let (policy, trace) = train_ppo(&reward, &reference, &pc)?;
            policy.save(&args.out_policy)?;
            if let Some(path) = args.trace {
                trace.save(&path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if !cli.quiet {
                println!("# effective config\n{cfg}");
            }
            let records = run_sweep(&cfg)?;
            let out_path = out
                .or_else(|| cfg.output.clone().map(PathBuf::from))
                .ok_or_else(|| {
                    Error::Config("no output path: pass --out or set sweep.output".into())
                })?;
            emit_csv(&records, &out_path)?;
            if !cli.quiet {
                println!("wrote {} records to {}", records.len(), out_path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate(args) => {
            let spec: DivergenceSpec = args.divergence.parse()?;
            let p = parse_probs(&args.p)?;
            let q = parse_probs(&args.q)?;
            let exact = exact_divergence(&spec, &p, &q)?;
            let seed = cli.seed.unwrap_or(12345);
            let mut rng = rng::from_seed(seed);
            if args.samples == 0 {
                return Err(Error::Argument("samples must be positive".into()));
            }
            let mut ratios = Vec::with_capacity(args.samples);
            for _ in 0..args.samples {
                let y = rng::sample_categorical(q.probs(), &mut rng);
                ratios.push(p.probs()[y] / q.probs()[y]);
            }
            let (est, se) = mc_estimate(&spec, &ratios)?;
            println!("exact_divergence = {exact:.12e}");
            println!("mc_estimate      = {est:.12e}");
            println!("standard_error   = {se:.12e}");
            println!(
                "|estimate - exact| = {:.3e} ({:.2} standard errors)",
                (est - exact).abs(),
                if se > 0.0 { (est - exact).abs() / se } else { 0.0 }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Ece(args) => {
            let p1 = TabularPolicy::load(&args.policy1)?;
            let p2 = TabularPolicy::load(&args.policy2)?;
            let truth = load_truth(&args.truth)?;
            let (report, ece2) = compare_calibration(&p1, &p2, &truth)?;
            let ece1 = report.ece;
            println!("ece_policy1  = {ece1:.12e}");
            println!("ece_policy2  = {ece2:.12e}");
            println!("bound_rhs_kl = {:.12e}", report.bound_rhs_kl);
            println!("bound_rhs_js = {:.12e}", report.bound_rhs_js);
            // the theorem applies in both orderings; check |diff| against the
            // tighter direction of each bound
            let rhs_kl_rev = metrics::ece_bound_rhs(&p2, &p1, BoundKind::Kl)?;
            let rhs_js_rev = metrics::ece_bound_rhs(&p2, &p1, BoundKind::Js)?;
            let diff = (ece1 - ece2).abs();
            let ok = diff <= report.bound_rhs_kl.min(rhs_kl_rev) + 1e-12
                && diff <= report.bound_rhs_js.min(rhs_js_rev) + 1e-12;
            println!("inequality: {}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

/// The truth file holds probability rows in the table format.
fn load_truth(path: &PathBuf) -> fdpo_lab::Result<Vec<FiniteDistribution>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let policy = TabularPolicy::from_text(&text)?;
    // rows are plain probabilities, not logits
    let k = policy.space().num_outcomes();
    policy
        .logits()
        .chunks(k)
        .map(|row| FiniteDistribution::new(row.to_vec()))
        .collect()
}

fn resolve_reference(cfg: &ExperimentConfig) -> fdpo_lab::Result<TabularPolicy> {
    match &cfg.train.reference_path {
        Some(path) => TabularPolicy::load(std::path::Path::new(path)),
        None => {
            let reward = cfg.task.build_reward()?;
            cfg.task.build_reference(&reward)
        }
    }
}
