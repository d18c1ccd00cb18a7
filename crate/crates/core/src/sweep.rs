//! Experiment sweeps over (method, divergence, beta) grids with
//! deterministic per-run seeds and CSV emission.

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::fdpo;
use crate::kkt;
use crate::metrics::{frontier_record, FrontierMeasurement};
use crate::par;
use crate::ppo::{self, PpoVariant};
use crate::preference::generate_dataset;
use crate::rng;

/// One result row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub run_id: String,
    pub method: Method,
    pub divergence: String,
    pub beta: f64,
    pub achieved_divergence: f64,
    pub mean_reward: f64,
    pub entropy: f64,
    pub ece: f64,
    pub distinct1: f64,
    pub seed: u64,
}

impl SweepRecord {
    fn from_measurement(
        run_id: String,
        method: Method,
        divergence: String,
        beta: f64,
        seed: u64,
        m: FrontierMeasurement,
    ) -> Result<Self> {
        let record = Self {
            run_id,
            method,
            divergence,
            beta,
            achieved_divergence: m.achieved_divergence,
            mean_reward: m.mean_reward,
            entropy: m.entropy,
            ece: m.ece,
            distinct1: m.distinct1,
            seed,
        };
        for (name, v) in [
            ("achieved_divergence", record.achieved_divergence),
            ("mean_reward", record.mean_reward),
            ("entropy", record.entropy),
            ("ece", record.ece),
            ("distinct1", record.distinct1),
        ] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "run {}: {name} is not finite",
                    record.run_id
                )));
            }
        }
        Ok(record)
    }
}

pub const SWEEP_CSV_HEADER: &str =
    "run_id,method,divergence,beta,achieved_divergence,mean_reward,entropy,ece,distinct1,seed";

/// Serialize records sorted by run id; 12 significant digits per value.
pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{}\n",
            r.run_id,
            r.method,
            r.divergence,
            r.beta,
            r.achieved_divergence,
            r.mean_reward,
            r.entropy,
            r.ece,
            r.distinct1,
            r.seed
        ));
    }
    out
}

/// Write the CSV to a file.
pub fn emit_csv(records: &[SweepRecord], path: &std::path::Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

struct RunPlan {
    run_id: String,
    method: Method,
    divergence: crate::divergence::DivergenceSpec,
    beta: f64,
    seed: u64,
}

/// Run the Cartesian product of (method, divergence, beta), plus one
/// exact-solution record per (divergence, beta) as the frontier's upper
/// envelope. Identical configs produce bit-identical records.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let reward = config.task.build_reward()?;
    let reference = config.task.build_reference(&reward)?;
    let truth = config.task.build_truth(&reward, &reference)?;

    let needs_dataset = config.methods.contains(&Method::Fdpo);
    let dataset = if needs_dataset {
        let seed = rng::child_seed(config.master_seed, "dataset");
        Some(generate_dataset(&reward, &reference, config.pairs, seed)?)
    } else {
        None
    };

    let mut plans: Vec<RunPlan> = Vec::new();
    for spec in &config.divergences {
        for &beta in &config.betas {
            for method in config
                .methods
                .iter()
                .copied()
                .chain(std::iter::once(Method::KktOptimal))
            {
                if method == Method::KktOptimal
                    && plans
                        .iter()
                        .any(|p| p.method == Method::KktOptimal && p.divergence == *spec && p.beta == beta)
                {
                    continue;
                }
                let run_id = format!("{spec}-b{beta}-{method}");
                let seed = rng::child_seed(config.master_seed, &format!("run|{run_id}"));
                plans.push(RunPlan {
                    run_id,
                    method,
                    divergence: *spec,
                    beta,
                    seed,
                });
            }
        }
    }

    let results = par::map_indexed(&plans, |plan| -> Result<SweepRecord> {
        let policy = match plan.method {
            Method::KktOptimal => {
                kkt::solve_optimal_policy(&reward, &reference, plan.beta, &plan.divergence)?
                    .to_policy()
            }
            Method::Fdpo => {
                let data = dataset.as_ref().expect("dataset built for fdpo runs");
                let tc = config
                    .train
                    .to_train_config(plan.divergence, plan.beta, plan.seed);
                fdpo::train(data, &reference, &tc)?.0
            }
            Method::PpoReward | Method::PpoLoss => {
                let variant = if plan.method == Method::PpoReward {
                    PpoVariant::PenaltyInReward
                } else {
                    PpoVariant::PenaltyInLoss
                };
                let pc = config
                    .ppo
                    .to_ppo_config(variant, plan.divergence, plan.beta, plan.seed);
                ppo::train_ppo(&reward, &reference, &pc)?.0
            }
        };
        let sample_seed = rng::child_seed(config.master_seed, &format!("rollout|{}", plan.run_id));
        let m = frontier_record(
            &policy,
            &reference,
            &reward,
            &truth,
            &plan.divergence,
            sample_seed,
        )?;
        SweepRecord::from_measurement(
            plan.run_id.clone(),
            plan.method,
            plan.divergence.to_string(),
            plan.beta,
            plan.seed,
            m,
        )
    });

    let mut records = Vec::with_capacity(plans.len());
    for (plan, res) in plans.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => {
                return Err(Error::Numeric(format!(
                    "run {} failed: {e}",
                    plan.run_id
                )))
            }
        }
    }
    records.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(records)
}
