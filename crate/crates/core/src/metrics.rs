//! Calibration error for stochastic tabular policies, the divergence-based
//! calibration bounds, and diversity metrics.
//!
//! The finite setting admits the exact calibration error
//! `E_x[sum_y pi(y|x) |truth(y|x) - pi(y|x)|]` with no binning.

use crate::divergence::{exact_divergence, DivergenceSpec, FiniteDistribution};
use crate::error::{Error, Result};
use crate::fdpo::mean_divergence_to_reference;
use crate::policy::TabularPolicy;
use crate::preference::RewardTable;
use crate::rng;
use std::collections::HashSet;

/// Exact calibration error of `policy` against a ground-truth conditional,
/// plus the per-context terms before weighting.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub ece: f64,
    pub per_context_terms: Vec<f64>,
    /// `E_x[2 sqrt(2 D_KL(row1, row2))]`, filled by [`compare_calibration`].
    pub bound_rhs_kl: f64,
    /// `E_x[4 sqrt(2 D_JS(row1, row2))]`, filled by [`compare_calibration`].
    pub bound_rhs_js: f64,
}

fn check_truth_shape(policy: &TabularPolicy, truth: &[FiniteDistribution]) -> Result<()> {
    let space = policy.space();
    if truth.len() != space.num_contexts() {
        return Err(Error::Shape(format!(
            "truth table has {} rows for {} contexts",
            truth.len(),
            space.num_contexts()
        )));
    }
    for row in truth {
        if row.len() != space.num_outcomes() {
            return Err(Error::Shape(format!(
                "truth row has {} outcomes, space has {}",
                row.len(),
                space.num_outcomes()
            )));
        }
    }
    Ok(())
}

/// `E_x[sum_y pi(y|x) |truth(y|x) - pi(y|x)|]`, exact over contexts.
pub fn ece_exact(policy: &TabularPolicy, truth: &[FiniteDistribution]) -> Result<CalibrationReport> {
    check_truth_shape(policy, truth)?;
    let space = policy.space();
    let mut per_context = Vec::with_capacity(space.num_contexts());
    let mut total = 0.0;
    for (x, w) in space.context_weights().probs().iter().enumerate() {
        let p = policy.prob_row(x);
        let term: f64 = p
            .iter()
            .zip(truth[x].probs())
            .map(|(pi, t)| pi * (t - pi).abs())
            .sum();
        per_context.push(term);
        total += w * term;
    }
    Ok(CalibrationReport {
        ece: total,
        per_context_terms: per_context,
        bound_rhs_kl: 0.0,
        bound_rhs_js: 0.0,
    })
}

/// Which calibration bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Kl,
    Js,
}

/// `E_x` of the bound expression with the catalog's exact divergence:
/// `2 sqrt(2 D_KL)` for [`BoundKind::Kl`], `4 sqrt(2 D_JS)` for
/// [`BoundKind::Js`].
pub fn ece_bound_rhs(
    policy1: &TabularPolicy,
    policy2: &TabularPolicy,
    which: BoundKind,
) -> Result<f64> {
    if policy1.space() != policy2.space() {
        return Err(Error::Shape("policies live on different spaces".into()));
    }
    let spec = match which {
        BoundKind::Kl => DivergenceSpec::reverse_kl(),
        BoundKind::Js => DivergenceSpec::jensen_shannon(),
    };
    let coeff = match which {
        BoundKind::Kl => 2.0,
        BoundKind::Js => 4.0,
    };
    let space = policy1.space();
    let mut total = 0.0;
    for (x, w) in space.context_weights().probs().iter().enumerate() {
        let d = exact_divergence(&spec, &policy1.probs(x)?, &policy2.probs(x)?)?;
        total += w * coeff * (2.0 * d).sqrt();
    }
    Ok(total)
}

/// Both policies' exact calibration errors and both bound right-hand sides
/// in the (policy1, policy2) ordering.
pub fn compare_calibration(
    policy1: &TabularPolicy,
    policy2: &TabularPolicy,
    truth: &[FiniteDistribution],
) -> Result<(CalibrationReport, f64)> {
    let mut report = ece_exact(policy1, truth)?;
    let ece2 = ece_exact(policy2, truth)?.ece;
    report.bound_rhs_kl = ece_bound_rhs(policy1, policy2, BoundKind::Kl)?;
    report.bound_rhs_js = ece_bound_rhs(policy1, policy2, BoundKind::Js)?;
    Ok((report, ece2))
}

/// Distinct n-grams over total n-grams across all sample sequences.
pub fn distinct_n(samples: &[Vec<usize>], n: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("empty sample list".into()));
    }
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    let mut seen: HashSet<&[usize]> = HashSet::new();
    let mut total = 0usize;
    for seq in samples {
        if seq.len() >= n {
            for gram in seq.windows(n) {
                seen.insert(gram);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Argument(format!(
            "no sequence is long enough for {n}-grams"
        )));
    }
    Ok(seen.len() as f64 / total as f64)
}

/// Frontier measurements for one policy against a task: exact mean reward,
/// exact divergence to the reference, entropy, calibration error against a
/// supplied ground-truth conditional, and distinct-1 over sampled outcomes.
#[derive(Debug, Clone, Copy)]
pub struct FrontierMeasurement {
    pub achieved_divergence: f64,
    pub mean_reward: f64,
    pub entropy: f64,
    pub ece: f64,
    pub distinct1: f64,
}

pub const FRONTIER_DISTINCT_SAMPLES: usize = 10_000;

pub fn frontier_record(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    truth_reward: &RewardTable,
    truth: &[FiniteDistribution],
    spec: &DivergenceSpec,
    sample_seed: u64,
) -> Result<FrontierMeasurement> {
    if policy.space() != reference.space() || policy.space() != truth_reward.space() {
        return Err(Error::Shape(
            "policy, reference and reward must share a space".into(),
        ));
    }
    let mut rng = rng::from_seed(sample_seed);
    let weights = policy.space().context_weights().probs().to_vec();
    let mut samples = Vec::with_capacity(FRONTIER_DISTINCT_SAMPLES);
    for _ in 0..FRONTIER_DISTINCT_SAMPLES {
        let x = rng::sample_categorical(&weights, &mut rng);
        samples.push(vec![policy.sample(x, &mut rng)?]);
    }
    Ok(FrontierMeasurement {
        achieved_divergence: mean_divergence_to_reference(policy, reference, spec)?,
        mean_reward: truth_reward.expected_reward(policy)?,
        entropy: policy.entropy(),
        ece: ece_exact(policy, truth)?.ece,
        distinct1: distinct_n(&samples, 1)?,
    })
}
