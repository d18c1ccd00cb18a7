//! Clipped-surrogate policy optimization baselines on the single-step
//! contextual bandit: divergence penalty folded into the per-sample reward
//! versus an exact divergence regularizer handled by a separate SGD step.
//!
//! No value network: a per-context running-mean baseline plays that role,
//! which keeps the comparison about where the divergence penalty lives
//! rather than about value-function learning.

use crate::divergence::{f_prime, f_value, penalty_term, DivergenceKind, DivergenceSpec};
use crate::error::{Error, Result};
use crate::fdpo::{mean_divergence_to_reference, TraceRecord, TrainTrace};
use crate::policy::TabularPolicy;
use crate::preference::RewardTable;
use crate::rng;

/// Where the divergence penalty lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpoVariant {
    /// Penalty folded into each rollout's reward.
    PenaltyInReward,
    /// Raw rollout rewards; the exact tabular divergence regularizer is
    /// descended by a separate SGD step after each policy update.
    PenaltyInLoss,
}

impl std::str::FromStr for PpoVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(PpoVariant::PenaltyInReward),
            "loss" => Ok(PpoVariant::PenaltyInLoss),
            other => Err(Error::Parse(format!(
                "unknown ppo variant '{other}' (expected reward or loss)"
            ))),
        }
    }
}

/// Argument order of the regularizer descended in the `PenaltyInLoss`
/// variant. `ReferenceFirst` is `D_f(pi_ref, pi)`; `PolicyFirst` is
/// `D_f(pi, pi_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerOrder {
    ReferenceFirst,
    PolicyFirst,
}

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub variant: PpoVariant,
    pub beta: f64,
    pub divergence: DivergenceSpec,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub rollouts_per_iter: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Gradient passes over each rollout batch.
    pub epochs: usize,
    /// Momentum of the per-context running-mean baseline.
    pub baseline_momentum: f64,
    pub regularizer_order: RegularizerOrder,
}

impl PpoConfig {
    pub fn defaults(variant: PpoVariant, divergence: DivergenceSpec, beta: f64, seed: u64) -> Self {
        Self {
            variant,
            beta,
            divergence,
            clip_epsilon: 0.2,
            learning_rate: 0.1,
            rollouts_per_iter: 256,
            iterations: 1500,
            seed,
            epochs: 4,
            baseline_momentum: 0.99,
            regularizer_order: RegularizerOrder::ReferenceFirst,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Argument(format!(
                "clip epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("learning_rate", self.learning_rate),
            ("baseline_momentum", self.baseline_momentum),
        ] {
            if v <= 0.0 {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rollouts_per_iter == 0 || self.epochs == 0 {
            return Err(Error::Argument(
                "rollouts_per_iter and epochs must be positive".into(),
            ));
        }
        if self.variant == PpoVariant::PenaltyInReward {
            penalty_supported(&self.divergence)?;
        }
        Ok(())
    }
}

fn penalty_supported(spec: &DivergenceSpec) -> Result<()> {
    match spec.kind() {
        DivergenceKind::ReverseKl | DivergenceKind::JensenShannon | DivergenceKind::ForwardKl => {
            Ok(())
        }
        _ => Err(Error::NotImplemented(format!(
            "reward penalty is defined for rkl, jsd, fkl only, not {spec}"
        ))),
    }
}

/// Per-sample reward with the divergence penalty folded in, at
/// `t = pi_ref(y|x) / pi(y|x)`: `r + beta ln t` for reverse KL and
/// `r - beta * penalty` for Jensen-Shannon and forward KL.
pub fn penalized_reward(
    reward: &RewardTable,
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    context: usize,
    outcome: usize,
    beta: f64,
    spec: &DivergenceSpec,
) -> Result<f64> {
    penalty_supported(spec)?;
    let raw = reward.get(context, outcome)?;
    let t = reference.prob_row(context)[outcome] / policy.prob_row(context)[outcome];
    let pen = penalty_term(spec, t)?;
    Ok(match spec.kind() {
        DivergenceKind::ReverseKl => raw + beta * pen,
        _ => raw - beta * pen,
    })
}

/// Mean clipped surrogate over the batch: `min(rho A, clip(rho) A)` with
/// `rho = pi(y|x) / pi_old(y|x)`. A maximization target.
pub fn ppo_objective(
    policy: &TabularPolicy,
    old_policy: &TabularPolicy,
    batch: &[(usize, usize, f64)],
    clip_epsilon: f64,
) -> Result<f64> {
    if policy.space() != old_policy.space() {
        return Err(Error::Shape("policy and snapshot spaces differ".into()));
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(x, y, adv) in batch {
        policy.space().check_context(x)?;
        policy.space().check_outcome(y)?;
        let rho = policy.prob_row(x)[y] / old_policy.prob_row(x)[y];
        let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
        total += (rho * adv).min(clipped * adv);
    }
    Ok(total / batch.len() as f64)
}

/// d/dpi of `pi f(t)` summed out: used by the exact regularizer step.
/// For `D_f(ref, pi) = sum_y pi f(ref/pi)` the per-outcome factor is
/// `f(t) - t f'(t)`; for `D_f(pi, ref) = sum_y ref f(pi/ref)` it is
/// `f'(pi/ref)`.
fn regularizer_grad_row(
    pi: &[f64],
    reference: &[f64],
    spec: &DivergenceSpec,
    order: RegularizerOrder,
) -> Result<Vec<f64>> {
    let k = pi.len();
    let mut a = vec![0.0; k];
    for y in 0..k {
        a[y] = match order {
            RegularizerOrder::ReferenceFirst => {
                let t = reference[y] / pi[y];
                f_value(spec, t)? - t * f_prime(spec, t)?
            }
            RegularizerOrder::PolicyFirst => f_prime(spec, pi[y] / reference[y])?,
        };
    }
    // chain through softmax: dD/dtheta_k = pi_k (a_k - sum_y pi_y a_y)
    let dot: f64 = pi.iter().zip(&a).map(|(p, v)| p * v).sum();
    Ok((0..k).map(|y| pi[y] * (a[y] - dot)).collect())
}

/// Exact divergence regularizer value matching [`RegularizerOrder`],
/// averaged over context weights.
pub fn regularizer_value(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    spec: &DivergenceSpec,
    order: RegularizerOrder,
) -> Result<f64> {
    match order {
        RegularizerOrder::PolicyFirst => mean_divergence_to_reference(policy, reference, spec),
        RegularizerOrder::ReferenceFirst => {
            let weights = policy.space().context_weights().probs();
            let mut total = 0.0;
            for (x, w) in weights.iter().enumerate() {
                let p = reference.probs(x)?;
                let q = policy.probs(x)?;
                total += w * crate::divergence::exact_divergence(spec, &p, &q)?;
            }
            Ok(total)
        }
    }
}

/// Exact gradient of the regularizer with respect to all logits.
pub fn regularizer_grad(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    spec: &DivergenceSpec,
    order: RegularizerOrder,
) -> Result<Vec<f64>> {
    let space = policy.space();
    let k = space.num_outcomes();
    let weights = space.context_weights().probs();
    let mut g = vec![0.0; space.num_contexts() * k];
    for x in 0..space.num_contexts() {
        let row = regularizer_grad_row(
            &policy.prob_row(x),
            &reference.prob_row(x),
            spec,
            order,
        )?;
        for (y, v) in row.into_iter().enumerate() {
            g[x * k + y] = weights[x] * v;
        }
    }
    Ok(g)
}

/// Train by clipped-surrogate updates over sampled rollouts. Deterministic
/// given the seed.
pub fn train_ppo(
    reward: &RewardTable,
    reference: &TabularPolicy,
    config: &PpoConfig,
) -> Result<(TabularPolicy, TrainTrace)> {
    config.validate()?;
    if reference.space() != reward.space() {
        return Err(Error::Shape(
            "reference policy and reward live on different spaces".into(),
        ));
    }
    let space = reward.space().clone();
    let k = space.num_outcomes();
    let nx = space.num_contexts();
    let weights = space.context_weights().probs().to_vec();
    let mut policy = reference.clone();
    let mut rng = rng::from_seed(config.seed);
    let mut baseline = vec![0.0f64; nx];
    let mut baseline_ready = vec![false; nx];
    let mut trace = TrainTrace::default();

    let m = config.baseline_momentum;
    for iter in 0..config.iterations {
        let old_policy = policy.clone();
        // rollouts
        let mut xs = Vec::with_capacity(config.rollouts_per_iter);
        let mut ys = Vec::with_capacity(config.rollouts_per_iter);
        let mut scores = Vec::with_capacity(config.rollouts_per_iter);
        for _ in 0..config.rollouts_per_iter {
            let x = rng::sample_categorical(&weights, &mut rng);
            let y = old_policy.sample(x, &mut rng)?;
            let score = match config.variant {
                PpoVariant::PenaltyInReward => penalized_reward(
                    reward,
                    &old_policy,
                    reference,
                    x,
                    y,
                    config.beta,
                    &config.divergence,
                )?,
                PpoVariant::PenaltyInLoss => reward.get(x, y)?,
            };
            xs.push(x);
            ys.push(y);
            scores.push(score);
        }
        // advantages against the running per-context baseline
        let mut sums = vec![0.0f64; nx];
        let mut counts = vec![0usize; nx];
        for (i, &x) in xs.iter().enumerate() {
            sums[x] += scores[i];
            counts[x] += 1;
        }
        for x in 0..nx {
            if counts[x] > 0 && !baseline_ready[x] {
                baseline[x] = sums[x] / counts[x] as f64;
                baseline_ready[x] = true;
            }
        }
        let advantages: Vec<f64> = xs
            .iter()
            .zip(&scores)
            .map(|(&x, &s)| s - baseline[x])
            .collect();
        for x in 0..nx {
            if counts[x] > 0 {
                baseline[x] = m * baseline[x] + (1.0 - m) * sums[x] / counts[x] as f64;
            }
        }
        let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;

        // clipped-surrogate ascent, several passes over the same batch
        let old_probs: Vec<f64> = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| old_policy.prob_row(x)[y])
            .collect();
        let mut grad_norm = 0.0;
        for _ in 0..config.epochs {
            let prob_rows: Vec<Vec<f64>> = (0..nx).map(|x| policy.prob_row(x)).collect();
            let mut g = vec![0.0f64; nx * k];
            let scale = 1.0 / config.rollouts_per_iter as f64;
            for i in 0..xs.len() {
                let (x, y, adv) = (xs[i], ys[i], advantages[i]);
                let rho = prob_rows[x][y] / old_probs[i];
                let clipped_off = (rho > 1.0 + config.clip_epsilon && adv > 0.0)
                    || (rho < 1.0 - config.clip_epsilon && adv < 0.0);
                if clipped_off {
                    continue;
                }
                // d(rho A)/dtheta_k = rho A (1{k=y} - pi_k)
                let w = rho * adv * scale;
                let row = &mut g[x * k..(x + 1) * k];
                for (yy, item) in row.iter_mut().enumerate() {
                    *item += w * (if yy == y { 1.0 } else { 0.0 } - prob_rows[x][yy]);
                }
            }
            grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let logits = policy.logits_mut();
            for (theta, gi) in logits.iter_mut().zip(&g) {
                *theta += config.learning_rate * gi;
            }
            policy.recenter_rows();
        }

        // separate exact regularizer descent for the loss variant
        if config.variant == PpoVariant::PenaltyInLoss {
            let g = regularizer_grad(
                &policy,
                reference,
                &config.divergence,
                config.regularizer_order,
            )?;
            let logits = policy.logits_mut();
            for (theta, gi) in logits.iter_mut().zip(&g) {
                *theta -= config.learning_rate * config.beta * gi;
            }
            policy.recenter_rows();
        }

        trace.records.push(TraceRecord {
            iter: iter + 1,
            loss: -mean_score,
            divergence: mean_divergence_to_reference(&policy, reference, &config.divergence)?,
            entropy: policy.entropy(),
            grad_norm,
        });
    }
    Ok((policy, trace))
}

/// Frontier measurements for one policy: exact mean reward, exact
/// divergence to the reference, entropy, and a Monte-Carlo cross-check of
/// the divergence using ratio draws from the reference.
#[derive(Debug, Clone, Copy)]
pub struct RolloutReport {
    pub mean_reward: f64,
    pub exact_divergence: f64,
    pub entropy: f64,
    pub mc_estimate: f64,
    pub mc_standard_error: f64,
}

pub fn frontier_rollout(
    policy: &TabularPolicy,
    reward: &RewardTable,
    reference: &TabularPolicy,
    spec: &DivergenceSpec,
    n_samples: usize,
    seed: u64,
) -> Result<RolloutReport> {
    if n_samples == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let mean_reward = reward.expected_reward(policy)?;
    let exact = mean_divergence_to_reference(policy, reference, spec)?;
    let mut rng = rng::from_seed(seed);
    let weights = policy.space().context_weights().probs().to_vec();
    let mut ratios = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = rng::sample_categorical(&weights, &mut rng);
        let y = reference.sample(x, &mut rng)?;
        ratios.push(policy.prob_row(x)[y] / reference.prob_row(x)[y]);
    }
    let (mc, se) = crate::divergence::mc_estimate(spec, &ratios)?;
    Ok(RolloutReport {
        mean_reward,
        exact_divergence: exact,
        entropy: policy.entropy(),
        mc_estimate: mc,
        mc_standard_error: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TaskSpace;

    fn space() -> TaskSpace {
        TaskSpace::uniform_weights(2, 4).unwrap()
    }

    fn linear_reward(scale: f64) -> RewardTable {
        let k = 4;
        let mut vals = Vec::new();
        for _ in 0..2 {
            for y in 0..k {
                vals.push(scale * (2.0 * y as f64 / (k as f64 - 1.0) - 1.0));
            }
        }
        RewardTable::new(space(), vals).unwrap()
    }

    #[test]
    fn penalized_reward_identities() {
        let r = linear_reward(1.0);
        let reference = TabularPolicy::uniform(space());
        // policy = reference: t = 1, penalty vanishes
        for spec in [
            DivergenceSpec::reverse_kl(),
            DivergenceSpec::jensen_shannon(),
            DivergenceSpec::forward_kl(),
        ] {
            let v =
                penalized_reward(&r, &reference, &reference, 0, 1, 0.7, &spec).unwrap();
            assert!((v - r.get(0, 1).unwrap()).abs() < 1e-14, "{spec}");
        }
        assert!(penalized_reward(
            &r,
            &reference,
            &reference,
            0,
            0,
            0.5,
            &DivergenceSpec::chi_squared()
        )
        .is_err());
        // reverse KL at t = e adds beta
        let mut tilted = reference.clone();
        tilted.logits_mut()[0] = -1.0; // pi(0|0) smaller than ref -> t = ref/pi
        let t = reference.prob_row(0)[0] / tilted.prob_row(0)[0];
        let v = penalized_reward(&r, &tilted, &reference, 0, 0, 1.0, &DivergenceSpec::reverse_kl())
            .unwrap();
        assert!((v - (r.get(0, 0).unwrap() + t.ln())).abs() < 1e-12);
    }

    #[test]
    fn ppo_objective_clip_arithmetic() {
        let reference = TabularPolicy::uniform(space());
        // policy = old: rho = 1, objective = mean advantage
        let batch = vec![(0, 1, 0.5), (1, 2, -0.25)];
        let v = ppo_objective(&reference, &reference, &batch, 0.2).unwrap();
        assert!((v - 0.125).abs() < 1e-15);
        // rho = 2 with positive advantage clips at 1.2
        let mut policy = reference.clone();
        policy.logits_mut()[1] = offset_for_double(&reference, 0, 1);
        let rho = policy.prob_row(0)[1] / reference.prob_row(0)[1];
        assert!((rho - 2.0).abs() < 1e-9);
        let v = ppo_objective(&policy, &reference, &[(0, 1, 1.0)], 0.2).unwrap();
        assert!((v - 1.2).abs() < 1e-9);
        // zero advantages: objective 0
        let v = ppo_objective(&policy, &reference, &[(0, 1, 0.0)], 0.2).unwrap();
        assert_eq!(v, 0.0);
    }

    // logit offset that makes pi(y|x) exactly double the uniform value
    fn offset_for_double(reference: &TabularPolicy, x: usize, y: usize) -> f64 {
        // solve softmax(logits + e_y * d)[y] = 2 * softmax(logits)[y] for d
        let p = reference.prob_row(x)[y];
        let target = 2.0 * p;
        ((target * (1.0 - p)) / (p * (1.0 - target))).ln()
    }

    #[test]
    fn regularizer_grad_matches_finite_differences() {
        let reference = TabularPolicy::uniform(space());
        let mut policy = reference.clone();
        for (i, v) in policy.logits_mut().iter_mut().enumerate() {
            *v += 0.3 * (i as f64 % 3.0) - 0.2;
        }
        for spec in [
            DivergenceSpec::reverse_kl(),
            DivergenceSpec::jensen_shannon(),
            DivergenceSpec::forward_kl(),
        ] {
            for order in [RegularizerOrder::ReferenceFirst, RegularizerOrder::PolicyFirst] {
                let g = regularizer_grad(&policy, &reference, &spec, order).unwrap();
                let h = 1e-6;
                for idx in 0..8 {
                    let mut up = policy.clone();
                    up.logits_mut()[idx] += h;
                    let mut dn = policy.clone();
                    dn.logits_mut()[idx] -= h;
                    let fd = (regularizer_value(&up, &reference, &spec, order).unwrap()
                        - regularizer_value(&dn, &reference, &spec, order).unwrap())
                        / (2.0 * h);
                    let denom = fd.abs().max(1e-6);
                    assert!(
                        (g[idx] - fd).abs() / denom < 1e-6,
                        "{spec} {order:?} idx {idx}: {} vs {}",
                        g[idx],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn huge_beta_loss_variant_stays_at_reference() {
        let r = linear_reward(0.5);
        let reference = TabularPolicy::uniform(space());
        let mut config = PpoConfig::defaults(
            PpoVariant::PenaltyInLoss,
            DivergenceSpec::reverse_kl(),
            1000.0,
            3,
        );
        config.iterations = 500;
        // keep lr * beta below the regularizer's curvature scale
        config.learning_rate = 0.001;
        let (policy, _) = train_ppo(&r, &reference, &config).unwrap();
        let tv: f64 = (0..2)
            .map(|x| {
                0.5 * policy
                    .prob_row(x)
                    .iter()
                    .zip(reference.prob_row(x))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "policy drifted TV {tv} despite huge beta");
    }

    #[test]
    fn constant_reward_keeps_both_variants_near_reference() {
        let r = RewardTable::new(space(), vec![0.4; 8]).unwrap();
        let reference = TabularPolicy::uniform(space());
        for variant in [PpoVariant::PenaltyInReward, PpoVariant::PenaltyInLoss] {
            let mut config =
                PpoConfig::defaults(variant, DivergenceSpec::reverse_kl(), 0.1, 11);
            config.iterations = 300;
            let (policy, _) = train_ppo(&r, &reference, &config).unwrap();
            let tv: f64 = (0..2)
                .map(|x| {
                    0.5 * policy
                        .prob_row(x)
                        .iter()
                        .zip(reference.prob_row(x))
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.05, "{variant:?}: TV {tv}");
        }
    }

    #[test]
    fn reward_variant_rkl_approaches_optimal_reward() {
        // 2-outcome bandit, r = (1, 0), beta = 0.1: compare mean reward to
        // the exact solution's
        let sp = TaskSpace::uniform_weights(2, 2).unwrap();
        let r = RewardTable::new(sp.clone(), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let reference = TabularPolicy::uniform(sp);
        let star = crate::kkt::solve_optimal_policy(
            &r,
            &reference,
            0.1,
            &DivergenceSpec::reverse_kl(),
        )
        .unwrap();
        let star_reward = r.expected_reward(&star.to_policy()).unwrap();
        let mut config = PpoConfig::defaults(
            PpoVariant::PenaltyInReward,
            DivergenceSpec::reverse_kl(),
            0.1,
            21,
        );
        config.iterations = 1200;
        let (policy, _) = train_ppo(&r, &reference, &config).unwrap();
        let got = r.expected_reward(&policy).unwrap();
        assert!(
            (got - star_reward).abs() < 0.05,
            "ppo reward {got} vs optimal {star_reward}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let r = linear_reward(0.5);
        let reference = TabularPolicy::uniform(space());
        let mut config = PpoConfig::defaults(
            PpoVariant::PenaltyInReward,
            DivergenceSpec::reverse_kl(),
            0.3,
            5,
        );
        config.iterations = 100;
        let (a, _) = train_ppo(&r, &reference, &config).unwrap();
        let (b, _) = train_ppo(&r, &reference, &config).unwrap();
        assert_eq!(a.logits(), b.logits());
    }

    #[test]
    fn frontier_rollout_at_reference() {
        let r = linear_reward(1.0);
        let reference = TabularPolicy::uniform(space());
        let report = frontier_rollout(
            &reference,
            &r,
            &reference,
            &DivergenceSpec::reverse_kl(),
            10_000,
            9,
        )
        .unwrap();
        assert!(report.exact_divergence.abs() < 1e-14);
        assert_eq!(report.mc_estimate, 0.0);
        assert!((report.mean_reward - 0.0).abs() < 1e-12);
        assert!(frontier_rollout(
            &reference,
            &r,
            &reference,
            &DivergenceSpec::reverse_kl(),
            0,
            9
        )
        .is_err());
    }

    #[test]
    fn frontier_rollout_mc_within_three_se() {
        let r = linear_reward(1.0);
        let reference = TabularPolicy::uniform(space());
        let mut policy = reference.clone();
        for (i, v) in policy.logits_mut().iter_mut().enumerate() {
            *v += 0.25 * i as f64;
        }
        for spec in [DivergenceSpec::reverse_kl(), DivergenceSpec::jensen_shannon()] {
            let report = frontier_rollout(&policy, &r, &reference, &spec, 100_000, 33).unwrap();
            assert!(
                (report.mc_estimate - report.exact_divergence).abs()
                    <= 3.0 * report.mc_standard_error,
                "{spec}: mc {} vs exact {} (se {})",
                report.mc_estimate,
                report.exact_divergence,
                report.mc_standard_error
            );
        }
    }
}
