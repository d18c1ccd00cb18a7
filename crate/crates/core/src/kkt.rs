//! Exact constrained-optimal policies via the per-context dual variable.
//!
//! For each context the solver finds the multiplier `lambda` with
//! `S(lambda) = sum_y pi_ref(y) (f')^{-1}((r(y) - lambda) / beta) = 1`
//! and reads the optimal conditional off the stationarity condition
//! `pi*(y) = pi_ref(y) (f')^{-1}((r(y) - lambda) / beta)`.
//!
//! `S` is strictly decreasing wherever finite because `(f')^{-1}` is
//! strictly increasing, so bisection always converges. A feasibility bound
//! keeps the argument inside range(f'): `lambda > max_y r(y) - beta * sup
//! range(f')` (the sup is infinite for reverse KL, 0 for forward KL, ln 2
//! for Jensen-Shannon, 1/alpha for the alpha family).

use crate::divergence::{f_prime, f_prime_inv, DivergenceSpec};
use crate::error::{Error, Result};
use crate::par;
use crate::policy::{TabularPolicy, TaskSpace};
use crate::preference::RewardTable;

/// Per-context solution of the constrained problem.
#[derive(Debug, Clone)]
pub struct KktSolution {
    space: TaskSpace,
    probs: Vec<f64>,
    lambda_per_context: Vec<f64>,
    beta: f64,
    divergence: DivergenceSpec,
    /// Worst |S(lambda) - 1| over contexts at the accepted duals,
    /// before the final renormalization.
    residual: f64,
}

impl KktSolution {
    pub fn space(&self) -> &TaskSpace {
        &self.space
    }

    /// Flat [contexts x outcomes] probability table.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_row(&self, context: usize) -> &[f64] {
        let k = self.space.num_outcomes();
        &self.probs[context * k..(context + 1) * k]
    }

    pub fn lambda_per_context(&self) -> &[f64] {
        &self.lambda_per_context
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn divergence(&self) -> &DivergenceSpec {
        &self.divergence
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// View the solution as a tabular policy (logits = ln probabilities).
    pub fn to_policy(&self) -> TabularPolicy {
        let logits: Vec<f64> = self.probs.iter().map(|p| p.ln()).collect();
        let mut p = TabularPolicy::from_logits(self.space.clone(), logits)
            .expect("solution probabilities are strictly positive");
        p.recenter_rows();
        p
    }
}

fn require_admissible(spec: &DivergenceSpec) -> Result<()> {
    if !spec.solver_admissible() {
        return Err(Error::NotImplemented(format!(
            "{spec} has 0 in dom(f'), so the closed-form solution is unavailable; \
             it stays estimate-only"
        )));
    }
    Ok(())
}

/// Normalization sum S(lambda); +inf when the argument leaves range(f').
fn normalization_sum(
    reward_row: &[f64],
    ref_row: &[f64],
    beta: f64,
    spec: &DivergenceSpec,
    lambda: f64,
) -> f64 {
    let mut total = 0.0;
    for (&r, &q) in reward_row.iter().zip(ref_row) {
        match f_prime_inv(spec, (r - lambda) / beta) {
            Ok(u) => total += q * u,
            Err(_) => return f64::INFINITY,
        }
    }
    total
}

/// A bracket [lo, hi] with S(lo) >= 1 and S(hi) <= 1.
pub fn feasible_lambda_bracket(
    reward_row: &[f64],
    ref_row: &[f64],
    beta: f64,
    spec: &DivergenceSpec,
) -> Result<(f64, f64)> {
    require_admissible(spec)?;
    if reward_row.len() != ref_row.len() || reward_row.is_empty() {
        return Err(Error::Shape("reward and reference rows differ".into()));
    }
    if beta <= 0.0 {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    let s = |lambda: f64| normalization_sum(reward_row, ref_row, beta, spec, lambda);
    let r_max = reward_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let sup = spec.f_prime_sup();
    let mut lo;
    if sup.is_finite() {
        // S blows up as lambda approaches the feasibility bound from above.
        let lambda_min = r_max - beta * sup;
        let mut delta = beta.max(1.0);
        lo = lambda_min + delta;
        let mut tries = 0;
        while s(lo) < 1.0 {
            delta *= 0.5;
            lo = lambda_min + delta;
            tries += 1;
            if tries > 200 {
                return Err(Error::Numeric(
                    "bracket expansion failed on the lower side".into(),
                ));
            }
        }
    } else {
        let r_min = reward_row.iter().copied().fold(f64::INFINITY, f64::min);
        let mut step = beta.max(1.0);
        lo = r_min - step;
        let mut tries = 0;
        while s(lo) < 1.0 {
            lo -= step;
            step *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(Error::Numeric(
                    "bracket expansion failed on the lower side".into(),
                ));
            }
        }
    }

    let mut step = beta.max(1.0);
    let mut hi = r_max + step;
    let mut tries = 0;
    while s(hi) > 1.0 {
        hi += step;
        step *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Numeric(
                "bracket expansion failed on the upper side".into(),
            ));
        }
    }
    Ok((lo, hi))
}

/// Solve one context: dual by bisection, then the stationarity read-off.
/// Returns (probabilities, lambda, |S - 1| at lambda).
fn solve_row(
    reward_row: &[f64],
    ref_row: &[f64],
    beta: f64,
    spec: &DivergenceSpec,
) -> Result<(Vec<f64>, f64, f64)> {
    // Constant rewards: the regularizer is minimized at the reference, so
    // return it exactly instead of root-finding noise.
    let first = reward_row[0];
    if reward_row.iter().all(|&r| r == first) {
        let lambda = first - beta * f_prime(spec, 1.0)?;
        return Ok((ref_row.to_vec(), lambda, 0.0));
    }

    let (mut lo, mut hi) = feasible_lambda_bracket(reward_row, ref_row, beta, spec)?;
    let s = |lambda: f64| normalization_sum(reward_row, ref_row, beta, spec, lambda);
    // Bisect to full f64 resolution; S is monotone so this is unconditional.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if s(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    let mut residual = (s(lambda) - 1.0).abs();
    for cand in [lo, hi] {
        let r = (s(cand) - 1.0).abs();
        if r < residual {
            lambda = cand;
            residual = r;
        }
    }
    if !residual.is_finite() {
        return Err(Error::Numeric("normalization sum not finite at root".into()));
    }

    let mut probs = Vec::with_capacity(reward_row.len());
    for (&r, &q) in reward_row.iter().zip(ref_row) {
        probs.push(q * f_prime_inv(spec, (r - lambda) / beta)?);
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok((probs, lambda, residual))
}

/// Exact optimizer of `E_pi[r] - beta D_f(pi, pi_ref)` per context.
pub fn solve_optimal_policy(
    reward: &RewardTable,
    reference: &TabularPolicy,
    beta: f64,
    spec: &DivergenceSpec,
) -> Result<KktSolution> {
    require_admissible(spec)?;
    if beta <= 0.0 {
        return Err(Error::Argument(format!("beta must be positive, got {beta}")));
    }
    if reference.space() != reward.space() {
        return Err(Error::Shape(
            "reference policy and reward live on different spaces".into(),
        ));
    }
    let space = reward.space().clone();
    let contexts: Vec<usize> = (0..space.num_contexts()).collect();
    let rows = par::map_indexed(&contexts, |&x| {
        solve_row(reward.row(x), &reference.prob_row(x), beta, spec)
    });

    let k = space.num_outcomes();
    let mut probs = Vec::with_capacity(space.num_contexts() * k);
    let mut lambdas = Vec::with_capacity(space.num_contexts());
    let mut residual = 0.0f64;
    for row in rows {
        let (p, lambda, res) = row?;
        probs.extend(p);
        lambdas.push(lambda);
        residual = residual.max(res);
    }
    Ok(KktSolution {
        space,
        probs,
        lambda_per_context: lambdas,
        beta,
        divergence: *spec,
        residual,
    })
}

/// Invert the stationarity condition: `r(y|x) = beta f'(pi/pi_ref)` up to a
/// per-context constant, canonicalized to mean zero per context.
pub fn reconstruct_reward(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    spec: &DivergenceSpec,
) -> Result<RewardTable> {
    require_admissible(spec)?;
    if policy.space() != reference.space() {
        return Err(Error::Shape(
            "policy and reference live on different spaces".into(),
        ));
    }
    let space = policy.space().clone();
    let k = space.num_outcomes();
    let mut rewards = Vec::with_capacity(space.num_contexts() * k);
    for x in 0..space.num_contexts() {
        let p = policy.prob_row(x);
        let q = reference.prob_row(x);
        let mut row = Vec::with_capacity(k);
        for y in 0..k {
            if p[y] == 0.0 {
                return Err(Error::Domain(
                    "zero policy probability: ratio 0 is outside dom(f')".into(),
                ));
            }
            row.push(beta * f_prime(spec, p[y] / q[y])?);
        }
        let mean = row.iter().sum::<f64>() / k as f64;
        rewards.extend(row.into_iter().map(|r| r - mean));
    }
    RewardTable::new(space, rewards)
}

/// Preference probability implied by a policy pair through the reward
/// reparameterization: sigmoid of the f'-margin. Per-context constants
/// cancel, so this equals the Bradley-Terry probability of the
/// reconstructed reward.
pub fn bt_from_policy_pair(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    spec: &DivergenceSpec,
    context: usize,
    yw: usize,
    yl: usize,
) -> Result<f64> {
    require_admissible(spec)?;
    if yw == yl {
        return Err(Error::Argument(
            "winner and loser must be distinct outcomes".into(),
        ));
    }
    let space = policy.space();
    space.check_context(context)?;
    space.check_outcome(yw)?;
    space.check_outcome(yl)?;
    let p = policy.prob_row(context);
    let q = reference.prob_row(context);
    let margin =
        beta * (f_prime(spec, p[yw] / q[yw])? - f_prime(spec, p[yl] / q[yl])?);
    Ok(1.0 / (1.0 + (-margin).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{exact_divergence, solver_admissible_specs, DivergenceSpec};
    use crate::policy::TaskSpace;
    use rand::Rng;

    fn space(nc: usize, no: usize) -> TaskSpace {
        TaskSpace::uniform_weights(nc, no).unwrap()
    }

    fn random_instance(
        rng: &mut impl Rng,
        nc: usize,
        no: usize,
    ) -> (RewardTable, TabularPolicy) {
        let sp = space(nc, no);
        let rewards: Vec<f64> = (0..nc * no).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let logits: Vec<f64> = (0..nc * no).map(|_| rng.gen_range(-1.5..1.5)).collect();
        (
            RewardTable::new(sp.clone(), rewards).unwrap(),
            TabularPolicy::from_logits(sp, logits).unwrap(),
        )
    }

    #[test]
    fn rejects_non_admissible_specs() {
        let mut rng = crate::rng::from_seed(0);
        let (r, p) = random_instance(&mut rng, 2, 3);
        for spec in [
            DivergenceSpec::total_variation(),
            DivergenceSpec::chi_squared(),
        ] {
            assert!(matches!(
                solve_optimal_policy(&r, &p, 0.5, &spec),
                Err(Error::NotImplemented(_))
            ));
        }
    }

    #[test]
    fn constant_reward_returns_reference_exactly() {
        let sp = space(2, 4);
        let r = RewardTable::new(sp.clone(), vec![0.7; 8]).unwrap();
        let reference =
            TabularPolicy::from_logits(sp, (0..8).map(|i| (i as f64) * 0.3).collect()).unwrap();
        for spec in solver_admissible_specs() {
            let sol = solve_optimal_policy(&r, &reference, 0.25, &spec).unwrap();
            for x in 0..2 {
                assert_eq!(sol.prob_row(x), &reference.prob_row(x)[..], "{spec}");
            }
            assert_eq!(sol.residual(), 0.0);
        }
    }

    #[test]
    fn reverse_kl_closed_form() {
        // uniform reference over 2 outcomes, r = (beta ln 3, 0) -> (0.75, 0.25)
        let sp = space(2, 2);
        let beta = 0.37;
        let r = RewardTable::new(sp.clone(), vec![beta * 3.0f64.ln(), 0.0, 0.0, 0.0]).unwrap();
        let reference = TabularPolicy::uniform(sp);
        let sol =
            solve_optimal_policy(&r, &reference, beta, &DivergenceSpec::reverse_kl()).unwrap();
        assert!((sol.prob_row(0)[0] - 0.75).abs() < 1e-12);
        assert!((sol.prob_row(0)[1] - 0.25).abs() < 1e-12);
        // closed-form dual: lambda = beta (ln sum pi_ref e^{r/beta} - 1)
        let z = 0.5 * (3.0f64 + 1.0);
        let expect = beta * (z.ln() - 1.0);
        assert!((sol.lambda_per_context()[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn bracket_respects_range_bounds() {
        let row = [0.0, 0.0];
        let reference = [0.5, 0.5];
        let (lo, _) = feasible_lambda_bracket(
            &row,
            &reference,
            1.0,
            &DivergenceSpec::forward_kl(),
        )
        .unwrap();
        assert!(lo > 0.0, "forward KL needs lambda > max r, got {lo}");
        let (lo, _) = feasible_lambda_bracket(
            &row,
            &reference,
            1.0,
            &DivergenceSpec::jensen_shannon(),
        )
        .unwrap();
        assert!(lo > -std::f64::consts::LN_2 - 1e-12);
    }

    #[test]
    fn stationarity_and_normalization_on_random_instances() {
        let mut rng = crate::rng::from_seed(42);
        for trial in 0..40 {
            let spec = solver_admissible_specs()[trial % 4];
            let beta = [0.1, 0.3, 1.0][trial % 3];
            let (r, reference) = random_instance(&mut rng, 3, 6);
            let sol = solve_optimal_policy(&r, &reference, beta, &spec).unwrap();
            for x in 0..3 {
                let row = sol.prob_row(x);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|p| *p > 0.0));
                let q = reference.prob_row(x);
                let lambda = sol.lambda_per_context()[x];
                for y in 0..6 {
                    let resid = beta * f_prime(&spec, row[y] / q[y]).unwrap() + lambda
                        - r.get(x, y).unwrap();
                    assert!(
                        resid.abs() < 1e-8,
                        "{spec} beta={beta} trial={trial}: residual {resid}"
                    );
                }
            }
            assert!(sol.residual() < 1e-9, "{spec}: |S-1| = {}", sol.residual());
        }
    }

    #[test]
    fn dual_sum_is_strictly_decreasing() {
        let mut rng = crate::rng::from_seed(3);
        for spec in solver_admissible_specs() {
            let (r, reference) = random_instance(&mut rng, 2, 5);
            let (lo, hi) =
                feasible_lambda_bracket(r.row(0), &reference.prob_row(0), 0.3, &spec).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..30 {
                let lambda = lo + (hi - lo) * (i as f64) / 29.0;
                let s = normalization_sum(r.row(0), &reference.prob_row(0), 0.3, &spec, lambda);
                assert!(s <= prev, "{spec}: S not decreasing at {lambda}");
                prev = s;
            }
        }
    }

    #[test]
    fn objective_beats_random_perturbations() {
        let mut rng = crate::rng::from_seed(17);
        let objective = |probs: &[f64], r: &[f64], q: &[f64], beta: f64, spec: &DivergenceSpec| {
            let pd = crate::divergence::FiniteDistribution::new(probs.to_vec()).unwrap();
            let qd = crate::divergence::FiniteDistribution::new(q.to_vec()).unwrap();
            probs.iter().zip(r).map(|(p, r)| p * r).sum::<f64>()
                - beta * exact_divergence(spec, &pd, &qd).unwrap()
        };
        for spec in solver_admissible_specs() {
            let (r, reference) = random_instance(&mut rng, 2, 4);
            let beta = 0.3;
            let sol = solve_optimal_policy(&r, &reference, beta, &spec).unwrap();
            let q = reference.prob_row(0);
            let star = objective(sol.prob_row(0), r.row(0), &q, beta, &spec);
            for _ in 0..1000 {
                let mut cand: Vec<f64> = sol
                    .prob_row(0)
                    .iter()
                    .map(|p| p * rng.gen_range(0.5..2.0))
                    .collect();
                let t: f64 = cand.iter().sum();
                for c in &mut cand {
                    *c /= t;
                }
                let val = objective(&cand, r.row(0), &q, beta, &spec);
                assert!(val <= star + 1e-10, "{spec}: perturbation beat the optimum");
            }
        }
    }

    #[test]
    fn reward_round_trip_is_constant_per_context() {
        let mut rng = crate::rng::from_seed(5);
        for spec in solver_admissible_specs() {
            let (r, reference) = random_instance(&mut rng, 3, 5);
            let beta = 0.3;
            let sol = solve_optimal_policy(&r, &reference, beta, &spec).unwrap();
            let rhat = reconstruct_reward(&sol.to_policy(), &reference, beta, &spec).unwrap();
            for x in 0..3 {
                let diffs: Vec<f64> = rhat
                    .row(x)
                    .iter()
                    .zip(r.row(x))
                    .map(|(a, b)| a - b)
                    .collect();
                let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
                for d in diffs {
                    assert!(
                        (d - mean).abs() < 1e-7,
                        "{spec}: round trip deviates from a constant"
                    );
                }
            }
        }
    }

    #[test]
    fn reconstructed_reward_is_zero_at_reference() {
        let sp = space(2, 3);
        let reference =
            TabularPolicy::from_logits(sp, vec![0.3, -0.2, 0.9, 0.0, 0.1, -0.4]).unwrap();
        for spec in solver_admissible_specs() {
            let r = reconstruct_reward(&reference, &reference, 0.7, &spec).unwrap();
            for v in r.values() {
                assert!(v.abs() < 1e-12, "{spec}");
            }
        }
    }

    #[test]
    fn bt_margin_matches_reconstructed_reward() {
        let mut rng = crate::rng::from_seed(8);
        for spec in solver_admissible_specs() {
            let (_, reference) = random_instance(&mut rng, 2, 4);
            let (_, policy) = random_instance(&mut rng, 2, 4);
            let beta = 0.5;
            let rhat = reconstruct_reward(&policy, &reference, beta, &spec).unwrap();
            for (yw, yl) in [(0, 1), (2, 3), (3, 0)] {
                let direct =
                    bt_from_policy_pair(&policy, &reference, beta, &spec, 1, yw, yl).unwrap();
                let via_reward = crate::preference::bt_prob(&rhat, 1, yw, yl).unwrap();
                assert!((direct - via_reward).abs() < 1e-12, "{spec}");
            }
        }
        let sp = space(2, 4);
        let reference = TabularPolicy::uniform(sp.clone());
        // policy = reference -> margin 0 -> probability one half
        let p = bt_from_policy_pair(
            &reference.clone(),
            &reference,
            1.0,
            &DivergenceSpec::reverse_kl(),
            0,
            0,
            1,
        )
        .unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rkl_bt_pair_hand_value() {
        // pi* = (0.75, 0.25), uniform reference, beta = 1: margin = ln 3
        let sp = space(2, 2);
        let reference = TabularPolicy::uniform(sp.clone());
        let policy = TabularPolicy::from_logits(
            sp,
            vec![0.75f64.ln(), 0.25f64.ln(), 0.0, 0.0],
        )
        .unwrap();
        let p = bt_from_policy_pair(
            &policy,
            &reference,
            1.0,
            &DivergenceSpec::reverse_kl(),
            0,
            0,
            1,
        )
        .unwrap();
        assert!((p - 0.75).abs() < 1e-12);
    }
}
