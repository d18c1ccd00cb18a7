//! Finite tabular softmax policies over (context, outcome) grids.
//!
//! A policy stores one logit row per context; softmax of a row is the
//! conditional distribution over outcomes. Softmax keeps every probability
//! strictly positive, which the closed-form solver's hypotheses require of
//! the reference model.

use crate::divergence::FiniteDistribution;
use crate::error::{Error, Result};
use crate::rng;
use crate::tablefmt;
use rand::Rng;

/// The task grid: context count, outcome count, and the context (prompt)
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpace {
    num_contexts: usize,
    num_outcomes: usize,
    context_weights: FiniteDistribution,
}

impl TaskSpace {
    pub fn new(
        num_contexts: usize,
        num_outcomes: usize,
        context_weights: FiniteDistribution,
    ) -> Result<Self> {
        if num_contexts < 2 || num_outcomes < 2 {
            return Err(Error::Argument(format!(
                "task space needs at least 2 contexts and 2 outcomes, got {num_contexts}x{num_outcomes}"
            )));
        }
        if context_weights.len() != num_contexts {
            return Err(Error::Shape(format!(
                "context weights have {} entries for {} contexts",
                context_weights.len(),
                num_contexts
            )));
        }
        Ok(Self {
            num_contexts,
            num_outcomes,
            context_weights,
        })
    }

    /// A space with uniformly weighted contexts.
    pub fn uniform_weights(num_contexts: usize, num_outcomes: usize) -> Result<Self> {
        Self::new(
            num_contexts,
            num_outcomes,
            FiniteDistribution::uniform(num_contexts)?,
        )
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    pub fn context_weights(&self) -> &FiniteDistribution {
        &self.context_weights
    }

    pub fn check_context(&self, context: usize) -> Result<()> {
        if context >= self.num_contexts {
            return Err(Error::Index(format!(
                "context {context} out of range (< {})",
                self.num_contexts
            )));
        }
        Ok(())
    }

    pub fn check_outcome(&self, outcome: usize) -> Result<()> {
        if outcome >= self.num_outcomes {
            return Err(Error::Index(format!(
                "outcome {outcome} out of range (< {})",
                self.num_outcomes
            )));
        }
        Ok(())
    }
}

/// Initialization choices for [`make_policy`].
pub enum PolicyInit<'a> {
    Uniform,
    CopyOf(&'a TabularPolicy),
    Explicit(Vec<f64>),
}

/// A context-indexed logit table defining softmax conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    space: TaskSpace,
    logits: Vec<f64>,
}

impl TabularPolicy {
    /// Uniform policy (all-zero logits).
    pub fn uniform(space: TaskSpace) -> Self {
        let logits = vec![0.0; space.num_contexts * space.num_outcomes];
        Self { space, logits }
    }

    pub fn from_logits(space: TaskSpace, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != space.num_contexts * space.num_outcomes {
            return Err(Error::Shape(format!(
                "logit table has {} entries for a {}x{} space",
                logits.len(),
                space.num_contexts,
                space.num_outcomes
            )));
        }
        if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Argument("logits must not be NaN or +inf".into()));
        }
        Ok(Self { space, logits })
    }

    /// Build a policy whose conditionals equal the given probability rows.
    /// Rows may contain zeros; those outcomes get -inf logits.
    pub fn from_prob_rows(space: TaskSpace, rows: &[FiniteDistribution]) -> Result<Self> {
        if rows.len() != space.num_contexts {
            return Err(Error::Shape(format!(
                "{} probability rows for {} contexts",
                rows.len(),
                space.num_contexts
            )));
        }
        let mut logits = Vec::with_capacity(space.num_contexts * space.num_outcomes);
        for row in rows {
            if row.len() != space.num_outcomes {
                return Err(Error::Shape(format!(
                    "probability row has {} outcomes, space has {}",
                    row.len(),
                    space.num_outcomes
                )));
            }
            logits.extend(row.probs().iter().map(|p| p.ln()));
        }
        Ok(Self { space, logits })
    }

    pub fn space(&self) -> &TaskSpace {
        &self.space
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn logit_row(&self, context: usize) -> &[f64] {
        let k = self.space.num_outcomes;
        &self.logits[context * k..(context + 1) * k]
    }

    /// Softmax conditional for one context.
    pub fn probs(&self, context: usize) -> Result<FiniteDistribution> {
        self.space.check_context(context)?;
        Ok(FiniteDistribution::new(self.prob_row(context))
            .expect("softmax row is a valid distribution"))
    }

    /// Softmax row without the validation wrapper; normalized to sum exactly 1.
    pub fn prob_row(&self, context: usize) -> Vec<f64> {
        let row = self.logit_row(context);
        softmax(row)
    }

    /// All probability rows as a flat table.
    pub fn prob_table(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.logits.len());
        for x in 0..self.space.num_contexts {
            out.extend(self.prob_row(x));
        }
        out
    }

    /// Numerically stable log-probability.
    pub fn log_prob(&self, context: usize, outcome: usize) -> Result<f64> {
        self.space.check_context(context)?;
        self.space.check_outcome(outcome)?;
        let row = self.logit_row(context);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        Ok(row[outcome] - lse)
    }

    /// Draw an outcome for the context; deterministic given the rng state.
    pub fn sample<R: Rng>(&self, context: usize, rng: &mut R) -> Result<usize> {
        self.space.check_context(context)?;
        Ok(rng::sample_categorical(&self.prob_row(context), rng))
    }

    /// Expected conditional entropy in nats, weighted by the context
    /// distribution.
    pub fn entropy(&self) -> f64 {
        let weights = self.space.context_weights.probs();
        let mut total = 0.0;
        for (x, w) in weights.iter().enumerate() {
            let mut h = 0.0;
            for p in self.prob_row(x) {
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            total += w * h;
        }
        total
    }

    /// Subtract each row's mean logit; leaves every conditional unchanged.
    pub fn recenter_rows(&mut self) {
        let k = self.space.num_outcomes;
        for row in self.logits.chunks_mut(k) {
            let mean = row.iter().sum::<f64>() / k as f64;
            if mean.is_finite() {
                for v in row {
                    *v -= mean;
                }
            }
        }
    }

    pub fn to_text(&self) -> String {
        tablefmt::write_table(self.space.num_contexts, self.space.num_outcomes, &self.logits)
    }

    /// Parse the plain-text format; contexts are weighted uniformly.
    pub fn from_text(text: &str) -> Result<Self> {
        let (nc, no, values) = tablefmt::parse_table(text)?;
        let space = TaskSpace::uniform_weights(nc, no)?;
        Self::from_logits(space, values)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_text(&text)
    }
}

/// Stable softmax, normalized so the returned row sums to exactly 1.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Build a policy from an initialization choice.
pub fn make_policy(space: TaskSpace, init: PolicyInit) -> Result<TabularPolicy> {
    match init {
        PolicyInit::Uniform => Ok(TabularPolicy::uniform(space)),
        PolicyInit::CopyOf(reference) => {
            if reference.space() != &space {
                return Err(Error::Shape(
                    "reference policy lives on a different task space".into(),
                ));
            }
            Ok(reference.clone())
        }
        PolicyInit::Explicit(logits) => TabularPolicy::from_logits(space, logits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space_2x4() -> TaskSpace {
        TaskSpace::uniform_weights(2, 4).unwrap()
    }

    #[test]
    fn uniform_policy_probs_and_entropy() {
        let p = TabularPolicy::uniform(space_2x4());
        for x in 0..2 {
            for pr in p.prob_row(x) {
                assert!((pr - 0.25).abs() < 1e-15);
            }
        }
        assert!((p.entropy() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_softmax() {
        let space = space_2x4();
        let mut logits = vec![0.0; 8];
        logits[0] = 3.0f64.ln();
        // row 0 = (ln 3, 0, 0, 0) -> (0.5, 1/6, 1/6, 1/6)
        let p = TabularPolicy::from_logits(space, logits).unwrap();
        let row = p.prob_row(0);
        assert!((row[0] - 0.5).abs() < 1e-14);
        assert!((row[1] - 1.0 / 6.0).abs() < 1e-14);
        // two-outcome example: logits (ln 3, 0) -> (0.75, 0.25)
        let s2 = TaskSpace::uniform_weights(2, 2).unwrap();
        let p2 = TabularPolicy::from_logits(s2, vec![3.0f64.ln(), 0.0, 0.0, 0.0]).unwrap();
        let row = p2.prob_row(0);
        assert!((row[0] - 0.75).abs() < 1e-14);
        assert!((p2.log_prob(0, 0).unwrap() - 0.75f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn log_prob_matches_probs() {
        let space = space_2x4();
        let logits: Vec<f64> = (0..8).map(|i| (i as f64) * 0.7 - 2.0).collect();
        let p = TabularPolicy::from_logits(space, logits).unwrap();
        for x in 0..2 {
            let row = p.prob_row(x);
            let mut total = 0.0;
            for y in 0..4 {
                let lp = p.log_prob(x, y).unwrap();
                assert!(lp <= 0.0);
                assert!((lp.exp() - row[y]).abs() < 1e-12);
                total += row[y];
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(p.log_prob(2, 0).is_err());
        assert!(p.log_prob(0, 4).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_matches_frequencies() {
        let space = space_2x4();
        let logits = vec![1.0, 0.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        let p = TabularPolicy::from_logits(space, logits).unwrap();

        let mut a = crate::rng::from_seed(9);
        let mut b = crate::rng::from_seed(9);
        for _ in 0..50 {
            assert_eq!(p.sample(0, &mut a).unwrap(), p.sample(0, &mut b).unwrap());
        }

        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut rng = crate::rng::from_seed(123);
        for _ in 0..n {
            counts[p.sample(0, &mut rng).unwrap()] += 1;
        }
        let row = p.prob_row(0);
        for y in 0..4 {
            let freq = counts[y] as f64 / n as f64;
            let sigma = (row[y] * (1.0 - row[y]) / n as f64).sqrt();
            assert!(
                (freq - row[y]).abs() <= 3.5 * sigma,
                "outcome {y}: freq {freq} vs prob {}",
                row[y]
            );
        }
    }

    #[test]
    fn near_deterministic_row_samples_its_mode() {
        let space = space_2x4();
        let mut logits = vec![0.0; 8];
        logits[4 + 2] = 60.0;
        let p = TabularPolicy::from_logits(space, logits).unwrap();
        let mut rng = crate::rng::from_seed(1);
        for _ in 0..200 {
            assert_eq!(p.sample(1, &mut rng).unwrap(), 2);
        }
        assert!(p.entropy() < 0.75 * 4.0f64.ln());
    }

    #[test]
    fn make_policy_variants() {
        let space = space_2x4();
        let uni = make_policy(space.clone(), PolicyInit::Uniform).unwrap();
        let copy = make_policy(space.clone(), PolicyInit::CopyOf(&uni)).unwrap();
        assert_eq!(uni, copy);
        assert!(make_policy(space.clone(), PolicyInit::Explicit(vec![0.0; 3])).is_err());
        let explicit =
            make_policy(space, PolicyInit::Explicit((0..8).map(|i| i as f64).collect())).unwrap();
        let row = explicit.prob_row(1);
        let expect = softmax(&[4.0, 5.0, 6.0, 7.0]);
        for (a, b) in row.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn text_round_trip_is_bit_stable() {
        let space = space_2x4();
        let logits: Vec<f64> = (0..8).map(|i| ((i * 37) as f64).sin() * 11.3).collect();
        let p = TabularPolicy::from_logits(space, logits).unwrap();
        let text = p.to_text();
        let q = TabularPolicy::from_text(&text).unwrap();
        assert_eq!(p.logits(), q.logits());
        assert_eq!(text, q.to_text());
    }

    proptest! {
        #[test]
        fn row_shift_leaves_probs_entropy_unchanged(
            logits in proptest::collection::vec(-8.0f64..8.0, 8),
            shift in -30.0f64..30.0,
        ) {
            let p = TabularPolicy::from_logits(space_2x4(), logits.clone()).unwrap();
            let mut shifted = logits;
            for v in shifted[0..4].iter_mut() {
                *v += shift;
            }
            let q = TabularPolicy::from_logits(space_2x4(), shifted).unwrap();
            for (a, b) in p.prob_row(0).iter().zip(q.prob_row(0)) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            prop_assert!((p.entropy() - q.entropy()).abs() < 1e-10);
        }

        #[test]
        fn rows_are_normalized_and_positive(
            logits in proptest::collection::vec(-40.0f64..40.0, 8),
        ) {
            let p = TabularPolicy::from_logits(space_2x4(), logits).unwrap();
            for x in 0..2 {
                let row = p.prob_row(x);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|v| *v > 0.0));
            }
        }
    }
}
