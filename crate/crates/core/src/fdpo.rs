//! Preference-loss training: the sigmoid margin loss over f'-transformed
//! policy ratios, its analytic logit gradient, and the SGD loop.

use crate::divergence::{exact_divergence, f_double_prime, f_prime, DivergenceSpec};
use crate::error::{Error, Result};
use crate::policy::TabularPolicy;
use crate::preference::{PreferenceDataset, PreferenceTriple};
use crate::rng;
use rand::Rng;

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub beta: f64,
    pub divergence: DivergenceSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub gauge_recenter: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::Argument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        if !self.divergence.solver_admissible() {
            return Err(Error::NotImplemented(format!(
                "training requires a solver-admissible divergence, got {}",
                self.divergence
            )));
        }
        Ok(())
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub iter: usize,
    /// Batch loss at the pre-update policy.
    pub loss: f64,
    /// Exact divergence to the reference after the update, averaged over
    /// the context weights.
    pub divergence: f64,
    /// Policy entropy after the update.
    pub entropy: f64,
    /// L2 norm of the logit gradient used by the update.
    pub grad_norm: f64,
}

/// Per-iteration diagnostics; one record per iteration.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,divergence,entropy,grad_norm\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.11e},{:.11e},{:.11e},{:.11e}\n",
                r.iter, r.loss, r.divergence, r.entropy, r.grad_norm
            ));
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// ln(1 + e^{-h}), stable for any h.
fn softplus_neg(h: f64) -> f64 {
    if h > 0.0 {
        (-h).exp().ln_1p()
    } else {
        -h + h.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The margin `beta (f'(u_w) - f'(u_l))` with `u = pi / pi_ref` at the
/// triple's entries. Constants cancel: this is the implied reward gap.
pub fn implicit_reward_margin(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    spec: &DivergenceSpec,
    triple: &PreferenceTriple,
) -> Result<f64> {
    if !spec.solver_admissible() {
        return Err(Error::NotImplemented(format!(
            "margin requires a solver-admissible divergence, got {spec}"
        )));
    }
    if policy.space() != reference.space() {
        return Err(Error::Shape("policy and reference spaces differ".into()));
    }
    policy.space().check_context(triple.context)?;
    let p = policy.prob_row(triple.context);
    let q = reference.prob_row(triple.context);
    let u_w = p[triple.winner] / q[triple.winner];
    let u_l = p[triple.loser] / q[triple.loser];
    Ok(beta * (f_prime(spec, u_w)? - f_prime(spec, u_l)?))
}

/// Mean `-ln sigmoid(margin)` over the batch; always nonnegative.
pub fn loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    spec: &DivergenceSpec,
    batch: &[PreferenceTriple],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut total = 0.0;
    for t in batch {
        total += softplus_neg(implicit_reward_margin(policy, reference, beta, spec, t)?);
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of [`loss`] with respect to every logit. Rows of contexts
/// absent from the batch are zero; each touched row sums to zero because
/// the softmax Jacobian annihilates constants.
pub fn grad(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    beta: f64,
    spec: &DivergenceSpec,
    batch: &[PreferenceTriple],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if policy.space() != reference.space() {
        return Err(Error::Shape("policy and reference spaces differ".into()));
    }
    let space = policy.space();
    let k = space.num_outcomes();
    let mut g = vec![0.0; space.num_contexts() * k];
    let scale = 1.0 / batch.len() as f64;
    // Cache rows per context as the batch usually revisits them.
    let prob_rows: Vec<Vec<f64>> = (0..space.num_contexts()).map(|x| policy.prob_row(x)).collect();
    let ref_rows: Vec<Vec<f64>> = (0..space.num_contexts())
        .map(|x| reference.prob_row(x))
        .collect();
    for t in batch {
        space.check_context(t.context)?;
        let p = &prob_rows[t.context];
        let q = &ref_rows[t.context];
        let u_w = p[t.winner] / q[t.winner];
        let u_l = p[t.loser] / q[t.loser];
        let h = beta * (f_prime(spec, u_w)? - f_prime(spec, u_l)?);
        // d loss / d h = -sigmoid(-h)
        let coeff = -sigmoid(-h) * scale;
        // d h / d theta_k = beta [ jw (1{k=w} - p_k) - jl (1{k=l} - p_k) ]
        // with j = f''(u) u, using du/dtheta_k = u (1{k=y} - p_k).
        let jw = f_double_prime(spec, u_w)? * u_w;
        let jl = f_double_prime(spec, u_l)? * u_l;
        let row = &mut g[t.context * k..(t.context + 1) * k];
        for (y, item) in row.iter_mut().enumerate() {
            let mut dh = -(jw - jl) * p[y];
            if y == t.winner {
                dh += jw;
            }
            if y == t.loser {
                dh -= jl;
            }
            *item += coeff * beta * dh;
        }
    }
    Ok(g)
}

/// Run the SGD loop: init at the reference, sample a batch with
/// replacement, take one gradient step per iteration, optionally re-center
/// each logit row. Deterministic given the seed.
pub fn train(
    dataset: &PreferenceDataset,
    reference: &TabularPolicy,
    config: &TrainConfig,
) -> Result<(TabularPolicy, TrainTrace)> {
    config.validate()?;
    if dataset.space() != reference.space() {
        return Err(Error::Shape(
            "dataset and reference live on different spaces".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::Argument("dataset is empty".into()));
    }
    let mut policy = reference.clone();
    let mut trace = TrainTrace::default();
    let mut rng = rng::from_seed(config.seed);
    let n = dataset.len();
    let mut batch = Vec::with_capacity(config.batch_size);
    for iter in 0..config.iterations {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(dataset.triples()[rng.gen_range(0..n)]);
        }
        let batch_loss = loss(&policy, reference, config.beta, &config.divergence, &batch)?;
        let g = grad(&policy, reference, config.beta, &config.divergence, &batch)?;
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        {
            let logits = policy.logits_mut();
            for (theta, gi) in logits.iter_mut().zip(&g) {
                *theta -= config.learning_rate * gi;
            }
        }
        if config.gauge_recenter {
            policy.recenter_rows();
        }
        trace.records.push(TraceRecord {
            iter: iter + 1,
            loss: batch_loss,
            divergence: mean_divergence_to_reference(&policy, reference, &config.divergence)?,
            entropy: policy.entropy(),
            grad_norm,
        });
    }
    Ok((policy, trace))
}

/// `E_x[D_f(pi(.|x), pi_ref(.|x))]` under the context weights.
pub fn mean_divergence_to_reference(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    spec: &DivergenceSpec,
) -> Result<f64> {
    if policy.space() != reference.space() {
        return Err(Error::Shape("policy and reference spaces differ".into()));
    }
    let weights = policy.space().context_weights().probs();
    let mut total = 0.0;
    for (x, w) in weights.iter().enumerate() {
        let p = policy.probs(x)?;
        let q = reference.probs(x)?;
        total += w * exact_divergence(spec, &p, &q)?;
    }
    Ok(total)
}
