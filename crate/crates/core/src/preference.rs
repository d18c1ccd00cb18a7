//! Bradley-Terry preference probabilities and synthetic preference data.
//!
//! Pairwise labels follow p(i beats j) = sigmoid(r_i - r_j). The same model
//! arises from comparing rewards corrupted by i.i.d. standard Gumbel noise,
//! which `gumbel_winrate` checks empirically.

use crate::divergence::FiniteDistribution;
use crate::error::{Error, Result};
use crate::policy::{TabularPolicy, TaskSpace};
use crate::rng;
use crate::tablefmt;
use rand::Rng;
use sha2::{Digest, Sha256};

/// Ground-truth reward r(y|x) on the task grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    space: TaskSpace,
    rewards: Vec<f64>,
}

impl RewardTable {
    pub fn new(space: TaskSpace, rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() != space.num_contexts() * space.num_outcomes() {
            return Err(Error::Shape(format!(
                "reward table has {} entries for a {}x{} space",
                rewards.len(),
                space.num_contexts(),
                space.num_outcomes()
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Argument("rewards must be finite".into()));
        }
        Ok(Self { space, rewards })
    }

    pub fn space(&self) -> &TaskSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.rewards
    }

    pub fn row(&self, context: usize) -> &[f64] {
        let k = self.space.num_outcomes();
        &self.rewards[context * k..(context + 1) * k]
    }

    pub fn get(&self, context: usize, outcome: usize) -> Result<f64> {
        self.space.check_context(context)?;
        self.space.check_outcome(outcome)?;
        Ok(self.rewards[context * self.space.num_outcomes() + outcome])
    }

    /// Expected reward of a policy under the context weights.
    pub fn expected_reward(&self, policy: &TabularPolicy) -> Result<f64> {
        if policy.space() != &self.space {
            return Err(Error::Shape("policy and reward spaces differ".into()));
        }
        let mut total = 0.0;
        for (x, w) in self.space.context_weights().probs().iter().enumerate() {
            let row = policy.prob_row(x);
            total += w
                * row
                    .iter()
                    .zip(self.row(x))
                    .map(|(p, r)| p * r)
                    .sum::<f64>();
        }
        Ok(total)
    }

    pub fn to_text(&self) -> String {
        tablefmt::write_table(
            self.space.num_contexts(),
            self.space.num_outcomes(),
            &self.rewards,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (nc, no, values) = tablefmt::parse_table(text)?;
        Self::new(TaskSpace::uniform_weights(nc, no)?, values)
    }

    /// Hex digest of the serialized table, for dataset provenance.
    pub fn digest(&self) -> String {
        hex_digest(&self.to_text())
    }
}

/// Hex digest of a policy's serialized logits, for dataset provenance.
pub fn policy_digest(policy: &TabularPolicy) -> String {
    hex_digest(&policy.to_text())
}

fn hex_digest(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// One labeled comparison: the winner beat the loser in the given context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreferenceTriple {
    pub context: usize,
    pub winner: usize,
    pub loser: usize,
}

impl PreferenceTriple {
    pub fn new(space: &TaskSpace, context: usize, winner: usize, loser: usize) -> Result<Self> {
        space.check_context(context)?;
        space.check_outcome(winner)?;
        space.check_outcome(loser)?;
        if winner == loser {
            return Err(Error::Argument(
                "winner and loser must be distinct outcomes".into(),
            ));
        }
        Ok(Self {
            context,
            winner,
            loser,
        })
    }
}

/// Generation provenance recorded alongside a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub reward_digest: String,
    pub policy_digest: String,
}

/// A sequence of labeled comparisons plus how they were generated.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    space: TaskSpace,
    triples: Vec<PreferenceTriple>,
    provenance: Provenance,
}

impl PreferenceDataset {
    pub fn space(&self) -> &TaskSpace {
        &self.space
    }

    pub fn triples(&self) -> &[PreferenceTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# seed={} reward_digest={} policy_digest={}\n",
            self.provenance.seed, self.provenance.reward_digest, self.provenance.policy_digest
        );
        out.push_str("context,winner,loser\n");
        for t in &self.triples {
            out.push_str(&format!("{},{},{}\n", t.context, t.winner, t.loser));
        }
        out
    }

    /// Parse the CSV form. The space is inferred as the smallest grid
    /// covering the indices unless `space` is given.
    pub fn from_csv(text: &str, space: Option<TaskSpace>) -> Result<Self> {
        let mut provenance = Provenance {
            seed: 0,
            reward_digest: String::new(),
            policy_digest: String::new(),
        };
        let mut rows: Vec<(usize, usize, usize)> = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("seed=") {
                        provenance.seed = v
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad seed '{v}'")))?;
                    } else if let Some(v) = tok.strip_prefix("reward_digest=") {
                        provenance.reward_digest = v.to_string();
                    } else if let Some(v) = tok.strip_prefix("policy_digest=") {
                        provenance.policy_digest = v.to_string();
                    }
                }
                continue;
            }
            if !saw_header {
                if line != "context,winner,loser" {
                    return Err(Error::Parse(format!(
                        "expected header 'context,winner,loser', got '{line}'"
                    )));
                }
                saw_header = true;
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("bad dataset row '{line}'")));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad index '{s}'")))
            };
            rows.push((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
        }
        if !saw_header {
            return Err(Error::Parse("dataset has no header line".into()));
        }
        let space = match space {
            Some(s) => s,
            None => {
                let nc = rows.iter().map(|r| r.0 + 1).max().unwrap_or(2).max(2);
                let no = rows
                    .iter()
                    .map(|r| r.1.max(r.2) + 1)
                    .max()
                    .unwrap_or(2)
                    .max(2);
                TaskSpace::uniform_weights(nc, no)?
            }
        };
        let triples = rows
            .into_iter()
            .map(|(c, w, l)| PreferenceTriple::new(&space, c, w, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreferenceDataset {
            space,
            triples,
            provenance,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path, space: Option<TaskSpace>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv(&text, space)
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

/// Bradley-Terry probability that `yi` beats `yj` in the context.
pub fn bt_prob(
    reward: &RewardTable,
    context: usize,
    yi: usize,
    yj: usize,
) -> Result<f64> {
    if yi == yj {
        return Err(Error::Argument(
            "comparison of an outcome with itself is undefined".into(),
        ));
    }
    let ri = reward.get(context, yi)?;
    let rj = reward.get(context, yj)?;
    Ok(sigmoid(ri - rj))
}

/// Label one pair by a Bradley-Terry coin flip.
pub fn sample_pair_label<R: Rng>(
    reward: &RewardTable,
    context: usize,
    yi: usize,
    yj: usize,
    rng: &mut R,
) -> Result<PreferenceTriple> {
    let p = bt_prob(reward, context, yi, yj)?;
    let (winner, loser) = if rng.gen::<f64>() < p { (yi, yj) } else { (yj, yi) };
    PreferenceTriple::new(reward.space(), context, winner, loser)
}

/// Fraction of `n` trials where yi's noisy reward beats yj's, with i.i.d.
/// standard Gumbel noise. Converges to `bt_prob`.
pub fn gumbel_winrate<R: Rng>(
    reward: &RewardTable,
    context: usize,
    yi: usize,
    yj: usize,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    if yi == yj {
        return Err(Error::Argument(
            "comparison of an outcome with itself is undefined".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Argument("need at least one trial".into()));
    }
    let ri = reward.get(context, yi)?;
    let rj = reward.get(context, yj)?;
    let mut wins = 0usize;
    for _ in 0..n {
        let a = ri + rng::sample_gumbel(rng);
        let b = rj + rng::sample_gumbel(rng);
        if a > b {
            wins += 1;
        }
    }
    Ok(wins as f64 / n as f64)
}

/// Generate `n_pairs` labeled comparisons: context from the space weights,
/// two distinct candidates from the candidate policy, label via
/// Bradley-Terry on the ground-truth reward.
pub fn generate_dataset(
    reward: &RewardTable,
    candidate_policy: &TabularPolicy,
    n_pairs: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    if n_pairs == 0 {
        return Err(Error::Argument("n_pairs must be at least 1".into()));
    }
    if candidate_policy.space() != reward.space() {
        return Err(Error::Shape(
            "candidate policy and reward live on different spaces".into(),
        ));
    }
    let space = reward.space().clone();
    let mut rng = rng::from_seed(seed);
    let weights = space.context_weights().probs().to_vec();
    let mut triples = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let context = rng::sample_categorical(&weights, &mut rng);
        let row = candidate_policy.prob_row(context);
        let a = rng::sample_categorical(&row, &mut rng);
        let mut b = rng::sample_categorical(&row, &mut rng);
        let mut attempts = 0;
        while b == a {
            attempts += 1;
            if attempts >= 1000 {
                return Err(Error::Generation(format!(
                    "context {context} failed to produce distinct candidates after 1000 attempts"
                )));
            }
            b = rng::sample_categorical(&row, &mut rng);
        }
        triples.push(sample_pair_label(reward, context, a, b, &mut rng)?);
    }
    Ok(PreferenceDataset {
        space,
        triples,
        provenance: Provenance {
            seed,
            reward_digest: reward.digest(),
            policy_digest: policy_digest(candidate_policy),
        },
    })
}

/// Closed-form distribution of the Bradley-Terry winner when two distinct
/// candidates are drawn i.i.d. from `candidates`:
/// P(winner = y | x) = sum_{b != y} 2 q(y) q(b) sigma(r_y - r_b) / (1 - sum q^2).
pub fn bt_winner_conditional(
    reward: &RewardTable,
    candidates: &TabularPolicy,
) -> Result<Vec<FiniteDistribution>> {
    if candidates.space() != reward.space() {
        return Err(Error::Shape(
            "candidate policy and reward live on different spaces".into(),
        ));
    }
    let k = reward.space().num_outcomes();
    let mut rows = Vec::with_capacity(reward.space().num_contexts());
    for x in 0..reward.space().num_contexts() {
        let q = candidates.prob_row(x);
        let r = reward.row(x);
        let denom = 1.0 - q.iter().map(|v| v * v).sum::<f64>();
        let mut row = vec![0.0; k];
        for y in 0..k {
            let mut s = 0.0;
            for b in 0..k {
                if b == y {
                    continue;
                }
                s += 2.0 * q[y] * q[b] * sigmoid(r[y] - r[b]);
            }
            row[y] = s / denom;
        }
        let total: f64 = row.iter().sum();
        for v in &mut row {
            *v /= total;
        }
        rows.push(FiniteDistribution::new(row)?);
    }
    Ok(rows)
}
