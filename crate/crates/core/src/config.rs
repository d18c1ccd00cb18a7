//! Flat `section.key = value` configuration files with `#` comments, plus
//! the task generators they name. Unknown keys are hard errors so typos
//! never pass silently.

use crate::divergence::{DivergenceSpec, FiniteDistribution};
use crate::error::{Error, Result};
use crate::fdpo::TrainConfig;
use crate::policy::{TabularPolicy, TaskSpace};
use crate::ppo::{PpoConfig, PpoVariant, RegularizerOrder};
use crate::preference::{bt_winner_conditional, RewardTable};
use crate::rng;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Reward table generators selectable from config files.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardGen {
    /// i.i.d. uniform entries in [lo, hi].
    Uniform { lo: f64, hi: f64 },
    /// Two high-reward outcomes per context at `gap`, the rest at zero.
    /// Mode positions rotate with the context index.
    Bimodal { gap: f64 },
    /// Reward proportional to the outcome index, scaled to [-scale, scale].
    Linear { scale: f64 },
}

impl FromStr for RewardGen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("unbalanced parens in '{s}'")))?;
                (&s[..i], inner.split(',').map(str::trim).collect::<Vec<_>>())
            }
            None => (s, Vec::new()),
        };
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{t}' in reward generator '{s}'")))
        };
        match (name, args.as_slice()) {
            ("uniform", [lo, hi]) => Ok(RewardGen::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            }),
            ("bimodal", [gap]) => Ok(RewardGen::Bimodal { gap: num(gap)? }),
            ("linear", []) => Ok(RewardGen::Linear { scale: 1.0 }),
            ("linear", [scale]) => Ok(RewardGen::Linear { scale: num(scale)? }),
            _ => Err(Error::Parse(format!(
                "unknown reward generator '{s}' (expected uniform(lo,hi), bimodal(gap), linear[(scale)])"
            ))),
        }
    }
}

impl fmt::Display for RewardGen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardGen::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            RewardGen::Bimodal { gap } => write!(f, "bimodal({gap})"),
            RewardGen::Linear { scale } => write!(f, "linear({scale})"),
        }
    }
}

/// Reference-policy generators selectable from config files.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceGen {
    Uniform,
    /// The Bradley-Terry winner distribution under uniform candidate draws.
    /// Such a reference is exactly calibrated against the task's winner
    /// conditional at initialization.
    BtWinrate,
    /// i.i.d. Gaussian logits with the given sigma.
    Random { sigma: f64 },
}

impl FromStr for ReferenceGen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ReferenceGen::Uniform),
            "bt_winrate" => Ok(ReferenceGen::BtWinrate),
            other => {
                if let Some(inner) = other.strip_prefix("random(").and_then(|r| r.strip_suffix(')'))
                {
                    let sigma: f64 = inner
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad sigma in '{other}'")))?;
                    Ok(ReferenceGen::Random { sigma })
                } else {
                    Err(Error::Parse(format!(
                        "unknown reference generator '{other}' (expected uniform, bt_winrate, random(sigma))"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for ReferenceGen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceGen::Uniform => write!(f, "uniform"),
            ReferenceGen::BtWinrate => write!(f, "bt_winrate"),
            ReferenceGen::Random { sigma } => write!(f, "random({sigma})"),
        }
    }
}

/// The task section: grid shape and generators.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub contexts: usize,
    pub outcomes: usize,
    pub reward: RewardGen,
    pub reference: ReferenceGen,
    /// `None` means uniform weights.
    pub context_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            contexts: 4,
            outcomes: 6,
            reward: RewardGen::Bimodal { gap: 3.0 },
            reference: ReferenceGen::BtWinrate,
            context_weights: None,
            seed: 7,
        }
    }
}

impl TaskConfig {
    pub fn space(&self) -> Result<TaskSpace> {
        match &self.context_weights {
            None => TaskSpace::uniform_weights(self.contexts, self.outcomes),
            Some(w) => TaskSpace::new(
                self.contexts,
                self.outcomes,
                FiniteDistribution::new(w.clone())?,
            ),
        }
    }

    pub fn build_reward(&self) -> Result<RewardTable> {
        let space = self.space()?;
        let nc = self.contexts;
        let no = self.outcomes;
        let values = match &self.reward {
            RewardGen::Uniform { lo, hi } => {
                if hi <= lo {
                    return Err(Error::Config(format!(
                        "uniform reward needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
                let mut rng = rng::stream(self.seed, "task.reward");
                (0..nc * no).map(|_| rng.gen_range(*lo..*hi)).collect()
            }
            RewardGen::Bimodal { gap } => {
                let mut v = vec![0.0; nc * no];
                let shift = (no / 2).max(1);
                for x in 0..nc {
                    v[x * no + x % no] = *gap;
                    v[x * no + (x + shift) % no] = *gap;
                }
                v
            }
            RewardGen::Linear { scale } => {
                let mut v = Vec::with_capacity(nc * no);
                for _ in 0..nc {
                    for y in 0..no {
                        v.push(scale * (2.0 * y as f64 / (no as f64 - 1.0) - 1.0));
                    }
                }
                v
            }
        };
        RewardTable::new(space, values)
    }

    pub fn build_reference(&self, reward: &RewardTable) -> Result<TabularPolicy> {
        let space = self.space()?;
        match &self.reference {
            ReferenceGen::Uniform => Ok(TabularPolicy::uniform(space)),
            ReferenceGen::BtWinrate => {
                let uniform = TabularPolicy::uniform(space.clone());
                let rows = bt_winner_conditional(reward, &uniform)?;
                TabularPolicy::from_prob_rows(space, &rows)
            }
            ReferenceGen::Random { sigma } => {
                let mut rng = rng::stream(self.seed, "task.reference");
                let logits = (0..self.contexts * self.outcomes)
                    .map(|_| sigma * standard_normal(&mut rng))
                    .collect();
                TabularPolicy::from_logits(space, logits)
            }
        }
    }

    /// The task's ground-truth conditional for calibration metrics.
    ///
    /// A `bt_winrate` reference IS the winner conditional it was built
    /// from, so it starts exactly calibrated; for other references the
    /// truth is the winner distribution of pairs drawn from the reference.
    pub fn build_truth(
        &self,
        reward: &RewardTable,
        reference: &TabularPolicy,
    ) -> Result<Vec<FiniteDistribution>> {
        match self.reference {
            ReferenceGen::BtWinrate => {
                (0..self.contexts).map(|x| reference.probs(x)).collect()
            }
            _ => bt_winner_conditional(reward, reference),
        }
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Sweep methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fdpo,
    PpoReward,
    PpoLoss,
    KktOptimal,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fdpo" => Ok(Method::Fdpo),
            "ppo_reward" => Ok(Method::PpoReward),
            "ppo_loss" => Ok(Method::PpoLoss),
            "kkt_optimal" => Ok(Method::KktOptimal),
            other => Err(Error::Parse(format!(
                "unknown method '{other}' (expected fdpo, ppo_reward, ppo_loss)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fdpo => write!(f, "fdpo"),
            Method::PpoReward => write!(f, "ppo_reward"),
            Method::PpoLoss => write!(f, "ppo_loss"),
            Method::KktOptimal => write!(f, "kkt_optimal"),
        }
    }
}

/// Everything a sweep needs: the task, method/divergence/beta grids, the
/// training settings, and the output path.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub methods: Vec<Method>,
    pub divergences: Vec<DivergenceSpec>,
    pub betas: Vec<f64>,
    pub pairs: usize,
    pub master_seed: u64,
    pub output: Option<String>,
    pub train: TrainSettings,
    pub ppo: PpoSettings,
}

/// Trainer settings minus the per-run divergence, beta and seed.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub gauge_recenter: bool,
    pub beta: f64,
    pub divergence: DivergenceSpec,
    pub seed: u64,
    /// Reference policy file for the standalone trainer command.
    pub reference_path: Option<String>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 512,
            iterations: 20_000,
            gauge_recenter: true,
            beta: 0.1,
            divergence: DivergenceSpec::reverse_kl(),
            seed: 1,
            reference_path: None,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, divergence: DivergenceSpec, beta: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            beta,
            divergence,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed,
            gauge_recenter: self.gauge_recenter,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PpoSettings {
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub rollouts_per_iter: usize,
    pub iterations: usize,
    pub epochs: usize,
    pub baseline_momentum: f64,
    pub regularizer_order: RegularizerOrder,
    pub variant: PpoVariant,
    pub beta: f64,
    pub divergence: DivergenceSpec,
    pub seed: u64,
}

impl Default for PpoSettings {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            learning_rate: 0.1,
            rollouts_per_iter: 256,
            iterations: 1500,
            epochs: 4,
            baseline_momentum: 0.99,
            regularizer_order: RegularizerOrder::ReferenceFirst,
            variant: PpoVariant::PenaltyInReward,
            beta: 0.1,
            divergence: DivergenceSpec::reverse_kl(),
            seed: 1,
        }
    }
}

impl PpoSettings {
    pub fn to_ppo_config(
        &self,
        variant: PpoVariant,
        divergence: DivergenceSpec,
        beta: f64,
        seed: u64,
    ) -> PpoConfig {
        PpoConfig {
            variant,
            beta,
            divergence,
            clip_epsilon: self.clip_epsilon,
            learning_rate: self.learning_rate,
            rollouts_per_iter: self.rollouts_per_iter,
            iterations: self.iterations,
            seed,
            epochs: self.epochs,
            baseline_momentum: self.baseline_momentum,
            regularizer_order: self.regularizer_order,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            methods: vec![Method::Fdpo],
            divergences: vec![DivergenceSpec::reverse_kl()],
            betas: vec![0.1],
            pairs: 50_000,
            master_seed: 42,
            output: None,
            train: TrainSettings::default(),
            ppo: PpoSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.divergences.is_empty() || self.betas.is_empty() {
            return Err(Error::Config(
                "methods, divergences and betas must be non-empty".into(),
            ));
        }
        if self.betas.iter().any(|b| *b <= 0.0) {
            return Err(Error::Config("betas must be positive".into()));
        }
        if self.pairs == 0 {
            return Err(Error::Config("sweep.pairs must be positive".into()));
        }
        for spec in &self.divergences {
            if !spec.solver_admissible()
                && self.methods.iter().any(|m| *m == Method::Fdpo)
            {
                return Err(Error::Config(format!(
                    "divergence {spec} is estimate-only and cannot be trained or solved"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task.contexts = {}", self.task.contexts)?;
        writeln!(f, "task.outcomes = {}", self.task.outcomes)?;
        writeln!(f, "task.reward = {}", self.task.reward)?;
        writeln!(f, "task.reference = {}", self.task.reference)?;
        match &self.task.context_weights {
            None => writeln!(f, "task.context_weights = uniform")?,
            Some(w) => writeln!(
                f,
                "task.context_weights = {}",
                w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            )?,
        }
        writeln!(f, "task.seed = {}", self.task.seed)?;
        writeln!(
            f,
            "sweep.methods = {}",
            self.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
        )?;
        writeln!(
            f,
            "sweep.divergences = {}",
            self.divergences.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        )?;
        writeln!(
            f,
            "sweep.betas = {}",
            self.betas.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
        )?;
        writeln!(f, "sweep.pairs = {}", self.pairs)?;
        writeln!(f, "sweep.seed = {}", self.master_seed)?;
        if let Some(out) = &self.output {
            writeln!(f, "sweep.output = {out}")?;
        }
        writeln!(f, "train.learning_rate = {}", self.train.learning_rate)?;
        writeln!(f, "train.batch_size = {}", self.train.batch_size)?;
        writeln!(f, "train.iterations = {}", self.train.iterations)?;
        writeln!(f, "train.gauge_recenter = {}", self.train.gauge_recenter)?;
        writeln!(f, "train.beta = {}", self.train.beta)?;
        writeln!(f, "train.divergence = {}", self.train.divergence)?;
        writeln!(f, "train.seed = {}", self.train.seed)?;
        if let Some(p) = &self.train.reference_path {
            writeln!(f, "train.reference = {p}")?;
        }
        writeln!(f, "ppo.variant = {}", match self.ppo.variant {
            PpoVariant::PenaltyInReward => "reward",
            PpoVariant::PenaltyInLoss => "loss",
        })?;
        writeln!(f, "ppo.clip_epsilon = {}", self.ppo.clip_epsilon)?;
        writeln!(f, "ppo.learning_rate = {}", self.ppo.learning_rate)?;
        writeln!(f, "ppo.rollouts_per_iter = {}", self.ppo.rollouts_per_iter)?;
        writeln!(f, "ppo.iterations = {}", self.ppo.iterations)?;
        writeln!(f, "ppo.epochs = {}", self.ppo.epochs)?;
        writeln!(f, "ppo.baseline_momentum = {}", self.ppo.baseline_momentum)?;
        writeln!(f, "ppo.regularizer_order = {}", match self.ppo.regularizer_order {
            RegularizerOrder::ReferenceFirst => "reference_first",
            RegularizerOrder::PolicyFirst => "policy_first",
        })?;
        write!(f, "ppo.seed = {}", self.ppo.seed)
    }
}

/// Parse the flat key-value format. Every key must be known.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        entries.insert(key.trim().to_string(), value.trim().to_string());
    }

    let mut cfg = ExperimentConfig::default();
    for (key, value) in entries {
        apply_key(&mut cfg, &key, &value)
            .map_err(|e| Error::Config(format!("key '{key}': {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let parse_usize = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad integer '{v}'")))
    };
    let parse_u64 = |v: &str| {
        v.parse::<u64>()
            .map_err(|_| Error::Parse(format!("bad integer '{v}'")))
    };
    let parse_f64 = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number '{v}'")))
    };
    let parse_bool = |v: &str| match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parse(format!("bad boolean '{v}'"))),
    };
    match key {
        "task.contexts" => cfg.task.contexts = parse_usize(value)?,
        "task.outcomes" => cfg.task.outcomes = parse_usize(value)?,
        "task.reward" => cfg.task.reward = value.parse()?,
        "task.reference" => cfg.task.reference = value.parse()?,
        "task.context_weights" => {
            cfg.task.context_weights = if value == "uniform" {
                None
            } else {
                Some(
                    value
                        .split(',')
                        .map(|t| parse_f64(t.trim()))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        }
        "task.seed" => cfg.task.seed = parse_u64(value)?,
        "sweep.methods" => {
            cfg.methods = value
                .split(',')
                .map(|t| t.trim().parse())
                .collect::<Result<Vec<_>>>()?
        }
        "sweep.divergences" => {
            cfg.divergences = value
                .split(',')
                .map(|t| t.trim().parse())
                .collect::<Result<Vec<_>>>()?
        }
        "sweep.betas" => {
            cfg.betas = value
                .split(',')
                .map(|t| parse_f64(t.trim()))
                .collect::<Result<Vec<_>>>()?
        }
        "sweep.pairs" => cfg.pairs = parse_usize(value)?,
        "sweep.seed" => cfg.master_seed = parse_u64(value)?,
        "sweep.output" => cfg.output = Some(value.to_string()),
        "train.learning_rate" => cfg.train.learning_rate = parse_f64(value)?,
        "train.batch_size" => cfg.train.batch_size = parse_usize(value)?,
        "train.iterations" => cfg.train.iterations = parse_usize(value)?,
        "train.gauge_recenter" => cfg.train.gauge_recenter = parse_bool(value)?,
        "train.beta" => cfg.train.beta = parse_f64(value)?,
        "train.divergence" => cfg.train.divergence = value.parse()?,
        "train.seed" => cfg.train.seed = parse_u64(value)?,
        "train.reference" => cfg.train.reference_path = Some(value.to_string()),
        "ppo.variant" => cfg.ppo.variant = value.parse()?,
        "ppo.clip_epsilon" => cfg.ppo.clip_epsilon = parse_f64(value)?,
        "ppo.learning_rate" => cfg.ppo.learning_rate = parse_f64(value)?,
        "ppo.rollouts_per_iter" => cfg.ppo.rollouts_per_iter = parse_usize(value)?,
        "ppo.iterations" => cfg.ppo.iterations = parse_usize(value)?,
        "ppo.epochs" => cfg.ppo.epochs = parse_usize(value)?,
        "ppo.baseline_momentum" => cfg.ppo.baseline_momentum = parse_f64(value)?,
        "ppo.regularizer_order" => {
            cfg.ppo.regularizer_order = match value {
                "reference_first" | "paper" => RegularizerOrder::ReferenceFirst,
                "policy_first" => RegularizerOrder::PolicyFirst,
                other => {
                    return Err(Error::Parse(format!(
                        "unknown regularizer order '{other}' (expected reference_first or policy_first)"
                    )))
                }
            }
        }
        "ppo.seed" => cfg.ppo.seed = parse_u64(value)?,
        other => return Err(Error::Config(format!("unknown key '{other}'"))),
    }
    Ok(())
}

/// Load and validate a config file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text)
}
