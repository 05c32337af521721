//! Experiment front end: config resolution, training and evaluation sweeps,
//! metrics CSV and checkpoint files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    evaluate_centralized, evaluate_decentralized, run_joint_detection, train_centralized, train_decentralized,
    AlgorithmVariant, EvalConfig, EvalMetrics, Topology, TrainConfig, TrainedAgent,
};
use crate::belief::MAX_JOINT_PROCESSES;
use crate::checkpoint::{self, Checkpoint};
use crate::rewards::{CostParams, RewardKind};
use crate::world::DependenceStructure;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";

pub const METRICS_HEADER: &str = "seed,variant,reward_kind,topology,upsilon,rho,lambda_cost,eta,accuracy,\
mean_stopping_time,mean_obs_per_unit_time,episodes,timeouts";

/// Decentralized execution pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyPreset {
    Shared,
    Local,
    /// Shared observations with the joint-posterior stopping rule.
    Joint,
}

impl TopologyPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            TopologyPreset::Shared => "shared",
            TopologyPreset::Local => "local",
            TopologyPreset::Joint => "joint",
        }
    }
}

impl std::str::FromStr for TopologyPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shared" => Ok(TopologyPreset::Shared),
            "local" => Ok(TopologyPreset::Local),
            "joint" => Ok(TopologyPreset::Joint),
            other => Err(format!("unknown topology `{other}` (expected shared, local or joint)")),
        }
    }
}

fn parse_group(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad process index `{t}`: {e}")))
        .collect()
}

/// Partially specified config, as read from a TOML file or the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<AlgorithmVariant>,
    #[arg(long)]
    pub reward: Option<RewardKind>,
    #[arg(long)]
    pub topology: Option<TopologyPreset>,
    /// Training episodes per training point.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub steps_per_episode: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub actor_lr: Option<f64>,
    #[arg(long)]
    pub critic_lr: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub log_phi: Option<bool>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// One dependent group, e.g. `--group 0,1`; repeat for each group.
    #[arg(long = "group", value_parser = parse_group)]
    pub groups: Option<Vec<Vec<usize>>>,
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub upsilon: Option<Vec<f64>>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub greedy: Option<bool>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        RawConfig { $($field: $top.$field.or($base.$field),)* }
    };
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        Self::from_toml(&text)
    }

    /// Fields set in `top` win over those in `self`.
    pub fn overlay(self, top: RawConfig) -> RawConfig {
        overlay!(
            self, top, seed, variant, reward, topology, episodes, steps_per_episode, gamma, actor_lr, critic_lr, eta,
            hidden_width, hidden_layers, log_phi, n, q, p, groups, rho, lambda, upsilon, eval_episodes, k_max, greedy,
            output
        )
    }
}

/// Fully resolved experiment, every default expanded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub variant: AlgorithmVariant,
    pub reward: RewardKind,
    pub topology: TopologyPreset,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub eta: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub log_phi: bool,
    pub n: usize,
    pub q: f64,
    pub p: f64,
    pub groups: Vec<Vec<usize>>,
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub eval_episodes: usize,
    pub k_max: usize,
    pub greedy: bool,
    pub output: PathBuf,
}

/// Groups `{0,1}, {2,3}, ...`, with a trailing singleton when `n` is odd.
pub fn default_groups(n: usize) -> Vec<Vec<usize>> {
    (0..n).step_by(2).map(|i| (i..(i + 2).min(n)).collect()).collect()
}

impl ExperimentConfig {
    /// Expands defaults and validates; every problem found is listed in the error.
    pub fn resolve(raw: RawConfig) -> Result<Self> {
        let mut problems = Vec::new();
        if raw.variant.is_none() {
            problems.push("missing required field `variant`".to_string());
        }
        if raw.output.is_none() {
            problems.push("missing required field `output`".to_string());
        }
        let variant = raw.variant.unwrap_or(AlgorithmVariant::CentralMarginal);
        let reward = raw.reward.unwrap_or(RewardKind::Entropy);
        let lambda = raw.lambda.unwrap_or_else(|| vec![5.0]);
        let defaults = if variant.is_centralized() {
            TrainConfig::centralized(reward)
        } else {
            TrainConfig::decentralized(reward, lambda.first().copied().unwrap_or(5.0))
        };
        let default_eta = match reward {
            RewardKind::Entropy => 0.1,
            RewardKind::Llr => 1.0,
        };
        let n = raw.n.unwrap_or(5);
        let cfg = ExperimentConfig {
            seed: raw.seed.unwrap_or(0),
            variant,
            reward,
            topology: raw.topology.unwrap_or(TopologyPreset::Shared),
            episodes: raw.episodes.unwrap_or(defaults.episodes),
            steps_per_episode: raw.steps_per_episode.unwrap_or(defaults.steps_per_episode),
            gamma: raw.gamma.unwrap_or(defaults.gamma),
            actor_lr: raw.actor_lr.unwrap_or(defaults.actor_lr),
            critic_lr: raw.critic_lr.unwrap_or(defaults.critic_lr),
            eta: raw.eta.unwrap_or(default_eta),
            hidden_width: raw.hidden_width.unwrap_or(defaults.hidden_width),
            hidden_layers: raw.hidden_layers.unwrap_or(if variant.is_centralized() { 1 } else { 2 }),
            log_phi: raw.log_phi.unwrap_or(false),
            n,
            q: raw.q.unwrap_or(0.8),
            p: raw.p.unwrap_or(0.2),
            groups: raw.groups.unwrap_or_else(|| default_groups(n)),
            rho: raw.rho.unwrap_or_else(|| vec![0.6]),
            lambda,
            upsilon: raw.upsilon.unwrap_or_else(|| vec![0.95]),
            eval_episodes: raw.eval_episodes.unwrap_or(2000),
            k_max: raw.k_max.unwrap_or(EvalConfig::DEFAULT_K_MAX),
            greedy: raw.greedy.unwrap_or(false),
            output: raw.output.unwrap_or_default(),
        };
        cfg.collect_problems(&mut problems);
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    fn collect_problems(&self, problems: &mut Vec<String>) {
        for (name, list) in [("rho", &self.rho), ("lambda", &self.lambda), ("upsilon", &self.upsilon)] {
            if list.is_empty() {
                problems.push(format!("`{name}` must list at least one value"));
            }
        }
        if !(0.0..=1.0).contains(&self.p) {
            problems.push(format!("`p` = {} is outside [0, 1]", self.p));
        }
        for &rho in &self.rho {
            if let Err(e) = DependenceStructure::new(self.n, self.groups.clone(), rho, self.q) {
                problems.push(format!("dependence structure (rho = {rho}): {e}"));
            }
        }
        for &u in &self.upsilon {
            if let Err(e) = self.eval_config(u).validate() {
                problems.push(format!("`upsilon`: {e}"));
            }
        }
        if self.eval_episodes == 0 {
            problems.push("`eval_episodes` must be positive".into());
        }
        for &lambda in &self.lambda {
            if let Err(e) = self.train_config(lambda).validate(self.variant) {
                problems.push(e.to_string());
                break;
            }
        }
        if self.variant.is_centralized() && self.topology != TopologyPreset::Shared {
            problems.push(format!("`topology` = {} applies only to the decentralized variant", self.topology.as_str()));
        }
        let needs_joint = self.variant == AlgorithmVariant::CentralJoint || self.topology == TopologyPreset::Joint;
        if needs_joint && self.n > MAX_JOINT_PROCESSES {
            problems.push(format!("`n` = {} exceeds the joint posterior limit of {MAX_JOINT_PROCESSES}", self.n));
        }
    }

    pub fn train_config(&self, lambda: f64) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            steps_per_episode: self.steps_per_episode,
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            reward: self.reward,
            cost: (!self.variant.is_centralized()).then_some(CostParams { eta: self.eta, lambda }),
            seed: self.seed,
            hidden_width: self.hidden_width,
            hidden_layers: Some(self.hidden_layers),
            log_phi: self.log_phi,
        }
    }

    pub fn dependence(&self, rho: f64) -> Result<DependenceStructure> {
        DependenceStructure::new(self.n, self.groups.clone(), rho, self.q)
    }

    pub fn eval_config(&self, upsilon: f64) -> EvalConfig {
        EvalConfig { upsilon, episodes: self.eval_episodes, k_max: self.k_max, seed: self.seed, greedy: self.greedy }
    }

    /// Sensing costs that get their own training run; centralized variants
    /// ignore the cost and train once per `rho`.
    fn training_lambdas(&self) -> Vec<Option<f64>> {
        if self.variant.is_centralized() {
            vec![None]
        } else {
            self.lambda.iter().copied().map(Some).collect()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn topology_label(&self) -> &'static str {
        if self.variant.is_centralized() {
            "central"
        } else {
            self.topology.as_str()
        }
    }
}

/// One training run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPoint {
    pub rho: f64,
    pub lambda: Option<f64>,
}

impl TrainingPoint {
    pub fn checkpoint_name(&self) -> String {
        match self.lambda {
            Some(l) => format!("checkpoint_rho{}_lambda{}.ckpt", fmt_g(self.rho), fmt_g(l)),
            None => format!("checkpoint_rho{}.ckpt", fmt_g(self.rho)),
        }
    }
}

pub fn training_points(cfg: &ExperimentConfig) -> Vec<TrainingPoint> {
    cfg.rho
        .iter()
        .flat_map(|&rho| cfg.training_lambdas().into_iter().map(move |lambda| TrainingPoint { rho, lambda }))
        .collect()
}

#[derive(Serialize)]
struct FingerprintKey<'a> {
    train: TrainConfig,
    variant: AlgorithmVariant,
    n: usize,
    q: f64,
    p: f64,
    groups: &'a [Vec<usize>],
    rho: f64,
}

/// SHA-256 over the canonical JSON of everything that shapes one training run.
pub fn config_fingerprint(cfg: &ExperimentConfig, point: &TrainingPoint) -> [u8; 32] {
    let key = FingerprintKey {
        train: cfg.train_config(point.lambda.unwrap_or(0.0)),
        variant: cfg.variant,
        n: cfg.n,
        q: cfg.q,
        p: cfg.p,
        groups: &cfg.groups,
        rho: point.rho,
    };
    checkpoint::fingerprint(&serde_json::to_vec(&key).expect("key serializes"))
}

pub fn train_point(cfg: &ExperimentConfig, point: &TrainingPoint) -> Result<TrainedAgent> {
    let dep = cfg.dependence(point.rho)?;
    match point.lambda {
        None => train_centralized(&cfg.train_config(0.0), cfg.variant, &dep, cfg.p),
        Some(l) => train_decentralized(&cfg.train_config(l), &dep, cfg.p),
    }
}

/// Evaluates `agent` in an environment with correlation `rho`.
pub fn evaluate_agent(cfg: &ExperimentConfig, agent: &TrainedAgent, rho: f64, upsilon: f64) -> Result<EvalMetrics> {
    let dep = cfg.dependence(rho)?;
    let eval = cfg.eval_config(upsilon);
    if agent.variant.is_centralized() {
        return evaluate_centralized(agent, &dep, cfg.p, &eval);
    }
    match cfg.topology {
        TopologyPreset::Shared => evaluate_decentralized(agent, &dep, cfg.p, &eval, &Topology::shared(cfg.n)),
        TopologyPreset::Local => evaluate_decentralized(agent, &dep, cfg.p, &eval, &Topology::local(cfg.n)),
        TopologyPreset::Joint => run_joint_detection(agent, &dep, cfg.p, &eval),
    }
}

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub variant: AlgorithmVariant,
    pub reward_kind: RewardKind,
    pub topology: String,
    pub upsilon: f64,
    pub rho: f64,
    /// Zero for centralized variants, which carry no sensing cost.
    pub lambda_cost: f64,
    pub eta: f64,
    pub accuracy: f64,
    pub mean_stopping_time: f64,
    pub mean_obs_per_unit_time: f64,
    pub episodes: usize,
    pub timeouts: usize,
}

impl MetricsRow {
    pub fn new(cfg: &ExperimentConfig, rho: f64, lambda: Option<f64>, upsilon: f64, m: &EvalMetrics) -> Self {
        Self {
            seed: cfg.seed,
            variant: cfg.variant,
            reward_kind: cfg.reward,
            topology: cfg.topology_label().to_string(),
            upsilon,
            rho,
            lambda_cost: lambda.unwrap_or(0.0),
            eta: if lambda.is_some() { cfg.eta } else { 0.0 },
            accuracy: m.accuracy,
            mean_stopping_time: m.mean_stopping_time,
            mean_obs_per_unit_time: m.mean_obs_per_unit_time,
            episodes: m.episodes,
            timeouts: m.timeouts,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.variant,
            self.reward_kind.as_str(),
            self.topology,
            fmt_g(self.upsilon),
            fmt_g(self.rho),
            fmt_g(self.lambda_cost),
            fmt_g(self.eta),
            fmt_g(self.accuracy),
            fmt_g(self.mean_stopping_time),
            fmt_g(self.mean_obs_per_unit_time),
            self.episodes,
            self.timeouts
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

/// `%g`-style formatting with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        trim_zeros(format!("{x:.*}", (5 - exp) as usize))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Paths written by a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub rows: Vec<MetricsRow>,
    pub metrics: Option<PathBuf>,
    pub config: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| io_err(&cfg.output, e))?;
    let path = cfg.output.join(CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn train_and_save(cfg: &ExperimentConfig) -> Result<(Vec<TrainingPoint>, Vec<TrainedAgent>, Vec<PathBuf>)> {
    let points = training_points(cfg);
    let agents = points.par_iter().map(|pt| train_point(cfg, pt)).collect::<Result<Vec<_>>>()?;
    let mut paths = Vec::with_capacity(points.len());
    for (pt, agent) in points.iter().zip(&agents) {
        let path = cfg.output.join(pt.checkpoint_name());
        checkpoint::save(&path, agent, config_fingerprint(cfg, pt))?;
        paths.push(path);
    }
    Ok((points, agents, paths))
}

fn write_metrics(cfg: &ExperimentConfig, rows: &[MetricsRow]) -> Result<PathBuf> {
    let path = cfg.output.join(METRICS_FILE);
    std::fs::write(&path, metrics_csv(rows)).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Trains every training point and writes checkpoints plus the resolved config.
pub fn run_train(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let config = prepare_output(cfg)?;
    let (_, _, checkpoints) = train_and_save(cfg)?;
    Ok(RunArtifacts { rows: Vec::new(), metrics: None, config, checkpoints })
}

/// Trains every training point, then evaluates each at every `upsilon`.
/// Rows are ordered by `rho`, then `lambda`, then `upsilon`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let config = prepare_output(cfg)?;
    let (points, agents, checkpoints) = train_and_save(cfg)?;
    let jobs: Vec<(usize, f64)> =
        (0..points.len()).flat_map(|i| cfg.upsilon.iter().map(move |&u| (i, u))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, u)| {
            let pt = &points[i];
            evaluate_agent(cfg, &agents[i], pt.rho, u).map(|m| MetricsRow::new(cfg, pt.rho, pt.lambda, u, &m))
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = write_metrics(cfg, &rows)?;
    Ok(RunArtifacts { rows, metrics: Some(metrics), config, checkpoints })
}

/// Evaluates a saved agent over every `rho` x `upsilon` in the config.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<RunArtifacts> {
    let ck: Checkpoint = checkpoint::load(checkpoint_path)?;
    ck.check_compatible(cfg.variant, cfg.n)?;
    let agent = ck.into_agent();
    let config = prepare_output(cfg)?;
    let lambda = (!cfg.variant.is_centralized()).then(|| cfg.lambda[0]);
    let jobs: Vec<(f64, f64)> = cfg.rho.iter().flat_map(|&r| cfg.upsilon.iter().map(move |&u| (r, u))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(rho, u)| evaluate_agent(cfg, &agent, rho, u).map(|m| MetricsRow::new(cfg, rho, lambda, u, &m)))
        .collect::<Result<Vec<_>>>()?;
    let metrics = write_metrics(cfg, &rows)?;
    Ok(RunArtifacts { rows, metrics: Some(metrics), config, checkpoints: vec![checkpoint_path.to_path_buf()] })
}

/// Human-readable JSON summary of a checkpoint file.
pub fn inspect_checkpoint(path: &Path) -> Result<String> {
    let ck = checkpoint::load(path)?;
    let net = |l: &crate::rl::Learner| {
        serde_json::json!({
            "head": format!("{:?}", l.net.head()).to_lowercase(),
            "dims": l.net.dims(),
            "params": l.net.params().len(),
            "adam_step": l.opt.step,
            "lr": l.opt.lr,
        })
    };
    let summary = serde_json::json!({
        "format_version": ck.meta.version,
        "config_fingerprint": ck.meta.fingerprint_hex(),
        "variant": ck.meta.variant,
        "n": ck.meta.n,
        "episodes_trained": ck.meta.episodes_trained,
        "actor": net(&ck.actor),
        "critic": net(&ck.critic),
    });
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"))
}
