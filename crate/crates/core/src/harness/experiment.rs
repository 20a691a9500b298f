//! Single-run training and greedy evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{load_checkpoint, Checkpoint, CheckpointMeta, Network};
use super::variants::variant;
use crate::ddpg::{Agent, AgentConfig, InputEncoding, Policy};
use crate::error::{Error, Result};
use crate::fusion::{FusionOptions, FusionPolicy, PrimitiveLayer};
use crate::numkit::Matrix;
use crate::pushworld::{is_success, ObjectShape, PushWorld, WorldConfig, ACTION_DIM};
use crate::replay::{EpisodeStore, HerConfig, Transition};
use crate::rewards::{RewardMode, RewardWeights, TaskReward};

pub const DEFAULT_ALPHA: [f64; 3] = [0.3, 0.35, 0.35];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Tfs,
    Transfer,
    Dmf2,
    Dmf3,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tfs => "tfs",
            Method::Transfer => "transfer",
            Method::Dmf2 => "dmf2",
            Method::Dmf3 => "dmf3",
        }
    }

    /// Number of primitive checkpoints the method consumes.
    pub fn arity(self) -> usize {
        match self {
            Method::Tfs => 0,
            Method::Transfer => 1,
            Method::Dmf2 => 2,
            Method::Dmf3 => 3,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfs" => Ok(Method::Tfs),
            "transfer" => Ok(Method::Transfer),
            "dmf2" => Ok(Method::Dmf2),
            "dmf3" => Ok(Method::Dmf3),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected tfs, transfer, dmf2 or dmf3"
            ))),
        }
    }
}

/// Parameter overrides applied on top of a named variant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldOverrides {
    pub friction: Option<f64>,
    pub object_shape: Option<ObjectShape>,
    /// `Some(None)` removes the variant's obstacle.
    pub obstacle: Option<Option<[f64; 2]>>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub episode_len: Option<usize>,
    pub noise_std: Option<f64>,
    pub spawn_half_extent: Option<f64>,
}

impl WorldOverrides {
    pub fn apply(&self, world: &mut WorldConfig) {
        if let Some(v) = self.friction {
            world.friction = v;
        }
        if let Some(v) = self.object_shape {
            world.object_shape = v;
        }
        if let Some(v) = self.obstacle {
            world.obstacle = v;
        }
        if let Some(v) = self.eta {
            world.eta = v;
        }
        if let Some(v) = self.mu {
            world.mu = v;
        }
        if let Some(v) = self.episode_len {
            world.episode_len = v;
        }
        if let Some(v) = self.noise_std {
            world.noise_std = v;
        }
        if let Some(v) = self.spawn_half_extent {
            world.spawn_half_extent = v;
        }
    }
}

/// Fits a fresh fusion head to the mean action of its source actors before
/// reinforcement learning starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadWarmStart {
    /// Rollouts in the target world that supply the fitting states.
    pub episodes: usize,
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for HeadWarmStart {
    fn default() -> Self {
        Self {
            episodes: 10,
            steps: 1000,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env_variant: String,
    pub overrides: WorldOverrides,
    pub method: Method,
    pub reward_mode: RewardMode,
    /// Final-goal, approach and delivery weights of the guided reward.
    pub reward_alpha: [f64; 3],
    pub prevention_weight: f64,
    pub primitive_checkpoints: Vec<PathBuf>,
    pub episodes: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_path: Option<PathBuf>,
    pub agent: AgentConfig,
    pub her: HerConfig,
    pub replay_capacity: usize,
    /// Gradient steps after each collected episode.
    pub train_steps: usize,
    /// Episodes at the start of a run during which only the critic trains.
    pub actor_delay: usize,
    pub fusion: FusionOptions,
    pub head_warm_start: HeadWarmStart,
    /// When false, `wall_time_s` is written as 0 so metrics files stay byte-identical.
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// Defaults for the given variant: scratch training with the sparse reward.
    pub fn new(env_variant: &str) -> Result<Self> {
        variant(env_variant)?;
        Ok(Self {
            env_variant: env_variant.to_string(),
            overrides: WorldOverrides::default(),
            method: Method::Tfs,
            reward_mode: RewardMode::Sparse,
            reward_alpha: DEFAULT_ALPHA,
            prevention_weight: 1.0,
            primitive_checkpoints: Vec::new(),
            episodes: 200,
            eval_every: 50,
            eval_episodes: 50,
            seeds: vec![0],
            output_path: None,
            agent: AgentConfig::default(),
            her: HerConfig::default(),
            replay_capacity: 1000,
            train_steps: 40,
            actor_delay: 0,
            fusion: FusionOptions::default(),
            head_warm_start: HeadWarmStart::default(),
            record_wall_time: false,
        })
    }

    /// The variant's world with overrides applied.
    pub fn world(&self) -> Result<WorldConfig> {
        let mut world = variant(&self.env_variant)?;
        self.overrides.apply(&mut world);
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        self.world()?;
        self.agent.validate()?;
        let need = self.method.arity();
        if self.primitive_checkpoints.len() != need {
            return Err(Error::Config(format!(
                "method {} needs exactly {need} primitive checkpoint(s), got {}",
                self.method.name(),
                self.primitive_checkpoints.len()
            )));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("eval_every and eval_episodes must be positive".into()));
        }
        if self.replay_capacity == 0 {
            return Err(Error::Config("replay.capacity must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.task_reward()?;
        Ok(())
    }

    pub fn reward_weights(&self) -> Result<RewardWeights> {
        let world = self.world()?;
        RewardWeights::push(self.reward_alpha, self.prevention_weight, world.eta, world.mu)
    }

    pub fn task_reward(&self) -> Result<TaskReward> {
        TaskReward::new(self.reward_mode, self.reward_weights()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub episode: usize,
    pub success_rate: f64,
    pub avg_return: f64,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str = "seed,episode,success_rate,avg_return,wall_time_s";

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.seed, r.episode, r.success_rate, r.avg_return, r.wall_time_s
        );
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        other => {
            return Err(Error::Malformed(format!(
                "metrics header should be {METRICS_HEADER:?}, found {other:?}"
            )))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Malformed(format!("metrics row {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(MetricsRow {
                seed: f[0].trim().parse().map_err(|_| bad())?,
                episode: f[1].trim().parse().map_err(|_| bad())?,
                success_rate: f[2].trim().parse().map_err(|_| bad())?,
                avg_return: f[3].trim().parse().map_err(|_| bad())?,
                wall_time_s: f[4].trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, metrics_to_csv(rows)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub success_rate: f64,
    pub avg_return: f64,
}

/// Greedy rollouts with noiseless distances. Success is judged on the final
/// state of each full-length episode; returns are discounted by `gamma`.
pub fn evaluate_policy(
    policy: &Policy,
    encoding: &InputEncoding,
    world: &WorldConfig,
    reward: &TaskReward,
    gamma: f64,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if n_episodes == 0 {
        return Err(Error::Argument("evaluation needs at least one episode".into()));
    }
    let mut env = PushWorld::new(world.clone(), seed)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut input = vec![0.0; policy.input_dim()];
    let mut successes = 0usize;
    let mut total_return = 0.0;
    for _ in 0..n_episodes {
        let mut obs = env.reset(seeds.next_u64())?;
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut final_d_og = f64::INFINITY;
        while !env.is_exhausted() {
            encoding.encode_into(&obs.vector, &obs.desired_goal, &mut input);
            let a = policy.predict(&Matrix::row_vector(&input))?;
            let out = env.step([a.get(0, 0), a.get(0, 1)])?;
            ret += discount * reward.reward(&out.distances);
            discount *= gamma;
            final_d_og = out.distances.d_og;
            obs = out.observation;
        }
        if is_success(final_d_og, world.eta) {
            successes += 1;
        }
        total_return += ret;
    }
    Ok(EvalResult {
        success_rate: successes as f64 / n_episodes as f64,
        avg_return: total_return / n_episodes as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub reward_mode: RewardMode,
    pub weights: Option<RewardWeights>,
    pub gamma: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            reward_mode: RewardMode::Sparse,
            weights: None,
            gamma: 0.98,
        }
    }
}

/// Evaluates an actor checkpoint on a named variant.
pub fn evaluate(
    checkpoint: &Checkpoint,
    env_variant: &str,
    n_episodes: usize,
    seed: u64,
    options: &EvalOptions,
) -> Result<EvalResult> {
    let policy = checkpoint.policy()?;
    let world = variant(env_variant)?;
    let weights = match &options.weights {
        Some(w) => w.clone(),
        None => RewardWeights::push_default(world.eta, world.mu)?,
    };
    let reward = TaskReward::new(options.reward_mode, weights)?;
    evaluate_policy(
        policy,
        &checkpoint.encoding,
        &world,
        &reward,
        options.gamma,
        n_episodes,
        seed,
    )
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Builds the initial agent for the configured method.
pub fn build_agent(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Agent> {
    let sources = config
        .primitive_checkpoints
        .iter()
        .map(load_checkpoint)
        .collect::<Result<Vec<_>>>()?;
    build_agent_from(config, &sources, rng)
}

/// Like [`build_agent`] with the primitive checkpoints already loaded.
pub fn build_agent_from(config: &ExperimentConfig, sources: &[Checkpoint], rng: &mut ChaCha8Rng) -> Result<Agent> {
    if sources.len() != config.method.arity() {
        return Err(Error::Config(format!(
            "method {} needs exactly {} primitive checkpoint(s), got {}",
            config.method.name(),
            config.method.arity(),
            sources.len()
        )));
    }
    for s in sources {
        if s.encoding != config.agent.encoding {
            return Err(Error::Config(format!(
                "checkpoint input encoding {:?} differs from the agent's {:?}",
                s.encoding, config.agent.encoding
            )));
        }
    }
    let agent_cfg = config.agent.clone();
    match config.method {
        Method::Tfs => Agent::new(agent_cfg, rng),
        Method::Transfer => {
            let src = &sources[0];
            let actor = src.mlp_actor()?.clone();
            let critic = src.critic.clone().ok_or_else(|| {
                Error::Config("transfer needs a checkpoint that carries a critic".into())
            })?;
            Agent::with_networks(agent_cfg, Policy::Mlp(actor), critic)
        }
        Method::Dmf2 | Method::Dmf3 => {
            let prims = sources
                .iter()
                .map(PrimitiveLayer::from_checkpoint)
                .collect::<Result<Vec<_>>>()?;
            let mut policy = FusionPolicy::new(prims, agent_cfg.action_dim, &config.fusion, rng)?;
            warm_start_head(&mut policy, config, sources, rng)?;
            let critic = agent_cfg.new_critic(rng)?;
            Agent::with_networks(agent_cfg, Policy::Fusion(policy), critic)
        }
    }
}

/// Rolls out the mean of the source actors (with exploration noise) in the
/// target world and regresses the fusion head onto that mean action.
fn warm_start_head(
    policy: &mut FusionPolicy,
    config: &ExperimentConfig,
    sources: &[Checkpoint],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let warm = config.head_warm_start;
    if warm.episodes == 0 || warm.steps == 0 {
        return Ok(());
    }
    let actors = sources.iter().map(|s| s.mlp_actor()).collect::<Result<Vec<_>>>()?;
    let encoding = &config.agent.encoding;
    let world = config.world()?;
    let mut env = PushWorld::new(world.clone(), rng.next_u64())?;
    let noise = Normal::new(0.0, config.agent.noise_std.max(0.0))
        .map_err(|e| Error::Config(format!("exploration noise: {e}")))?;
    let width = config.agent.actor_input_dim();
    let action_dim = config.agent.action_dim;
    let mut inputs = Vec::with_capacity(warm.episodes * world.episode_len * width);
    let mut targets = Vec::with_capacity(warm.episodes * world.episode_len * action_dim);
    let mut row = vec![0.0; width];
    for _ in 0..warm.episodes {
        let mut obs = env.reset(rng.next_u64())?;
        while !env.is_exhausted() {
            encoding.encode_into(&obs.vector, &obs.desired_goal, &mut row);
            let x = Matrix::row_vector(&row);
            let mut mean = vec![0.0; action_dim];
            for actor in &actors {
                for (m, a) in mean.iter_mut().zip(actor.predict(&x)?.data()) {
                    *m += a / actors.len() as f64;
                }
            }
            inputs.extend_from_slice(&row);
            targets.extend_from_slice(&mean);
            let a: Vec<f64> = mean
                .iter()
                .map(|m| (m + noise.sample(rng)).clamp(-1.0, 1.0))
                .collect();
            obs = env.step([a[0], a[1]])?.observation;
        }
    }
    let n = targets.len() / action_dim;
    let inputs = Matrix::from_vec(n, width, inputs)?;
    let targets = Matrix::from_vec(n, action_dim, targets)?;
    policy.fit_head(&inputs, &targets, warm.steps, warm.learning_rate)?;
    Ok(())
}

/// Trains one seed of an experiment.
pub fn train(config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let sources = config
        .primitive_checkpoints
        .iter()
        .map(load_checkpoint)
        .collect::<Result<Vec<_>>>()?;
    train_with_sources(config, &sources, seed)
}

/// Like [`train`] with the primitive checkpoints already loaded.
pub fn train_with_sources(config: &ExperimentConfig, sources: &[Checkpoint], seed: u64) -> Result<TrainOutcome> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut explore_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut reset_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let replay_seed = master.next_u64();
    let world_seed = master.next_u64();
    let eval_seed = master.next_u64();

    let mut agent = build_agent_from(config, sources, &mut init_rng)?;
    let reward = config.task_reward()?;
    let world = config.world()?;
    let mut env = PushWorld::new(world.clone(), world_seed)?;
    let episode_len = world.episode_len;
    let mut store = EpisodeStore::new(config.replay_capacity, episode_len, replay_seed)?;
    let started = Instant::now();
    let mut metrics = Vec::new();

    for episode in 0..config.episodes {
        let mut obs = env.reset(reset_rng.next_u64())?;
        let mut transitions = Vec::with_capacity(episode_len);
        while !env.is_exhausted() {
            let action = agent.select_action(&obs.vector, &obs.desired_goal, true, &mut explore_rng)?;
            let out = env.step([action[0], action[1]])?;
            let measured = env.distances(true);
            transitions.push(Transition {
                obs: obs.vector.to_vec(),
                action,
                reward: reward.reward(&measured),
                next_obs: out.observation.vector.to_vec(),
                achieved_goal: obs.achieved_goal.to_vec(),
                next_achieved_goal: out.observation.achieved_goal.to_vec(),
                desired_goal: obs.desired_goal.to_vec(),
                done: is_success(measured.d_og, reward.eta()),
                d_oe: measured.d_oe,
                d_es: measured.d_es,
            });
            obs = out.observation;
        }
        store.store_episode(transitions)?;
        for _ in 0..config.train_steps {
            let batch = store.sample_batch(config.agent.batch_size, &config.her, &reward)?;
            if episode < config.actor_delay {
                agent.update_critic(&batch)?;
            } else {
                agent.train_step(&batch)?;
            }
        }
        agent.soft_update()?;

        if (episode + 1) % config.eval_every == 0 {
            let eval = evaluate_policy(
                agent.actor(),
                &config.agent.encoding,
                &world,
                &reward,
                config.agent.gamma,
                config.eval_episodes,
                eval_seed,
            )?;
            metrics.push(MetricsRow {
                seed,
                episode: episode + 1,
                success_rate: eval.success_rate,
                avg_return: eval.avg_return,
                wall_time_s: if config.record_wall_time {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
    }

    let (actor, critic) = agent.into_networks();
    let checkpoint = Checkpoint {
        network: Network::Actor(actor),
        critic: Some(critic),
        encoding: config.agent.encoding.clone(),
        meta: CheckpointMeta {
            env_name: config.env_variant.clone(),
            episodes: config.episodes as u64,
            seed,
        },
    };
    Ok(TrainOutcome { checkpoint, metrics })
}

/// Trains every configured seed, writing all rows to `output_path` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrainOutcome>> {
    config.validate()?;
    let sources = config
        .primitive_checkpoints
        .iter()
        .map(load_checkpoint)
        .collect::<Result<Vec<_>>>()?;
    let outcomes = config
        .seeds
        .iter()
        .map(|&s| train_with_sources(config, &sources, s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &config.output_path {
        let rows: Vec<_> = outcomes.iter().flat_map(|o| o.metrics.iter().copied()).collect();
        write_metrics_csv(path, &rows)?;
    }
    Ok(outcomes)
}

/// Fuses the first layers of MLP actor checkpoints into a fresh fusion actor.
pub fn fuse_checkpoints(sources: &[Checkpoint], options: &FusionOptions, seed: u64) -> Result<Checkpoint> {
    let first = sources
        .first()
        .ok_or_else(|| Error::Argument("fusion needs at least two checkpoints".into()))?;
    if let Some(other) = sources.iter().find(|s| s.encoding != first.encoding) {
        return Err(Error::Config(format!(
            "checkpoints disagree on input encoding: {:?} vs {:?}",
            first.encoding, other.encoding
        )));
    }
    let prims = sources
        .iter()
        .map(PrimitiveLayer::from_checkpoint)
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = FusionPolicy::new(prims, ACTION_DIM, options, &mut rng)?;
    Ok(Checkpoint {
        network: Network::Actor(Policy::Fusion(policy)),
        critic: None,
        encoding: first.encoding.clone(),
        meta: CheckpointMeta {
            env_name: String::new(),
            episodes: 0,
            seed,
        },
    })
}
