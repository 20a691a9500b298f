//! Goal-conditioned deep deterministic policy gradient agent.
//!
//! The critic regresses onto `y = r + γ(1 − done)·Q'(s', π'(s'))` computed
//! with the target networks; the actor ascends `Q(s, π(s))` by pulling the
//! critic's action gradient back through the policy.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fusion::FusionPolicy;
use crate::numkit::{clip_grad_norm, copy_params, Activation, Matrix, Mlp, Optimizer, Parametric};
use crate::pushworld::{ACTION_DIM, GOAL_DIM, OBS_DIM, OBS_GOAL_SLOT};
use crate::replay::Transition;

/// Actor network: a plain MLP or a fusion policy.
#[derive(Debug, Clone)]
pub enum Policy {
    Mlp(Mlp),
    Fusion(FusionPolicy),
}

impl Policy {
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        match self {
            Policy::Mlp(m) => m.forward(input),
            Policy::Fusion(f) => f.forward(input),
        }
    }

    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        match self {
            Policy::Mlp(m) => m.predict(input),
            Policy::Fusion(f) => f.predict(input),
        }
    }

    pub fn backward(&mut self, output_grad: &Matrix) -> Result<Matrix> {
        match self {
            Policy::Mlp(m) => m.backward(output_grad),
            Policy::Fusion(f) => f.backward(output_grad),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Policy::Mlp(m) => m.input_dim(),
            Policy::Fusion(f) => f.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Policy::Mlp(m) => m.output_dim(),
            Policy::Fusion(f) => f.output_dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Policy::Mlp(_) => "mlp_actor",
            Policy::Fusion(_) => "fusion_actor",
        }
    }
}

impl Parametric for Policy {
    fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Policy::Mlp(m) => m.visit_params(f),
            Policy::Fusion(p) => p.visit_params(f),
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        match self {
            Policy::Mlp(m) => m.visit_params_mut(f),
            Policy::Fusion(p) => p.visit_params_mut(f),
        }
    }

    fn shape_signature(&self) -> Vec<usize> {
        match self {
            Policy::Mlp(m) => m.shape_signature(),
            Policy::Fusion(p) => {
                let mut s = vec![usize::MAX];
                s.extend(p.shape_signature());
                s
            }
        }
    }
}

/// Maps raw `(observation, goal)` pairs to network inputs by scaling each
/// component. A zero scale drops the component; the default drops the goal
/// copy inside the observation so relabeled goals are the only goal signal.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEncoding {
    pub obs_scale: Vec<f64>,
    pub goal_scale: Vec<f64>,
}

impl Default for InputEncoding {
    fn default() -> Self {
        let position = 4.0;
        let velocity = 30.0;
        let mut obs_scale = vec![
            position,
            position,
            velocity,
            velocity,
            position,
            position,
            std::f64::consts::FRAC_1_PI,
            velocity,
            velocity,
            position,
            position,
            position,
            position,
        ];
        obs_scale[OBS_GOAL_SLOT].fill(0.0);
        Self {
            obs_scale,
            goal_scale: vec![position; GOAL_DIM],
        }
    }
}

impl InputEncoding {
    /// Same scale for every component.
    pub fn uniform(obs_dim: usize, goal_dim: usize, scale: f64) -> Self {
        Self {
            obs_scale: vec![scale; obs_dim],
            goal_scale: vec![scale; goal_dim],
        }
    }

    pub fn encode_into(&self, obs: &[f64], goal: &[f64], out: &mut [f64]) {
        let (o, g) = out.split_at_mut(obs.len());
        for ((dst, &v), &k) in o.iter_mut().zip(obs).zip(&self.obs_scale) {
            *dst = v * k;
        }
        for ((dst, &v), &k) in g.iter_mut().zip(goal).zip(&self.goal_scale) {
            *dst = v * k;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Target network soft-update rate.
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Std of Gaussian exploration noise in action units.
    pub noise_std: f64,
    /// Probability of replacing the exploratory action with a uniform random one.
    pub random_eps: f64,
    pub batch_size: usize,
    pub obs_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
    /// Weight of the `mean(a²)` penalty added to the actor loss.
    pub action_l2: f64,
    /// Optional clamp applied to critic targets.
    pub target_clip: Option<(f64, f64)>,
    pub encoding: InputEncoding,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.05,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            noise_std: 0.2,
            random_eps: 0.3,
            batch_size: 128,
            obs_dim: OBS_DIM,
            goal_dim: GOAL_DIM,
            action_dim: ACTION_DIM,
            hidden: vec![64, 64],
            optimizer: OptimizerKind::Adam,
            grad_clip: None,
            action_l2: 0.0,
            target_clip: Some((-1.0 / (1.0 - 0.98), 0.0)),
            encoding: InputEncoding::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.lr_actor > 0.0) || !(self.lr_critic > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.noise_std >= 0.0) || !(0.0..=1.0).contains(&self.random_eps) {
            return bad("exploration noise must be non-negative and random_eps in [0, 1]".into());
        }
        if self.batch_size == 0 || self.obs_dim == 0 || self.goal_dim == 0 || self.action_dim == 0 {
            return bad("batch size and dimensions must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be non-empty and positive, got {:?}", self.hidden));
        }
        if self.encoding.obs_scale.len() != self.obs_dim || self.encoding.goal_scale.len() != self.goal_dim {
            return bad(format!(
                "input encoding covers {}+{} components, agent expects {}+{}",
                self.encoding.obs_scale.len(),
                self.encoding.goal_scale.len(),
                self.obs_dim,
                self.goal_dim
            ));
        }
        if let Some(k) = self
            .encoding
            .obs_scale
            .iter()
            .chain(&self.encoding.goal_scale)
            .find(|k| !k.is_finite())
        {
            return bad(format!("input scales must be finite, got {k}"));
        }
        Ok(())
    }

    pub fn actor_input_dim(&self) -> usize {
        self.obs_dim + self.goal_dim
    }

    pub fn critic_input_dim(&self) -> usize {
        self.obs_dim + self.goal_dim + self.action_dim
    }

    fn make_optimizer(&self, lr: f64) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Sgd => Optimizer::sgd(lr),
            OptimizerKind::Adam => Optimizer::adam(lr),
        }
    }

    /// Fresh `[obs ‖ goal] → hidden… → action` actor with a tanh head.
    pub fn new_actor<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Mlp> {
        let mut dims = vec![self.actor_input_dim()];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.action_dim);
        Mlp::new(&dims, Activation::Relu, Activation::Tanh, rng)
    }

    /// Fresh `[obs ‖ goal ‖ action] → hidden… → 1` critic.
    pub fn new_critic<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Mlp> {
        let mut dims = vec![self.critic_input_dim()];
        dims.extend_from_slice(&self.hidden);
        dims.push(1);
        Mlp::new(&dims, Activation::Relu, Activation::Identity, rng)
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    actor: Policy,
    critic: Mlp,
    target_actor: Policy,
    target_critic: Mlp,
    config: AgentConfig,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
}

impl Agent {
    /// Agent with freshly initialized MLP actor and critic.
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = Policy::Mlp(config.new_actor(rng)?);
        let critic = config.new_critic(rng)?;
        Self::with_networks(config, actor, critic)
    }

    /// Agent around existing networks; targets start as exact copies.
    pub fn with_networks(config: AgentConfig, actor: Policy, critic: Mlp) -> Result<Self> {
        config.validate()?;
        if actor.input_dim() != config.actor_input_dim() {
            return Err(Error::dim("actor input width", config.actor_input_dim(), actor.input_dim()));
        }
        if actor.output_dim() != config.action_dim {
            return Err(Error::dim("actor output width", config.action_dim, actor.output_dim()));
        }
        if critic.input_dim() != config.critic_input_dim() {
            return Err(Error::dim("critic input width", config.critic_input_dim(), critic.input_dim()));
        }
        if critic.output_dim() != 1 {
            return Err(Error::dim("critic output width", 1, critic.output_dim()));
        }
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: config.make_optimizer(config.lr_actor),
            critic_opt: config.make_optimizer(config.lr_critic),
            actor,
            critic,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &Policy {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Policy {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    pub fn actor_mut(&mut self) -> &mut Policy {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn into_networks(self) -> (Policy, Mlp) {
        (self.actor, self.critic)
    }

    fn check_obs(&self, obs: &[f64], goal: &[f64]) -> Result<()> {
        if obs.len() != self.config.obs_dim {
            return Err(Error::dim("observation width", self.config.obs_dim, obs.len()));
        }
        if goal.len() != self.config.goal_dim {
            return Err(Error::dim("goal width", self.config.goal_dim, goal.len()));
        }
        Ok(())
    }

    /// Network input for one `(obs, goal)` pair.
    pub fn encode(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs, goal)?;
        let mut out = vec![0.0; self.config.actor_input_dim()];
        self.config.encoding.encode_into(obs, goal, &mut out);
        Ok(out)
    }

    /// Deterministic action, optionally perturbed for exploration; always within `[-1, 1]`.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        goal: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let input = Matrix::row_vector(&self.encode(obs, goal)?);
        let mut action = self.actor.predict(&input)?.into_vec();
        if explore {
            if self.config.random_eps > 0.0 && rng.random_bool(self.config.random_eps) {
                action.iter_mut().for_each(|a| *a = rng.random_range(-1.0..=1.0));
            } else if self.config.noise_std > 0.0 {
                let normal = Normal::new(0.0, self.config.noise_std).expect("validated std");
                action.iter_mut().for_each(|a| *a += normal.sample(rng));
            }
        }
        action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        Ok(action)
    }

    fn batch_inputs(&self, batch: &[Transition]) -> Result<(Matrix, Matrix, Matrix)> {
        let in_dim = self.config.actor_input_dim();
        let mut states = Matrix::zeros(batch.len(), in_dim);
        let mut next_states = Matrix::zeros(batch.len(), in_dim);
        let mut actions = Matrix::zeros(batch.len(), self.config.action_dim);
        let enc = &self.config.encoding;
        for (r, t) in batch.iter().enumerate() {
            self.check_obs(&t.obs, &t.desired_goal)?;
            self.check_obs(&t.next_obs, &t.desired_goal)?;
            if t.action.len() != self.config.action_dim {
                return Err(Error::dim("action width", self.config.action_dim, t.action.len()));
            }
            enc.encode_into(&t.obs, &t.desired_goal, states.row_mut(r));
            enc.encode_into(&t.next_obs, &t.desired_goal, next_states.row_mut(r));
            actions.row_mut(r).copy_from_slice(&t.action);
        }
        Ok((states, next_states, actions))
    }

    /// Bootstrapped critic targets from the target networks only.
    pub fn critic_targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        let (_, next_states, _) = self.batch_inputs(batch)?;
        self.targets_from(batch, &next_states)
    }

    fn targets_from(&self, batch: &[Transition], next_states: &Matrix) -> Result<Vec<f64>> {
        let next_actions = self.target_actor.predict(next_states)?;
        let q_next = self
            .target_critic
            .predict(&Matrix::hconcat(&[next_states, &next_actions])?)?;
        Ok(batch
            .iter()
            .zip(q_next.data())
            .map(|(t, &q)| {
                let continuing = if t.done { 0.0 } else { 1.0 };
                let y = t.reward + self.config.gamma * continuing * q;
                match self.config.target_clip {
                    Some((lo, hi)) => y.clamp(lo, hi),
                    None => y,
                }
            })
            .collect())
    }

    /// One critic regression step; returns the pre-update mean squared error.
    pub fn update_critic(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Argument("training batch is empty".into()));
        }
        let (states, next_states, actions) = self.batch_inputs(batch)?;
        let targets = self.targets_from(batch, &next_states)?;
        let q = self.critic.forward(&Matrix::hconcat(&[&states, &actions])?)?;
        let n = batch.len() as f64;
        let mut grad = Matrix::zeros(batch.len(), 1);
        let mut loss = 0.0;
        for (r, (&qv, &y)) in q.data().iter().zip(&targets).enumerate() {
            let err = qv - y;
            loss += err * err;
            grad.set(r, 0, 2.0 * err / n);
        }
        self.critic.zero_grads();
        self.critic.backward(&grad)?;
        if let Some(c) = self.config.grad_clip {
            clip_grad_norm(&mut self.critic, c);
        }
        self.critic_opt.step(&mut self.critic)?;
        Ok(loss / n)
    }

    /// One policy-gradient step through the current critic; returns the
    /// pre-update mean `Q(s, π(s))`. Critic parameters are not modified.
    pub fn update_actor(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Argument("training batch is empty".into()));
        }
        let (states, _, _) = self.batch_inputs(batch)?;
        let actions = self.actor.forward(&states)?;
        let q = self.critic.forward(&Matrix::hconcat(&[&states, &actions])?)?;
        let n = batch.len() as f64;
        let mean_q = q.data().iter().sum::<f64>() / n;
        let dq = Matrix::from_vec(batch.len(), 1, vec![-1.0 / n; batch.len()])?;
        let input_grad = self.critic.input_gradient(&dq)?;
        let in_dim = self.config.actor_input_dim();
        let mut action_grad = input_grad.columns(in_dim, in_dim + self.config.action_dim);
        if self.config.action_l2 > 0.0 {
            let k = 2.0 * self.config.action_l2 / (n * self.config.action_dim as f64);
            for (g, &a) in action_grad.data_mut().iter_mut().zip(actions.data()) {
                *g += k * a;
            }
        }
        self.actor.zero_grads();
        self.actor.backward(&action_grad)?;
        if let Some(c) = self.config.grad_clip {
            clip_grad_norm(&mut self.actor, c);
        }
        self.actor_opt.step(&mut self.actor)?;
        Ok(mean_q)
    }

    /// Critic step followed by actor step. Returns `(critic_mse, mean_q)`.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<(f64, f64)> {
        let loss = self.update_critic(batch)?;
        let mean_q = self.update_actor(batch)?;
        Ok((loss, mean_q))
    }

    /// `target ← τ·online + (1 − τ)·target` for actor and critic.
    pub fn soft_update(&mut self) -> Result<()> {
        copy_params(&self.actor, &mut self.target_actor, self.config.tau)?;
        copy_params(&self.critic, &mut self.target_critic, self.config.tau)
    }

    /// Mean `Q(s, π(s))` over a batch without changing anything.
    pub fn mean_q(&self, batch: &[Transition]) -> Result<f64> {
        let (states, _, _) = self.batch_inputs(batch)?;
        let actions = self.actor.predict(&states)?;
        let q = self.critic.predict(&Matrix::hconcat(&[&states, &actions])?)?;
        Ok(q.data().iter().sum::<f64>() / batch.len().max(1) as f64)
    }
}
