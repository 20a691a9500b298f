//! Episode replay buffer with hindsight goal relabeling.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pushworld::{is_success, Distances};
use crate::rewards::{mgr_push, sparse_reward, RewardMode, TaskReward};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub next_achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
    pub done: bool,
    /// Measured object↔end-effector distance after the step.
    pub d_oe: f64,
    /// Measured end-effector↔obstacle distance after the step.
    pub d_es: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HerStrategy {
    /// Substitute the goal achieved at a uniformly chosen step at or after
    /// the sampled one.
    Future,
}

impl std::str::FromStr for HerStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "future" => Ok(HerStrategy::Future),
            other => Err(Error::Config(format!("unknown HER strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HerConfig {
    pub strategy: HerStrategy,
    /// Relabeled samples per real one; relabel probability is `k / (k + 1)`.
    pub k: usize,
}

impl Default for HerConfig {
    fn default() -> Self {
        Self {
            strategy: HerStrategy::Future,
            k: 4,
        }
    }
}

impl HerConfig {
    pub fn relabel_probability(&self) -> f64 {
        self.k as f64 / (self.k as f64 + 1.0)
    }
}

/// Recomputes `(reward, done)` for a transition under a substituted goal.
pub trait GoalReward {
    fn relabel(&self, transition: &Transition, goal: &[f64]) -> (f64, bool);
}

impl<F> GoalReward for F
where
    F: Fn(&Transition, &[f64]) -> (f64, bool),
{
    fn relabel(&self, transition: &Transition, goal: &[f64]) -> (f64, bool) {
        self(transition, goal)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Goal distance is recomputed noiselessly from the achieved position; the
/// goal-independent terms reuse the stored measurements.
impl GoalReward for TaskReward {
    fn relabel(&self, t: &Transition, goal: &[f64]) -> (f64, bool) {
        let d_og = euclid(&t.next_achieved_goal, goal);
        let reward = match self.mode {
            RewardMode::Sparse => sparse_reward(d_og, self.eta()),
            RewardMode::Mgr => {
                let d = Distances {
                    d_og,
                    d_oe: t.d_oe,
                    d_es: t.d_es,
                };
                mgr_push(&d, &self.weights).expect("weights validated on construction")
            }
        };
        (reward, is_success(d_og, self.eta()))
    }
}

/// FIFO store of complete, fixed-length episodes.
#[derive(Debug, Clone)]
pub struct EpisodeStore {
    capacity: usize,
    episode_len: usize,
    episodes: VecDeque<Vec<Transition>>,
    rng: ChaCha8Rng,
}

impl EpisodeStore {
    pub fn new(capacity: usize, episode_len: usize, seed: u64) -> Result<Self> {
        if capacity == 0 || episode_len == 0 {
            return Err(Error::Argument(
                "replay capacity and episode length must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            episode_len,
            episodes: VecDeque::with_capacity(capacity.min(4096)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn episode(&self, index: usize) -> Option<&[Transition]> {
        self.episodes.get(index).map(Vec::as_slice)
    }

    pub fn store_episode(&mut self, episode: Vec<Transition>) -> Result<()> {
        if episode.len() != self.episode_len {
            return Err(Error::Argument(format!(
                "episode has {} transitions, store expects {}",
                episode.len(),
                self.episode_len
            )));
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        Ok(())
    }

    /// Samples `batch_size` transitions, relabeling each with probability `k/(k+1)`.
    pub fn sample_batch(
        &mut self,
        batch_size: usize,
        her: &HerConfig,
        reward_fn: &dyn GoalReward,
    ) -> Result<Vec<Transition>> {
        Ok(self
            .sample_marked(batch_size, her, reward_fn)?
            .into_iter()
            .map(|(t, _)| t)
            .collect())
    }

    /// Like [`EpisodeStore::sample_batch`] but also reports which samples were relabeled.
    pub fn sample_marked(
        &mut self,
        batch_size: usize,
        her: &HerConfig,
        reward_fn: &dyn GoalReward,
    ) -> Result<Vec<(Transition, bool)>> {
        if self.episodes.is_empty() {
            return Err(Error::State("cannot sample from an empty replay store".into()));
        }
        let p_relabel = her.relabel_probability();
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let e = self.rng.random_range(0..self.episodes.len());
            let t = self.rng.random_range(0..self.episode_len);
            let relabel = her.k > 0 && self.rng.random_bool(p_relabel);
            let episode = &self.episodes[e];
            let mut sample = episode[t].clone();
            if relabel {
                let HerStrategy::Future = her.strategy;
                let future = self.rng.random_range(t..self.episode_len);
                let goal = episode[future].next_achieved_goal.clone();
                let (reward, done) = reward_fn.relabel(&sample, &goal);
                sample.desired_goal = goal;
                sample.reward = reward;
                sample.done = done;
            }
            batch.push((sample, relabel));
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::RewardWeights;

    fn transition(step: usize) -> Transition {
        let x = step as f64 * 0.01;
        Transition {
            obs: vec![x; 13],
            action: vec![0.1, -0.1],
            reward: -1.0,
            next_obs: vec![x + 0.01; 13],
            achieved_goal: vec![x, 0.0],
            next_achieved_goal: vec![x + 0.01, 0.0],
            desired_goal: vec![1.0, 1.0],
            done: false,
            d_oe: 0.1,
            d_es: f64::INFINITY,
        }
    }

    fn episode(len: usize) -> Vec<Transition> {
        (0..len).map(transition).collect()
    }

    fn sparse() -> TaskReward {
        TaskReward::new(
            RewardMode::Sparse,
            RewardWeights::push_default(0.05, 0.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn store_and_evict_fifo() {
        let mut store = EpisodeStore::new(3, 5, 0).unwrap();
        store.store_episode(episode(5)).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.episode(0).unwrap(), episode(5).as_slice());
        for i in 0..3 {
            let mut ep = episode(5);
            ep[0].reward = i as f64;
            store.store_episode(ep).unwrap();
        }
        assert_eq!(store.len(), 3);
        assert_eq!(store.episode(0).unwrap()[0].reward, 0.0);
        assert!(store.episodes.iter().all(|e| e[0].reward != -1.0));
    }

    #[test]
    fn wrong_length_rejected() {
        let mut store = EpisodeStore::new(3, 5, 0).unwrap();
        assert!(matches!(
            store.store_episode(episode(4)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn empty_store_sample_is_state_error() {
        let mut store = EpisodeStore::new(3, 5, 0).unwrap();
        assert!(matches!(
            store.sample_batch(4, &HerConfig::default(), &sparse()),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn k_zero_never_relabels() {
        let mut store = EpisodeStore::new(3, 5, 0).unwrap();
        store.store_episode(episode(5)).unwrap();
        let her = HerConfig {
            strategy: HerStrategy::Future,
            k: 0,
        };
        let batch = store.sample_batch(200, &her, &sparse()).unwrap();
        assert_eq!(batch.len(), 200);
        assert!(batch.iter().all(|t| t.desired_goal == vec![1.0, 1.0]));
    }

    #[test]
    fn relabel_to_own_next_goal_gives_zero_sparse_reward() {
        let t = transition(3);
        let goal = t.next_achieved_goal.clone();
        let (r, done) = sparse().relabel(&t, &goal);
        assert_eq!(r, 0.0);
        assert!(done);
    }

    #[test]
    fn relabeled_goal_comes_from_same_or_later_step() {
        let mut store = EpisodeStore::new(1, 10, 11).unwrap();
        store.store_episode(episode(10)).unwrap();
        let batch = store
            .sample_marked(500, &HerConfig::default(), &sparse())
            .unwrap();
        for (t, relabeled) in batch {
            if relabeled {
                assert!(t.desired_goal[0] >= t.next_achieved_goal[0] - 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let run = || {
            let mut store = EpisodeStore::new(4, 6, 99).unwrap();
            store.store_episode(episode(6)).unwrap();
            store.store_episode(episode(6)).unwrap();
            store.sample_batch(64, &HerConfig::default(), &sparse()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mgr_relabel_keeps_goal_independent_terms() {
        let w = RewardWeights::push_default(0.05, 0.1).unwrap();
        let mgr = TaskReward::new(RewardMode::Mgr, w.clone()).unwrap();
        let mut t = transition(0);
        t.d_oe = 0.2;
        let goal = vec![t.next_achieved_goal[0] + 0.1, 0.0];
        let (r, done) = mgr.relabel(&t, &goal);
        assert!(!done);
        assert!((r - (-0.3 - 0.35 * 0.2 - 0.35 * 0.1)).abs() < 1e-12);
    }
}
