//! Planar quasi-static pushing and sliding world.
//!
//! An end-effector point moves in a bounded table plane and interacts with a
//! single round-footprint object. In the push task contact displaces the
//! object directly along the contact normal; in the slide task contact imparts
//! a velocity that decays with surface friction. An optional obstacle disc
//! blocks both the end-effector and the object.
//!
//! Every variant exposes the same 13-wide observation so that policies
//! trained in one variant can be reused in another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const OBS_DIM: usize = 13;
pub const GOAL_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

/// Index range of the goal position inside the observation vector.
pub const OBS_GOAL_SLOT: std::ops::Range<usize> = 9..11;

/// Slide velocity decays by `1 - SLIDE_DECAY * friction` every step.
pub const SLIDE_DECAY: f64 = 0.2;

const ROTATION_GAIN: f64 = 0.5;
const MAX_RESET_ATTEMPTS: usize = 10_000;

pub type Vec2 = [f64; 2];

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn add_scaled(a: Vec2, b: Vec2, s: f64) -> Vec2 {
    [a[0] + b[0] * s, a[1] + b[1] * s]
}

#[inline]
fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn distance(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Push,
    Slide,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Push => "push",
            Task::Slide => "slide",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "push" => Ok(Task::Push),
            "slide" => Ok(Task::Slide),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// Object geometry. Stands in for differently shaped household objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectShape {
    Box,
    Cylinder,
    FlatBox,
}

impl ObjectShape {
    pub fn footprint_radius(self) -> f64 {
        match self {
            ObjectShape::Box => 0.025,
            ObjectShape::Cylinder => 0.02,
            ObjectShape::FlatBox => 0.035,
        }
    }

    pub fn friction_multiplier(self) -> f64 {
        match self {
            ObjectShape::Box => 1.0,
            ObjectShape::Cylinder => 0.8,
            ObjectShape::FlatBox => 1.15,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectShape::Box => "box",
            ObjectShape::Cylinder => "cylinder",
            ObjectShape::FlatBox => "flat_box",
        }
    }
}

impl std::str::FromStr for ObjectShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(ObjectShape::Box),
            "cylinder" => Ok(ObjectShape::Cylinder),
            "flat_box" => Ok(ObjectShape::FlatBox),
            other => Err(Error::Config(format!("unknown object shape {other:?}"))),
        }
    }
}

/// Axis-aligned rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn shrink(&self, margin: f64) -> Bounds {
        Bounds {
            min: [self.min[0] + margin, self.min[1] + margin],
            max: [self.max[0] - margin, self.max[1] - margin],
        }
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        [
            p[0].clamp(self.min[0], self.max[0]),
            p[1].clamp(self.min[1], self.max[1]),
        ]
    }

    pub fn diameter(&self) -> f64 {
        distance(self.min, self.max)
    }

    fn is_valid(&self) -> bool {
        self.min[0] < self.max[0] && self.min[1] < self.max[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub task: Task,
    /// Surface coefficient in (0, 1]; scales how strongly the object responds to contact.
    pub friction: f64,
    pub object_shape: ObjectShape,
    pub obstacle: Option<Vec2>,
    /// Goal distance threshold η.
    pub eta: f64,
    /// Obstacle proximity threshold μ.
    pub mu: f64,
    pub episode_len: usize,
    /// Std of additive Gaussian noise on measured distances.
    pub noise_std: f64,
    pub workspace: Bounds,
    /// Half-width of the centered square where the end-effector, object and goal spawn.
    pub spawn_half_extent: f64,
    /// End-effector travel per unit action, meters per step.
    pub max_step: f64,
    /// Contact happens within footprint radius plus this margin.
    pub contact_margin: f64,
    pub obstacle_radius: f64,
}

impl WorldConfig {
    pub fn push() -> Self {
        Self {
            task: Task::Push,
            friction: 0.9,
            object_shape: ObjectShape::Box,
            obstacle: None,
            eta: 0.05,
            mu: 0.10,
            episode_len: 50,
            noise_std: 0.005,
            workspace: Bounds {
                min: [-0.25, -0.25],
                max: [0.25, 0.25],
            },
            spawn_half_extent: 0.15,
            max_step: 0.03,
            contact_margin: 0.02,
            obstacle_radius: 0.02,
        }
    }

    pub fn slide() -> Self {
        Self {
            task: Task::Slide,
            ..Self::push()
        }
    }

    /// Friction after the shape multiplier, capped at 1.
    pub fn effective_friction(&self) -> f64 {
        (self.friction * self.object_shape.friction_multiplier()).min(1.0)
    }

    pub fn contact_radius(&self) -> f64 {
        self.object_shape.footprint_radius() + self.contact_margin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.friction > 0.0 && self.friction <= 1.0) {
            return bad(format!("friction must lie in (0, 1], got {}", self.friction));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.mu > 0.0) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if self.episode_len == 0 {
            return bad("episode_len must be at least 1".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if !self.workspace.is_valid() {
            return bad(format!("degenerate workspace {:?}", self.workspace));
        }
        if !(self.max_step > 0.0) || !(self.contact_margin >= 0.0) || !(self.obstacle_radius >= 0.0) {
            return bad("max_step, contact_margin and obstacle_radius must be non-negative (max_step positive)".into());
        }
        if !(self.spawn_half_extent > 0.0) {
            return bad("spawn_half_extent must be positive".into());
        }
        if let Some(obs) = self.obstacle {
            if !self.workspace.contains(obs) {
                return bad(format!("obstacle {obs:?} lies outside the workspace"));
            }
        }
        Ok(())
    }

    fn object_bounds(&self) -> Bounds {
        self.workspace.shrink(self.object_shape.footprint_radius())
    }

    fn spawn_bounds(&self) -> Bounds {
        let c = [
            0.5 * (self.workspace.min[0] + self.workspace.max[0]),
            0.5 * (self.workspace.min[1] + self.workspace.max[1]),
        ];
        let h = self.spawn_half_extent;
        let region = Bounds {
            min: [c[0] - h, c[1] - h],
            max: [c[0] + h, c[1] + h],
        };
        let inner = self.object_bounds();
        Bounds {
            min: [region.min[0].max(inner.min[0]), region.min[1].max(inner.min[1])],
            max: [region.max[0].min(inner.max[0]), region.max[1].min(inner.max[1])],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ee_pos: Vec2,
    pub ee_vel: Vec2,
    pub obj_pos: Vec2,
    pub obj_theta: f64,
    pub obj_vel: Vec2,
    pub goal_pos: Vec2,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `[ee_pos, ee_vel, obj_pos, obj_theta, obj_vel, goal_pos, obstacle_or_zeros]`
    pub vector: [f64; OBS_DIM],
    pub achieved_goal: Vec2,
    pub desired_goal: Vec2,
}

/// Distances that drive the guided reward. `d_es` is `+∞` without an obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub d_og: f64,
    pub d_oe: f64,
    pub d_es: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    /// Noiseless distances after the step.
    pub distances: Distances,
    pub success: bool,
    /// Time limit reached or goal achieved.
    pub done: bool,
}

/// Goal achieved when the object is within `eta` of the goal (boundary inclusive).
#[inline]
pub fn is_success(d_og: f64, eta: f64) -> bool {
    d_og <= eta
}

/// Noiseless distances for a state.
pub fn exact_distances(state: &WorldState, config: &WorldConfig) -> Distances {
    Distances {
        d_og: distance(state.obj_pos, state.goal_pos),
        d_oe: distance(state.obj_pos, state.ee_pos),
        d_es: config
            .obstacle
            .map_or(f64::INFINITY, |o| distance(state.ee_pos, o)),
    }
}

/// Distances for a state, optionally perturbed by `N(0, noise_std)` and clamped at 0.
pub fn distances<R: Rng + ?Sized>(
    state: &WorldState,
    config: &WorldConfig,
    noisy: bool,
    rng: &mut R,
) -> Distances {
    let exact = exact_distances(state, config);
    if !noisy || config.noise_std == 0.0 {
        return exact;
    }
    let normal = Normal::new(0.0, config.noise_std).expect("noise_std validated non-negative");
    let mut perturb = |d: f64| {
        if d.is_finite() {
            (d + normal.sample(rng)).max(0.0)
        } else {
            d
        }
    };
    Distances {
        d_og: perturb(exact.d_og),
        d_oe: perturb(exact.d_oe),
        d_es: perturb(exact.d_es),
    }
}

/// A single environment instance.
#[derive(Debug, Clone)]
pub struct PushWorld {
    config: WorldConfig,
    state: WorldState,
    noise_rng: ChaCha8Rng,
}

impl PushWorld {
    /// Creates the world and resets it with `seed`.
    pub fn new(config: WorldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (state, noise_rng) = Self::sample_initial(&config, seed)?;
        Ok(Self {
            config,
            state,
            noise_rng,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Replaces the state; used by tests to stage specific contact situations.
    pub fn set_state(&mut self, state: WorldState) {
        self.state = state;
    }

    fn sample_initial(config: &WorldConfig, seed: u64) -> Result<(WorldState, ChaCha8Rng)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(1);

        let spawn = config.spawn_bounds();
        if !spawn.is_valid() {
            return Err(Error::Config(
                "spawn region is empty after removing the object footprint".into(),
            ));
        }
        let min_sep = 2.0 * config.eta;
        let clearance = config.obstacle_radius + config.object_shape.footprint_radius();
        let draw = |rng: &mut ChaCha8Rng| -> Vec2 {
            [
                rng.random_range(spawn.min[0]..=spawn.max[0]),
                rng.random_range(spawn.min[1]..=spawn.max[1]),
            ]
        };
        for _ in 0..MAX_RESET_ATTEMPTS {
            let ee = draw(&mut rng);
            let obj = draw(&mut rng);
            let goal = draw(&mut rng);
            let separated = distance(ee, obj) >= min_sep
                && distance(ee, goal) >= min_sep
                && distance(obj, goal) >= min_sep;
            let clear = config.obstacle.is_none_or(|o| {
                distance(ee, o) >= config.mu
                    && distance(obj, o) >= clearance + config.eta
                    && distance(goal, o) >= clearance + config.eta
            });
            if separated && clear {
                let state = WorldState {
                    ee_pos: ee,
                    ee_vel: [0.0; 2],
                    obj_pos: obj,
                    obj_theta: 0.0,
                    obj_vel: [0.0; 2],
                    goal_pos: goal,
                    step_index: 0,
                };
                return Ok((state, noise_rng));
            }
        }
        Err(Error::Config(format!(
            "could not place end-effector, object and goal {min_sep} m apart in {MAX_RESET_ATTEMPTS} attempts; workspace too small"
        )))
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let (state, noise_rng) = Self::sample_initial(&self.config, seed)?;
        self.state = state;
        self.noise_rng = noise_rng;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        let s = &self.state;
        let obstacle = self.config.obstacle.unwrap_or([0.0; 2]);
        let vector = [
            s.ee_pos[0],
            s.ee_pos[1],
            s.ee_vel[0],
            s.ee_vel[1],
            s.obj_pos[0],
            s.obj_pos[1],
            s.obj_theta,
            s.obj_vel[0],
            s.obj_vel[1],
            s.goal_pos[0],
            s.goal_pos[1],
            obstacle[0],
            obstacle[1],
        ];
        Observation {
            vector,
            achieved_goal: s.obj_pos,
            desired_goal: s.goal_pos,
        }
    }

    pub fn exact_distances(&self) -> Distances {
        exact_distances(&self.state, &self.config)
    }

    /// Distances as a sensor would report them.
    pub fn distances(&mut self, noisy: bool) -> Distances {
        distances(&self.state, &self.config, noisy, &mut self.noise_rng)
    }

    pub fn is_exhausted(&self) -> bool {
        self.state.step_index >= self.config.episode_len
    }

    fn push_out_of_obstacle(&self, p: Vec2, radius: f64) -> Vec2 {
        match self.config.obstacle {
            Some(o) => {
                let r = self.config.obstacle_radius + radius;
                let d = sub(p, o);
                let n = norm(d);
                if n >= r || r == 0.0 {
                    p
                } else if n < 1e-12 {
                    [o[0] + r, o[1]]
                } else {
                    add_scaled(o, d, r / n)
                }
            }
            None => p,
        }
    }

    /// Advances one step. Actions are clamped to `[-1, 1]²`.
    ///
    /// A success does not end stepping; only the time limit does, so stored
    /// episodes always span the full horizon.
    pub fn step(&mut self, action: [f64; ACTION_DIM]) -> Result<StepOutcome> {
        if self.is_exhausted() {
            return Err(Error::State(format!(
                "episode already finished after {} steps",
                self.config.episode_len
            )));
        }
        let cfg = &self.config;
        let a = [
            action[0].clamp(-1.0, 1.0),
            action[1].clamp(-1.0, 1.0),
        ];
        let a = [
            if a[0].is_nan() { 0.0 } else { a[0] },
            if a[1].is_nan() { 0.0 } else { a[1] },
        ];
        let footprint = cfg.object_shape.footprint_radius();
        let obj_bounds = cfg.object_bounds();
        let friction = cfg.effective_friction();
        let r_contact = cfg.contact_radius();

        let prev_ee = self.state.ee_pos;
        let prev_obj = self.state.obj_pos;
        let mut ee = cfg.workspace.clamp(add_scaled(prev_ee, a, cfg.max_step));
        ee = self.push_out_of_obstacle(ee, 0.0);
        let ee_motion = sub(ee, prev_ee);

        let mut obj = prev_obj;
        let mut obj_vel = self.state.obj_vel;
        let mut theta = self.state.obj_theta;

        let delta = sub(obj, ee);
        let dist = norm(delta);
        let contact = dist < r_contact;
        let normal = if dist > 1e-12 {
            [delta[0] / dist, delta[1] / dist]
        } else {
            let m = norm(ee_motion);
            if m > 0.0 {
                [ee_motion[0] / m, ee_motion[1] / m]
            } else {
                [1.0, 0.0]
            }
        };

        if contact {
            let tangent = [-normal[1], normal[0]];
            let tangential = ee_motion[0] * tangent[0] + ee_motion[1] * tangent[1];
            theta += ROTATION_GAIN * friction * tangential / r_contact;
            theta = (theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
        }

        match cfg.task {
            Task::Push => {
                if contact {
                    let overlap = r_contact - dist;
                    obj = add_scaled(obj, normal, overlap * friction);
                    obj = obj_bounds.clamp(obj);
                    obj = self.push_out_of_obstacle(obj, footprint);
                    ee = cfg.workspace.clamp(add_scaled(obj, normal, -r_contact));
                    ee = self.push_out_of_obstacle(ee, 0.0);
                }
                obj_vel = sub(obj, prev_obj);
            }
            Task::Slide => {
                if contact {
                    let approach = ee_motion[0] * normal[0] + ee_motion[1] * normal[1];
                    if approach > 0.0 {
                        obj_vel = add_scaled(obj_vel, normal, approach * friction);
                    }
                    ee = cfg.workspace.clamp(add_scaled(obj, normal, -r_contact));
                    ee = self.push_out_of_obstacle(ee, 0.0);
                }
                let moved = add_scaled(obj, obj_vel, 1.0);
                let clamped = obj_bounds.clamp(moved);
                for i in 0..2 {
                    if clamped[i] != moved[i] {
                        obj_vel[i] = 0.0;
                    }
                }
                let unblocked = self.push_out_of_obstacle(clamped, footprint);
                if unblocked != clamped {
                    obj_vel = [0.0; 2];
                }
                obj = unblocked;
                let decay = 1.0 - SLIDE_DECAY * friction;
                obj_vel = [obj_vel[0] * decay, obj_vel[1] * decay];
            }
        }

        let s = &mut self.state;
        s.ee_vel = sub(ee, prev_ee);
        s.ee_pos = ee;
        s.obj_pos = obj;
        s.obj_vel = obj_vel;
        s.obj_theta = theta;
        s.step_index += 1;

        let distances = self.exact_distances();
        let success = is_success(distances.d_og, self.config.eta);
        let done = self.is_exhausted() || success;
        Ok(StepOutcome {
            observation: self.observation(),
            distances,
            success,
            done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn staged(config: WorldConfig, ee: Vec2, obj: Vec2) -> PushWorld {
        let mut w = PushWorld::new(config, 0).unwrap();
        let goal = w.state().goal_pos;
        w.set_state(WorldState {
            ee_pos: ee,
            ee_vel: [0.0; 2],
            obj_pos: obj,
            obj_theta: 0.0,
            obj_vel: [0.0; 2],
            goal_pos: goal,
            step_index: 0,
        });
        w
    }

    #[test]
    fn reset_is_deterministic() {
        let a = PushWorld::new(WorldConfig::push(), 42).unwrap();
        let b = PushWorld::new(WorldConfig::push(), 42).unwrap();
        assert_eq!(a.state(), b.state());
        assert_eq!(a.observation(), b.observation());
    }

    #[test]
    fn different_seeds_give_different_objects() {
        let cfg = WorldConfig::push();
        for s in 0..100u64 {
            let a = PushWorld::new(cfg.clone(), 2 * s).unwrap();
            let b = PushWorld::new(cfg.clone(), 2 * s + 1).unwrap();
            assert_ne!(a.state().obj_pos, b.state().obj_pos);
        }
    }

    #[test]
    fn reset_respects_separation() {
        let cfg = WorldConfig::push();
        for seed in 0..200 {
            let w = PushWorld::new(cfg.clone(), seed).unwrap();
            let s = w.state();
            assert!(distance(s.ee_pos, s.obj_pos) >= 2.0 * cfg.eta);
            assert!(distance(s.ee_pos, s.goal_pos) >= 2.0 * cfg.eta);
            assert!(distance(s.obj_pos, s.goal_pos) >= 2.0 * cfg.eta);
            assert!(cfg.workspace.contains(s.obj_pos));
        }
    }

    #[test]
    fn tiny_workspace_is_config_error() {
        let mut cfg = WorldConfig::push();
        cfg.workspace = Bounds {
            min: [-0.04, -0.04],
            max: [0.04, 0.04],
        };
        assert!(matches!(PushWorld::new(cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = WorldConfig::push();
        cfg.friction = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = WorldConfig::push();
        cfg.obstacle = Some([1.0, 0.0]);
        assert!(cfg.validate().is_err());
        let mut cfg = WorldConfig::push();
        cfg.episode_len = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn no_obstacle_gives_infinite_d_es() {
        let w = PushWorld::new(WorldConfig::push(), 3).unwrap();
        assert_eq!(w.exact_distances().d_es, f64::INFINITY);
    }

    #[test]
    fn zero_action_without_contact_leaves_object() {
        let mut w = staged(WorldConfig::push(), [-0.1, 0.0], [0.1, 0.0]);
        for _ in 0..10 {
            w.step([0.0, 0.0]).unwrap();
        }
        assert_eq!(w.state().obj_pos, [0.1, 0.0]);
        assert_eq!(w.state().ee_pos, [-0.1, 0.0]);
    }

    #[test]
    fn higher_friction_pushes_further() {
        let displacement = |friction: f64| {
            let mut cfg = WorldConfig::push();
            cfg.friction = friction;
            let mut w = staged(cfg, [0.0, 0.0], [0.05, 0.0]);
            w.step([1.0, 0.0]).unwrap();
            w.state().obj_pos[0] - 0.05
        };
        let (hi, lo) = (displacement(0.9), displacement(0.5));
        assert!(lo > 0.0);
        assert!(hi > lo, "{hi} vs {lo}");
    }

    #[test]
    fn tangential_contact_rotates_object() {
        let mut w = staged(WorldConfig::push(), [0.0, 0.0], [0.03, 0.0]);
        w.step([0.0, 1.0]).unwrap();
        assert!(w.state().obj_theta > 0.0);
    }

    #[test]
    fn slide_decays_geometrically() {
        let mut cfg = WorldConfig::slide();
        cfg.friction = 0.5;
        let q = 1.0 - SLIDE_DECAY * 0.5;
        let mut w = staged(cfg, [-0.2, 0.0], [-0.16, 0.0]);
        w.step([1.0, 0.0]).unwrap();
        let v0 = w.state().obj_vel[0];
        assert!(v0 > 0.0);
        let p1 = w.state().obj_pos[0];
        let mut speed = v0;
        for _ in 0..30 {
            w.step([0.0, 0.0]).unwrap();
            let v = w.state().obj_vel[0];
            assert!((v - speed * q).abs() < 1e-15);
            speed = v;
        }
        // remaining travel is v0 · q / (1 − q) summed to infinity
        let limit = p1 + v0 / (1.0 - q);
        let p = w.state().obj_pos[0];
        assert!((limit - p).abs() < v0 * q.powi(30) / (1.0 - q) + 1e-12);
    }

    #[test]
    fn stepping_past_horizon_is_state_error() {
        let mut cfg = WorldConfig::push();
        cfg.episode_len = 3;
        let mut w = PushWorld::new(cfg, 0).unwrap();
        let mut last = None;
        for _ in 0..3 {
            last = Some(w.step([0.3, -0.2]).unwrap());
        }
        assert!(last.unwrap().done);
        assert!(matches!(w.step([0.0, 0.0]), Err(Error::State(_))));
    }

    #[test]
    fn distances_examples() {
        let mut w = staged(WorldConfig::push(), [0.0, 0.0], [0.0, 0.0]);
        let mut s = w.state().clone();
        s.obj_pos = [0.0, 0.0];
        s.goal_pos = [0.0, 0.0];
        w.set_state(s.clone());
        assert_eq!(w.distances(false).d_og, 0.0);
        s.goal_pos = [3.0, 4.0];
        w.set_state(s);
        assert_eq!(w.distances(false).d_og, 5.0);
    }

    #[test]
    fn zero_noise_matches_noiseless() {
        let mut cfg = WorldConfig::push();
        cfg.noise_std = 0.0;
        let mut w = PushWorld::new(cfg, 8).unwrap();
        assert_eq!(w.distances(true), w.distances(false));
    }

    #[test]
    fn noisy_distances_are_non_negative() {
        let mut cfg = WorldConfig::push();
        cfg.noise_std = 0.5;
        let mut w = PushWorld::new(cfg, 8).unwrap();
        for _ in 0..200 {
            let d = w.distances(true);
            assert!(d.d_og >= 0.0 && d.d_oe >= 0.0);
        }
    }

    #[test]
    fn success_boundary_inclusive() {
        assert!(is_success(0.0, 0.05));
        assert!(is_success(0.05, 0.05));
        assert!(!is_success(0.05 + 1e-9, 0.05));
    }

    #[test]
    fn obstacle_blocks_end_effector() {
        let mut cfg = WorldConfig::push();
        cfg.obstacle = Some([0.0, 0.0]);
        let mut w = staged(cfg.clone(), [-0.1, 0.1], [0.1, -0.1]);
        let mut s = w.state().clone();
        s.ee_pos = [-0.03, 0.0];
        w.set_state(s);
        for _ in 0..5 {
            w.step([1.0, 0.0]).unwrap();
            assert!(distance(w.state().ee_pos, [0.0, 0.0]) >= cfg.obstacle_radius - 1e-12);
        }
        assert!(w.exact_distances().d_es.is_finite());
    }

    #[test]
    fn observation_layout() {
        let mut cfg = WorldConfig::push();
        cfg.obstacle = Some([0.2, -0.2]);
        let w = PushWorld::new(cfg, 5).unwrap();
        let o = w.observation();
        let s = w.state();
        assert_eq!(o.vector.len(), OBS_DIM);
        assert_eq!(&o.vector[0..2], &s.ee_pos);
        assert_eq!(&o.vector[4..6], &s.obj_pos);
        assert_eq!(&o.vector[OBS_GOAL_SLOT], &s.goal_pos);
        assert_eq!(&o.vector[11..13], &[0.2, -0.2]);
        assert_eq!(o.achieved_goal, s.obj_pos);
    }
}
