//! Plain-text `key=value` configuration files.
//!
//! One setting per line, dotted keys, `#` starts a comment. Unknown keys are
//! rejected so typos do not silently fall back to defaults.
//!
//! ```text
//! # adapt with three fused primitives
//! env=push-env-1
//! method=dmf3
//! reward=mgr
//! primitives=prims/base1.ckpt, prims/base2.ckpt, prims/base3.ckpt
//! agent.gamma=0.98
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::experiment::{ExperimentConfig, WorldOverrides};
use crate::ddpg::OptimizerKind;
use crate::error::{Error, Result};
use crate::pushworld::ObjectShape;
use crate::replay::HerStrategy;
use crate::rewards::RewardMode;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Parsed `key=value` pairs. Each typed getter marks its key as consumed.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key=value, found {content:?}")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line}: empty key")));
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line,
                used: false,
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::Config(format!(
                    "line {line}: key {key:?} already set on line {}",
                    prev.line
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse {key}={value:?}"))),
        }
    }

    /// Comma-separated list; an empty value gives an empty list.
    pub fn get_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((value, line)) => split_list(&value)
                .map(|item| {
                    item.parse()
                        .map_err(|_| Error::Config(format!("line {line}: cannot parse {item:?} in {key}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn get_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some((value, line)) => match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some(true)),
                "false" | "no" | "off" | "0" => Ok(Some(false)),
                _ => Err(Error::Config(format!("line {line}: {key} expects true or false, got {value:?}"))),
            },
        }
    }

    /// Fails if any key was never consumed.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, e)| !e.used)
            .map(|(k, e)| format!("{k} (line {})", e.line))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown configuration keys: {}", unknown.join(", "))))
        }
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

/// Applies every experiment-level key to `config`. Relative primitive and
/// output paths are resolved against `base_dir`.
pub fn apply_experiment_keys(kv: &mut KeyValues, config: &mut ExperimentConfig, base_dir: &Path) -> Result<()> {
    set(&mut config.env_variant, kv.get("env")?);
    set(&mut config.method, kv.get("method")?);
    set(&mut config.reward_mode, kv.get::<RewardMode>("reward")?);
    if let Some(paths) = kv.get_list::<String>("primitives")? {
        config.primitive_checkpoints = paths.iter().map(|p| resolve(base_dir, p)).collect();
    }
    set(&mut config.episodes, kv.get("episodes")?);
    set(&mut config.eval_every, kv.get("eval_every")?);
    set(&mut config.eval_episodes, kv.get("eval_episodes")?);
    set(&mut config.seeds, kv.get_list("seeds")?);
    if let Some(p) = kv.get::<String>("output")? {
        config.output_path = Some(resolve(base_dir, &p));
    }
    set(&mut config.record_wall_time, kv.get_bool("harness.wall_time")?);

    let o: &mut WorldOverrides = &mut config.overrides;
    if let Some(v) = kv.get("env.friction")? {
        o.friction = Some(v);
    }
    if let Some(v) = kv.get::<ObjectShape>("env.shape")? {
        o.object_shape = Some(v);
    }
    if let Some((value, line)) = kv.raw("env.obstacle") {
        o.obstacle = Some(parse_obstacle(&value).map_err(|m| Error::Config(format!("line {line}: {m}")))?);
    }
    if let Some(v) = kv.get("env.episode_len")? {
        o.episode_len = Some(v);
    }
    if let Some(v) = kv.get("env.noise_std")? {
        o.noise_std = Some(v);
    }
    if let Some(v) = kv.get("env.spawn_half_extent")? {
        o.spawn_half_extent = Some(v);
    }
    if let Some(v) = kv.get("mgr.eta")? {
        o.eta = Some(v);
    }
    if let Some(v) = kv.get("mgr.mu")? {
        o.mu = Some(v);
    }
    for (i, key) in ["mgr.alpha1", "mgr.alpha2", "mgr.alpha3"].into_iter().enumerate() {
        set(&mut config.reward_alpha[i], kv.get(key)?);
    }
    set(&mut config.prevention_weight, kv.get("mgr.alpha_prevention")?);

    let a = &mut config.agent;
    set(&mut a.gamma, kv.get("agent.gamma")?);
    set(&mut a.tau, kv.get("agent.tau")?);
    set(&mut a.lr_actor, kv.get("agent.lr_actor")?);
    set(&mut a.lr_critic, kv.get("agent.lr_critic")?);
    set(&mut a.noise_std, kv.get("agent.noise_std")?);
    set(&mut a.random_eps, kv.get("agent.random_eps")?);
    set(&mut a.batch_size, kv.get("agent.batch_size")?);
    set(&mut a.hidden, kv.get_list("agent.hidden")?);
    set(&mut a.optimizer, kv.get::<OptimizerKind>("agent.optimizer")?);
    set(&mut a.action_l2, kv.get("agent.action_l2")?);
    if let Some(v) = kv.get::<f64>("agent.grad_clip")? {
        a.grad_clip = (v > 0.0).then_some(v);
    }
    if let Some(v) = kv.get_list::<f64>("agent.target_clip")? {
        a.target_clip = match v.as_slice() {
            [] => None,
            [lo, hi] if lo <= hi => Some((*lo, *hi)),
            _ => return Err(Error::Config("agent.target_clip expects two values lo,hi with lo <= hi".into())),
        };
    }
    set(&mut config.train_steps, kv.get("agent.train_steps")?);
    set(&mut config.actor_delay, kv.get("agent.actor_delay")?);
    set(&mut config.replay_capacity, kv.get("replay.capacity")?);
    set(&mut config.her.k, kv.get("her.k")?);
    set(&mut config.her.strategy, kv.get::<HerStrategy>("her.strategy")?);
    set(&mut config.fusion.freeze_primitives, kv.get_bool("fusion.freeze_primitives")?);
    set(&mut config.fusion.post_activation, kv.get_bool("fusion.post_activation")?);
    set(&mut config.fusion.head_hidden, kv.get_list("fusion.head_hidden")?);
    let warm = &mut config.head_warm_start;
    set(&mut warm.episodes, kv.get("fusion.warm_episodes")?);
    set(&mut warm.steps, kv.get("fusion.warm_steps")?);
    set(&mut warm.learning_rate, kv.get("fusion.warm_lr")?);
    Ok(())
}

fn parse_obstacle(value: &str) -> std::result::Result<Option<[f64; 2]>, String> {
    if value.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let parts: Vec<f64> = split_list(value)
        .map(|p| p.parse::<f64>().map_err(|_| format!("bad obstacle coordinate {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [x, y] => Ok(Some([*x, *y])),
        _ => Err(format!("env.obstacle expects x,y or none, got {value:?}")),
    }
}

fn resolve(base_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Parses a complete experiment configuration.
pub fn parse_experiment_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut kv = KeyValues::parse(text)?;
    let mut config = ExperimentConfig::new("push-env-1")?;
    apply_experiment_keys(&mut kv, &mut config, base_dir)?;
    kv.finish()?;
    config.validate()?;
    Ok(config)
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Method;

    #[test]
    fn comments_blank_lines_and_whitespace() {
        let mut kv = KeyValues::parse("# header\n\n  agent.gamma = 0.9  # trailing\nseeds=1, 2,3\n").unwrap();
        assert_eq!(kv.get::<f64>("agent.gamma").unwrap(), Some(0.9));
        assert_eq!(kv.get_list::<u64>("seeds").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(matches!(KeyValues::parse("novalue"), Err(Error::Config(_))));
        assert!(matches!(KeyValues::parse("=3"), Err(Error::Config(_))));
        let dup = KeyValues::parse("a=1\na=2").unwrap_err().to_string();
        assert!(dup.contains("line 2") && dup.contains("line 1"), "{dup}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_experiment_config("agent.gama=0.9", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("agent.gama"), "{err}");
    }

    #[test]
    fn bad_values_name_line_and_key() {
        let err = parse_experiment_config("episodes=10\nagent.gamma=high", Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("agent.gamma"), "{msg}");
    }

    #[test]
    fn full_config_applies() {
        let text = "env=push-env-3\nmethod=dmf2\nreward=mgr\nprimitives=a.ckpt,/abs/b.ckpt\n\
                    episodes=10\neval_every=5\nseeds=3,4\nenv.friction=0.4\nenv.obstacle=0.1,-0.1\n\
                    mgr.alpha1=0.5\nmgr.eta=0.04\nagent.hidden=32,16\nagent.target_clip=-50,0\n\
                    replay.capacity=50\nher.k=2\nfusion.freeze_primitives=false\nagent.optimizer=sgd\n";
        let c = parse_experiment_config(text, Path::new("/base")).unwrap();
        assert_eq!(c.method, Method::Dmf2);
        assert_eq!(c.reward_mode, RewardMode::Mgr);
        assert_eq!(
            c.primitive_checkpoints,
            vec![PathBuf::from("/base/a.ckpt"), PathBuf::from("/abs/b.ckpt")]
        );
        assert_eq!(c.seeds, vec![3, 4]);
        let world = c.world().unwrap();
        assert_eq!(world.friction, 0.4);
        assert_eq!(world.obstacle, Some([0.1, -0.1]));
        assert_eq!(world.eta, 0.04);
        assert_eq!(c.reward_weights().unwrap().alpha(), &[0.5, 0.35, 0.35, 1.0]);
        assert_eq!(c.agent.hidden, vec![32, 16]);
        assert_eq!(c.agent.target_clip, Some((-50.0, 0.0)));
        assert_eq!(c.agent.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.replay_capacity, 50);
        assert_eq!(c.her.k, 2);
        assert!(!c.fusion.freeze_primitives);
    }

    #[test]
    fn arity_checked_against_method() {
        for (method, n) in [("tfs", 1), ("transfer", 0), ("dmf2", 3), ("dmf3", 2)] {
            let prims = vec!["p.ckpt"; n].join(",");
            let text = format!("method={method}\nprimitives={prims}\n");
            assert!(
                matches!(parse_experiment_config(&text, Path::new(".")), Err(Error::Config(_))),
                "{method} with {n}"
            );
        }
        parse_experiment_config("method=dmf3\nprimitives=a,b,c", Path::new(".")).unwrap();
    }

    #[test]
    fn unknown_env_variant_is_config_error() {
        assert!(matches!(
            parse_experiment_config("env=push-env-7", Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn obstacle_none_removes_variant_obstacle() {
        let c = parse_experiment_config("env=push-env-3\nenv.obstacle=none", Path::new(".")).unwrap();
        assert_eq!(c.world().unwrap().obstacle, None);
    }
}
