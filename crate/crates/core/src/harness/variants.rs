//! Named environment variants.
//!
//! `*-base-*` variants host primitive training; `*-env-*` variants are the
//! changed environments used for adaptation: lower friction, a different
//! object shape, and an added obstacle.

use crate::error::{Error, Result};
use crate::pushworld::{ObjectShape, Task, WorldConfig};

pub const VARIANT_NAMES: [&str; 12] = [
    "push-base-1",
    "push-base-2",
    "push-base-3",
    "push-env-1",
    "push-env-2",
    "push-env-3",
    "slide-base-1",
    "slide-base-2",
    "slide-base-3",
    "slide-env-1",
    "slide-env-2",
    "slide-env-3",
];

pub const OBSTACLE_POSITION: [f64; 2] = [0.0, 0.0];

/// Resolves a variant name to its world configuration.
pub fn variant(name: &str) -> Result<WorldConfig> {
    let (task, suffix) = if let Some(s) = name.strip_prefix("push-") {
        (Task::Push, s)
    } else if let Some(s) = name.strip_prefix("slide-") {
        (Task::Slide, s)
    } else {
        return Err(unknown(name));
    };
    let base = match task {
        Task::Push => WorldConfig::push(),
        Task::Slide => WorldConfig::slide(),
    };
    let cfg = match suffix {
        "base-1" => base,
        "base-2" => WorldConfig { friction: 0.7, ..base },
        "base-3" => WorldConfig {
            object_shape: ObjectShape::Cylinder,
            ..base
        },
        "env-1" => WorldConfig { friction: 0.5, ..base },
        "env-2" => WorldConfig {
            object_shape: ObjectShape::FlatBox,
            ..base
        },
        "env-3" => WorldConfig {
            obstacle: Some(OBSTACLE_POSITION),
            ..base
        },
        _ => return Err(unknown(name)),
    };
    Ok(cfg)
}

fn unknown(name: &str) -> Error {
    Error::Config(format!(
        "unknown environment variant {name:?}; known variants: {}",
        VARIANT_NAMES.join(", ")
    ))
}
