//! Goal-conditioned DDPG with hindsight replay, deep model fusion policy
//! networks and multi-objective guided rewards, plus a planar pushing and
//! sliding simulator and the experiment harness that ties them together.

pub mod error;
pub mod numkit;
pub mod pushworld;
pub mod rewards;
pub mod replay;
pub mod ddpg;
pub mod fusion;
pub mod harness;

pub use error::{Error, Result};
