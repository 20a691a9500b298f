//! Sparse goal reward and the multi-objective guided reward.
//!
//! The guided reward is a weighted sum of a final-goal indicator, sequential
//! distance objectives and an obstacle prevention term:
//!
//! ```text
//! r = α₁·G_f + Σᵢ αᵢ·Oᵢ + α_{n+1}·O_p
//! ```
//!
//! For pushing, `G_f = −[d_og > η]`, the sequential objectives are `−d_oe`
//! then `−d_og`, and `O_p = [d_es < μ]·(ln d_es − ln μ)`.

use crate::error::{Error, Result};
use crate::pushworld::{is_success, Distances};

/// Lower bound applied to `d_es` before taking its logarithm.
pub const D_ES_FLOOR: f64 = 1e-6;

/// Objective weights and thresholds.
///
/// `alpha[0]` weighs the final goal, the last entry weighs the prevention
/// objective and everything in between weighs the sequential objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardWeights {
    alpha: Vec<f64>,
    pub eta: f64,
    pub mu: f64,
}

impl RewardWeights {
    pub fn new(alpha: Vec<f64>, eta: f64, mu: f64) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Argument(format!(
                "need at least a goal and a prevention weight, got {} weights",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(Error::Argument(format!(
                "reward weights must be finite and non-negative, got {a}"
            )));
        }
        if !(eta > 0.0) || !(mu > 0.0) {
            return Err(Error::Argument(format!(
                "thresholds must be positive, got eta={eta} mu={mu}"
            )));
        }
        Ok(Self { alpha, eta, mu })
    }

    /// Pushing weights `α = (0.3, 0.35, 0.35)` with unit prevention weight.
    pub fn push_default(eta: f64, mu: f64) -> Result<Self> {
        Self::new(vec![0.3, 0.35, 0.35, 1.0], eta, mu)
    }

    /// Pushing weights from the three objective weights plus the prevention weight.
    pub fn push(alpha: [f64; 3], prevention: f64, eta: f64, mu: f64) -> Result<Self> {
        Self::new(vec![alpha[0], alpha[1], alpha[2], prevention], eta, mu)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    fn push_alphas(&self) -> Result<[f64; 4]> {
        if self.alpha.len() != 4 {
            return Err(Error::dim("pushing reward weight count", 4, self.alpha.len()));
        }
        Ok([self.alpha[0], self.alpha[1], self.alpha[2], self.alpha[3]])
    }
}

/// `0` when the goal is reached (`d_og ≤ η`), `−1` otherwise.
#[inline]
pub fn sparse_reward(d_og: f64, eta: f64) -> f64 {
    if is_success(d_og, eta) {
        0.0
    } else {
        -1.0
    }
}

/// Prevention objective: `ln d_es − ln μ` inside the μ-ball, zero outside.
#[inline]
pub fn prevention_term(d_es: f64, mu: f64) -> f64 {
    if d_es < mu {
        d_es.max(D_ES_FLOOR).ln() - mu.ln()
    } else {
        0.0
    }
}

/// Guided pushing reward from the three task distances.
///
/// Weights must hold exactly four entries (three objectives plus prevention).
pub fn mgr_push(d: &Distances, w: &RewardWeights) -> Result<f64> {
    let [a_goal, a_approach, a_deliver, a_prevent] = w.push_alphas()?;
    let not_reached = if d.d_og > w.eta { 1.0 } else { 0.0 };
    Ok(-a_goal * not_reached - a_approach * d.d_oe - a_deliver * d.d_og
        + a_prevent * prevention_term(d.d_es, w.mu))
}

/// General weighted sum over a final goal, sequential objectives and a
/// prevention objective. `objectives.len() + 2` must equal the weight count.
pub fn mgr_general(
    final_goal: f64,
    objectives: &[f64],
    prevention: f64,
    w: &RewardWeights,
) -> Result<f64> {
    let alpha = w.alpha();
    if objectives.len() + 2 != alpha.len() {
        return Err(Error::Argument(format!(
            "{} objectives need {} weights, got {}",
            objectives.len(),
            objectives.len() + 2,
            alpha.len()
        )));
    }
    let sequential: f64 = alpha[1..alpha.len() - 1]
        .iter()
        .zip(objectives)
        .map(|(a, o)| a * o)
        .sum();
    Ok(alpha[0] * final_goal + sequential + alpha[alpha.len() - 1] * prevention)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Sparse,
    Mgr,
}

impl RewardMode {
    pub fn name(self) -> &'static str {
        match self {
            RewardMode::Sparse => "sparse",
            RewardMode::Mgr => "mgr",
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(RewardMode::Sparse),
            "mgr" => Ok(RewardMode::Mgr),
            other => Err(Error::Config(format!("unknown reward mode {other:?}"))),
        }
    }
}

/// Reward function selected by [`RewardMode`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskReward {
    pub mode: RewardMode,
    pub weights: RewardWeights,
}

impl TaskReward {
    pub fn new(mode: RewardMode, weights: RewardWeights) -> Result<Self> {
        if mode == RewardMode::Mgr {
            weights.push_alphas()?;
        }
        Ok(Self { mode, weights })
    }

    pub fn eta(&self) -> f64 {
        self.weights.eta
    }

    pub fn reward(&self, d: &Distances) -> f64 {
        match self.mode {
            RewardMode::Sparse => sparse_reward(d.d_og, self.weights.eta),
            RewardMode::Mgr => mgr_push(d, &self.weights).expect("weights validated on construction"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights() -> RewardWeights {
        RewardWeights::push_default(0.05, 0.10).unwrap()
    }

    #[test]
    fn sparse_examples() {
        assert_eq!(sparse_reward(0.0, 0.05), 0.0);
        assert_eq!(sparse_reward(0.5, 0.05), -1.0);
        assert_eq!(sparse_reward(0.05, 0.05), 0.0);
    }

    #[test]
    fn mgr_perfect_state_is_zero() {
        let d = Distances {
            d_og: 0.0,
            d_oe: 0.0,
            d_es: f64::INFINITY,
        };
        assert_eq!(mgr_push(&d, &weights()).unwrap(), 0.0);
    }

    #[test]
    fn mgr_hand_value() {
        let d = Distances {
            d_og: 0.1,
            d_oe: 0.2,
            d_es: f64::INFINITY,
        };
        let expected = 0.3 * -1.0 + 0.35 * -0.2 + 0.35 * -0.1;
        let r = mgr_push(&d, &weights()).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!((r + 0.405).abs() < 1e-12);
    }

    #[test]
    fn obstacle_term_boundary_and_half() {
        let base = Distances {
            d_og: 0.0,
            d_oe: 0.0,
            d_es: 0.10,
        };
        assert_eq!(mgr_push(&base, &weights()).unwrap(), 0.0);
        let half = Distances { d_es: 0.05, ..base };
        let r = mgr_push(&half, &weights()).unwrap();
        assert!((r - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_obstacle_distance_is_floored() {
        let d = Distances {
            d_og: 0.0,
            d_oe: 0.0,
            d_es: 0.0,
        };
        let r = mgr_push(&d, &weights()).unwrap();
        assert!(r.is_finite());
        assert!((r - (D_ES_FLOOR.ln() - 0.1f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn general_examples() {
        let w = weights();
        assert_eq!(mgr_general(0.0, &[0.0, 0.0], 0.0, &w).unwrap(), 0.0);
        let r = mgr_general(-1.0, &[-0.2, -0.1], 0.0, &w).unwrap();
        assert!((r + 0.405).abs() < 1e-12);
        assert!(matches!(
            mgr_general(-1.0, &[-0.2], 0.0, &w),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn general_reduces_to_sparse() {
        let w = RewardWeights::new(vec![1.0, 1.0], 0.05, 0.1).unwrap();
        for d_og in [0.0, 0.05, 0.2, 3.0] {
            let g = sparse_reward(d_og, 0.05);
            assert_eq!(mgr_general(g, &[], 0.0, &w).unwrap(), sparse_reward(d_og, 0.05));
        }
    }

    #[test]
    fn weights_validated() {
        assert!(RewardWeights::new(vec![0.3, -0.1, 0.2, 1.0], 0.05, 0.1).is_err());
        assert!(RewardWeights::new(vec![0.3, 0.35, 0.35, 1.0], 0.0, 0.1).is_err());
        assert!(RewardWeights::new(vec![0.3], 0.05, 0.1).is_err());
        let short = RewardWeights::new(vec![1.0, 1.0], 0.05, 0.1).unwrap();
        assert!(TaskReward::new(RewardMode::Mgr, short).is_err());
    }
}
