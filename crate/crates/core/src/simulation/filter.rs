use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::game::BeliefPrior;
use crate::math::exp;

/// Entries are raised to this value before renormalizing, keeping every type alive.
pub const BELIEF_FLOOR: f64 = 1e-4;

/// Per-agent probability vectors over that agent's sampled types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub agents: Vec<Vec<f64>>,
}

impl Belief {
    pub fn new(agents: Vec<Vec<f64>>) -> Result<Self> {
        let b = Belief { agents };
        b.to_prior()?;
        Ok(b)
    }

    pub fn to_prior(&self) -> Result<BeliefPrior> {
        let prior = BeliefPrior::independent(self.agents.clone())?;
        prior.validate()?;
        Ok(prior)
    }

    /// Most likely type of `agent`; ties go to the lowest index.
    pub fn mle(&self, agent: usize) -> usize {
        self.agents[agent]
            .iter()
            .enumerate()
            .fold(0, |best, (k, &p)| if p > self.agents[agent][best] { k } else { best })
    }

    pub fn is_degenerate(&self, agent: usize) -> bool {
        self.agents[agent].len() == 1
    }
}

/// Gaussian observation noise. Position is always used; speed only when `speed_std` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub position_std: f64,
    #[serde(default)]
    pub speed_std: Option<f64>,
}

impl Default for ObservationModel {
    fn default() -> Self {
        ObservationModel {
            position_std: 0.1,
            speed_std: None,
        }
    }
}

impl ObservationModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.position_std > 0.0) {
            return Err(Error::config("observation.position_std", "must be > 0"));
        }
        if let Some(s) = self.speed_std {
            if !(s > 0.0) {
                return Err(Error::config("observation.speed_std", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Log-likelihood up to a constant shared by all types.
    pub fn log_likelihood(&self, observed: &State, predicted: &State) -> f64 {
        let (dx, dy) = (observed.px - predicted.px, observed.py - predicted.py);
        let mut l = -0.5 * (dx * dx + dy * dy) / (self.position_std * self.position_std);
        if let Some(s) = self.speed_std {
            let dv = observed.v - predicted.v;
            l -= 0.5 * dv * dv / (s * s);
        }
        l
    }
}

/// Result of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub probabilities: Vec<f64>,
    /// All likelihoods underflowed and the prior was kept.
    pub kept_prior: bool,
}

/// Posterior over one agent's types given its observed state and each type's prediction.
pub fn bayes_update(prior: &[f64], observed: &State, predicted: &[State], model: &ObservationModel) -> Result<Update> {
    model.validate()?;
    if prior.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            what: "per-type predictions",
            expected: prior.len(),
            found: predicted.len(),
        });
    }
    let logs: Vec<f64> = predicted.iter().map(|p| model.log_likelihood(observed, p)).collect();
    // shift by the best log-likelihood so at least one term is exp(0)
    let best = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut post: Vec<f64> = prior.iter().zip(&logs).map(|(p, l)| p * exp(l - best)).collect();
    let total: f64 = post.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Ok(Update {
            probabilities: prior.to_vec(),
            kept_prior: true,
        });
    }
    post.iter_mut().for_each(|p| *p = (*p / total).max(BELIEF_FLOOR));
    let total: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= total);
    Ok(Update {
        probabilities: post,
        kept_prior: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn at(x: f64) -> State {
        State::new(x, 0.0, 0.0, 1.0)
    }

    #[test]
    fn equal_likelihoods_keep_prior() {
        let u = bayes_update(&[0.25; 4], &at(0.0), &[at(0.1), at(-0.1), at(0.1), at(-0.1)], &ObservationModel::default()).unwrap();
        for p in u.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_is_proportional_to_likelihood() {
        // likelihood ratio 0.8 : 0.2 from the Gaussian exponent
        let m = ObservationModel::default();
        let d = crate::math::sqrt(2.0 * 0.01 * crate::math::ln(4.0));
        let u = bayes_update(&[0.5, 0.5], &at(0.0), &[at(0.0), at(d)], &m).unwrap();
        assert!((u.probabilities[0] - 0.8).abs() < 1e-12);
        assert!((u.probabilities[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn floor_keeps_every_type_alive() {
        let u = bayes_update(&[0.5, 0.5], &at(0.0), &[at(0.0), at(5.0)], &ObservationModel::default()).unwrap();
        assert!(u.probabilities[1] > 0.0);
        assert!((u.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(u.probabilities[1] >= BELIEF_FLOOR * 0.99);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(bayes_update(&[1.0], &at(0.0), &[], &ObservationModel::default()).is_err());
    }

    #[test]
    fn mle_ties_take_lowest_index() {
        let b = Belief::new(vec![vec![1.0], vec![0.4, 0.3, 0.3], vec![0.5, 0.5]]).unwrap();
        assert_eq!(b.mle(1), 0);
        assert_eq!(b.mle(2), 0);
    }
}
