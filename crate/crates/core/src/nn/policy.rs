use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Activation, Mlp, MlpCache, NnError};

/// Lower bound on the per-dimension log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_TWO_PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_TWO_PI).sum()
}

/// Diagonal Gaussian policy with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub trunk: Mlp,
    /// Linear map from the trunk features to the action mean.
    pub head: Mlp,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    pub trunk: MlpCache,
    pub head: MlpCache,
}

impl PolicyCache {
    pub fn mean(&self) -> &[f64] {
        self.head.output()
    }
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        activation: Activation,
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        let trunk = Mlp::random(&widths, activation, true, 2f64.sqrt(), 2f64.sqrt(), rng);
        let features = *widths.last().unwrap();
        let head = Mlp::random(&[features, action_dim], activation, false, 0.01, 0.01, rng);
        Self { trunk, head, log_std: vec![init_log_std; action_dim] }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    fn check(&self, obs: &[f64]) -> Result<(), NnError> {
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(())
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check(obs)?;
        self.head.forward(&self.trunk.forward(obs)?)
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<PolicyCache, NnError> {
        self.check(obs)?;
        let trunk = self.trunk.forward_cached(obs)?;
        let head = self.head.forward_cached(trunk.output())?;
        Ok(PolicyCache { trunk, head })
    }

    /// Backpropagates a gradient on the mean. Returns the input gradient.
    pub fn backward_mean(
        &self,
        cache: &PolicyCache,
        mean_grad: &[f64],
        trunk_grads: &mut [f64],
        head_grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        let feat = self.head.backward(&cache.head, mean_grad, head_grads)?;
        self.trunk.backward(&cache.trunk, &feat, trunk_grads)
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64, NnError> {
        if action.len() != self.action_dim() {
            return Err(NnError::Shape { expected: self.action_dim(), got: action.len() });
        }
        Ok(gaussian_log_prob(&self.mean(obs)?, &self.log_std, action))
    }

    /// Reparameterised sample `mean + std * eps` and its log density.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), NnError> {
        let mean = self.mean(obs)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + ls.exp() * eps
            })
            .collect();
        let lp = gaussian_log_prob(&mean, &self.log_std, &action);
        Ok((action, lp))
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.max(LOG_STD_MIN);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.is_finite() && self.head.is_finite() && self.log_std.iter().all(|x| x.is_finite())
    }
}
