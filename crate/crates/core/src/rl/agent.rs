use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Controller;
use crate::nn::{Activation, GaussianPolicy, Mlp, MlpCache, NnError, OptimizerState, PolicyCache, RunningNorm};

/// A stochastic policy reading selected entries of an observation frame.
///
/// `obs_index` picks the policy's own observation entries. When an encoder is
/// present, `privileged_index` entries are compressed by it into an extrinsic
/// vector that is appended to the policy input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub obs_index: Vec<usize>,
    pub privileged_index: Vec<usize>,
    pub norm: RunningNorm,
    pub encoder: Option<Mlp>,
    pub policy: GaussianPolicy,
}

#[derive(Debug, Clone)]
pub struct AgentCache {
    pub encoder: Option<MlpCache>,
    pub policy: PolicyCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentGrads {
    pub encoder: Vec<f64>,
    pub trunk: Vec<f64>,
    pub head: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl AgentGrads {
    pub fn zeros(agent: &Agent) -> Self {
        Self {
            encoder: vec![0.0; agent.encoder.as_ref().map_or(0, |e| e.num_params())],
            trunk: vec![0.0; agent.policy.trunk.num_params()],
            head: vec![0.0; agent.policy.head.num_params()],
            log_std: vec![0.0; agent.policy.action_dim()],
        }
    }

    fn parts(&self) -> [&Vec<f64>; 4] {
        [&self.encoder, &self.trunk, &self.head, &self.log_std]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.encoder, &mut self.trunk, &mut self.head, &mut self.log_std]
    }

    pub fn norm(&self) -> f64 {
        self.parts().iter().flat_map(|p| p.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for p in self.parts_mut() {
            p.iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|g| g.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOptimizer {
    pub encoder: OptimizerState,
    pub trunk: OptimizerState,
    pub head: OptimizerState,
    pub log_std: OptimizerState,
}

impl AgentOptimizer {
    pub fn new(agent: &Agent, learning_rate: f64) -> Self {
        Self {
            encoder: OptimizerState::new(agent.encoder.as_ref().map_or(0, |e| e.num_params()), learning_rate),
            trunk: OptimizerState::new(agent.policy.trunk.num_params(), learning_rate),
            head: OptimizerState::new(agent.policy.head.num_params(), learning_rate),
            log_std: OptimizerState::new(agent.policy.action_dim(), learning_rate),
        }
    }

    pub fn apply(&mut self, agent: &mut Agent, grads: &AgentGrads) {
        if let Some(enc) = agent.encoder.as_mut() {
            self.encoder.apply(enc.params_mut(), &grads.encoder);
        }
        self.trunk.apply(agent.policy.trunk.params_mut(), &grads.trunk);
        self.head.apply(agent.policy.head.params_mut(), &grads.head);
        self.log_std.apply(&mut agent.policy.log_std, &grads.log_std);
        agent.policy.clamp_log_std();
    }
}

impl Agent {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        frame_len: usize,
        obs_index: Vec<usize>,
        privileged_index: Vec<usize>,
        encoder_hidden: &[usize],
        extrinsic_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let encoder = (!privileged_index.is_empty()).then(|| {
            let mut widths = vec![privileged_index.len()];
            widths.extend_from_slice(encoder_hidden);
            widths.push(extrinsic_dim);
            Mlp::random(&widths, activation, false, 2f64.sqrt(), 1.0, rng)
        });
        let z = encoder.as_ref().map_or(0, |e| e.output_dim());
        let policy = GaussianPolicy::new(obs_index.len() + z, hidden, action_dim, activation, 0.0, rng);
        Self { obs_index, privileged_index, norm: RunningNorm::new(frame_len), encoder, policy }
    }

    pub fn frame_len(&self) -> usize {
        self.norm.dim()
    }

    fn select(nframe: &[f64], index: &[usize]) -> Vec<f64> {
        index.iter().map(|&i| nframe[i]).collect()
    }

    fn check_frame(&self, nframe: &[f64]) -> Result<(), NnError> {
        if nframe.len() != self.frame_len() {
            return Err(NnError::Shape { expected: self.frame_len(), got: nframe.len() });
        }
        Ok(())
    }

    /// Policy input from a normalized frame.
    pub fn policy_input(&self, nframe: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_frame(nframe)?;
        let mut x = Self::select(nframe, &self.obs_index);
        if let Some(enc) = &self.encoder {
            x.extend(enc.forward(&Self::select(nframe, &self.privileged_index))?);
        }
        Ok(x)
    }

    pub fn mean_normalized(&self, nframe: &[f64]) -> Result<Vec<f64>, NnError> {
        self.policy.mean(&self.policy_input(nframe)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, nframe: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), NnError> {
        self.policy.sample_action(&self.policy_input(nframe)?, rng)
    }

    pub fn forward_cached(&self, nframe: &[f64]) -> Result<AgentCache, NnError> {
        self.check_frame(nframe)?;
        let mut x = Self::select(nframe, &self.obs_index);
        let encoder = match &self.encoder {
            Some(enc) => {
                let c = enc.forward_cached(&Self::select(nframe, &self.privileged_index))?;
                x.extend_from_slice(c.output());
                Some(c)
            }
            None => None,
        };
        Ok(AgentCache { encoder, policy: self.policy.forward_cached(&x)? })
    }

    /// Backpropagates a gradient on the action mean through policy and encoder.
    pub fn backward_mean(&self, cache: &AgentCache, mean_grad: &[f64], grads: &mut AgentGrads) -> Result<(), NnError> {
        let input_grad = self.policy.backward_mean(&cache.policy, mean_grad, &mut grads.trunk, &mut grads.head)?;
        if let (Some(enc), Some(c)) = (&self.encoder, &cache.encoder) {
            let z_grad = &input_grad[self.obs_index.len()..];
            enc.backward(c, z_grad, &mut grads.encoder)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.encoder.as_ref().is_none_or(|e| e.is_finite())
    }
}

impl Controller for Agent {
    fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    fn mean_action(&self, frame: &[f64]) -> Result<Vec<f64>, NnError> {
        self.mean_normalized(&self.norm.normalize(frame))
    }
}

/// State-value network on a normalized frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub index: Vec<usize>,
    pub net: Mlp,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(index: Vec<usize>, hidden: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut widths = vec![index.len()];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self { index, net: Mlp::random(&widths, activation, false, 2f64.sqrt(), 1.0, rng) }
    }

    pub fn input(&self, nframe: &[f64]) -> Vec<f64> {
        self.index.iter().map(|&i| nframe[i]).collect()
    }

    pub fn value(&self, nframe: &[f64]) -> Result<f64, NnError> {
        Ok(self.net.forward(&self.input(nframe))?[0])
    }
}
