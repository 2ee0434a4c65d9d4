use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentGrads, AgentOptimizer, Critic, RlError, RolloutBatch};
use crate::nn::{gaussian_entropy, gaussian_log_prob, OptimizerState};

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub horizon: usize,
    pub num_envs: usize,
    pub max_grad_norm: f64,
    /// Remaining epochs are skipped once an epoch's mean KL estimate exceeds this.
    pub target_kl: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs: 4,
            minibatch_size: 3200,
            entropy_coef: 0.005,
            value_coef: 0.5,
            learning_rate: 3e-4,
            horizon: 200,
            num_envs: 64,
            max_grad_norm: 1.0,
            target_kl: 0.03,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(RlError::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        if !(self.clip_epsilon > 0.0) {
            return Err(RlError::Config("clip_epsilon must be positive".into()));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.horizon == 0 || self.num_envs == 0 {
            return Err(RlError::Config("epochs, minibatch_size, horizon and num_envs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(RlError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> usize {
        self.horizon * self.num_envs
    }
}

/// Behavior-cloning term added to the PPO loss: `lambda * E[sum_k (mu_k - teacher_k)^2]`
/// over the first `dims` action dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcTerm {
    pub lambda: f64,
    pub dims: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub bc: f64,
    /// `policy + value_coef * value - entropy_coef * entropy`
    pub ppo: f64,
    /// `ppo + lambda * bc`
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Averages over `update_minibatches` of an update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: LossBreakdown,
    pub epochs_run: usize,
    pub minibatches: usize,
}

/// Loss on the transitions `idx` of `batch`, optionally with gradients for
/// the agent and the critic parameters.
pub fn minibatch_loss(
    agent: &Agent,
    critic: &Critic,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &PpoConfig,
    bc: Option<BcTerm>,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<(AgentGrads, Vec<f64>)>), RlError> {
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(RlError::Length("advantages were not computed for this batch".into()));
    }
    let n = idx.len() as f64;
    let log_std = &agent.policy.log_std;
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut out = LossBreakdown { entropy: gaussian_entropy(log_std), ..Default::default() };
    let mut grads = with_grads.then(|| (AgentGrads::zeros(agent), vec![0.0; critic.net.num_params()]));

    for &i in idx {
        let tr = &batch.transitions[i];
        let adv = batch.advantages[i];
        let ret = batch.returns[i];
        let cache = agent.forward_cached(&tr.nframe)?;
        let mean = cache.policy.mean();
        let logp = gaussian_log_prob(mean, log_std, &tr.action);
        let ratio = (logp - tr.log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        out.policy -= (ratio * adv).min(clipped * adv) / n;
        out.approx_kl += ((ratio - 1.0) - (logp - tr.log_prob)) / n;
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            out.clip_fraction += 1.0 / n;
        }
        let flat = (adv > 0.0 && ratio > 1.0 + cfg.clip_epsilon) || (adv < 0.0 && ratio < 1.0 - cfg.clip_epsilon);
        let dlogp = if flat { 0.0 } else { -ratio * adv / n };

        let mut bc_grad = None;
        if let Some(term) = bc {
            let teacher = tr
                .teacher_action
                .as_ref()
                .ok_or_else(|| RlError::Length(format!("transition {i} has no teacher action")))?;
            let dims = term.dims.min(teacher.len()).min(mean.len());
            let mut g = vec![0.0; mean.len()];
            for k in 0..dims {
                let d = mean[k] - teacher[k];
                out.bc += d * d / n;
                g[k] = term.lambda * 2.0 * d / n;
            }
            bc_grad = Some(g);
        }

        let value = critic.net.forward_cached(&critic.input(&tr.nframe))?;
        let v = value.output()[0];
        out.value += 0.5 * (v - ret).powi(2) / n;

        if let Some((ag, cg)) = grads.as_mut() {
            let mut mean_grad = vec![0.0; mean.len()];
            for k in 0..mean.len() {
                let z = tr.action[k] - mean[k];
                mean_grad[k] = dlogp * z * inv_var[k];
                ag.log_std[k] += dlogp * (z * z * inv_var[k] - 1.0);
            }
            if let Some(g) = bc_grad {
                mean_grad.iter_mut().zip(g).for_each(|(m, b)| *m += b);
            }
            agent.backward_mean(&cache, &mean_grad, ag)?;
            critic.net.backward(&value, &[cfg.value_coef * (v - ret) / n], cg)?;
        }
    }
    if let Some((ag, _)) = grads.as_mut() {
        ag.log_std.iter_mut().for_each(|g| *g -= cfg.entropy_coef);
    }
    out.ppo = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
    out.total = out.ppo + bc.map_or(0.0, |b| b.lambda * out.bc);
    Ok((out, grads))
}

fn clip_norm(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && max_norm > 0.0 {
        grads.iter_mut().for_each(|g| *g *= max_norm / norm);
    }
}

/// Clipped-surrogate PPO update over `cfg.epochs` shuffled passes.
///
/// Advantages are normalized first when `cfg.normalize_advantages` is set.
/// A non-finite loss aborts before any parameter of that minibatch changes.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    agent: &mut Agent,
    critic: &mut Critic,
    agent_opt: &mut AgentOptimizer,
    critic_opt: &mut OptimizerState,
    batch: &mut RolloutBatch,
    cfg: &PpoConfig,
    bc: Option<BcTerm>,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    if cfg.normalize_advantages {
        batch.normalize_advantages();
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    let mut sum = LossBreakdown::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_kl = 0.0;
        let mut epoch_mb = 0;
        for (mb, idx) in order.chunks(cfg.minibatch_size).enumerate() {
            let (loss, grads) = minibatch_loss(agent, critic, batch, idx, cfg, bc, true)?;
            let (mut ag, mut cg) = grads.expect("gradients requested");
            if !loss.total.is_finite() || !ag.is_finite() || cg.iter().any(|g| !g.is_finite()) {
                return Err(RlError::NonFiniteLoss { epoch, minibatch: mb });
            }
            let norm = ag.norm();
            if norm > cfg.max_grad_norm && cfg.max_grad_norm > 0.0 {
                ag.scale(cfg.max_grad_norm / norm);
            }
            clip_norm(&mut cg, cfg.max_grad_norm);
            agent_opt.apply(agent, &ag);
            critic_opt.apply(critic.net.params_mut(), &cg);
            for (acc, v) in [
                (&mut sum.policy, loss.policy),
                (&mut sum.value, loss.value),
                (&mut sum.entropy, loss.entropy),
                (&mut sum.bc, loss.bc),
                (&mut sum.ppo, loss.ppo),
                (&mut sum.total, loss.total),
                (&mut sum.approx_kl, loss.approx_kl),
                (&mut sum.clip_fraction, loss.clip_fraction),
            ] {
                *acc += v;
            }
            stats.minibatches += 1;
            epoch_kl += loss.approx_kl;
            epoch_mb += 1;
        }
        stats.epochs_run = epoch + 1;
        if epoch_kl / epoch_mb.max(1) as f64 > cfg.target_kl {
            break;
        }
    }
    let k = 1.0 / stats.minibatches.max(1) as f64;
    stats.loss = LossBreakdown {
        policy: sum.policy * k,
        value: sum.value * k,
        entropy: sum.entropy * k,
        bc: sum.bc * k,
        ppo: sum.ppo * k,
        total: sum.total * k,
        approx_kl: sum.approx_kl * k,
        clip_fraction: sum.clip_fraction * k,
    };
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::rl::{collect_rollouts, Controller, Env, EnvStep, Transition, VecEnv};
    use crate::sim::SimError;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent_and_critic(frame: usize, actions: usize, encoder: bool, seed: u64) -> (Agent, Critic) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<usize> = (0..frame.min(3)).collect();
        let privileged = if encoder { (3..frame).collect() } else { vec![] };
        let agent = Agent::new(frame, obs, privileged, &[6], 2, &[8, 8], actions, Activation::Tanh, &mut rng);
        let critic = Critic::new((0..frame).collect(), &[8], Activation::Tanh, &mut rng);
        (agent, critic)
    }

    fn random_batch(agent: &Agent, critic: &Critic, n: usize, seed: u64, with_teacher: bool) -> RolloutBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame_len = agent.frame_len();
        let mut b = RolloutBatch { num_envs: 1, horizon: n, ..Default::default() };
        for _ in 0..n {
            let nframe: Vec<f64> = (0..frame_len).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (action, lp) = agent.sample(&nframe, &mut rng).unwrap();
            b.transitions.push(Transition {
                frame: nframe.clone(),
                value: critic.value(&nframe).unwrap(),
                // Perturb old log-probs so some ratios leave the trust region.
                log_prob: lp + rng.random_range(-0.4..0.4),
                nframe,
                action,
                reward: 0.0,
                done: false,
                truncation_value: 0.0,
                teacher_action: with_teacher
                    .then(|| (0..agent.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect()),
            });
            b.advantages.push(rng.random_range(-2.0..2.0));
            b.returns.push(rng.random_range(-2.0..2.0));
        }
        b
    }

    fn flat(agent: &Agent, critic: &Critic) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(e) = &agent.encoder {
            v.extend_from_slice(e.params());
        }
        v.extend_from_slice(agent.policy.trunk.params());
        v.extend_from_slice(agent.policy.head.params());
        v.extend_from_slice(&agent.policy.log_std);
        v.extend_from_slice(critic.net.params());
        v
    }

    fn set_flat(agent: &mut Agent, critic: &mut Critic, v: &[f64]) {
        let mut k = 0;
        let mut take = |dst: &mut [f64]| {
            let n = dst.len();
            dst.copy_from_slice(&v[k..k + n]);
            k += n;
        };
        if let Some(e) = agent.encoder.as_mut() {
            take(e.params_mut());
        }
        take(agent.policy.trunk.params_mut());
        take(agent.policy.head.params_mut());
        take(&mut agent.policy.log_std);
        take(critic.net.params_mut());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut agent, mut critic) = agent_and_critic(6, 3, true, 1);
        agent.policy.log_std = vec![-0.3, 0.1, -0.6];
        let batch = random_batch(&agent, &critic, 12, 2, true);
        let cfg = PpoConfig { entropy_coef: 0.01, ..Default::default() };
        let bc = Some(BcTerm { lambda: 0.7, dims: 2 });
        let idx: Vec<usize> = (0..batch.len()).collect();
        let (_, grads) = minibatch_loss(&agent, &critic, &batch, &idx, &cfg, bc, true).unwrap();
        let (ag, cg) = grads.unwrap();
        let mut analytic = Vec::new();
        for part in [&ag.encoder, &ag.trunk, &ag.head, &ag.log_std, &cg] {
            analytic.extend_from_slice(part);
        }
        let base = flat(&agent, &critic);
        assert_eq!(base.len(), analytic.len());
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut loss_at = |x: f64| {
                let mut p = base.clone();
                p[i] = x;
                set_flat(&mut agent, &mut critic, &p);
                minibatch_loss(&agent, &critic, &batch, &idx, &cfg, bc, false).unwrap().0.total
            };
            let numeric = (loss_at(base[i] + h) - loss_at(base[i] - h)) / (2.0 * h);
            let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn total_is_ppo_plus_weighted_bc() {
        let (agent, critic) = agent_and_critic(6, 3, true, 3);
        let batch = random_batch(&agent, &critic, 20, 4, true);
        let idx: Vec<usize> = (0..20).collect();
        let cfg = PpoConfig::default();
        let lambda = 0.37;
        let (with, _) =
            minibatch_loss(&agent, &critic, &batch, &idx, &cfg, Some(BcTerm { lambda, dims: 2 }), false).unwrap();
        let (without, _) = minibatch_loss(&agent, &critic, &batch, &idx, &cfg, None, false).unwrap();
        assert!((with.total - lambda * with.bc - without.total).abs() < 1e-10);
        assert!(with.bc > 0.0);
    }

    #[test]
    fn bc_only_touches_teacher_dims() {
        let (agent, critic) = agent_and_critic(6, 3, false, 5);
        let mut batch = random_batch(&agent, &critic, 10, 6, true);
        let idx: Vec<usize> = (0..10).collect();
        let cfg = PpoConfig::default();
        let (base, _) = minibatch_loss(&agent, &critic, &batch, &idx, &cfg, Some(BcTerm { lambda: 1.0, dims: 2 }), false)
            .unwrap();
        for t in batch.transitions.iter_mut() {
            t.teacher_action.as_mut().unwrap()[2] += 5.0;
        }
        let (moved, _) = minibatch_loss(&agent, &critic, &batch, &idx, &cfg, Some(BcTerm { lambda: 1.0, dims: 2 }), false)
            .unwrap();
        assert_eq!(base.bc, moved.bc);
    }

    #[test]
    fn zero_advantage_leaves_policy_mean_unchanged() {
        let (mut agent, mut critic) = agent_and_critic(4, 2, false, 7);
        let mut batch = random_batch(&agent, &critic, 32, 8, false);
        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let before = agent.clone();
        let cfg = PpoConfig { entropy_coef: 0.0, normalize_advantages: false, minibatch_size: 8, ..Default::default() };
        let mut ao = AgentOptimizer::new(&agent, 1e-2);
        let mut co = OptimizerState::new(critic.net.num_params(), 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ppo_update(&mut agent, &mut critic, &mut ao, &mut co, &mut batch, &cfg, None, &mut rng).unwrap();
        assert_eq!(agent.policy, before.policy);
    }

    #[test]
    fn clipped_samples_have_no_policy_gradient() {
        let (agent, critic) = agent_and_critic(4, 1, false, 9);
        let mut batch = random_batch(&agent, &critic, 1, 10, false);
        let cfg = PpoConfig { entropy_coef: 0.0, ..Default::default() };
        let tr = &batch.transitions[0];
        let logp = agent.policy.log_prob(&agent.policy_input(&tr.nframe).unwrap(), &tr.action).unwrap();
        // ratio = e^0.5 > 1.2 with a positive advantage: the surrogate is flat.
        batch.transitions[0].log_prob = logp - 0.5;
        batch.advantages[0] = 1.0;
        let (loss, g) = minibatch_loss(&agent, &critic, &batch, &[0], &cfg, None, true).unwrap();
        let (ag, _) = g.unwrap();
        assert!(ag.norm() == 0.0);
        assert!((loss.policy + 1.2).abs() < 1e-12);
        assert_eq!(loss.clip_fraction, 1.0);
        // Same ratio with a negative advantage is not clipped.
        batch.advantages[0] = -1.0;
        let (_, g) = minibatch_loss(&agent, &critic, &batch, &[0], &cfg, None, true).unwrap();
        assert!(g.unwrap().0.norm() > 0.0);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (mut agent, mut critic) = agent_and_critic(4, 1, false, 11);
        let mut batch = random_batch(&agent, &critic, 8, 12, false);
        batch.returns[3] = f64::NAN;
        let cfg = PpoConfig { normalize_advantages: false, minibatch_size: 8, ..Default::default() };
        let mut ao = AgentOptimizer::new(&agent, 1e-3);
        let mut co = OptimizerState::new(critic.net.num_params(), 1e-3);
        let before = agent.clone();
        let err = ppo_update(&mut agent, &mut critic, &mut ao, &mut co, &mut batch, &cfg, None, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(err, Err(RlError::NonFiniteLoss { epoch: 0, minibatch: 0 })));
        assert_eq!(agent, before);
    }

    /// One-step bandit: reward 1 for a positive action, 0 otherwise.
    struct Bandit;

    impl Env for Bandit {
        fn frame_len(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn reset(&mut self) -> Vec<f64> {
            vec![1.0]
        }
        fn step(&mut self, action: &[f64]) -> Result<EnvStep, SimError> {
            let reward = if action[0] > 0.0 { 1.0 } else { 0.0 };
            Ok(EnvStep { frame: vec![1.0], reward, terminated: true, truncated: false })
        }
    }

    fn train<E: Env>(
        envs: Vec<E>,
        agent: &mut Agent,
        critic: &mut Critic,
        cfg: &PpoConfig,
        updates: usize,
        seed: u64,
    ) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut venv = VecEnv::new(envs);
        let mut ao = AgentOptimizer::new(agent, cfg.learning_rate);
        let mut co = OptimizerState::new(critic.net.num_params(), cfg.learning_rate);
        let mut curve = Vec::new();
        for _ in 0..updates {
            let mut batch = collect_rollouts(agent, critic, &mut venv, cfg.horizon, None, &mut rng).unwrap();
            batch.compute_advantages(cfg.gamma, cfg.gae_lambda).unwrap();
            curve.push(batch.mean_reward());
            ppo_update(agent, critic, &mut ao, &mut co, &mut batch, cfg, None, &mut rng).unwrap();
        }
        curve
    }

    #[test]
    fn bandit_prefers_the_rewarding_arm() {
        let cfg = PpoConfig {
            horizon: 16,
            num_envs: 8,
            minibatch_size: 32,
            learning_rate: 1e-2,
            entropy_coef: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut agent = Agent::new(1, vec![0], vec![], &[], 0, &[8], 1, Activation::Tanh, &mut rng);
        let mut critic = Critic::new(vec![0], &[8], Activation::Tanh, &mut rng);
        train((0..8).map(|_| Bandit).collect(), &mut agent, &mut critic, &cfg, 40, 14);
        let mu = agent.mean_action(&[1.0]).unwrap()[0];
        let sigma = agent.policy.log_std[0].exp();
        let p = 0.5 * (1.0 + erf(mu / (sigma * 2f64.sqrt())));
        assert!(p > 0.95, "P(right arm) = {p}");
    }

    fn erf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26, |error| < 1.5e-7.
        let t = 1.0 / (1.0 + 0.3275911 * x.abs());
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t + 0.254829592)
                * t
                * (-x * x).exp();
        y.copysign(x)
    }

    /// A point mass whose velocity must track a target drawn per episode.
    struct Tracker {
        rng: ChaCha8Rng,
        v: f64,
        target: f64,
        t: usize,
    }

    impl Env for Tracker {
        fn frame_len(&self) -> usize {
            2
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn reset(&mut self) -> Vec<f64> {
            self.v = 0.0;
            self.t = 0;
            self.target = self.rng.random_range(-1.0..1.0);
            vec![self.v, self.target]
        }
        fn step(&mut self, action: &[f64]) -> Result<EnvStep, SimError> {
            self.v += 0.2 * action[0].clamp(-1.0, 1.0);
            self.t += 1;
            let reward = (-4.0 * (self.v - self.target).powi(2)).exp();
            Ok(EnvStep { frame: vec![self.v, self.target], reward, terminated: false, truncated: self.t >= 25 })
        }
    }

    #[test]
    fn learns_velocity_tracking_in_most_seeds() {
        let cfg = PpoConfig {
            horizon: 50,
            num_envs: 8,
            minibatch_size: 100,
            learning_rate: 3e-3,
            gamma: 0.95,
            ..Default::default()
        };
        let mut improved = 0;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut agent = Agent::new(2, vec![0, 1], vec![], &[], 0, &[16], 1, Activation::Tanh, &mut rng);
            let mut critic = Critic::new(vec![0, 1], &[16], Activation::Tanh, &mut rng);
            let envs = (0..8)
                .map(|i| Tracker { rng: ChaCha8Rng::seed_from_u64(seed * 100 + i), v: 0.0, target: 0.0, t: 0 })
                .collect();
            let curve = train(envs, &mut agent, &mut critic, &cfg, 60, seed);
            let first = curve[..5].iter().sum::<f64>() / 5.0;
            let last = curve[curve.len() - 5..].iter().sum::<f64>() / 5.0;
            if last > first + 0.15 {
                improved += 1;
            }
        }
        assert!(improved >= 4, "{improved}/5 seeds improved");
    }

    #[test]
    fn rollouts_are_deterministic_and_carry_teacher_actions() {
        let run = || {
            let (mut agent, critic) = agent_and_critic(2, 1, false, 21);
            let teacher = agent.clone();
            let envs = (0..3)
                .map(|i| Tracker { rng: ChaCha8Rng::seed_from_u64(i), v: 0.0, target: 0.0, t: 0 })
                .collect();
            let mut venv = VecEnv::new(envs);
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            collect_rollouts(&mut agent, &critic, &mut venv, 30, Some(&teacher as &dyn Controller), &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), 90);
        assert_eq!(a.transitions, b.transitions);
        // Episodes of 25 steps: one boundary per env within 30 steps.
        assert_eq!(a.episode_lengths, vec![25, 25, 25]);
        let tr = &a.transitions[0];
        assert_eq!(tr.teacher_action.as_ref().unwrap().len(), 1);
        assert!(a.transitions.iter().filter(|t| t.done).all(|t| t.truncation_value != 0.0));
    }
}
