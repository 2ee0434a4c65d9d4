use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::nn::NnError;
use crate::rl::{Agent, Controller, Critic, Env, EnvStep};
use crate::seed::rng_for;
use crate::sim::{ArmMode, SimError};
use crate::staged::{
    grow_agent, run_pipeline, train_agent, train_stage, validate_stages, ActionLayout, CurveRow, Imitation, StageEnv,
    StageSpec, TrainSetup, FRAME_LEN,
};

/// Training methods compared against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The three-stage pipeline; the final stage's policy.
    Staged,
    /// PPO from scratch on the final task with the whole budget.
    Ppo,
    /// One PPO policy with the final layout trained on a locked arm without
    /// pushes, then with pushes, then with the actuated arm.
    PpoCurriculum,
    /// Stages 1 and 2 of the pipeline, then the stage-2 policy grown to the
    /// final layout and fine-tuned with plain PPO.
    FineTuned,
    /// Frozen stage-2 legs plus an arm-only policy trained separately.
    Decoupled,
    /// The stage-1 policy as the only teacher for a policy trained directly
    /// on the final task.
    OneStage,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Staged, Method::Ppo, Method::PpoCurriculum, Method::FineTuned, Method::Decoupled, Method::OneStage];

    pub fn name(self) -> &'static str {
        match self {
            Method::Staged => "staged",
            Method::Ppo => "ppo",
            Method::PpoCurriculum => "ppo_curriculum",
            Method::FineTuned => "finetuned",
            Method::Decoupled => "decoupled",
            Method::OneStage => "one_stage",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EvalError::Config(format!("unknown method `{s}`")))
    }
}

/// A trained controller producing canonical actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedPolicy {
    Single { agent: Agent },
    /// Leg actions from `legs`, arm torque from `arm`, concatenated.
    Composite { legs: Agent, arm: Agent },
}

impl Controller for TrainedPolicy {
    fn action_dim(&self) -> usize {
        match self {
            TrainedPolicy::Single { agent } => agent.action_dim(),
            TrainedPolicy::Composite { legs, arm } => legs.action_dim() + arm.action_dim(),
        }
    }

    fn mean_action(&self, frame: &[f64]) -> Result<Vec<f64>, NnError> {
        match self {
            TrainedPolicy::Single { agent } => agent.mean_action(frame),
            TrainedPolicy::Composite { legs, arm } => {
                let mut a = legs.mean_action(frame)?;
                a.extend(arm.mean_action(frame)?);
                Ok(a)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub policy: TrainedPolicy,
    /// Environment steps spent in training, summed over every phase.
    pub env_steps: usize,
    /// The stage-2 (locked-arm) policy when the method produced one.
    pub locked_policy: Option<Agent>,
    /// Training curves of every phase in order; `env_steps` keeps counting
    /// across phases.
    pub curves: Vec<CurveRow>,
}

/// Stage environment whose leg actions come from a frozen controller; the
/// trained agent supplies only the remaining (arm) action.
pub struct FixedLegs<C: Controller> {
    pub env: StageEnv,
    pub legs: C,
    frame: Vec<f64>,
}

impl<C: Controller> FixedLegs<C> {
    pub fn new(env: StageEnv, legs: C) -> Self {
        Self { env, legs, frame: vec![0.0; FRAME_LEN] }
    }
}

impl<C: Controller> Env for FixedLegs<C> {
    fn frame_len(&self) -> usize {
        FRAME_LEN
    }

    fn action_dim(&self) -> usize {
        self.env.action_dim - self.legs.action_dim()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.frame = self.env.reset();
        self.frame.clone()
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SimError> {
        let mut full = self.legs.mean_action(&self.frame).map_err(|e| SimError::Param(e.to_string()))?;
        full.extend_from_slice(action);
        let step = self.env.step(&full)?;
        self.frame = step.frame.clone();
        Ok(step)
    }
}

fn steps(curves: &[CurveRow]) -> usize {
    curves.last().map_or(0, |c| c.env_steps)
}

/// Concatenates phase curves, renumbering updates and accumulating steps.
fn chain<'a>(phases: impl IntoIterator<Item = &'a [CurveRow]>) -> Vec<CurveRow> {
    let mut out: Vec<CurveRow> = Vec::new();
    for phase in phases {
        let (u0, s0) = out.last().map_or((0, 0), |r| (r.update + 1, r.env_steps));
        out.extend(phase.iter().map(|r| CurveRow { update: u0 + r.update, env_steps: s0 + r.env_steps, ..r.clone() }));
    }
    out
}

fn frozen(mut a: Agent) -> Agent {
    a.norm.frozen = true;
    a
}

fn check_budget(stages: &[StageSpec]) -> Result<[usize; 3], EvalError> {
    validate_stages(stages)?;
    if stages.len() != 3 {
        return Err(EvalError::Config("baselines need a three-stage configuration".into()));
    }
    Ok([stages[0].updates, stages[1].updates, stages[2].updates])
}

/// Trains `method` with the same total environment steps as the pipeline.
pub fn run_method(method: Method, setup: &TrainSetup, stages: &[StageSpec], seed: u64) -> Result<MethodOutcome, EvalError> {
    let [u1, u2, u3] = check_budget(stages)?;
    let last = &stages[2];
    let label = method.name();
    match method {
        Method::Staged => {
            let mut out = run_pipeline(setup, stages, seed, None)?;
            let env_steps = out.iter().map(|o| steps(&o.curves)).sum();
            let curves = chain(out.iter().map(|o| o.curves.as_slice()));
            let pi3 = out.pop().expect("three stages").checkpoint.agent;
            let pi2 = out.pop().expect("three stages").checkpoint.agent;
            Ok(MethodOutcome {
                policy: TrainedPolicy::Single { agent: pi3 },
                env_steps,
                locked_policy: Some(pi2),
                curves,
            })
        }
        Method::Ppo => {
            let spec = StageSpec { anneal: None, updates: u1 + u2 + u3, ..last.clone() };
            let out = train_stage(setup, 1, &spec, None, None, seed ^ 0x5050)?;
            Ok(MethodOutcome {
                env_steps: steps(&out.curves),
                policy: TrainedPolicy::Single { agent: out.checkpoint.agent },
                locked_policy: None,
                curves: out.curves,
            })
        }
        Method::PpoCurriculum => {
            let (mut agent, mut critic) = setup.new_agent(last, seed, label);
            let mut rng = rng_for(seed, &format!("{label}/ppo"));
            let mut env_steps = 0;
            let mut phases = Vec::new();
            for (k, (stage, updates)) in stages.iter().zip([u1, u2, u3]).enumerate() {
                // Phases 1-2 hold the arm locked; phase 1 also drops pushes.
                let arm_mode = if k < 2 { ArmMode::Locked } else { ArmMode::Actuated };
                let perturbation = if k == 0 { None } else { last.perturbation.clone() };
                let phase = StageSpec {
                    observation: last.observation.clone(),
                    action: ActionLayout::LegsArm,
                    arm_mode,
                    perturbation,
                    anneal: None,
                    updates,
                    ..stage.clone()
                };
                let envs = setup.envs(&phase, seed, &format!("{label}/phase{k}"));
                let curves = train_agent(envs, &mut agent, &mut critic, &setup.ppo, updates, None, &mut rng)?;
                env_steps += steps(&curves);
                phases.push(curves);
            }
            Ok(MethodOutcome {
                policy: TrainedPolicy::Single { agent: frozen(agent) },
                env_steps,
                locked_policy: None,
                curves: chain(phases.iter().map(Vec::as_slice)),
            })
        }
        Method::FineTuned => {
            let out = run_pipeline(setup, &stages[..2], seed, None)?;
            let pi2 = out[1].checkpoint.agent.clone();
            let mut rng = rng_for(seed, &format!("{label}/grow"));
            let grown = grow_agent(&pi2, last, &setup.network, &mut rng);
            let (_, critic) = setup.new_agent(last, seed, label);
            let spec = StageSpec { anneal: None, ..last.clone() };
            let out3 = train_stage(setup, 1, &spec, None, Some((grown, critic)), seed ^ 0xf17e)?;
            Ok(MethodOutcome {
                env_steps: out.iter().map(|o| steps(&o.curves)).sum::<usize>() + steps(&out3.curves),
                curves: chain(out.iter().map(|o| o.curves.as_slice()).chain([out3.curves.as_slice()])),
                policy: TrainedPolicy::Single { agent: out3.checkpoint.agent },
                locked_policy: Some(pi2),
            })
        }
        Method::Decoupled => {
            let out = run_pipeline(setup, &stages[..2], seed, None)?;
            let legs = frozen(out[1].checkpoint.agent.clone());
            let mut rng = rng_for(seed, &format!("{label}/arm"));
            let n = &setup.network;
            let mut arm = Agent::new(
                FRAME_LEN,
                last.obs_index(),
                last.privileged_index(),
                &n.encoder_hidden,
                n.extrinsic_dim,
                &n.hidden,
                1,
                n.activation,
                &mut rng,
            );
            let mut critic = Critic::new(last.critic_index(), &n.critic_hidden, n.activation, &mut rng);
            let envs = setup
                .envs(last, seed, &format!("{label}/arm"))
                .into_iter()
                .map(|e| FixedLegs::new(e, legs.clone()))
                .collect();
            let curves = train_agent(envs, &mut arm, &mut critic, &setup.ppo, u3, None, &mut rng)?;
            Ok(MethodOutcome {
                policy: TrainedPolicy::Composite { legs: legs.clone(), arm: frozen(arm) },
                env_steps: out.iter().map(|o| steps(&o.curves)).sum::<usize>() + steps(&curves),
                locked_policy: Some(legs),
                curves: chain(out.iter().map(|o| o.curves.as_slice()).chain([curves.as_slice()])),
            })
        }
        Method::OneStage => {
            let out = run_pipeline(setup, &stages[..1], seed, None)?;
            let pi1 = frozen(out[0].checkpoint.agent.clone());
            let spec = StageSpec { updates: u2 + u3, ..last.clone() };
            let schedule = spec.anneal.clone().unwrap_or_default();
            let (mut agent, mut critic) = setup.new_agent(&spec, seed, label);
            let mut rng = rng_for(seed, &format!("{label}/ppo"));
            let envs = setup.envs(&spec, seed, label);
            let imitation = Imitation { teacher: &pi1, schedule: &schedule };
            let curves = train_agent(envs, &mut agent, &mut critic, &setup.ppo, spec.updates, Some(imitation), &mut rng)?;
            Ok(MethodOutcome {
                policy: TrainedPolicy::Single { agent: frozen(agent) },
                env_steps: steps(&out[0].curves) + steps(&curves),
                locked_policy: None,
                curves: chain([out[0].curves.as_slice(), curves.as_slice()]),
            })
        }
    }
}
