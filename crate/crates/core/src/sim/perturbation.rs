use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// A square force pulse in the scenario plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    /// Configured magnitude; multiplied by `ScenarioConfig::force_scale`.
    pub force_magnitude: f64,
    /// Unit vector in the scenario plane.
    pub direction: [f64; 2],
    /// Distance of the application point from the base along the in-plane
    /// perpendicular of `direction`, m.
    pub offset_from_base: f64,
    pub start_time: f64,
    pub duration: f64,
}

impl PerturbationEvent {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start_time && t < self.start_time + self.duration
    }

    /// Force vector in newtons-before-scaling.
    pub fn force(&self) -> [f64; 2] {
        [self.force_magnitude * self.direction[0], self.force_magnitude * self.direction[1]]
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<(), SimError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(SimError::Param(format!("{name} range ({lo}, {hi}) is not ordered")));
    }
    Ok(())
}

/// Uniform magnitude and offset, one of the two in-plane axes with a random
/// sign, and a start time uniform over `[0, episode_length - duration]`.
pub fn sample_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    force_range: (f64, f64),
    offset_range: (f64, f64),
    duration: f64,
    episode_length: f64,
) -> Result<PerturbationEvent, SimError> {
    check_range("force", force_range)?;
    check_range("offset", offset_range)?;
    if force_range.0 < 0.0 {
        return Err(SimError::Param("force magnitudes must be nonnegative".into()));
    }
    if !(duration > 0.0) {
        return Err(SimError::Param(format!("push duration must be positive, got {duration}")));
    }
    let force_magnitude = uniform(rng, force_range);
    let offset_from_base = uniform(rng, offset_range);
    let axis = rng.random_range(0..2usize);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut direction = [0.0; 2];
    direction[axis] = sign;
    let start_time = uniform(rng, (0.0, (episode_length - duration).max(0.0)));
    Ok(PerturbationEvent { force_magnitude, direction, offset_from_base, start_time, duration })
}
