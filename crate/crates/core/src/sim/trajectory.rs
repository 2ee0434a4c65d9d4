use std::io::Write;

use serde::{Deserialize, Serialize};

/// One CSV row of an exported trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub base_x: f64,
    pub base_y: f64,
    pub base_angle: f64,
    pub base_vx: f64,
    pub base_vy: f64,
    pub base_ang_velocity: f64,
    pub arm_angle: f64,
    pub arm_ang_velocity: f64,
    pub arm_torque: f64,
    pub leg_force: f64,
    pub leg_torque: f64,
    pub perturbation_active: bool,
}

pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
