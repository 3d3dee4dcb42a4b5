use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GroundTruth, SimError};
use crate::geometry::Pose2D;

// Keeps the attack stream independent of the scenario's own draws.
const ATTACK_STREAM: u64 = 0xA77A_C4ED_0000_0001;

/// Poses each agent broadcasts about itself, possibly falsified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertisedPoses {
    /// Indexed [agent][frame].
    pub poses: Vec<Vec<Pose2D>>,
    pub attacked: Vec<usize>,
}

/// Displaces every advertised pose of the `attacked` agents by exactly
/// `magnitude` meters in a random direction. `truth` itself is untouched.
pub fn inject_pose_attack(
    truth: &GroundTruth,
    magnitude: f64,
    attacked: &[usize],
    seed: u64,
) -> Result<AdvertisedPoses, SimError> {
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(SimError::InvalidAttack(format!(
            "magnitude must be positive, got {magnitude}"
        )));
    }
    if let Some(&bad) = attacked.iter().find(|&&a| a >= truth.agents.len()) {
        return Err(SimError::InvalidAttack(format!("no agent with index {bad}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ATTACK_STREAM);
    let poses = truth
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if !attacked.contains(&i) {
                return a.poses.clone();
            }
            a.poses
                .iter()
                .map(|p| {
                    let dir = rng.random_range(-PI..PI);
                    Pose2D::new(p.x + magnitude * dir.cos(), p.y + magnitude * dir.sin(), p.theta)
                })
                .collect()
        })
        .collect();
    Ok(AdvertisedPoses {
        poses,
        attacked: attacked.to_vec(),
    })
}
