//! Synthetic multi-agent scenes with full ground truth.
//!
//! Objects move with piecewise-constant velocities inside a square world.
//! Agents drive at constant velocity and finish the scenario close to each
//! other, so their fields of view overlap at the end of every run. Each agent
//! keeps its own clock, offset from the global one; every message between two
//! agents carries a latency that is a whole number of sample intervals.

mod attack;
pub mod io;

pub use attack::{inject_pose_attack, AdvertisedPoses};

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, relative_pose, Point2, Pose2D, RigidTransform2D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("invalid attack: {0}")]
    InvalidAttack(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn indexed(i: usize) -> Self {
        AgentId(format!("agent{i}"))
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

/// One detected box, in the detecting agent's ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedBox {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Ground-truth object id; `None` for false positives and for frames
    /// that did not come from a ground-truth export.
    pub truth_id: Option<u32>,
}

impl DetectedBox {
    pub fn center(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub agent: AgentId,
    /// Milliseconds on the detecting agent's own clock.
    pub local_time: i64,
    pub boxes: Vec<DetectedBox>,
}

impl DetectionFrame {
    pub fn new(agent: AgentId, local_time: i64, boxes: Vec<DetectedBox>) -> Result<Self, SimError> {
        if let Some(i) = boxes
            .iter()
            .position(|b| !(b.x.is_finite() && b.y.is_finite() && b.yaw.is_finite()))
        {
            return Err(SimError::InvalidFrame(format!("box {i} has a non-finite field")));
        }
        Ok(Self {
            agent,
            local_time,
            boxes,
        })
    }

    pub fn truth_ids(&self) -> HashSet<u32> {
        self.boxes.iter().filter_map(|b| b.truth_id).collect()
    }

    /// Same frame with every truth id removed, as an alignment consumer sees it.
    pub fn without_truth(&self) -> DetectionFrame {
        DetectionFrame {
            agent: self.agent.clone(),
            local_time: self.local_time,
            boxes: self
                .boxes
                .iter()
                .map(|b| DetectedBox { truth_id: None, ..*b })
                .collect(),
        }
    }
}

/// Number of truth objects seen in both frames.
pub fn shared_object_count(a: &DetectionFrame, b: &DetectionFrame) -> usize {
    a.truth_ids().intersection(&b.truth_ids()).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_agents: usize,
    pub num_objects: usize,
    /// Side length of the square world, meters.
    pub world_extent: f64,
    /// (min, max) object speed, m/s.
    pub object_speed_range: (f64, f64),
    pub sample_interval_tau: i64,
    /// Number of frames.
    pub duration: usize,
    pub fov_radius: f64,
    pub detection_jitter_sigma: f64,
    pub miss_rate: f64,
    pub false_positive_rate: f64,
    pub clock_offset_range: (i64, i64),
    pub latency_range: (i64, i64),
    pub pose_attack: bool,
    pub pose_attack_magnitude: f64,
    /// Per-step odometry noise: translation sigma in meters; rotation uses a tenth of it in radians.
    pub odometry_drift_sigma: f64,
    /// Probability per frame that an object picks a new velocity.
    pub velocity_change_prob: f64,
    /// Final-frame distance of every agent from agent 0 is drawn up to this; defaults to half the view radius.
    pub max_agent_separation: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_agents: 2,
            num_objects: 60,
            world_extent: 160.0,
            object_speed_range: (2.0, 12.0),
            sample_interval_tau: 100,
            duration: 16,
            fov_radius: 35.0,
            detection_jitter_sigma: 0.1,
            miss_rate: 0.05,
            false_positive_rate: 0.5,
            clock_offset_range: (-200, 200),
            latency_range: (0, 500),
            pose_attack: false,
            pose_attack_magnitude: 10.0,
            odometry_drift_sigma: 0.0,
            velocity_change_prob: 0.05,
            max_agent_separation: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_owned()));
        if self.num_agents < 2 {
            return bad("num_agents must be at least 2");
        }
        if !(self.sample_interval_tau > 0 && self.sample_interval_tau <= 100) {
            return bad("sample_interval_tau must be in (0, 100] ms");
        }
        if self.duration == 0 {
            return bad("duration must be at least one frame");
        }
        if self.max_agent_separation.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            return bad("max_agent_separation must be nonnegative");
        }
        if !(self.world_extent > 0.0 && self.world_extent.is_finite()) {
            return bad("world_extent must be positive");
        }
        if !(self.fov_radius > 0.0 && self.fov_radius.is_finite()) {
            return bad("fov_radius must be positive");
        }
        let (smin, smax) = self.object_speed_range;
        if !(smin >= 0.0 && smin <= smax && smax.is_finite()) {
            return bad("object_speed_range must satisfy 0 <= min <= max");
        }
        if !(self.detection_jitter_sigma >= 0.0 && self.detection_jitter_sigma.is_finite()) {
            return bad("detection_jitter_sigma must be nonnegative");
        }
        if !(self.odometry_drift_sigma >= 0.0 && self.odometry_drift_sigma.is_finite()) {
            return bad("odometry_drift_sigma must be nonnegative");
        }
        for (name, r) in [
            ("miss_rate", self.miss_rate),
            ("false_positive_rate", self.false_positive_rate),
            ("velocity_change_prob", self.velocity_change_prob),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SimError::InvalidConfig(format!("{name} must be in [0, 1]")));
            }
        }
        if self.clock_offset_range.0 > self.clock_offset_range.1 {
            return bad("clock_offset_range must have min <= max");
        }
        let (lmin, lmax) = self.latency_range;
        if lmin < 0 || lmin > lmax {
            return bad("latency_range must satisfy 0 <= min <= max");
        }
        if self.pose_attack && !(self.pose_attack_magnitude > 0.0) {
            return bad("pose_attack_magnitude must be positive when pose_attack is set");
        }
        Ok(())
    }

    pub fn tau_seconds(&self) -> f64 {
        self.sample_interval_tau as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTruth {
    pub agent: AgentId,
    pub clock_offset_ms: i64,
    /// Global pose at every frame.
    pub poses: Vec<Pose2D>,
}

/// Truth for one collaborator-to-ego message delivered at an ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageTruth {
    pub ego: usize,
    pub collaborator: usize,
    /// Ego frame at which the message is processed.
    pub ego_frame: usize,
    /// Collaborator frame that was captured and sent.
    pub capture_frame: usize,
    pub ego_local_time: i64,
    /// Capture timestamp on the collaborator's clock.
    pub capture_local_time: i64,
    pub true_latency_ms: i64,
    /// Latency the ego computes from the (skewed) timestamp.
    pub advertised_latency_ms: i64,
    /// true_latency - advertised_latency.
    pub clock_deviation_ms: i64,
    /// Maps the collaborator's frame at capture into the ego's frame at `ego_frame`.
    pub relative_pose: RigidTransform2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tau_ms: i64,
    pub agents: Vec<AgentTruth>,
    /// Object world positions, indexed [frame][object id].
    pub object_positions: Vec<Vec<Point2>>,
    pub messages: Vec<MessageTruth>,
}

impl GroundTruth {
    pub fn relative_pose(&self, ego: usize, ego_frame: usize, other: usize, other_frame: usize) -> RigidTransform2D {
        relative_pose(
            &self.agents[ego].poses[ego_frame],
            &self.agents[other].poses[other_frame],
        )
    }

    pub fn message(&self, ego: usize, collaborator: usize, ego_frame: usize) -> Option<&MessageTruth> {
        self.messages
            .iter()
            .find(|m| m.ego == ego && m.collaborator == collaborator && m.ego_frame == ego_frame)
    }

    /// Truth for a message captured by `collaborator` at `capture_frame` and
    /// received by `ego` at `ego_frame` (`capture_frame <= ego_frame`).
    pub fn message_between(
        &self,
        ego: usize,
        ego_frame: usize,
        collaborator: usize,
        capture_frame: usize,
    ) -> MessageTruth {
        assert!(capture_frame <= ego_frame);
        let tau = self.tau_ms;
        let ego_local_time = ego_frame as i64 * tau + self.agents[ego].clock_offset_ms;
        let capture_local_time = capture_frame as i64 * tau + self.agents[collaborator].clock_offset_ms;
        let true_latency_ms = (ego_frame - capture_frame) as i64 * tau;
        let advertised_latency_ms = ego_local_time - capture_local_time;
        MessageTruth {
            ego,
            collaborator,
            ego_frame,
            capture_frame,
            ego_local_time,
            capture_local_time,
            true_latency_ms,
            advertised_latency_ms,
            clock_deviation_ms: true_latency_ms - advertised_latency_ms,
            relative_pose: self.relative_pose(ego, ego_frame, collaborator, capture_frame),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometryTrack {
    pub agent: AgentId,
    /// `increments[k]` maps frame k-1 coordinates into frame k; `increments[0]` is identity.
    pub increments: Vec<RigidTransform2D>,
}

impl OdometryTrack {
    /// Composed transform taking frame `from` coordinates into frame `to` (`from <= to`).
    pub fn between(&self, from: usize, to: usize) -> RigidTransform2D {
        assert!(from <= to && to < self.increments.len());
        (from + 1..=to).fold(RigidTransform2D::identity(), |acc, k| self.increments[k].compose(&acc))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Detection frames per agent, in frame order.
    pub streams: Vec<Vec<DetectionFrame>>,
    pub odometry: Vec<OdometryTrack>,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn agent_id(&self, i: usize) -> AgentId {
        self.truth.agents[i].agent.clone()
    }

    pub fn all_frames(&self) -> Vec<DetectionFrame> {
        self.streams.iter().flatten().cloned().collect()
    }
}

struct MovingObject {
    pos: Point2,
    heading: f64,
    speed: f64,
}

fn draw_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn draw_int_range(rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)) -> i64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn reflect(v: f64, half: f64) -> (f64, bool) {
    if v > half {
        (2.0 * half - v, true)
    } else if v < -half {
        (-2.0 * half - v, true)
    } else {
        (v, false)
    }
}

fn simulate_objects(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> (Vec<Vec<Point2>>, Vec<Vec<f64>>) {
    let half = cfg.world_extent / 2.0;
    let dt = cfg.tau_seconds();
    let mut objects: Vec<MovingObject> = (0..cfg.num_objects)
        .map(|_| MovingObject {
            pos: Point2::new(rng.random_range(-half..half), rng.random_range(-half..half)),
            heading: rng.random_range(-PI..PI),
            speed: draw_range(rng, cfg.object_speed_range),
        })
        .collect();
    let mut positions = Vec::with_capacity(cfg.duration);
    let mut headings = Vec::with_capacity(cfg.duration);
    for frame in 0..cfg.duration {
        if frame > 0 {
            for o in objects.iter_mut() {
                // Velocity changes only happen on frame boundaries.
                if rng.random::<f64>() < cfg.velocity_change_prob {
                    o.heading = rng.random_range(-PI..PI);
                    o.speed = draw_range(rng, cfg.object_speed_range);
                }
                let (s, c) = o.heading.sin_cos();
                let (x, fx) = reflect(o.pos.x + o.speed * dt * c, half);
                let (y, fy) = reflect(o.pos.y + o.speed * dt * s, half);
                o.pos = Point2::new(x, y);
                let (mut vx, mut vy) = (c, s);
                if fx {
                    vx = -vx;
                }
                if fy {
                    vy = -vy;
                }
                o.heading = vy.atan2(vx);
            }
        }
        positions.push(objects.iter().map(|o| o.pos).collect());
        headings.push(objects.iter().map(|o| o.heading).collect());
    }
    (positions, headings)
}

fn simulate_agents(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<Pose2D>> {
    let dt = cfg.tau_seconds();
    let last = cfg.duration - 1;
    let center_spread = cfg.world_extent / 8.0;
    let anchor = Point2::new(
        rng.random_range(-center_spread..=center_spread),
        rng.random_range(-center_spread..=center_spread),
    );
    let road_heading = rng.random_range(-PI..PI);
    (0..cfg.num_agents)
        .map(|i| {
            let final_pos = if i == 0 {
                anchor
            } else {
                let r = rng.random_range(0.0..=cfg.max_agent_separation.unwrap_or(cfg.fov_radius / 2.0));
                let a = rng.random_range(-PI..PI);
                Point2::new(anchor.x + r * a.cos(), anchor.y + r * a.sin())
            };
            let oncoming = rng.random_bool(0.5);
            let heading =
                normalize_angle(road_heading + if oncoming { PI } else { 0.0 } + rng.random_range(-0.3..=0.3));
            let speed = draw_range(rng, cfg.object_speed_range);
            let (s, c) = heading.sin_cos();
            (0..cfg.duration)
                .map(|k| {
                    let back = (last - k) as f64 * dt * speed;
                    Pose2D::new(final_pos.x - back * c, final_pos.y - back * s, heading)
                })
                .collect()
        })
        .collect()
}

/// Generates a full scenario. Deterministic in `cfg` (including its seed).
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (object_positions, object_headings) = simulate_objects(cfg, &mut rng);
    let agent_poses = simulate_agents(cfg, &mut rng);
    let offsets: Vec<i64> = (0..cfg.num_agents)
        .map(|_| draw_int_range(&mut rng, cfg.clock_offset_range))
        .collect();

    let jitter =
        Normal::new(0.0, cfg.detection_jitter_sigma.max(0.0)).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let yaw_noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let fp_count =
        (cfg.false_positive_rate > 0.0).then(|| Poisson::new(cfg.false_positive_rate).expect("positive rate"));
    let tau = cfg.sample_interval_tau;

    let mut streams = Vec::with_capacity(cfg.num_agents);
    for (i, poses) in agent_poses.iter().enumerate() {
        let id = AgentId::indexed(i);
        let mut frames = Vec::with_capacity(cfg.duration);
        for (k, pose) in poses.iter().enumerate() {
            let to_ego = pose.to_transform().inverse();
            let mut boxes = Vec::new();
            for (obj, p) in object_positions[k].iter().enumerate() {
                if p.distance(&Point2::new(pose.x, pose.y)) > cfg.fov_radius {
                    continue;
                }
                if rng.random::<f64>() < cfg.miss_rate {
                    continue;
                }
                let local = to_ego.apply(p);
                let (jx, jy) = if cfg.detection_jitter_sigma > 0.0 {
                    (jitter.sample(&mut rng), jitter.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                boxes.push(DetectedBox {
                    x: local.x + jx,
                    y: local.y + jy,
                    yaw: normalize_angle(object_headings[k][obj] - pose.theta + yaw_noise.sample(&mut rng)),
                    truth_id: Some(obj as u32),
                });
            }
            if let Some(poisson) = &fp_count {
                let count = poisson.sample(&mut rng) as usize;
                for _ in 0..count {
                    let r = cfg.fov_radius * rng.random::<f64>().sqrt();
                    let a = rng.random_range(-PI..PI);
                    boxes.push(DetectedBox {
                        x: r * a.cos(),
                        y: r * a.sin(),
                        yaw: rng.random_range(-PI..PI),
                        truth_id: None,
                    });
                }
            }
            // Detector output order carries no meaning.
            for j in (1..boxes.len()).rev() {
                let s = rng.random_range(0..=j);
                boxes.swap(j, s);
            }
            frames.push(DetectionFrame {
                agent: id.clone(),
                local_time: k as i64 * tau + offsets[i],
                boxes,
            });
        }
        streams.push(frames);
    }

    let drift =
        Normal::new(0.0, cfg.odometry_drift_sigma.max(0.0)).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let odometry = agent_poses
        .iter()
        .enumerate()
        .map(|(i, poses)| {
            let increments = (0..poses.len())
                .map(|k| {
                    if k == 0 {
                        return RigidTransform2D::identity();
                    }
                    let t = relative_pose(&poses[k], &poses[k - 1]);
                    if cfg.odometry_drift_sigma > 0.0 {
                        RigidTransform2D::new(
                            t.rotation + 0.1 * drift.sample(&mut rng),
                            t.tx + drift.sample(&mut rng),
                            t.ty + drift.sample(&mut rng),
                        )
                    } else {
                        t
                    }
                })
                .collect();
            OdometryTrack {
                agent: AgentId::indexed(i),
                increments,
            }
        })
        .collect();

    let mut pending = Vec::new();
    for ego_frame in 0..cfg.duration {
        for ego in 0..cfg.num_agents {
            for collaborator in 0..cfg.num_agents {
                if collaborator == ego {
                    continue;
                }
                let raw = draw_int_range(&mut rng, cfg.latency_range);
                let steps = ((raw as f64) / tau as f64).round() as usize;
                if steps > ego_frame {
                    continue;
                }
                pending.push((ego, ego_frame, collaborator, ego_frame - steps));
            }
        }
    }

    let truth = GroundTruth {
        tau_ms: tau,
        agents: agent_poses
            .into_iter()
            .enumerate()
            .map(|(i, poses)| AgentTruth {
                agent: AgentId::indexed(i),
                clock_offset_ms: offsets[i],
                poses,
            })
            .collect(),
        object_positions,
        messages: Vec::new(),
    };
    let messages = pending
        .into_iter()
        .map(|(e, ef, c, cf)| truth.message_between(e, ef, c, cf))
        .collect();
    let truth = GroundTruth { messages, ..truth };
    Ok(Scenario {
        config: cfg.clone(),
        streams,
        odometry,
        truth,
    })
}
