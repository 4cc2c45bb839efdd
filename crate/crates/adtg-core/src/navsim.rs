//! Kinematic navigation environment over heightmaps.
//!
//! A unicycle robot steps across the bilinear surface of a terrain;
//! difficulty comes purely from geometry. Episodes terminate on reaching
//! the goal, exceeding the tilt limit, leaving the map, or running out of
//! steps. The success rate over sampled start-goal pairs is the difficulty
//! signal consumed by the curriculum; the deterministic oracle policy maps
//! terrain roughness straight to a success value and is used to exercise
//! curriculum machinery without rollout noise.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::heightfield::{Heightmap, compute_stats};
use crate::rng;

/// Forward speed limit (m/s).
pub const V_MAX: f64 = 1.0;
/// Yaw rate limit (rad/s).
pub const OMEGA_MAX: f64 = 1.5;
/// Tilt angle that terminates an episode.
pub const TILT_LIMIT: f64 = std::f64::consts::PI / 9.0;
/// Tilt angle above which the per-step penalty applies.
pub const TILT_PENALTY_LIMIT: f64 = std::f64::consts::PI / 12.0;
/// Goal capture radius (m).
pub const GOAL_RADIUS: f64 = 0.25;
/// Discount factor of the episode return.
pub const GAMMA: f64 = 0.99;
/// Control period (s).
pub const DT: f64 = 0.1;
/// Minimum average velocity used for the step budget (m/s).
pub const V_AVG: f64 = 0.3;
/// Start-goal ring radii (m).
pub const GOAL_RING: (f64, f64) = (0.5, 3.0);
/// Half-angle of the goal sector around the initial heading.
pub const SECTOR_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_3;
/// Start cells must have slope below half the tilt-limit tangent.
pub fn start_slope_limit() -> f64 {
    0.5 * TILT_LIMIT.tan()
}

#[derive(Debug, Error)]
pub enum NavSimError {
    #[error("action ({v}, {omega}) exceeds limits (|v| <= {V_MAX}, |omega| <= {OMEGA_MAX})")]
    ActionLimit { v: f64, omega: f64 },
    #[error("state or goal outside the map extent")]
    OutsideExtent,
    #[error("goal closer than the minimum distance {0} m")]
    GoalTooClose(f64),
}

/// Planar robot pose plus the previous action (for smoothness penalties).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub last_action: (f64, f64),
}

impl RobotState {
    pub fn at(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading), last_action: (0.0, 0.0) }
    }
}

/// Wrap to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(std::f64::consts::TAU);
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    None,
    TiltExceeded,
    OutOfBounds,
    Timeout,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::None => "none",
            FailureReason::TiltExceeded => "tilt_exceeded",
            FailureReason::OutOfBounds => "out_of_bounds",
            FailureReason::Timeout => "timeout",
        }
    }
}

/// Result of one kinematic step.
#[derive(Debug, Clone, Copy)]
pub enum StepOutcome {
    /// New state plus the tilt magnitude experienced there.
    Continue { state: RobotState, tilt: f64 },
    Terminated { reason: FailureReason },
}

/// Advance the unicycle by one control period and evaluate the terrain
/// constraints at the new pose.
pub fn step(
    map: &Heightmap,
    state: &RobotState,
    action: (f64, f64),
    dt: f64,
) -> Result<StepOutcome, NavSimError> {
    let (v, omega) = action;
    if !v.is_finite() || !omega.is_finite() || v.abs() > V_MAX + 1e-12 || omega.abs() > OMEGA_MAX + 1e-12
    {
        return Err(NavSimError::ActionLimit { v, omega });
    }
    let x = state.x + v * state.heading.cos() * dt;
    let y = state.y + v * state.heading.sin() * dt;
    let heading = wrap_angle(state.heading + omega * dt);
    if x < 0.0 || y < 0.0 || x > map.extent_x() || y > map.extent_y() {
        return Ok(StepOutcome::Terminated { reason: FailureReason::OutOfBounds });
    }
    // Pitch along the heading, roll across it, from the bilinear gradient.
    let (gx, gy) = map.gradient_at_pos(x, y);
    let along = gx * heading.cos() + gy * heading.sin();
    let across = -gx * heading.sin() + gy * heading.cos();
    let pitch = along.atan();
    let roll = across.atan();
    let tilt = pitch.abs().max(roll.abs());
    if tilt > TILT_LIMIT {
        return Ok(StepOutcome::Terminated { reason: FailureReason::TiltExceeded });
    }
    Ok(StepOutcome::Continue { state: RobotState { x, y, heading, last_action: action }, tilt })
}

/// Episode description: start pose, goal, budget, control period.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSpec {
    pub start: RobotState,
    pub goal: (f64, f64),
    pub max_steps: usize,
    pub dt: f64,
}

impl EpisodeSpec {
    pub fn new(
        map: &Heightmap,
        start: RobotState,
        goal: (f64, f64),
        max_steps: usize,
        dt: f64,
    ) -> Result<Self, NavSimError> {
        let inside = |x: f64, y: f64| {
            (0.0..=map.extent_x()).contains(&x) && (0.0..=map.extent_y()).contains(&y)
        };
        if !inside(start.x, start.y) || !inside(goal.0, goal.1) {
            return Err(NavSimError::OutsideExtent);
        }
        let dist = ((goal.0 - start.x).powi(2) + (goal.1 - start.y).powi(2)).sqrt();
        if dist < GOAL_RING.0 {
            return Err(NavSimError::GoalTooClose(GOAL_RING.0));
        }
        Ok(Self { start, goal, max_steps, dt })
    }
}

/// Per-episode outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps_used: usize,
    pub failure_reason: FailureReason,
    pub discounted_return: f64,
}

/// One trace sample for optional CSV dumps.
#[derive(Debug, Clone, Copy)]
pub struct TraceSample {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub reward: f64,
}

/// A deterministic control policy.
pub trait Policy: Sync {
    fn act(&self, map: &Heightmap, state: &RobotState, goal: (f64, f64)) -> (f64, f64);
}

/// Scripted goal seeker: turn toward the goal, drive when roughly aligned,
/// slow down on approach. Reference policy for tests and smoke runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoalSeekPolicy;

impl Policy for GoalSeekPolicy {
    fn act(&self, _map: &Heightmap, state: &RobotState, goal: (f64, f64)) -> (f64, f64) {
        let dx = goal.0 - state.x;
        let dy = goal.1 - state.y;
        let dist = (dx * dx + dy * dy).sqrt();
        let bearing = wrap_angle(dy.atan2(dx) - state.heading);
        let omega = (2.0 * bearing).clamp(-OMEGA_MAX, OMEGA_MAX);
        let v = (V_MAX * bearing.cos().max(0.0) * dist.min(1.0)).clamp(0.0, V_MAX);
        (v, omega)
    }
}

/// Run one episode. Deterministic given `(map, spec, policy)`.
pub fn run_episode(map: &Heightmap, spec: &EpisodeSpec, policy: &dyn Policy) -> EpisodeResult {
    run_episode_inner(map, spec, policy, None)
}

/// [`run_episode`] that also records a per-step trace.
pub fn run_episode_traced(
    map: &Heightmap,
    spec: &EpisodeSpec,
    policy: &dyn Policy,
) -> (EpisodeResult, Vec<TraceSample>) {
    let mut trace = Vec::with_capacity(spec.max_steps);
    let result = run_episode_inner(map, spec, policy, Some(&mut trace));
    (result, trace)
}

fn run_episode_inner(
    map: &Heightmap,
    spec: &EpisodeSpec,
    policy: &dyn Policy,
    mut trace: Option<&mut Vec<TraceSample>>,
) -> EpisodeResult {
    let mut state = spec.start;
    let mut discounted_return = 0.0;
    let mut discount = 1.0;
    for t in 0..spec.max_steps {
        let action = policy.act(map, &state, spec.goal);
        let prev_action = state.last_action;
        let outcome = step(map, &state, action, spec.dt)
            .expect("policies clamp actions to the limits");
        let da = ((action.0 - prev_action.0).powi(2) + (action.1 - prev_action.1).powi(2)).sqrt();
        let mut reward = -0.01 * da;
        let (done, success, reason) = match outcome {
            StepOutcome::Continue { state: next, tilt } => {
                state = next;
                if tilt > TILT_PENALTY_LIMIT {
                    reward -= 0.01;
                }
                let dist =
                    ((spec.goal.0 - state.x).powi(2) + (spec.goal.1 - state.y).powi(2)).sqrt();
                if dist <= GOAL_RADIUS {
                    reward += 5.0;
                    (true, true, FailureReason::None)
                } else {
                    (false, false, FailureReason::None)
                }
            }
            StepOutcome::Terminated { reason } => {
                // The terminating pose violated the tilt or bounds
                // constraint; the tilt penalty applies when relevant.
                if reason == FailureReason::TiltExceeded {
                    reward -= 0.01;
                }
                (true, false, reason)
            }
        };
        discounted_return += discount * reward;
        discount *= GAMMA;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceSample {
                t,
                x: state.x,
                y: state.y,
                heading: state.heading,
                v: action.0,
                omega: action.1,
                reward,
            });
        }
        if done {
            return EpisodeResult { success, steps_used: t + 1, failure_reason: reason, discounted_return };
        }
    }
    EpisodeResult {
        success: false,
        steps_used: spec.max_steps,
        failure_reason: FailureReason::Timeout,
        discounted_return,
    }
}

/// Grid cells flat enough to start from.
pub fn valid_start_cells(map: &Heightmap) -> Vec<(usize, usize)> {
    let limit = start_slope_limit();
    let mut cells = Vec::new();
    for row in 0..map.height() {
        for col in 0..map.width() {
            let (gx, gy) = map.gradient_at(row, col);
            if (gx * gx + gy * gy).sqrt() < limit {
                cells.push((row, col));
            }
        }
    }
    cells
}

/// Sample a start-goal pair on the map; `None` if no cell is flat enough
/// or no in-bounds goal exists in the ring sector.
pub fn sample_episode(map: &Heightmap, seed: u64) -> Option<EpisodeSpec> {
    let starts = valid_start_cells(map);
    if starts.is_empty() {
        return None;
    }
    let mut r = rng::substream(seed, "navsim.pair", &[]);
    let ring_hi = GOAL_RING.1;
    let max_steps = (ring_hi / DT / V_AVG).ceil() as usize;
    for _ in 0..32 {
        let (row, col) = starts[r.random_range(0..starts.len())];
        let sx = col as f64 * map.resolution();
        let sy = row as f64 * map.resolution();
        let heading = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        for _ in 0..32 {
            let radius = r.random_range(GOAL_RING.0..=ring_hi);
            let angle = heading + r.random_range(-SECTOR_HALF_ANGLE..=SECTOR_HALF_ANGLE);
            let gx = sx + radius * angle.cos();
            let gy = sy + radius * angle.sin();
            if gx >= 0.0 && gy >= 0.0 && gx <= map.extent_x() && gy <= map.extent_y() {
                let start = RobotState::at(sx, sy, heading);
                return EpisodeSpec::new(map, start, (gx, gy), max_steps, DT).ok();
            }
        }
    }
    None
}

/// Success-rate evaluation plus its degenerate-map diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessRate {
    pub rate: f64,
    /// Set when the map had no valid start cell; the rate is then zero.
    pub no_valid_start: bool,
}

/// Success rate plus mean discounted return over the same episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_return: f64,
    pub no_valid_start: bool,
}

/// Evaluate a policy over sampled start-goal pairs. Episodes derive their
/// streams from `(seed, pair index)`, so the result is identical
/// regardless of worker count.
pub fn evaluate(map: &Heightmap, policy: &dyn Policy, n_pairs: usize, seed: u64) -> EvalReport {
    assert!(n_pairs >= 1, "n_pairs must be >= 1");
    if valid_start_cells(map).is_empty() {
        return EvalReport { success_rate: 0.0, mean_return: 0.0, no_valid_start: true };
    }
    let results: Vec<(usize, f64)> = (0..n_pairs)
        .into_par_iter()
        .map(|pair| {
            match sample_episode(map, rng::child(seed, "navsim.episode", &[pair as u64])) {
                Some(spec) => {
                    let r = run_episode(map, &spec, policy);
                    (r.success as usize, r.discounted_return)
                }
                None => (0, 0.0),
            }
        })
        .collect();
    let successes: usize = results.iter().map(|r| r.0).sum();
    let total_return: f64 = results.iter().map(|r| r.1).sum();
    EvalReport {
        success_rate: successes as f64 / n_pairs as f64,
        mean_return: total_return / n_pairs as f64,
        no_valid_start: false,
    }
}

/// Fraction of sampled start-goal episodes the policy completes.
pub fn success_rate(map: &Heightmap, policy: &dyn Policy, n_pairs: usize, seed: u64) -> SuccessRate {
    let report = evaluate(map, policy, n_pairs, seed);
    SuccessRate { rate: report.success_rate, no_valid_start: report.no_valid_start }
}

/// Deterministic difficulty oracle: success as a non-increasing function
/// of terrain roughness.
pub fn oracle_success(map: &Heightmap, difficulty_curve: impl Fn(f64) -> f64) -> f64 {
    difficulty_curve(compute_stats(map).roughness)
}

/// Default linear curve: full success on flat ground, zero at roughness
/// 0.6 and beyond.
pub fn default_difficulty_curve(roughness: f64) -> f64 {
    (1.0 - roughness / 0.6).clamp(0.0, 1.0)
}

/// [`oracle_success`] with the default curve.
pub fn oracle_success_default(map: &Heightmap) -> f64 {
    oracle_success(map, default_difficulty_curve)
}
