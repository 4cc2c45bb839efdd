//! Linear navigation policy and its cross-entropy trainer.
//!
//! The policy maps a 10-feature observation (bias, goal distance, bearing
//! error, its sine and cosine, and five forward-arc slope probes) linearly
//! to `(v, omega)`, clamped to the action limits. One `optimize_step` is a
//! single cross-entropy iteration: evaluate a population of parameter
//! perturbations on the given terrain with shared start-goal pairs, then
//! refit the mean to the elite set. The perturbation scale follows an
//! annealed schedule driven by the iteration index.

use std::io::{self, Write};

use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::heightfield::Heightmap;
use crate::navsim::{self, Policy, RobotState, run_episode, sample_episode};
use crate::rng;

use rand::Rng;

/// Feature names, in observation order.
pub const FEATURE_NAMES: [&str; 10] = [
    "bias",
    "goal_dist",
    "bearing",
    "sin_bearing",
    "cos_bearing",
    "probe_l2",
    "probe_l1",
    "probe_c",
    "probe_r1",
    "probe_r2",
];

/// Probe directions relative to the heading.
const PROBE_ANGLES: [f64; 5] = [
    -std::f64::consts::FRAC_PI_4,
    -std::f64::consts::FRAC_PI_8,
    0.0,
    std::f64::consts::FRAC_PI_8,
    std::f64::consts::FRAC_PI_4,
];
/// Probe lookahead distance (m).
const PROBE_DIST: f64 = 0.4;
/// Slope probes are clamped to keep cliff readings bounded.
const PROBE_CLAMP: f64 = 2.0;

pub const FEATURE_COUNT: usize = FEATURE_NAMES.len();

/// Linear policy weights: one row of [`FEATURE_COUNT`] weights per output
/// `(v, omega)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros() -> Self {
        Self { weights: vec![0.0; 2 * FEATURE_COUNT] }
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), 2 * FEATURE_COUNT, "expected 2x{FEATURE_COUNT} weights");
        assert!(weights.iter().all(|w| w.is_finite()), "weights must be finite");
        Self { weights }
    }

    fn row(&self, output: usize) -> &[f64] {
        &self.weights[output * FEATURE_COUNT..(output + 1) * FEATURE_COUNT]
    }

    /// CSV serialization: a header naming each feature, then one row per
    /// output.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "output,{}", FEATURE_NAMES.join(","))?;
        for (name, output) in [("v", 0), ("omega", 1)] {
            let row: Vec<String> = self.row(output).iter().map(|w| format!("{w}")).collect();
            writeln!(out, "{},{}", name, row.join(","))?;
        }
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty policy csv")?;
        let expected = format!("output,{}", FEATURE_NAMES.join(","));
        if header != expected {
            return Err(format!("bad policy header: {header}"));
        }
        let mut weights = vec![0.0; 2 * FEATURE_COUNT];
        for (output, name) in [(0usize, "v"), (1, "omega")] {
            let line = lines.next().ok_or_else(|| format!("missing row {name}"))?;
            let mut parts = line.split(',');
            if parts.next() != Some(name) {
                return Err(format!("expected row {name}"));
            }
            for i in 0..FEATURE_COUNT {
                let field = parts.next().ok_or_else(|| format!("row {name} too short"))?;
                weights[output * FEATURE_COUNT + i] =
                    field.parse().map_err(|e| format!("row {name} field {i}: {e}"))?;
            }
        }
        Ok(Self::from_weights(weights))
    }
}

/// Observation features at a state.
pub fn features(map: &Heightmap, state: &RobotState, goal: (f64, f64)) -> [f64; FEATURE_COUNT] {
    let dx = goal.0 - state.x;
    let dy = goal.1 - state.y;
    let dist = (dx * dx + dy * dy).sqrt();
    let bearing = navsim::wrap_angle(dy.atan2(dx) - state.heading);
    let mut f = [0.0; FEATURE_COUNT];
    f[0] = 1.0;
    f[1] = dist;
    f[2] = bearing;
    f[3] = bearing.sin();
    f[4] = bearing.cos();
    for (i, rel) in PROBE_ANGLES.iter().enumerate() {
        let dir = state.heading + rel;
        let px = state.x + PROBE_DIST * dir.cos();
        let py = state.y + PROBE_DIST * dir.sin();
        let (gx, gy) = map.gradient_at_pos(px, py);
        let along = gx * dir.cos() + gy * dir.sin();
        f[5 + i] = along.clamp(-PROBE_CLAMP, PROBE_CLAMP);
    }
    f
}

impl Policy for PolicyParams {
    fn act(&self, map: &Heightmap, state: &RobotState, goal: (f64, f64)) -> (f64, f64) {
        let f = features(map, state, goal);
        let dot = |row: &[f64]| row.iter().zip(&f).map(|(w, x)| w * x).sum::<f64>();
        let v = dot(self.row(0)).clamp(0.0, navsim::V_MAX);
        let omega = dot(self.row(1)).clamp(-navsim::OMEGA_MAX, navsim::OMEGA_MAX);
        (v, omega)
    }
}

/// Cross-entropy trainer knobs.
#[derive(Debug, Clone, Copy)]
pub struct TrainerConfig {
    pub population: usize,
    pub elite: usize,
    pub eval_pairs: usize,
    pub init_std: f64,
    pub anneal: f64,
    pub std_floor: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self { population: 32, elite: 8, eval_pairs: 8, init_std: 0.5, anneal: 0.97, std_floor: 0.02 }
    }
}

impl TrainerConfig {
    /// Annealed perturbation scale at an iteration index.
    pub fn scale_at(&self, iter: usize) -> f64 {
        (self.init_std * self.anneal.powi(iter as i32)).max(self.std_floor)
    }
}

/// Population statistics of one optimization step.
#[derive(Debug, Clone, Copy)]
pub struct CemStats {
    pub population_mean_return: f64,
    pub elite_mean_return: f64,
    pub scale: f64,
}

/// One cross-entropy iteration on a single terrain: sample a population of
/// perturbations around the current mean, score each by mean episode
/// return over shared start-goal pairs, refit the mean to the elite.
/// Deterministic in `seed`; population evaluations run concurrently.
pub fn optimize_step(
    params: &PolicyParams,
    map: &Heightmap,
    config: &TrainerConfig,
    iter: usize,
    seed: u64,
) -> (PolicyParams, CemStats) {
    assert!(config.population >= 1 && config.elite >= 1);
    assert!(config.elite <= config.population);
    let scale = config.scale_at(iter);
    let dim = params.weights.len();

    // Shared evaluation pairs: common random numbers across the population.
    let specs: Vec<_> = (0..config.eval_pairs)
        .filter_map(|p| sample_episode(map, rng::child(seed, "cem.pair", &[p as u64])))
        .collect();

    let population: Vec<Vec<f64>> = (0..config.population)
        .map(|m| {
            let mut r = rng::substream(seed, "cem.perturb", &[m as u64]);
            params
                .weights
                .iter()
                .map(|w| w + scale * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let fitness: Vec<f64> = population
        .par_iter()
        .map(|weights| {
            let candidate = PolicyParams { weights: weights.clone() };
            if specs.is_empty() {
                return 0.0;
            }
            let total: f64 = specs
                .iter()
                .map(|spec| run_episode(map, spec, &candidate).discounted_return)
                .sum();
            total / specs.len() as f64
        })
        .collect();

    let mut order: Vec<usize> = (0..config.population).collect();
    order.sort_by(|&a, &b| fitness[b].partial_cmp(&fitness[a]).unwrap().then(a.cmp(&b)));
    let elite = &order[..config.elite];

    let mut mean = vec![0.0; dim];
    for &m in elite {
        for (acc, &w) in mean.iter_mut().zip(&population[m]) {
            *acc += w;
        }
    }
    for w in &mut mean {
        *w /= config.elite as f64;
    }

    let population_mean_return = fitness.iter().sum::<f64>() / config.population as f64;
    let elite_mean_return =
        elite.iter().map(|&m| fitness[m]).sum::<f64>() / config.elite as f64;
    (
        PolicyParams { weights: mean },
        CemStats { population_mean_return, elite_mean_return, scale },
    )
}
