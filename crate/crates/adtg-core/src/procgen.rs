//! Procedural terrain generators and a Gaussian-mixture terrain prior.
//!
//! The four generator families (`RandomUniform`, `Slope`,
//! `DiscreteObstacles`, `Wave`) cover the usual heuristic terrain
//! parameterizations; their parameter ranges are validated against the
//! documented limits. The Gaussian-mixture prior is the crate's stand-in
//! for a "realistic" terrain distribution: its mean maps are sums of 2-D
//! Gaussian bumps, which keeps the diffused density in closed form so an
//! exact noise predictor exists (see `diffusion::AnalyticGmPredictor`).

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::heightfield::{Heightmap, HeightfieldError};
use crate::rng;

/// Upper grade limit for slope terrain: sqrt(3)/2.
pub const SLOPE_MAX: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Error)]
pub enum ProcGenError {
    #[error("{kind} parameter {name}={value} outside [{lo}, {hi}]")]
    ParamOutOfRange { kind: &'static str, name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Heightfield(#[from] HeightfieldError),
}

/// A procedural terrain recipe: family, parameters, and generation seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcGenSpec {
    pub kind: ProcGenKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcGenKind {
    /// I.i.d. cell heights in `[-|height|, |height|]`, then clamped so
    /// adjacent cells differ by at most `step`.
    RandomUniform { height: f64, step: f64 },
    /// Plane of the given grade (rise over run) along a seeded direction.
    Slope { grade: f64 },
    /// `count` axis-aligned boxes of the given height and footprint size
    /// (meters) at seeded positions on flat ground; overlaps take the max.
    DiscreteObstacles { height: f64, size: f64, count: u32 },
    /// Sum of `count` sinusoids of the given amplitude with seeded
    /// directions, phases, and wavelengths.
    Wave { count: u32, amplitude: f64 },
}

impl ProcGenKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProcGenKind::RandomUniform { .. } => "random_uniform",
            ProcGenKind::Slope { .. } => "slope",
            ProcGenKind::DiscreteObstacles { .. } => "discrete_obstacles",
            ProcGenKind::Wave { .. } => "wave",
        }
    }

    /// Check every parameter against its documented range.
    pub fn validate(&self) -> Result<(), ProcGenError> {
        fn check(
            kind: &'static str,
            name: &'static str,
            value: f64,
            lo: f64,
            hi: f64,
        ) -> Result<(), ProcGenError> {
            if !value.is_finite() || value < lo || value > hi {
                return Err(ProcGenError::ParamOutOfRange { kind, name, value, lo, hi });
            }
            Ok(())
        }
        match *self {
            ProcGenKind::RandomUniform { height, step } => {
                check("random_uniform", "height", height, -0.45, 0.45)?;
                check("random_uniform", "step", step, 0.005, 0.045)
            }
            ProcGenKind::Slope { grade } => check("slope", "grade", grade, 0.05, SLOPE_MAX),
            ProcGenKind::DiscreteObstacles { height, size, count } => {
                check("discrete_obstacles", "height", height, 0.4, 10.0)?;
                check("discrete_obstacles", "size", size, 0.1, 2.0)?;
                check("discrete_obstacles", "count", count as f64, 1.0, 20.0)
            }
            ProcGenKind::Wave { count, amplitude } => {
                check("wave", "count", count as f64, 1.0, 20.0)?;
                // Amplitude upper limit couples to the wave count.
                check("wave", "amplitude", amplitude, 0.1, 4.0 / count as f64)
            }
        }
    }
}

/// Draw a spec uniformly over the legal parameter space.
pub fn random_spec(seed: u64) -> ProcGenSpec {
    let mut r = rng::substream(seed, "procgen.random_spec", &[]);
    let kind = match r.random_range(0..4u8) {
        0 => ProcGenKind::RandomUniform {
            height: r.random_range(-0.45..=0.45),
            step: r.random_range(0.005..=0.045),
        },
        1 => ProcGenKind::Slope { grade: r.random_range(0.05..=SLOPE_MAX) },
        2 => ProcGenKind::DiscreteObstacles {
            height: r.random_range(0.4..=10.0),
            size: r.random_range(0.1..=2.0),
            count: r.random_range(1..=20),
        },
        _ => {
            let count = r.random_range(1..=20u32);
            let amplitude = r.random_range(0.1..=4.0 / count as f64);
            ProcGenKind::Wave { count, amplitude }
        }
    };
    ProcGenSpec { kind, seed: rng::child(seed, "procgen.gen_seed", &[]) }
}

/// Generate a terrain from a validated spec. Deterministic in
/// `(spec, width, height, resolution)`.
pub fn generate_procedural(
    spec: &ProcGenSpec,
    width: usize,
    height: usize,
    resolution: f64,
) -> Result<Heightmap, ProcGenError> {
    spec.kind.validate()?;
    let data = match spec.kind {
        ProcGenKind::RandomUniform { height: amp, step } => {
            random_uniform_cells(spec.seed, width, height, amp.abs(), step)
        }
        ProcGenKind::Slope { grade } => slope_cells(spec.seed, width, height, resolution, grade),
        ProcGenKind::DiscreteObstacles { height: h, size, count } => {
            obstacle_cells(spec.seed, width, height, resolution, h, size, count)
        }
        ProcGenKind::Wave { count, amplitude } => {
            wave_cells(spec.seed, width, height, resolution, count, amplitude)
        }
    };
    Ok(Heightmap::new(width, height, resolution, data)?)
}

fn random_uniform_cells(seed: u64, w: usize, h: usize, amp: f64, step: f64) -> Vec<f64> {
    let mut r = rng::substream(seed, "procgen.random_uniform", &[]);
    let mut data: Vec<f64> = (0..w * h).map(|_| r.random_range(-amp..=amp)).collect();
    // Clamp sweeps until every 4-neighborhood difference is within `step`.
    // Each pass clamps a cell into the band of its already-final left and
    // up neighbors; one pass suffices, the second confirms convergence.
    loop {
        let mut changed = false;
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                if col > 0 {
                    let left = data[i - 1];
                    lo = lo.max(left - step);
                    hi = hi.min(left + step);
                }
                if row > 0 {
                    let up = data[i - w];
                    lo = lo.max(up - step);
                    hi = hi.min(up + step);
                }
                // Rounding can leave lo above hi by an ulp when both
                // neighbors sit step apart; collapse to the midpoint.
                if lo > hi {
                    let mid = 0.5 * (lo + hi);
                    lo = mid;
                    hi = mid;
                }
                let clamped = data[i].clamp(lo, hi);
                if clamped != data[i] {
                    data[i] = clamped;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    data
}

fn slope_cells(seed: u64, w: usize, h: usize, res: f64, grade: f64) -> Vec<f64> {
    let mut r = rng::substream(seed, "procgen.slope", &[]);
    let theta: f64 = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let (dir_x, dir_y) = (theta.cos(), theta.sin());
    let mut data = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let x = col as f64 * res;
            let y = row as f64 * res;
            data[row * w + col] = grade * (x * dir_x + y * dir_y);
        }
    }
    data
}

fn obstacle_cells(
    seed: u64,
    w: usize,
    h: usize,
    res: f64,
    height: f64,
    size: f64,
    count: u32,
) -> Vec<f64> {
    let mut r = rng::substream(seed, "procgen.obstacles", &[]);
    let cells = ((size / res).round() as usize).clamp(1, w.min(h));
    let mut data = vec![0.0f64; w * h];
    for _ in 0..count {
        let col0 = r.random_range(0..=w - cells);
        let row0 = r.random_range(0..=h - cells);
        for row in row0..row0 + cells {
            for col in col0..col0 + cells {
                let i = row * w + col;
                data[i] = data[i].max(height);
            }
        }
    }
    data
}

fn wave_cells(seed: u64, w: usize, h: usize, res: f64, count: u32, amplitude: f64) -> Vec<f64> {
    let mut r = rng::substream(seed, "procgen.wave", &[]);
    let extent = (w.max(h) - 1) as f64 * res;
    let mut data = vec![0.0; w * h];
    for _ in 0..count {
        let theta: f64 = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let wavelength: f64 = r.random_range(extent / 4.0..=extent);
        let (dx, dy) = (theta.cos(), theta.sin());
        let omega = std::f64::consts::TAU / wavelength;
        for row in 0..h {
            for col in 0..w {
                let d = col as f64 * res * dx + row as f64 * res * dy;
                data[row * w + col] += amplitude * (omega * d + phase).sin();
            }
        }
    }
    data
}

/// One mixture component: selection weight, mean terrain, and the
/// per-cell standard deviation around it.
#[derive(Debug, Clone)]
pub struct GmComponent {
    pub weight: f64,
    pub mean_map: Heightmap,
    pub sigma0: f64,
}

/// Gaussian-mixture prior over terrains. All component means share
/// dimensions and the weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussianMixturePrior {
    components: Vec<GmComponent>,
}

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("prior needs at least one component")]
    Empty,
    #[error("component weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("component {0} has non-positive weight")]
    NonPositiveWeight(usize),
    #[error("component {0} has sigma0 {1}, expected > 0")]
    NonPositiveSigma(usize, f64),
    #[error("component {0} dimensions differ from component 0")]
    DimensionMismatch(usize),
}

impl GaussianMixturePrior {
    pub fn new(components: Vec<GmComponent>) -> Result<Self, PriorError> {
        if components.is_empty() {
            return Err(PriorError::Empty);
        }
        let (w0, h0) = (components[0].mean_map.width(), components[0].mean_map.height());
        let mut total = 0.0;
        for (j, c) in components.iter().enumerate() {
            if c.weight <= 0.0 {
                return Err(PriorError::NonPositiveWeight(j));
            }
            if c.sigma0 <= 0.0 {
                return Err(PriorError::NonPositiveSigma(j, c.sigma0));
            }
            if c.mean_map.width() != w0 || c.mean_map.height() != h0 {
                return Err(PriorError::DimensionMismatch(j));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(PriorError::WeightsNotNormalized(total));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GmComponent] {
        &self.components
    }

    pub fn width(&self) -> usize {
        self.components[0].mean_map.width()
    }

    pub fn height(&self) -> usize {
        self.components[0].mean_map.height()
    }

    pub fn resolution(&self) -> f64 {
        self.components[0].mean_map.resolution()
    }
}

/// Draw one terrain: pick a component by weight, add `sigma0` times
/// standard normal noise to its mean. Deterministic in `seed`.
pub fn sample_prior(prior: &GaussianMixturePrior, seed: u64) -> Heightmap {
    let mut pick = rng::substream(seed, "prior.component", &[]);
    let u: f64 = pick.random_range(0.0..1.0);
    let mut acc = 0.0;
    let mut chosen = prior.components.len() - 1;
    for (j, c) in prior.components.iter().enumerate() {
        acc += c.weight;
        if u < acc {
            chosen = j;
            break;
        }
    }
    let comp = &prior.components[chosen];
    let mut noise = rng::substream(seed, "prior.noise", &[]);
    let data: Vec<f64> = comp
        .mean_map
        .data()
        .iter()
        .map(|&m| m + comp.sigma0 * noise.sample::<f64, _>(StandardNormal))
        .collect();
    comp.mean_map.with_data(data).expect("mean map is valid and noise is finite")
}

/// Sum of 2-D Gaussian bumps; the building block for prior mean maps.
/// `bumps` holds `(center_col, center_row, amplitude, sigma)` in cells.
pub fn bump_mean_map(
    width: usize,
    height: usize,
    resolution: f64,
    bumps: &[(f64, f64, f64, f64)],
) -> Result<Heightmap, HeightfieldError> {
    let mut data = vec![0.0; width * height];
    for &(cx, cy, amp, sigma) in bumps {
        for row in 0..height {
            for col in 0..width {
                let dx = col as f64 - cx;
                let dy = row as f64 - cy;
                data[row * width + col] +=
                    amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    Heightmap::new(width, height, resolution, data)
}

/// Deterministic prior recipe used by the run configuration: `components`
/// mean maps, each a seeded sum of `bumps` Gaussian bumps whose amplitude
/// cap grows with the component index, so components span a difficulty
/// range.
pub fn recipe_prior(
    width: usize,
    height: usize,
    resolution: f64,
    components: usize,
    bumps: usize,
    amplitude: f64,
    bump_sigma: f64,
    sigma0: f64,
    seed: u64,
) -> Result<GaussianMixturePrior, PriorError> {
    assert!(components >= 1, "prior needs at least one component");
    let mut comps = Vec::with_capacity(components);
    for j in 0..components {
        let mut r = rng::substream(seed, "prior.mean", &[j as u64]);
        let amp_cap = if components == 1 {
            amplitude
        } else {
            amplitude * (0.4 + 0.6 * (j + 1) as f64 / components as f64)
        };
        let spec: Vec<(f64, f64, f64, f64)> = (0..bumps)
            .map(|_| {
                let cx = r.random_range(0.0..(width - 1) as f64);
                let cy = r.random_range(0.0..(height - 1) as f64);
                let amp = r.random_range(-amp_cap..=amp_cap);
                let sigma = r.random_range(bump_sigma * 0.5..=bump_sigma * 1.5);
                (cx, cy, amp, sigma)
            })
            .collect();
        let mean_map = bump_mean_map(width, height, resolution, &spec)
            .expect("recipe produces finite maps");
        comps.push(GmComponent { weight: 1.0 / components as f64, mean_map, sigma0 });
    }
    GaussianMixturePrior::new(comps)
}
