//! DDPM machinery over elevation grids.
//!
//! The forward process corrupts a terrain `e_0` over `K` steps with the
//! closed-form marginal `e_k = sqrt(abar_k) e_0 + sqrt(1 - abar_k) eps`;
//! the reverse process walks back from any starting step using a pluggable
//! [`NoisePredictor`]. Two predictors are provided: an exact analytic one
//! for Gaussian-mixture priors ([`AnalyticGmPredictor`]) and a small
//! trainable MLP ([`TrainedPredictor`]).

mod analytic;
mod trained;

pub use analytic::AnalyticGmPredictor;
pub use trained::{
    PREDICTOR_MAGIC, TrainHyperParams, TrainedPredictor, predictor_from_bytes,
    predictor_to_bytes, read_predictor, train_predictor, write_predictor,
};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::heightfield::{Heightmap, HeightfieldError};
use crate::rng;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("step {step} outside [{lo}, {hi}]")]
    StepOutOfRange { step: usize, lo: usize, hi: usize },
    #[error("schedule needs K >= 2, got {0}")]
    ScheduleTooShort(usize),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("map {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch { index: usize, got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error(transparent)]
    Heightfield(#[from] HeightfieldError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad predictor magic")]
    BadMagic,
    #[error("truncated predictor blob")]
    Truncated,
    #[error("predictor blob is inconsistent: {0}")]
    Malformed(String),
}

/// Per-step noise tables for a `K`-step forward process.
///
/// `beta(k)` and `alpha(k)` are defined for `k` in `1..=K`; `alpha_bar(k)`
/// for `k` in `0..=K` with `alpha_bar(0) = 1` and `alpha_bar` strictly
/// decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// `beta_k`, `k` in `1..=K`.
    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    /// `alpha_k = 1 - beta_k`, `k` in `1..=K`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k - 1]
    }

    /// Cumulative product `alpha_bar_k`, `k` in `0..=K`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bar[k]
    }
}

/// Cosine schedule: `alpha_bar_k` tracks `f(k)/f(0)` with
/// `f(k) = cos^2(((k/K + s)/(1 + s)) * pi/2)`, `s = 0.008`, and per-step
/// betas clipped to `[1e-6, 0.999]` before the cumulative product is
/// rebuilt, so the monotonicity invariant survives clipping.
pub fn make_cosine_schedule(steps: usize) -> Result<NoiseSchedule, DiffusionError> {
    if steps < 2 {
        return Err(DiffusionError::ScheduleTooShort(steps));
    }
    const S: f64 = 0.008;
    let f = |k: f64| {
        let t = (k / steps as f64 + S) / (1.0 + S);
        (t * std::f64::consts::FRAC_PI_2).cos().powi(2)
    };
    let f0 = f(0.0);
    let mut beta = Vec::with_capacity(steps);
    let mut prev = 1.0;
    for k in 1..=steps {
        let raw = f(k as f64) / f0;
        let b = (1.0 - raw / prev).clamp(1e-6, 0.999);
        beta.push(b);
        prev = raw;
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for &a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { beta, alpha, alpha_bar })
}

/// A diffusion latent: grid values at forward step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub step: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Latent {
    pub fn new(step: usize, width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "latent data length mismatch");
        Self { step, width, height, values }
    }
}

/// Predicts the noise component of a latent. Output length equals the
/// latent grid length.
pub trait NoisePredictor: Sync {
    fn predict(&self, latent: &Latent, schedule: &NoiseSchedule) -> Vec<f64>;
}

/// Corrupt `map` to forward step `k`:
/// `sqrt(abar_k) e_0 + sqrt(1 - abar_k) eps`, `eps ~ N(0, I)`.
/// `k = 0` returns the map values exactly.
pub fn forward_diffuse(
    map: &Heightmap,
    k: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Latent, DiffusionError> {
    if k > schedule.steps() {
        return Err(DiffusionError::StepOutOfRange { step: k, lo: 0, hi: schedule.steps() });
    }
    if k == 0 {
        return Ok(Latent::new(0, map.width(), map.height(), map.data().to_vec()));
    }
    let abar = schedule.alpha_bar(k);
    let signal = abar.sqrt();
    let noise_scale = (1.0 - abar).sqrt();
    let mut r = rng::substream(seed, "diffusion.forward", &[k as u64]);
    let values = map
        .data()
        .iter()
        .map(|&v| signal * v + noise_scale * r.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Latent::new(k, map.width(), map.height(), values))
}

/// Ancestral reverse sampling from `start.step` down to 0.
///
/// Each step takes the posterior mean
/// `(e_k - beta_k / sqrt(1 - abar_k) * eps_hat) / sqrt(alpha_k)` and adds
/// `sqrt(beta_k) z` noise except at the final step.
pub fn reverse_sample(
    start: &Latent,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    resolution: f64,
    seed: u64,
) -> Result<Heightmap, DiffusionError> {
    if start.step < 1 || start.step > schedule.steps() {
        return Err(DiffusionError::StepOutOfRange {
            step: start.step,
            lo: 1,
            hi: schedule.steps(),
        });
    }
    let mut values = start.values.clone();
    for k in (1..=start.step).rev() {
        let latent = Latent::new(k, start.width, start.height, values);
        let eps_hat = predictor.predict(&latent, schedule);
        debug_assert_eq!(eps_hat.len(), latent.values.len());
        values = latent.values;
        let beta = schedule.beta(k);
        let inv_sqrt_alpha = 1.0 / schedule.alpha(k).sqrt();
        let eps_coef = beta / (1.0 - schedule.alpha_bar(k)).sqrt();
        if k > 1 {
            let mut r = rng::substream(seed, "diffusion.reverse", &[k as u64]);
            let noise_scale = beta.sqrt();
            for (v, e) in values.iter_mut().zip(&eps_hat) {
                let mean = inv_sqrt_alpha * (*v - eps_coef * e);
                *v = mean + noise_scale * r.sample::<f64, _>(StandardNormal);
            }
        } else {
            for (v, e) in values.iter_mut().zip(&eps_hat) {
                *v = inv_sqrt_alpha * (*v - eps_coef * e);
            }
        }
    }
    Ok(Heightmap::new(start.width, start.height, resolution, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procgen::{GaussianMixturePrior, GmComponent, bump_mean_map};
    use proptest::prelude::*;

    #[test]
    fn schedule_endpoints() {
        let s = make_cosine_schedule(64).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(64) < 0.01, "alpha_bar_K = {}", s.alpha_bar(64));
    }

    #[test]
    fn schedule_rejects_short() {
        assert!(matches!(make_cosine_schedule(1), Err(DiffusionError::ScheduleTooShort(1))));
    }

    #[test]
    fn forward_at_zero_is_identity() {
        let map = bump_mean_map(8, 8, 0.1, &[(3.0, 3.0, 1.0, 2.0)]).unwrap();
        let s = make_cosine_schedule(16).unwrap();
        let latent = forward_diffuse(&map, 0, &s, 9).unwrap();
        assert_eq!(latent.values, map.data());
    }

    #[test]
    fn forward_is_deterministic() {
        let map = bump_mean_map(8, 8, 0.1, &[(3.0, 3.0, 1.0, 2.0)]).unwrap();
        let s = make_cosine_schedule(16).unwrap();
        let a = forward_diffuse(&map, 8, &s, 42).unwrap();
        let b = forward_diffuse(&map, 8, &s, 42).unwrap();
        assert_eq!(a, b);
        let c = forward_diffuse(&map, 8, &s, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_rejects_out_of_range() {
        let map = bump_mean_map(8, 8, 0.1, &[]).unwrap();
        let s = make_cosine_schedule(16).unwrap();
        assert!(matches!(
            forward_diffuse(&map, 17, &s, 0),
            Err(DiffusionError::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn forward_terminal_moments() {
        // Per-cell moments at k = K over many draws: mean within 3 standard
        // errors of sqrt(abar) e0, variance within 5% of 1 - abar.
        let map = bump_mean_map(4, 4, 0.1, &[(1.5, 1.5, 2.0, 1.0)]).unwrap();
        let steps = 64;
        let s = make_cosine_schedule(steps).unwrap();
        let n = 10_000usize;
        let cells = map.len();
        let mut sum = vec![0.0; cells];
        let mut sumsq = vec![0.0; cells];
        for i in 0..n {
            let l =
                forward_diffuse(&map, steps, &s, crate::rng::child(5, "fm", &[i as u64])).unwrap();
            for (c, &v) in l.values.iter().enumerate() {
                sum[c] += v;
                sumsq[c] += v * v;
            }
        }
        let abar = s.alpha_bar(steps);
        let var_expected = 1.0 - abar;
        let se_mean = var_expected.sqrt() / (n as f64).sqrt();
        for c in 0..cells {
            let mean = sum[c] / n as f64;
            let var = sumsq[c] / n as f64 - mean * mean;
            let mean_expected = abar.sqrt() * map.data()[c];
            assert!(
                (mean - mean_expected).abs() <= 3.0 * se_mean,
                "cell {c}: mean {mean} vs {mean_expected}"
            );
            assert!(
                (var - var_expected).abs() <= 0.05 * var_expected,
                "cell {c}: var {var} vs {var_expected}"
            );
        }
    }

    /// Predictor that replays a fixed noise grid.
    struct FixedNoise(Vec<f64>);
    impl NoisePredictor for FixedNoise {
        fn predict(&self, _latent: &Latent, _schedule: &NoiseSchedule) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn reverse_inverts_one_noiseless_step() {
        let map = bump_mean_map(8, 8, 0.1, &[(3.5, 3.5, 1.0, 2.0)]).unwrap();
        let s = make_cosine_schedule(16).unwrap();
        // Corrupt one step with known noise, then reverse with an exact
        // predictor: k = 1 adds no sampling noise, so e0 comes back.
        let mut r = crate::rng::substream(7, "known-noise", &[]);
        let eps: Vec<f64> = (0..map.len()).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let abar = s.alpha_bar(1);
        let values: Vec<f64> = map
            .data()
            .iter()
            .zip(&eps)
            .map(|(&v, &e)| abar.sqrt() * v + (1.0 - abar).sqrt() * e)
            .collect();
        let latent = Latent::new(1, 8, 8, values);
        let out = reverse_sample(&latent, &FixedNoise(eps), &s, 0.1, 0).unwrap();
        for (a, b) in out.data().iter().zip(map.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn reverse_is_deterministic() {
        let prior = GaussianMixturePrior::new(vec![GmComponent {
            weight: 1.0,
            mean_map: bump_mean_map(8, 8, 0.1, &[(3.0, 4.0, 0.8, 2.0)]).unwrap(),
            sigma0: 0.3,
        }])
        .unwrap();
        let predictor = AnalyticGmPredictor::new(prior);
        let s = make_cosine_schedule(32).unwrap();
        let mut r = crate::rng::substream(3, "start", &[]);
        let start = Latent::new(
            32,
            8,
            8,
            (0..64).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
        );
        let a = reverse_sample(&start, &predictor, &s, 0.1, 77).unwrap();
        let b = reverse_sample(&start, &predictor, &s, 0.1, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reverse_rejects_out_of_range_start() {
        let s = make_cosine_schedule(8).unwrap();
        let start = Latent::new(0, 4, 4, vec![0.0; 16]);
        let p = FixedNoise(vec![0.0; 16]);
        assert!(matches!(
            reverse_sample(&start, &p, &s, 0.1, 0),
            Err(DiffusionError::StepOutOfRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn alpha_bar_strictly_decreasing(steps in 2usize..200) {
            let s = make_cosine_schedule(steps).unwrap();
            prop_assert_eq!(s.alpha_bar(0), 1.0);
            for k in 1..=steps {
                prop_assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
                prop_assert!(s.beta(k) > 0.0 && s.beta(k) < 1.0);
            }
        }
    }
}
