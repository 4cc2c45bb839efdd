//! Reference experiments: variance versus starting step, predicted-versus-
//! actual difficulty consistency, and the 1-D importance-sampling oracle.
//! Shared by the CLI and the acceptance suite.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::curriculum::{CurriculumError, HeldoutPoint};
use crate::dataset::{Origin, TerrainRecord};
use crate::diffusion::{NoisePredictor, NoiseSchedule, forward_diffuse, reverse_sample};
use crate::guidance::{self, SelectionConfig, SynthesisInput, WeightingParams};
use crate::navsim;
use crate::procgen::{GaussianMixturePrior, sample_prior};
use crate::rng;

/// Sample variance of generated terrains at one starting step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePoint {
    pub k: usize,
    pub variance: f64,
}

/// Ensemble variance of synthesized terrains as a function of the reverse
/// starting step.
///
/// The source set and fusion weights are fixed across draws so the curve
/// isolates the diffusion noise: each draw re-corrupts the same sources
/// with fresh noise, fuses them, and reverse-samples from `k`. The
/// variance is the per-cell variance across draws averaged over cells.
pub fn variance_vs_step(
    dataset: &[TerrainRecord],
    n_sources: usize,
    k_grid: &[usize],
    samples: usize,
    schedule: &NoiseSchedule,
    predictor: &dyn NoisePredictor,
    params: &WeightingParams,
    seed: u64,
) -> Result<Vec<VariancePoint>, CurriculumError> {
    let sources: Vec<&TerrainRecord> =
        dataset.iter().filter(|r| r.measured()).take(n_sources).collect();
    if sources.is_empty() {
        return Err(CurriculumError::EmptyDataset);
    }
    let resolution = sources[0].map.resolution();
    let cells = sources[0].map.len();
    let mut out = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let maps: Vec<Vec<f64>> = (0..samples)
            .into_par_iter()
            .map(|draw| -> Result<Vec<f64>, CurriculumError> {
                let draw_seed = rng::child(seed, "vark", &[k as u64, draw as u64]);
                let latents: Vec<(&TerrainRecord, crate::diffusion::Latent)> = sources
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let latent = forward_diffuse(
                            &r.map,
                            k,
                            schedule,
                            rng::child(draw_seed, "fwd", &[i as u64]),
                        )?;
                        Ok((*r, latent))
                    })
                    .collect::<Result<_, CurriculumError>>()?;
                let input = SynthesisInput::new(latents, params)
                    .map_err(CurriculumError::from)?;
                let fused = guidance::fuse_latents(&input).map_err(CurriculumError::from)?;
                let map = reverse_sample(
                    &fused,
                    predictor,
                    schedule,
                    resolution,
                    rng::child(draw_seed, "rev", &[]),
                )?;
                Ok(map.data().to_vec())
            })
            .collect::<Result<_, _>>()?;
        // Per-cell variance across draws, averaged over cells.
        let n = maps.len() as f64;
        let mut variance = 0.0;
        for c in 0..cells {
            let mean: f64 = maps.iter().map(|m| m[c]).sum::<f64>() / n;
            let var: f64 = maps.iter().map(|m| (m[c] - mean).powi(2)).sum::<f64>() / n;
            variance += var;
        }
        out.push(VariancePoint { k, variance: variance / cells as f64 });
    }
    Ok(out)
}

/// One synthesis of the difficulty-consistency experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyPoint {
    pub k: usize,
    pub predicted: f64,
    pub actual: f64,
}

/// Predicted-versus-actual success of synthesized terrains under the
/// roughness oracle.
///
/// Builds an oracle-measured dataset of prior samples, synthesizes
/// `n_syntheses` terrains cycling over starting steps up to `k_max`, and
/// records the weight-predicted success next to the oracle success of the
/// actual output.
pub fn difficulty_consistency(
    prior: &GaussianMixturePrior,
    dataset_size: usize,
    n_syntheses: usize,
    k_max: usize,
    schedule: &NoiseSchedule,
    predictor: &dyn NoisePredictor,
    params: &WeightingParams,
    sel: &SelectionConfig,
    seed: u64,
) -> Result<Vec<ConsistencyPoint>, CurriculumError> {
    let dataset: Vec<TerrainRecord> = (0..dataset_size)
        .map(|i| {
            let map = sample_prior(prior, rng::child(seed, "dataset", &[i as u64]));
            let s = navsim::oracle_success_default(&map);
            TerrainRecord {
                id: i as u64,
                map,
                success_rate: Some(s),
                last_eval_epoch: 0,
                origin: Origin::Seed,
            }
        })
        .collect();
    let k_grid: Vec<usize> =
        [4, 8, 16, 24, 32, 40, 48, 56].iter().copied().filter(|&k| k <= k_max).collect();
    (0..n_syntheses)
        .into_par_iter()
        .map(|i| {
            let k = k_grid[i % k_grid.len()];
            let outcome = guidance::synthesize(
                &dataset,
                k,
                schedule,
                predictor,
                params,
                sel,
                rng::child(seed, "synth", &[i as u64]),
            )
            .map_err(CurriculumError::from)?;
            Ok(ConsistencyPoint {
                k,
                predicted: outcome.predicted_success,
                actual: navsim::oracle_success_default(&outcome.map),
            })
        })
        .collect()
}

/// Self-normalized importance-sampling errors on the closed-form 1-D
/// instance: proposal `N(m0, s0^2)`, tilt `exp(-(x - c)^2 / sigma^2)`.
/// Returns `|estimate - exact|` for each sample count in `ns`, evaluated
/// on prefixes of a single seeded stream.
pub fn importance_sampling_errors(ns: &[usize], seed: u64) -> Vec<f64> {
    let (m0, s0, c, sigma) = (0.0f64, 1.0f64, 1.2f64, 0.7f64);
    let precision = 1.0 / (s0 * s0) + 2.0 / (sigma * sigma);
    let exact = (m0 / (s0 * s0) + 2.0 * c / (sigma * sigma)) / precision;

    let max_n = ns.iter().copied().max().unwrap_or(0);
    let mut r = rng::substream(seed, "is.oracle", &[]);
    let mut wsum = 0.0;
    let mut wxsum = 0.0;
    let mut errors = Vec::with_capacity(ns.len());
    let mut targets = ns.to_vec();
    targets.sort_unstable();
    let mut next = 0usize;
    for i in 0..max_n {
        let x = m0 + s0 * r.sample::<f64, _>(StandardNormal);
        let w = (-(x - c) * (x - c) / (sigma * sigma)).exp();
        wsum += w;
        wxsum += w * x;
        while next < targets.len() && i + 1 == targets[next] {
            errors.push((wxsum / wsum - exact).abs());
            next += 1;
        }
    }
    errors
}

/// First epoch at which the held-out success reached `threshold`.
pub fn epochs_to_reach(history: &[HeldoutPoint], threshold: f64) -> Option<usize> {
    history.iter().find(|p| p.success >= threshold).map(|p| p.epoch)
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &ix in &order[i..=j] {
            out[ix] = rank;
        }
        i = j + 1;
    }
    out
}

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 { (sorted[mid - 1] + sorted[mid]) / 2.0 } else { sorted[mid] }
}
