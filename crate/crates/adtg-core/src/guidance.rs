//! Performance-guided latent synthesis.
//!
//! New terrains are made by corrupting source terrains to a common forward
//! step, fusing the latents with weights derived from each source's
//! measured success rate, and reverse-diffusing the fused latent. The
//! weighting function
//!
//! ```text
//! w(s) = exp(-(s - target)^2 / sigma^2)
//! ```
//!
//! peaks at the target difficulty and penalizes terrains that are too easy
//! or too hard; the fusion is the self-normalized importance-sampling
//! estimate of the optimal initial noise under that weight. The predicted
//! success rate of a synthesis is the same weighted average applied to the
//! source success rates.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::TerrainRecord;
use crate::diffusion::{
    DiffusionError, Latent, NoisePredictor, NoiseSchedule, forward_diffuse, reverse_sample,
};
use crate::heightfield::Heightmap;
use crate::rng;

use rand::Rng;

/// Hard cap on fusion inputs.
pub const MAX_SOURCES: usize = 16;
/// Candidate pool cap for source selection.
pub const SUBSAMPLE_CAP: usize = 1000;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("success rate {0} outside [0, 1]")]
    SuccessOutOfRange(f64),
    #[error("synthesis input has no sources")]
    EmptySources,
    #[error("dataset has no records with measured success rates")]
    EmptyDataset,
    #[error("source count {0} exceeds {MAX_SOURCES}")]
    TooManySources(usize),
    #[error("latent at step {got}, expected {want}")]
    StepMismatch { got: usize, want: usize },
    #[error("total source weight is not positive")]
    ZeroWeightMass,
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Target difficulty, weighting temperature, and the success-rate band
/// that drives source selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingParams {
    pub target: f64,
    pub sigma: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

impl Default for WeightingParams {
    fn default() -> Self {
        // Band midpoint target with a temperature spanning the band.
        Self { target: 0.725, sigma: 0.25, band_lo: 0.6, band_hi: 0.85 }
    }
}

impl WeightingParams {
    /// `true` when the target sits inside the band; recommended but not
    /// enforced, so callers can surface a warning.
    pub fn target_in_band(&self) -> bool {
        self.band_lo < self.target && self.target < self.band_hi
    }

    pub fn in_band(&self, s: f64) -> bool {
        (self.band_lo..=self.band_hi).contains(&s)
    }
}

/// `exp(-(s - target)^2 / sigma^2)`; strictly positive, maximal at the
/// target difficulty.
pub fn weight(success_rate: f64, params: &WeightingParams) -> Result<f64, GuidanceError> {
    if !(0.0..=1.0).contains(&success_rate) || !success_rate.is_finite() {
        return Err(GuidanceError::SuccessOutOfRange(success_rate));
    }
    let d = success_rate - params.target;
    Ok((-(d * d) / (params.sigma * params.sigma)).exp())
}

/// Sources of one synthesis: latents at a common step plus their weights
/// and success rates.
#[derive(Debug)]
pub struct SynthesisInput<'a> {
    sources: Vec<(&'a TerrainRecord, Latent)>,
    weights: Vec<f64>,
    step: usize,
}

impl<'a> SynthesisInput<'a> {
    /// Validate sources and compute their weights from stored success
    /// rates.
    pub fn new(
        sources: Vec<(&'a TerrainRecord, Latent)>,
        params: &WeightingParams,
    ) -> Result<Self, GuidanceError> {
        if sources.is_empty() {
            return Err(GuidanceError::EmptySources);
        }
        if sources.len() > MAX_SOURCES {
            return Err(GuidanceError::TooManySources(sources.len()));
        }
        let step = sources[0].1.step;
        let mut weights = Vec::with_capacity(sources.len());
        for (record, latent) in &sources {
            if latent.step != step {
                return Err(GuidanceError::StepMismatch { got: latent.step, want: step });
            }
            let s = record.success_rate.ok_or(GuidanceError::EmptyDataset)?;
            weights.push(weight(s, params)?);
        }
        Ok(Self { sources, weights, step })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source_ids(&self) -> Vec<u64> {
        self.sources.iter().map(|(r, _)| r.id).collect()
    }

    /// Total weight mass; near-zero mass means every source sits far from
    /// the target difficulty (recorded as a diagnostic, synthesis still
    /// proceeds).
    pub fn weight_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Element-wise weighted mean of the source latents.
pub fn fuse_latents(input: &SynthesisInput<'_>) -> Result<Latent, GuidanceError> {
    let total = input.weight_mass();
    if !(total > 0.0) {
        return Err(GuidanceError::ZeroWeightMass);
    }
    let first = &input.sources[0].1;
    let mut acc = vec![0.0; first.values.len()];
    for ((_, latent), &w) in input.sources.iter().zip(&input.weights) {
        for (a, &v) in acc.iter_mut().zip(&latent.values) {
            *a += w * v;
        }
    }
    for a in &mut acc {
        *a /= total;
    }
    Ok(Latent::new(input.step, first.width, first.height, acc))
}

/// Weighted average of the source success rates: the predicted success
/// rate of the synthesized terrain.
pub fn predicted_success(input: &SynthesisInput<'_>) -> Result<f64, GuidanceError> {
    let total = input.weight_mass();
    if !(total > 0.0) {
        return Err(GuidanceError::ZeroWeightMass);
    }
    let mut acc = 0.0;
    for ((record, _), &w) in input.sources.iter().zip(&input.weights) {
        acc += w * record.success_rate.expect("validated at construction");
    }
    Ok(acc / total)
}

/// Knobs of the source-selection procedure.
#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig {
    /// Hard cap on the fused source count (at most [`MAX_SOURCES`]).
    pub max_sources: usize,
    /// Size of the initial out-of-band draw.
    pub init_sources: usize,
    /// Uniform sub-sample cap on the candidate pool.
    pub subsample_cap: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { max_sources: MAX_SOURCES, init_sources: MAX_SOURCES / 2, subsample_cap: SUBSAMPLE_CAP }
    }
}

/// Select synthesis sources from the dataset.
///
/// Uniformly sub-samples at most `subsample_cap` candidates, draws the
/// initial sources uniformly from candidates whose success rate lies
/// outside the band (falling back to weight-proportional sampling over all
/// candidates when none are out of band), then — while the predicted
/// success rate of the tentative input is outside the band — greedily adds
/// the highest-weight candidates that pull the prediction toward the band,
/// up to `max_sources`. Returns indices into `dataset`.
pub fn select_synthesis_sources(
    dataset: &[TerrainRecord],
    params: &WeightingParams,
    sel: &SelectionConfig,
    seed: u64,
) -> Result<Vec<usize>, GuidanceError> {
    let max_sources = sel.max_sources.min(MAX_SOURCES).max(1);
    let candidates: Vec<usize> = crate::dataset::subsample_indices(
        dataset.len(),
        sel.subsample_cap,
        rng::child(seed, "select.subsample", &[]),
    )
    .into_iter()
    .filter(|&i| dataset[i].measured())
    .collect();
    if candidates.is_empty() {
        return Err(GuidanceError::EmptyDataset);
    }

    let success = |i: usize| dataset[i].success_rate.expect("filtered to measured");
    let mut rng = rng::substream(seed, "select.draw", &[]);
    let out_of_band: Vec<usize> =
        candidates.iter().copied().filter(|&i| !params.in_band(success(i))).collect();

    let mut chosen: Vec<usize> = Vec::new();
    if !out_of_band.is_empty() {
        let mut pool = out_of_band;
        let n = sel.init_sources.clamp(1, max_sources).min(pool.len());
        for _ in 0..n {
            let j = rng.random_range(0..pool.len());
            chosen.push(pool.swap_remove(j));
        }
    } else {
        // Everything in band: weight-proportional draws over the full pool.
        let mut pool = candidates.clone();
        let n = sel.init_sources.clamp(1, max_sources).min(pool.len());
        for _ in 0..n {
            let weights: Vec<f64> =
                pool.iter().map(|&i| weight(success(i), params).unwrap()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random_range(0.0..1.0) * total;
            let mut pick = pool.len() - 1;
            for (j, &w) in weights.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = j;
                    break;
                }
            }
            chosen.push(pool.swap_remove(pick));
        }
    }
    chosen.sort_unstable();

    // Greedy band correction: highest weight first, index as tie-break.
    let mut remaining: Vec<usize> =
        candidates.iter().copied().filter(|i| !chosen.contains(i)).collect();
    remaining.sort_by(|&a, &b| {
        let wa = weight(success(a), params).unwrap();
        let wb = weight(success(b), params).unwrap();
        wb.partial_cmp(&wa).unwrap().then(a.cmp(&b))
    });
    loop {
        let pred = predicted_of(dataset, &chosen, params);
        if params.in_band(pred) || chosen.len() >= max_sources || remaining.is_empty() {
            break;
        }
        let pos = remaining.iter().position(|&i| {
            let s = success(i);
            if pred < params.band_lo { s > pred } else { s < pred }
        });
        match pos {
            Some(p) => chosen.push(remaining.remove(p)),
            None => break,
        }
    }
    Ok(chosen)
}

fn predicted_of(dataset: &[TerrainRecord], indices: &[usize], params: &WeightingParams) -> f64 {
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for &i in indices {
        let s = dataset[i].success_rate.expect("measured");
        let w = weight(s, params).unwrap();
        wsum += w;
        acc += w * s;
    }
    acc / wsum
}

/// Outcome of one synthesis: the terrain plus its provenance diagnostics.
#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub map: Heightmap,
    pub predicted_success: f64,
    pub weight_mass: f64,
    pub step: usize,
    pub source_ids: Vec<u64>,
}

/// Full synthesis: select sources, corrupt them to step `k`, fuse by
/// performance weights, reverse-diffuse to a new terrain.
pub fn synthesize(
    dataset: &[TerrainRecord],
    k: usize,
    schedule: &NoiseSchedule,
    predictor: &dyn NoisePredictor,
    params: &WeightingParams,
    sel: &SelectionConfig,
    seed: u64,
) -> Result<SynthesisOutcome, GuidanceError> {
    let indices = select_synthesis_sources(dataset, params, sel, rng::child(seed, "select", &[]))?;
    let sources: Vec<(&TerrainRecord, Latent)> = indices
        .iter()
        .enumerate()
        .map(|(i, &ix)| {
            let record = &dataset[ix];
            let latent =
                forward_diffuse(&record.map, k, schedule, rng::child(seed, "noise", &[i as u64]))?;
            Ok((record, latent))
        })
        .collect::<Result<_, GuidanceError>>()?;
    let resolution = sources[0].0.map.resolution();
    let input = SynthesisInput::new(sources, params)?;
    let fused = fuse_latents(&input)?;
    let predicted = predicted_success(&input)?;
    let map =
        reverse_sample(&fused, predictor, schedule, resolution, rng::child(seed, "reverse", &[]))?;
    Ok(SynthesisOutcome {
        map,
        predicted_success: predicted,
        weight_mass: input.weight_mass(),
        step: k,
        source_ids: input.source_ids(),
    })
}

/// Batch variant: `n` independent syntheses from independent source draws.
/// Chains run concurrently; results are ordered and independent of the
/// worker count.
pub fn synthesize_batch(
    dataset: &[TerrainRecord],
    n: usize,
    k: usize,
    schedule: &NoiseSchedule,
    predictor: &dyn NoisePredictor,
    params: &WeightingParams,
    sel: &SelectionConfig,
    seed: u64,
) -> Result<Vec<SynthesisOutcome>, GuidanceError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            synthesize(
                dataset,
                k,
                schedule,
                predictor,
                params,
                sel,
                rng::child(seed, "batch", &[i as u64]),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Origin;
    use crate::diffusion::{AnalyticGmPredictor, make_cosine_schedule};
    use crate::procgen::{GaussianMixturePrior, GmComponent, bump_mean_map, sample_prior};
    use proptest::prelude::*;

    fn params() -> WeightingParams {
        WeightingParams::default()
    }

    fn record(id: u64, elevation: f64, success: f64) -> TerrainRecord {
        let map = Heightmap::new(4, 4, 0.1, vec![elevation; 16]).unwrap();
        TerrainRecord {
            id,
            map,
            success_rate: Some(success),
            last_eval_epoch: 0,
            origin: Origin::Seed,
        }
    }

    fn const_latent(step: usize, value: f64) -> Latent {
        Latent::new(step, 4, 4, vec![value; 16])
    }

    #[test]
    fn weight_formula_values() {
        let p = params();
        assert_eq!(weight(p.target, &p).unwrap(), 1.0);
        let one_sigma = weight(p.target + p.sigma, &p).unwrap();
        assert!((one_sigma - (-1.0f64).exp()).abs() < 1e-12);
        // Hand evaluation at the lower band edge.
        let w = weight(0.6, &p).unwrap();
        assert!((w - (-0.25f64).exp()).abs() < 1e-12);
        assert!((w - 0.778801).abs() < 1e-6);
    }

    #[test]
    fn weight_rejects_out_of_range() {
        assert!(matches!(
            weight(1.2, &params()),
            Err(GuidanceError::SuccessOutOfRange(_))
        ));
        assert!(weight(-0.01, &params()).is_err());
    }

    #[test]
    fn fuse_equal_weights_is_mean() {
        let p = params();
        let a = record(1, 0.0, p.target);
        let b = record(2, 0.0, p.target);
        let input = SynthesisInput::new(
            vec![(&a, const_latent(4, 1.0)), (&b, const_latent(4, 3.0))],
            &p,
        )
        .unwrap();
        let fused = fuse_latents(&input).unwrap();
        assert!(fused.values.iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn fuse_degenerate_weight_returns_first() {
        let p = params();
        // Success at the target gives weight 1; a success far away under a
        // tiny temperature gives a denormal-scale weight.
        let sharp = WeightingParams { sigma: 0.03, ..p };
        let a = record(1, 0.0, sharp.target);
        let b = record(2, 0.0, 0.0);
        let input = SynthesisInput::new(
            vec![(&a, const_latent(4, 5.0)), (&b, const_latent(4, -5.0))],
            &sharp,
        )
        .unwrap();
        let fused = fuse_latents(&input).unwrap();
        assert!(fused.values.iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn fuse_hand_computed_three_sources() {
        // Constant latents 0, 1, 2 with weights 1, 2, 1 fuse to exactly 1.
        let p = params();
        let r0 = record(1, 0.0, p.target + p.sigma);
        let r1 = record(2, 0.0, p.target);
        let r2 = record(3, 0.0, p.target - p.sigma);
        let input = SynthesisInput::new(
            vec![
                (&r0, const_latent(8, 0.0)),
                (&r1, const_latent(8, 1.0)),
                (&r2, const_latent(8, 2.0)),
            ],
            &p,
        )
        .unwrap();
        // w0 = w2 = e^-1, w1 = 1: the same 1:2:1 shape after scaling.
        let fused = fuse_latents(&input).unwrap();
        let e = (-1.0f64).exp();
        let expected = (e * 0.0 + 1.0 + e * 2.0) / (2.0 * e + 1.0);
        assert!((expected - 1.0).abs() < 1e-12);
        assert!(fused.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn predicted_success_values() {
        let p = params();
        let a = record(1, 0.0, 0.5);
        let b = record(2, 0.0, 0.9);
        // Equal weights by symmetry around the target: 0.5 and 0.95 are not
        // symmetric, so use a pair symmetric around 0.725 instead.
        let sym_a = record(3, 0.0, p.target - 0.2);
        let sym_b = record(4, 0.0, p.target + 0.2);
        let input = SynthesisInput::new(
            vec![(&sym_a, const_latent(2, 0.0)), (&sym_b, const_latent(2, 0.0))],
            &p,
        )
        .unwrap();
        let pred = predicted_success(&input).unwrap();
        assert!((pred - p.target).abs() < 1e-12);

        let single = SynthesisInput::new(vec![(&a, const_latent(2, 0.0))], &p).unwrap();
        assert!((predicted_success(&single).unwrap() - 0.5).abs() < 1e-15);

        // Hand-evaluated chain through the weighting function.
        let lo = record(5, 0.0, 0.2);
        let hi = record(6, 0.0, 0.95);
        let input = SynthesisInput::new(
            vec![(&lo, const_latent(2, 0.0)), (&hi, const_latent(2, 0.0))],
            &p,
        )
        .unwrap();
        let w1 = (-4.41f64).exp();
        let w2 = (-0.81f64).exp();
        let expected = (w1 * 0.2 + w2 * 0.95) / (w1 + w2);
        let got = predicted_success(&input).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.930).abs() < 1e-3, "got {got}");
        let _ = b;
    }

    #[test]
    fn select_two_out_of_band_records() {
        let dataset = vec![record(10, 0.0, 0.1), record(11, 0.0, 0.95)];
        let sel = SelectionConfig::default();
        let chosen = select_synthesis_sources(&dataset, &params(), &sel, 42).unwrap();
        assert_eq!(chosen.len(), 2);
    }

    #[test]
    fn select_falls_back_when_all_in_band() {
        let dataset: Vec<TerrainRecord> =
            (0..10).map(|i| record(i, 0.0, 0.7 + (i as f64) * 0.01)).collect();
        let sel = SelectionConfig { init_sources: 4, ..Default::default() };
        let chosen = select_synthesis_sources(&dataset, &params(), &sel, 7).unwrap();
        assert_eq!(chosen.len(), 4);
    }

    #[test]
    fn select_caps_candidate_pool() {
        let dataset: Vec<TerrainRecord> =
            (0..2000).map(|i| record(i, 0.0, (i % 100) as f64 / 100.0)).collect();
        // The cap applies before any filtering; the chosen set stays small
        // either way, so check via the subsample helper directly plus the
        // selection path not erroring.
        let idx = crate::dataset::subsample_indices(2000, SUBSAMPLE_CAP, 1);
        assert!(idx.len() <= 1000);
        let sel = SelectionConfig::default();
        let chosen = select_synthesis_sources(&dataset, &params(), &sel, 3).unwrap();
        assert!(!chosen.is_empty() && chosen.len() <= MAX_SOURCES);
    }

    #[test]
    fn select_corrects_toward_band() {
        // Initial out-of-band draws are all hard; in-band records must be
        // added until the prediction lands in the band.
        let mut dataset: Vec<TerrainRecord> = (0..6).map(|i| record(i, 0.0, 0.05)).collect();
        dataset.push(record(100, 0.0, 0.72));
        dataset.push(record(101, 0.0, 0.74));
        dataset.push(record(102, 0.0, 0.70));
        let p = params();
        let sel = SelectionConfig { init_sources: 4, ..Default::default() };
        let chosen = select_synthesis_sources(&dataset, &p, &sel, 11).unwrap();
        let pred = predicted_of(&dataset, &chosen, &p);
        assert!(
            p.in_band(pred) || chosen.len() == sel.max_sources,
            "prediction {pred} with {} sources",
            chosen.len()
        );
        assert!(chosen.iter().any(|&i| dataset[i].id >= 100), "no correcting record added");
    }

    fn prior_dataset(n: usize, seed: u64) -> (Vec<TerrainRecord>, AnalyticGmPredictor) {
        let mean = bump_mean_map(8, 8, 0.1, &[(3.5, 3.5, 0.6, 2.0)]).unwrap();
        let prior = GaussianMixturePrior::new(vec![GmComponent {
            weight: 1.0,
            mean_map: mean,
            sigma0: 0.3,
        }])
        .unwrap();
        let dataset = (0..n)
            .map(|i| {
                let map = sample_prior(&prior, crate::rng::child(seed, "d", &[i as u64]));
                TerrainRecord {
                    id: i as u64,
                    map,
                    success_rate: Some(0.2 + 0.6 * (i as f64 / n as f64)),
                    last_eval_epoch: 0,
                    origin: Origin::Seed,
                }
            })
            .collect();
        (dataset, AnalyticGmPredictor::new(prior))
    }

    #[test]
    fn synthesize_small_step_stays_near_source() {
        // One source, k = 1: a single near-noiseless round trip.
        let (dataset, predictor) = prior_dataset(1, 5);
        let schedule = make_cosine_schedule(64).unwrap();
        let sel = SelectionConfig { init_sources: 1, max_sources: 1, ..Default::default() };
        let out =
            synthesize(&dataset, 1, &schedule, &predictor, &params(), &sel, 17).unwrap();
        let src = &dataset[0].map;
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in out.map.data().iter().zip(src.data()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        let rel = (num / den.max(1e-12)).sqrt();
        assert!(rel < 0.15, "relative L2 distance {rel}");
    }

    #[test]
    fn synthesize_twin_sources_halve_latent_variance() {
        // Fusing two equal-weight latents of the same map at step k leaves
        // the mean unchanged and halves the noise variance.
        let (dataset, _) = prior_dataset(1, 6);
        let map = &dataset[0].map;
        let rec = &dataset[0];
        let schedule = make_cosine_schedule(64).unwrap();
        let p = params();
        let k = 32;
        let abar = schedule.alpha_bar(k);
        let n = 4000;
        let mut single_var = 0.0;
        let mut fused_var = 0.0;
        for i in 0..n {
            let la =
                forward_diffuse(map, k, &schedule, crate::rng::child(50, "a", &[i])).unwrap();
            let lb =
                forward_diffuse(map, k, &schedule, crate::rng::child(50, "b", &[i])).unwrap();
            let input =
                SynthesisInput::new(vec![(rec, la.clone()), (rec, lb)], &p).unwrap();
            let fused = fuse_latents(&input).unwrap();
            let mean0 = abar.sqrt() * map.data()[0];
            single_var += (la.values[0] - mean0).powi(2);
            fused_var += (fused.values[0] - mean0).powi(2);
        }
        single_var /= n as f64;
        fused_var /= n as f64;
        let ratio = fused_var / single_var;
        assert!((ratio - 0.5).abs() < 0.08, "variance ratio {ratio}");
    }

    #[test]
    fn synthesize_is_deterministic() {
        let (dataset, predictor) = prior_dataset(6, 7);
        let schedule = make_cosine_schedule(32).unwrap();
        let sel = SelectionConfig { init_sources: 3, ..Default::default() };
        let a = synthesize(&dataset, 8, &schedule, &predictor, &params(), &sel, 23).unwrap();
        let b = synthesize(&dataset, 8, &schedule, &predictor, &params(), &sel, 23).unwrap();
        assert_eq!(
            crate::heightfield::to_bytes(&a.map),
            crate::heightfield::to_bytes(&b.map)
        );
        assert_eq!(a.source_ids, b.source_ids);
    }

    #[test]
    fn batch_matches_serial_composition() {
        let (dataset, predictor) = prior_dataset(6, 8);
        let schedule = make_cosine_schedule(32).unwrap();
        let sel = SelectionConfig { init_sources: 2, ..Default::default() };
        let p = params();
        let batch =
            synthesize_batch(&dataset, 3, 8, &schedule, &predictor, &p, &sel, 40).unwrap();
        for (i, out) in batch.iter().enumerate() {
            let single = synthesize(
                &dataset,
                8,
                &schedule,
                &predictor,
                &p,
                &sel,
                crate::rng::child(40, "batch", &[i as u64]),
            )
            .unwrap();
            assert_eq!(
                crate::heightfield::to_bytes(&out.map),
                crate::heightfield::to_bytes(&single.map)
            );
        }
    }

    #[test]
    fn importance_sampling_recovers_tilted_gaussian_mean() {
        // 1-D oracle: q = N(m0, s0^2), J(x) = -(x - c)^2 / sigma^2. The
        // tilted density psi ~ q exp(J) is the product of two Gaussians
        // with a closed-form mean; the self-normalized estimator must
        // approach it.
        let (m0, s0, c, sigma) = (0.2f64, 1.0f64, 1.4f64, 0.8f64);
        let prec = 1.0 / (s0 * s0) + 2.0 / (sigma * sigma);
        let exact = (m0 / (s0 * s0) + 2.0 * c / (sigma * sigma)) / prec;

        let mut r = crate::rng::substream(99, "is", &[]);
        let n = 20_000;
        let mut wsum = 0.0;
        let mut wxsum = 0.0;
        for _ in 0..n {
            let x = m0 + s0 * r.sample::<f64, _>(rand_distr::StandardNormal);
            let w = (-(x - c) * (x - c) / (sigma * sigma)).exp();
            wsum += w;
            wxsum += w * x;
        }
        let estimate = wxsum / wsum;
        assert!((estimate - exact).abs() < 0.05, "estimate {estimate} vs exact {exact}");
    }

    proptest! {
        #[test]
        fn weight_symmetric_and_decreasing(d in 0.0f64..0.27, step in 0.001f64..0.05) {
            let p = params();
            let w_minus = weight(p.target - d, &p).unwrap();
            let w_plus = weight(p.target + d, &p).unwrap();
            prop_assert!((w_minus - w_plus).abs() < 1e-12);
            let farther = weight(p.target + d + step, &p).unwrap();
            prop_assert!(farther < w_plus);
        }

        #[test]
        fn fusion_scale_invariant_for_power_of_two(exp in -8i32..8) {
            // Scaling all weights by 2^j is exact in floating point, so the
            // fused latent must be bit-identical.
            let p = params();
            let scale = (2.0f64).powi(exp);
            let base = [0.5f64, 0.9, 0.3];
            let latents = [1.25f64, -0.5, 3.5];
            let fuse = |weights: &[f64]| {
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                for (w, v) in weights.iter().zip(latents) {
                    acc += w * v;
                }
                acc / total
            };
            let weights: Vec<f64> = base.iter().map(|s| weight(*s, &p).unwrap()).collect();
            let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
            prop_assert_eq!(fuse(&weights).to_bits(), fuse(&scaled).to_bits());
        }

        #[test]
        fn fusion_stays_in_envelope(seed in 0u64..300) {
            let p = params();
            let mut r = crate::rng::stream(seed);
            use rand::Rng as _;
            let n = r.random_range(2..5usize);
            let records: Vec<TerrainRecord> = (0..n)
                .map(|i| record(i as u64, 0.0, r.random_range(0.0..1.0)))
                .collect();
            let latents: Vec<Latent> = (0..n)
                .map(|_| {
                    Latent::new(3, 4, 4, (0..16).map(|_| r.random_range(-2.0..2.0)).collect())
                })
                .collect();
            let sources: Vec<(&TerrainRecord, Latent)> =
                records.iter().zip(latents.iter().cloned()).collect();
            let input = SynthesisInput::new(sources, &p).unwrap();
            let fused = fuse_latents(&input).unwrap();
            for cell in 0..16 {
                let lo = latents.iter().map(|l| l.values[cell]).fold(f64::INFINITY, f64::min);
                let hi =
                    latents.iter().map(|l| l.values[cell]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(fused.values[cell] >= lo - 1e-12 && fused.values[cell] <= hi + 1e-12);
            }
        }
    }
}
