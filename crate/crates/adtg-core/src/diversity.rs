//! Dataset variability via PCA and the forward-step scheduler.
//!
//! Variability is the sum of the top-`m` principal-component variances of
//! the flattened, centered maps, normalized by a reference scale and
//! clamped to `[0, 1]`. The scheduler maps variability to the reverse
//! starting step linearly: low variability pushes synthesis toward pure
//! noise (novel terrain), high variability keeps it close to the sources.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::heightfield::Heightmap;

#[derive(Debug, Error)]
pub enum DiversityError {
    #[error("variability needs at least 2 maps, got {0}")]
    TooFewMaps(usize),
    #[error("map {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch { index: usize, got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("m must be >= 1")]
    ZeroComponents,
    #[error("reference scale {0} must be positive")]
    NonPositiveReference(f64),
}

/// Variability assessment of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariabilityReport {
    /// `clamp(raw_variance / reference_scale, 0, 1)`.
    pub lambda_var: f64,
    /// Sum of the top-`m` principal-component variances.
    pub raw_variance: f64,
    /// Number of components summed.
    pub m: usize,
    /// Normalizer.
    pub reference_scale: f64,
}

/// Sum of the top-`m` principal-component variances of the dataset
/// (population covariance). Uses the Gram dual when the dataset is smaller
/// than the flattened dimension.
pub fn top_component_variance(maps: &[&Heightmap], m: usize) -> Result<f64, DiversityError> {
    if maps.len() < 2 {
        return Err(DiversityError::TooFewMaps(maps.len()));
    }
    if m == 0 {
        return Err(DiversityError::ZeroComponents);
    }
    let (w, h) = (maps[0].width(), maps[0].height());
    for (index, map) in maps.iter().enumerate() {
        if map.width() != w || map.height() != h {
            return Err(DiversityError::DimensionMismatch {
                index,
                got_w: map.width(),
                got_h: map.height(),
                want_w: w,
                want_h: h,
            });
        }
    }
    let n = maps.len();
    let d = w * h;
    let mut mean = vec![0.0; d];
    for map in maps {
        for (acc, &v) in mean.iter_mut().zip(map.data()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    // Centered data matrix, n rows by d columns.
    let centered = DMatrix::from_fn(n, d, |r, c| maps[r].data()[c] - mean[c]);

    let eigenvalues = if n < d {
        // Gram dual: X X^T / n shares the nonzero spectrum of the
        // covariance X^T X / n.
        let gram = &centered * centered.transpose() / n as f64;
        gram.symmetric_eigen().eigenvalues
    } else {
        let cov = centered.transpose() * &centered / n as f64;
        cov.symmetric_eigen().eigenvalues
    };
    let mut vals: Vec<f64> = eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(vals.iter().take(m).sum())
}

/// Assess dataset variability against a positive reference scale.
pub fn assess_variability(
    maps: &[&Heightmap],
    m: usize,
    reference_scale: f64,
) -> Result<VariabilityReport, DiversityError> {
    if !(reference_scale > 0.0) || !reference_scale.is_finite() {
        return Err(DiversityError::NonPositiveReference(reference_scale));
    }
    let raw_variance = top_component_variance(maps, m)?;
    let lambda_var = (raw_variance / reference_scale).clamp(0.0, 1.0);
    Ok(VariabilityReport { lambda_var, raw_variance, m, reference_scale })
}

/// Linear scheduler `k = round(K (1 - lambda_var))`, clamped into
/// `[1, K]`; a zero-step synthesis would return the fused latent
/// unchanged, so the floor is one reverse step.
pub fn forward_step(lambda_var: f64, steps: usize) -> usize {
    let lambda = lambda_var.clamp(0.0, 1.0);
    let k = (steps as f64 * (1.0 - lambda)).round() as usize;
    k.clamp(1, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procgen::{GmComponent, GaussianMixturePrior, bump_mean_map, sample_prior};
    use proptest::prelude::*;

    fn map_from(data: Vec<f64>) -> Heightmap {
        Heightmap::new(4, 4, 0.1, data).unwrap()
    }

    #[test]
    fn identical_maps_have_zero_variability() {
        let m = map_from(vec![1.5; 16]);
        let maps = [&m, &m, &m];
        let report = assess_variability(&maps, 8, 1.0).unwrap();
        assert!(report.raw_variance.abs() < 1e-12);
        assert_eq!(report.lambda_var, 0.0);
    }

    #[test]
    fn antipodal_pair_along_unit_direction() {
        // Dataset {c v, -c v} for unit v: a single nonzero component of
        // variance c^2 under the population covariance.
        let c = 3.0;
        let mut v = vec![0.0; 16];
        // Unit direction spread over two cells.
        v[2] = (0.5f64).sqrt();
        v[9] = (0.5f64).sqrt();
        let a = map_from(v.iter().map(|x| c * x).collect());
        let b = map_from(v.iter().map(|x| -c * x).collect());
        let raw = top_component_variance(&[&a, &b], 8).unwrap();
        assert!((raw - c * c).abs() < 1e-9, "raw {raw}");
    }

    #[test]
    fn clamps_to_one() {
        let a = map_from((0..16).map(|i| i as f64).collect());
        let b = map_from((0..16).map(|i| -(i as f64)).collect());
        let report = assess_variability(&[&a, &b], 8, 1e-6).unwrap();
        assert_eq!(report.lambda_var, 1.0);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let a = map_from(vec![0.0; 16]);
        assert!(matches!(
            assess_variability(&[&a], 8, 1.0),
            Err(DiversityError::TooFewMaps(1))
        ));
        let bigger = Heightmap::flat(5, 5, 0.1).unwrap();
        assert!(matches!(
            assess_variability(&[&a, &bigger], 8, 1.0),
            Err(DiversityError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            assess_variability(&[&a, &a], 8, 0.0),
            Err(DiversityError::NonPositiveReference(_))
        ));
    }

    #[test]
    fn gram_and_direct_paths_agree() {
        // 6 maps of 16 cells: n < d exercises the Gram path; compare
        // against the direct covariance route by padding the dataset so
        // n >= d is also exercised on the same data.
        let mut rng = crate::rng::stream(31);
        use rand::Rng;
        let maps: Vec<Heightmap> = (0..6)
            .map(|_| map_from((0..16).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let refs: Vec<&Heightmap> = maps.iter().collect();
        let gram = top_component_variance(&refs, 5).unwrap();

        // Direct covariance on the same data.
        let n = maps.len();
        let d = 16;
        let mut mean = vec![0.0; d];
        for m in &maps {
            for (acc, &v) in mean.iter_mut().zip(m.data()) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= n as f64;
        }
        let centered = DMatrix::from_fn(n, d, |r, c| maps[r].data()[c] - mean[c]);
        let cov = centered.transpose() * &centered / n as f64;
        let mut vals: Vec<f64> =
            cov.symmetric_eigen().eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let direct: f64 = vals.iter().take(5).sum();

        let rel = (gram - direct).abs() / direct.max(1e-12);
        assert!(rel < 1e-8, "gram {gram} vs direct {direct}");
    }

    #[test]
    fn shift_invariance() {
        let mut rng = crate::rng::stream(5);
        use rand::Rng;
        let maps: Vec<Heightmap> = (0..4)
            .map(|_| map_from((0..16).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let refs: Vec<&Heightmap> = maps.iter().collect();
        let base = top_component_variance(&refs, 3).unwrap();
        let shifted: Vec<Heightmap> = maps
            .iter()
            .map(|m| m.with_data(m.data().iter().map(|v| v + 7.0).collect()).unwrap())
            .collect();
        let refs2: Vec<&Heightmap> = shifted.iter().collect();
        let moved = top_component_variance(&refs2, 3).unwrap();
        assert!((base - moved).abs() < 1e-9 * base.max(1.0));
    }

    #[test]
    fn two_component_prior_is_more_variable_than_one() {
        let mean_a = bump_mean_map(8, 8, 0.1, &[(2.0, 2.0, 0.8, 2.0)]).unwrap();
        let mean_b = bump_mean_map(8, 8, 0.1, &[(5.5, 5.5, -0.8, 2.0)]).unwrap();
        let single = GaussianMixturePrior::new(vec![GmComponent {
            weight: 1.0,
            mean_map: mean_a.clone(),
            sigma0: 0.1,
        }])
        .unwrap();
        let double = GaussianMixturePrior::new(vec![
            GmComponent { weight: 0.5, mean_map: mean_a, sigma0: 0.1 },
            GmComponent { weight: 0.5, mean_map: mean_b, sigma0: 0.1 },
        ])
        .unwrap();
        let draw = |prior: &GaussianMixturePrior, tag: &str| -> Vec<Heightmap> {
            (0..40)
                .map(|i| sample_prior(prior, crate::rng::child(60, tag, &[i as u64])))
                .collect()
        };
        let a = draw(&single, "single");
        let b = draw(&double, "double");
        let ra: Vec<&Heightmap> = a.iter().collect();
        let rb: Vec<&Heightmap> = b.iter().collect();
        let va = top_component_variance(&ra, 8).unwrap();
        let vb = top_component_variance(&rb, 8).unwrap();
        assert!(vb > va, "two-component {vb} <= one-component {va}");
    }

    #[test]
    fn forward_step_endpoints() {
        assert_eq!(forward_step(0.0, 64), 64);
        assert_eq!(forward_step(1.0, 64), 1);
        assert_eq!(forward_step(0.5, 64), 32);
    }

    proptest! {
        #[test]
        fn forward_step_non_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0, steps in 2usize..256) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(forward_step(lo, steps) >= forward_step(hi, steps));
            prop_assert!((1..=steps).contains(&forward_step(a, steps)));
        }
    }
}
