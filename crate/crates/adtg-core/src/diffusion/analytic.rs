//! Exact noise predictor for Gaussian-mixture priors.
//!
//! When the data distribution is a Gaussian mixture with component means
//! `mu_j` and isotropic deviations `sigma0_j`, the forward-diffused
//! marginal at step `k` stays a mixture:
//!
//! ```text
//! q(e_k) = sum_j w_j N(sqrt(abar_k) mu_j, (abar_k sigma0_j^2 + 1 - abar_k) I)
//! ```
//!
//! The minimum-MSE noise estimate is `-sqrt(1 - abar_k)` times the score
//! of that density, which is computable in closed form with component
//! responsibilities evaluated through log-sum-exp.

use crate::procgen::GaussianMixturePrior;

use super::{Latent, NoisePredictor, NoiseSchedule};

/// Closed-form predictor for a [`GaussianMixturePrior`].
#[derive(Debug, Clone)]
pub struct AnalyticGmPredictor {
    prior: GaussianMixturePrior,
}

impl AnalyticGmPredictor {
    pub fn new(prior: GaussianMixturePrior) -> Self {
        Self { prior }
    }

    pub fn prior(&self) -> &GaussianMixturePrior {
        &self.prior
    }

    /// Per-component responsibilities given full-map log densities.
    fn responsibilities(&self, latent: &Latent, abar: f64) -> Vec<f64> {
        let comps = self.prior.components();
        let n = latent.values.len() as f64;
        let sqrt_abar = abar.sqrt();
        let mut log_terms = Vec::with_capacity(comps.len());
        for comp in comps {
            let var = abar * comp.sigma0 * comp.sigma0 + 1.0 - abar;
            let mut sq = 0.0;
            for (&x, &mu) in latent.values.iter().zip(comp.mean_map.data()) {
                let d = x - sqrt_abar * mu;
                sq += d * d;
            }
            let log_density =
                -0.5 * sq / var - 0.5 * n * (std::f64::consts::TAU * var).ln();
            log_terms.push(comp.weight.ln() + log_density);
        }
        let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut resp: Vec<f64> = log_terms
            .iter()
            .map(|&t| {
                let e = (t - max).exp();
                total += e;
                e
            })
            .collect();
        for r in &mut resp {
            *r /= total;
        }
        resp
    }
}

impl NoisePredictor for AnalyticGmPredictor {
    fn predict(&self, latent: &Latent, schedule: &NoiseSchedule) -> Vec<f64> {
        assert_eq!(
            (latent.width, latent.height),
            (self.prior.width(), self.prior.height()),
            "latent dimensions must match the prior"
        );
        let abar = schedule.alpha_bar(latent.step);
        let sqrt_abar = abar.sqrt();
        let noise_scale = (1.0 - abar).sqrt();
        let comps = self.prior.components();
        let resp = self.responsibilities(latent, abar);

        let mut out = vec![0.0; latent.values.len()];
        for (comp, &r) in comps.iter().zip(&resp) {
            if r == 0.0 {
                continue;
            }
            let var = abar * comp.sigma0 * comp.sigma0 + 1.0 - abar;
            let coef = r * noise_scale / var;
            for ((o, &x), &mu) in out.iter_mut().zip(&latent.values).zip(comp.mean_map.data()) {
                *o += coef * (x - sqrt_abar * mu);
            }
        }
        out
    }
}
