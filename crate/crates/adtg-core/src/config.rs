//! Run configuration: a flat `key=value` text format shared by the CLI
//! and the library entry points.
//!
//! Unknown keys are rejected, every numeric field is range-checked, and
//! [`RunConfig::render`] emits the fully resolved configuration in a form
//! that parses back identically — the backbone of the run manifest.

use thiserror::Error;

use crate::curriculum::Mode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("line {0}: expected key=value, got '{1}'")]
    BadLine(usize, String),
    #[error("key '{key}': cannot parse '{value}' as {want}")]
    BadValue { key: String, value: String, want: &'static str },
    #[error("key '{key}': {reason}")]
    OutOfRange { key: &'static str, reason: String },
    #[error("unknown mode '{0}' (expected adtg|pgc|pg|n_at|dtg, optionally with -oracle)")]
    BadMode(String),
}

/// How the variability reference scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceScale {
    /// Raw variance of the initial dataset at epoch zero.
    Initial,
    /// Fixed positive constant.
    Fixed(f64),
}

/// Full resolved configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub map_width: usize,
    pub map_height: usize,
    pub map_resolution: f64,

    pub diffusion_steps: usize,

    pub weighting_target: f64,
    pub weighting_sigma: f64,
    pub weighting_band_lo: f64,
    pub weighting_band_hi: f64,

    pub diversity_components: usize,
    pub diversity_reference: ReferenceScale,

    pub synthesis_max_sources: usize,
    pub synthesis_init_sources: usize,
    pub synthesis_subsample_cap: usize,

    pub curriculum_initial_size: usize,
    pub curriculum_new_per_epoch: usize,
    pub curriculum_epochs: usize,
    pub curriculum_eval_every: usize,
    pub curriculum_heldout_size: usize,
    pub curriculum_refresh_age: u64,
    pub curriculum_eval_pairs: usize,
    pub curriculum_plateau_window: usize,
    pub curriculum_plateau_min_delta: f64,

    pub trainer_population: usize,
    pub trainer_elite: usize,
    pub trainer_eval_pairs: usize,
    pub trainer_init_std: f64,
    pub trainer_anneal: f64,
    pub trainer_std_floor: f64,

    pub prior_components: usize,
    pub prior_sigma0: f64,
    pub prior_bumps: usize,
    pub prior_amplitude: f64,
    pub prior_bump_sigma: f64,

    pub heldout_seed: u64,
    pub heldout_rough_lo: f64,
    pub heldout_rough_hi: f64,
    pub heldout_pairs: usize,

    pub mode: Mode,
    pub seed: u64,
    pub jobs: usize,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map_width: 32,
            map_height: 32,
            map_resolution: 0.1,
            diffusion_steps: 64,
            weighting_target: 0.725,
            weighting_sigma: 0.25,
            weighting_band_lo: 0.6,
            weighting_band_hi: 0.85,
            diversity_components: 8,
            diversity_reference: ReferenceScale::Initial,
            synthesis_max_sources: 16,
            synthesis_init_sources: 8,
            synthesis_subsample_cap: 1000,
            curriculum_initial_size: 32,
            curriculum_new_per_epoch: 4,
            curriculum_epochs: 150,
            curriculum_eval_every: 10,
            curriculum_heldout_size: 16,
            curriculum_refresh_age: 5,
            curriculum_eval_pairs: 64,
            curriculum_plateau_window: 10,
            curriculum_plateau_min_delta: 0.005,
            trainer_population: 32,
            trainer_elite: 8,
            trainer_eval_pairs: 8,
            trainer_init_std: 0.5,
            trainer_anneal: 0.97,
            trainer_std_floor: 0.02,
            prior_components: 2,
            prior_sigma0: 0.02,
            prior_bumps: 3,
            prior_amplitude: 0.5,
            prior_bump_sigma: 5.0,
            heldout_seed: 0x5EED,
            heldout_rough_lo: 0.05,
            heldout_rough_hi: 0.5,
            heldout_pairs: 32,
            mode: Mode::Adtg { oracle: false },
            seed: 0,
            jobs: 0,
            out: "adtg-out".to_string(),
        }
    }
}

impl RunConfig {
    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::BadLine(lineno + 1, line.to_string()))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            key: &str,
            value: &str,
            want: &'static str,
        ) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                want,
            })
        }
        match key {
            "map.width" => self.map_width = parse(key, value, "usize")?,
            "map.height" => self.map_height = parse(key, value, "usize")?,
            "map.resolution" => self.map_resolution = parse(key, value, "f64")?,
            "diffusion.steps" => self.diffusion_steps = parse(key, value, "usize")?,
            "weighting.target" => self.weighting_target = parse(key, value, "f64")?,
            "weighting.sigma" => self.weighting_sigma = parse(key, value, "f64")?,
            "weighting.band_lo" => self.weighting_band_lo = parse(key, value, "f64")?,
            "weighting.band_hi" => self.weighting_band_hi = parse(key, value, "f64")?,
            "diversity.components" => self.diversity_components = parse(key, value, "usize")?,
            "diversity.reference" => {
                self.diversity_reference = if value == "initial" {
                    ReferenceScale::Initial
                } else {
                    ReferenceScale::Fixed(parse(key, value, "f64 or 'initial'")?)
                }
            }
            "synthesis.max_sources" => self.synthesis_max_sources = parse(key, value, "usize")?,
            "synthesis.init_sources" => self.synthesis_init_sources = parse(key, value, "usize")?,
            "synthesis.subsample_cap" => {
                self.synthesis_subsample_cap = parse(key, value, "usize")?
            }
            "curriculum.initial_size" => {
                self.curriculum_initial_size = parse(key, value, "usize")?
            }
            "curriculum.new_per_epoch" => {
                self.curriculum_new_per_epoch = parse(key, value, "usize")?
            }
            "curriculum.epochs" => self.curriculum_epochs = parse(key, value, "usize")?,
            "curriculum.eval_every" => self.curriculum_eval_every = parse(key, value, "usize")?,
            "curriculum.heldout_size" => {
                self.curriculum_heldout_size = parse(key, value, "usize")?
            }
            "curriculum.refresh_age" => self.curriculum_refresh_age = parse(key, value, "u64")?,
            "curriculum.eval_pairs" => self.curriculum_eval_pairs = parse(key, value, "usize")?,
            "curriculum.plateau_window" => {
                self.curriculum_plateau_window = parse(key, value, "usize")?
            }
            "curriculum.plateau_min_delta" => {
                self.curriculum_plateau_min_delta = parse(key, value, "f64")?
            }
            "trainer.population" => self.trainer_population = parse(key, value, "usize")?,
            "trainer.elite" => self.trainer_elite = parse(key, value, "usize")?,
            "trainer.eval_pairs" => self.trainer_eval_pairs = parse(key, value, "usize")?,
            "trainer.init_std" => self.trainer_init_std = parse(key, value, "f64")?,
            "trainer.anneal" => self.trainer_anneal = parse(key, value, "f64")?,
            "trainer.std_floor" => self.trainer_std_floor = parse(key, value, "f64")?,
            "prior.components" => self.prior_components = parse(key, value, "usize")?,
            "prior.sigma0" => self.prior_sigma0 = parse(key, value, "f64")?,
            "prior.bumps" => self.prior_bumps = parse(key, value, "usize")?,
            "prior.amplitude" => self.prior_amplitude = parse(key, value, "f64")?,
            "prior.bump_sigma" => self.prior_bump_sigma = parse(key, value, "f64")?,
            "heldout.seed" => self.heldout_seed = parse(key, value, "u64")?,
            "heldout.rough_lo" => self.heldout_rough_lo = parse(key, value, "f64")?,
            "heldout.rough_hi" => self.heldout_rough_hi = parse(key, value, "f64")?,
            "heldout.pairs" => self.heldout_pairs = parse(key, value, "usize")?,
            "mode" => self.mode = Mode::parse(value).ok_or_else(|| ConfigError::BadMode(value.to_string()))?,
            "seed" => self.seed = parse(key, value, "u64")?,
            "jobs" => self.jobs = parse(key, value, "usize")?,
            "out" => self.out = value.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Range-check every field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn fail(key: &'static str, reason: String) -> Result<(), ConfigError> {
            Err(ConfigError::OutOfRange { key, reason })
        }
        if self.map_width < 4 || self.map_height < 4 {
            return fail("map.width/map.height", "sides must be >= 4".into());
        }
        if !(self.map_resolution > 0.0) {
            return fail("map.resolution", "must be positive".into());
        }
        if self.diffusion_steps < 2 {
            return fail("diffusion.steps", "must be >= 2".into());
        }
        if !(self.weighting_target > 0.0 && self.weighting_target < 1.0) {
            return fail("weighting.target", "must lie in (0, 1)".into());
        }
        if !(self.weighting_sigma > 0.0) {
            return fail("weighting.sigma", "must be positive".into());
        }
        if !(0.0 < self.weighting_band_lo
            && self.weighting_band_lo < self.weighting_band_hi
            && self.weighting_band_hi < 1.0)
        {
            return fail("weighting.band_lo/band_hi", "need 0 < lo < hi < 1".into());
        }
        if self.diversity_components == 0 {
            return fail("diversity.components", "must be >= 1".into());
        }
        if let ReferenceScale::Fixed(v) = self.diversity_reference {
            if !(v > 0.0) {
                return fail("diversity.reference", "fixed reference must be positive".into());
            }
        }
        if !(1..=crate::guidance::MAX_SOURCES).contains(&self.synthesis_max_sources) {
            return fail("synthesis.max_sources", "must be in 1..=16".into());
        }
        if self.synthesis_init_sources == 0
            || self.synthesis_init_sources > self.synthesis_max_sources
        {
            return fail("synthesis.init_sources", "must be in 1..=max_sources".into());
        }
        if self.synthesis_subsample_cap == 0
            || self.synthesis_subsample_cap > crate::guidance::SUBSAMPLE_CAP
        {
            return fail("synthesis.subsample_cap", "must be in 1..=1000".into());
        }
        if self.curriculum_initial_size < 2 {
            return fail("curriculum.initial_size", "must be >= 2".into());
        }
        if self.curriculum_eval_every == 0 {
            return fail("curriculum.eval_every", "must be >= 1".into());
        }
        if self.curriculum_refresh_age == 0 {
            return fail("curriculum.refresh_age", "must be >= 1".into());
        }
        if self.curriculum_eval_pairs == 0 {
            return fail("curriculum.eval_pairs", "must be >= 1".into());
        }
        if !(self.curriculum_plateau_min_delta >= 0.0) {
            return fail("curriculum.plateau_min_delta", "must be >= 0".into());
        }
        if self.curriculum_heldout_size == 0 {
            return fail("curriculum.heldout_size", "must be >= 1".into());
        }
        if self.trainer_population == 0 {
            return fail("trainer.population", "must be >= 1".into());
        }
        if self.trainer_elite == 0 || self.trainer_elite > self.trainer_population {
            return fail("trainer.elite", "must be in 1..=population".into());
        }
        if self.trainer_eval_pairs == 0 {
            return fail("trainer.eval_pairs", "must be >= 1".into());
        }
        if !(self.trainer_init_std >= 0.0) || !(self.trainer_std_floor >= 0.0) {
            return fail("trainer.init_std/std_floor", "must be >= 0".into());
        }
        if !(self.trainer_anneal > 0.0 && self.trainer_anneal <= 1.0) {
            return fail("trainer.anneal", "must lie in (0, 1]".into());
        }
        if self.prior_components == 0 || self.prior_bumps == 0 {
            return fail("prior.components/bumps", "must be >= 1".into());
        }
        if !(self.prior_sigma0 > 0.0) || !(self.prior_amplitude > 0.0) || !(self.prior_bump_sigma > 0.0)
        {
            return fail("prior.*", "sigma0, amplitude, bump_sigma must be positive".into());
        }
        if !(0.0 < self.heldout_rough_lo && self.heldout_rough_lo < self.heldout_rough_hi) {
            return fail("heldout.rough_lo/rough_hi", "need 0 < lo < hi".into());
        }
        if self.heldout_pairs == 0 {
            return fail("heldout.pairs", "must be >= 1".into());
        }
        Ok(())
    }

    /// Non-fatal configuration warnings.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.weighting_band_lo < self.weighting_target
            && self.weighting_target < self.weighting_band_hi)
        {
            out.push(format!(
                "weighting.target {} lies outside the band [{}, {}]",
                self.weighting_target, self.weighting_band_lo, self.weighting_band_hi
            ));
        }
        out
    }

    /// Emit the resolved configuration; parsing the output reproduces the
    /// config exactly.
    pub fn render(&self) -> String {
        let reference = match self.diversity_reference {
            ReferenceScale::Initial => "initial".to_string(),
            ReferenceScale::Fixed(v) => format!("{v}"),
        };
        let mut lines = vec![
            format!("map.width={}", self.map_width),
            format!("map.height={}", self.map_height),
            format!("map.resolution={}", self.map_resolution),
            format!("diffusion.steps={}", self.diffusion_steps),
            format!("weighting.target={}", self.weighting_target),
            format!("weighting.sigma={}", self.weighting_sigma),
            format!("weighting.band_lo={}", self.weighting_band_lo),
            format!("weighting.band_hi={}", self.weighting_band_hi),
            format!("diversity.components={}", self.diversity_components),
            format!("diversity.reference={reference}"),
            format!("synthesis.max_sources={}", self.synthesis_max_sources),
            format!("synthesis.init_sources={}", self.synthesis_init_sources),
            format!("synthesis.subsample_cap={}", self.synthesis_subsample_cap),
            format!("curriculum.initial_size={}", self.curriculum_initial_size),
            format!("curriculum.new_per_epoch={}", self.curriculum_new_per_epoch),
            format!("curriculum.epochs={}", self.curriculum_epochs),
            format!("curriculum.eval_every={}", self.curriculum_eval_every),
            format!("curriculum.heldout_size={}", self.curriculum_heldout_size),
            format!("curriculum.refresh_age={}", self.curriculum_refresh_age),
            format!("curriculum.eval_pairs={}", self.curriculum_eval_pairs),
            format!("curriculum.plateau_window={}", self.curriculum_plateau_window),
            format!("curriculum.plateau_min_delta={}", self.curriculum_plateau_min_delta),
            format!("trainer.population={}", self.trainer_population),
            format!("trainer.elite={}", self.trainer_elite),
            format!("trainer.eval_pairs={}", self.trainer_eval_pairs),
            format!("trainer.init_std={}", self.trainer_init_std),
            format!("trainer.anneal={}", self.trainer_anneal),
            format!("trainer.std_floor={}", self.trainer_std_floor),
            format!("prior.components={}", self.prior_components),
            format!("prior.sigma0={}", self.prior_sigma0),
            format!("prior.bumps={}", self.prior_bumps),
            format!("prior.amplitude={}", self.prior_amplitude),
            format!("prior.bump_sigma={}", self.prior_bump_sigma),
            format!("heldout.seed={}", self.heldout_seed),
            format!("heldout.rough_lo={}", self.heldout_rough_lo),
            format!("heldout.rough_hi={}", self.heldout_rough_hi),
            format!("heldout.pairs={}", self.heldout_pairs),
            format!("mode={}", self.mode),
            format!("seed={}", self.seed),
            format!("jobs={}", self.jobs),
            format!("out={}", self.out),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    pub fn weighting_params(&self) -> crate::guidance::WeightingParams {
        crate::guidance::WeightingParams {
            target: self.weighting_target,
            sigma: self.weighting_sigma,
            band_lo: self.weighting_band_lo,
            band_hi: self.weighting_band_hi,
        }
    }

    pub fn selection_config(&self) -> crate::guidance::SelectionConfig {
        crate::guidance::SelectionConfig {
            max_sources: self.synthesis_max_sources,
            init_sources: self.synthesis_init_sources,
            subsample_cap: self.synthesis_subsample_cap,
        }
    }

    pub fn trainer_config(&self) -> crate::learner::TrainerConfig {
        crate::learner::TrainerConfig {
            population: self.trainer_population,
            elite: self.trainer_elite,
            eval_pairs: self.trainer_eval_pairs,
            init_std: self.trainer_init_std,
            anneal: self.trainer_anneal,
            std_floor: self.trainer_std_floor,
        }
    }

    pub fn prior(&self) -> Result<crate::procgen::GaussianMixturePrior, crate::procgen::PriorError> {
        crate::procgen::recipe_prior(
            self.map_width,
            self.map_height,
            self.map_resolution,
            self.prior_components,
            self.prior_bumps,
            self.prior_amplitude,
            self.prior_bump_sigma,
            self.prior_sigma0,
            crate::rng::child(self.seed, "prior", &[]),
        )
    }
}
