//! Adaptive curriculum loop and its baselines.
//!
//! One epoch of the adaptive loop: refresh stale success rates on the
//! candidate pool, select a training terrain by performance weight, run
//! one policy optimization step on it, assess dataset variability, pick
//! the forward step, synthesize new terrains, measure them, and append
//! them to the dataset. Baseline modes share the same skeleton with the
//! generator and selector swapped out:
//!
//! - `pgc`: procedural generation whose family difficulty parameters adapt
//!   by the measured success of the terrains they produce.
//! - `pg`: uniform random procedural parameters, uniform selection.
//! - `n_at`: fixed initial dataset, weighted selection, no generation.
//! - `dtg`: diffusion samples from pure noise at `k = K`, uniform
//!   selection.
//!
//! Every mode has an `-oracle` variant that substitutes the deterministic
//! roughness oracle for policy rollouts, which removes training noise from
//! curriculum-machinery experiments.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ReferenceScale, RunConfig};
use crate::dataset::{Origin, TerrainRecord, subsample_indices};
use crate::diffusion::{
    AnalyticGmPredictor, DiffusionError, Latent, NoiseSchedule, make_cosine_schedule,
    reverse_sample,
};
use crate::diversity::{DiversityError, forward_step, top_component_variance};
use crate::guidance::{self, GuidanceError, WeightingParams};
use crate::heightfield::{Heightmap, HeightfieldError, compute_stats, read_heightmap, write_heightmap};
use crate::learner::{PolicyParams, optimize_step};
use crate::navsim;
use crate::procgen::{self, ProcGenError, ProcGenKind, ProcGenSpec, PriorError};
use crate::rng;

use rand_distr::StandardNormal;

/// Episode returns never exceed the success reward; heldout returns are
/// normalized by this bound.
pub const RETURN_UPPER_BOUND: f64 = 5.0;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("epoch {epoch}: {source}")]
    AtEpoch { epoch: usize, source: Box<CurriculumError> },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {0} has no measured success rate")]
    Unmeasured(u64),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
    #[error(transparent)]
    ProcGen(#[from] ProcGenError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Heightfield(#[from] HeightfieldError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CurriculumError {
    fn at(epoch: usize, source: CurriculumError) -> Self {
        CurriculumError::AtEpoch { epoch, source: Box::new(source) }
    }
}

/// Curriculum mode: the generator/selector family plus the difficulty
/// signal (policy rollouts or the roughness oracle).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Adtg { oracle: bool },
    Pgc { oracle: bool },
    Pg { oracle: bool },
    NAt { oracle: bool },
    Dtg { oracle: bool },
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        let (family, oracle) = match s.strip_suffix("-oracle") {
            Some(prefix) => (prefix, true),
            None => (s, false),
        };
        match family {
            "adtg" => Some(Mode::Adtg { oracle }),
            "pgc" => Some(Mode::Pgc { oracle }),
            "pg" => Some(Mode::Pg { oracle }),
            "n_at" => Some(Mode::NAt { oracle }),
            "dtg" => Some(Mode::Dtg { oracle }),
            _ => None,
        }
    }

    pub fn oracle(&self) -> bool {
        match *self {
            Mode::Adtg { oracle }
            | Mode::Pgc { oracle }
            | Mode::Pg { oracle }
            | Mode::NAt { oracle }
            | Mode::Dtg { oracle } => oracle,
        }
    }

    fn family(&self) -> &'static str {
        match self {
            Mode::Adtg { .. } => "adtg",
            Mode::Pgc { .. } => "pgc",
            Mode::Pg { .. } => "pg",
            Mode::NAt { .. } => "n_at",
            Mode::Dtg { .. } => "dtg",
        }
    }

    /// Weighted terrain selection (as opposed to uniform).
    fn weighted_selection(&self) -> bool {
        matches!(self, Mode::Adtg { .. } | Mode::Pgc { .. } | Mode::NAt { .. })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.family(), if self.oracle() { "-oracle" } else { "" })
    }
}

/// Evolving curriculum state.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    pub dataset: Vec<TerrainRecord>,
    pub policy: PolicyParams,
    pub epoch: usize,
    pub lambda_history: Vec<f64>,
    pub root_seed: u64,
    next_id: u64,
}

impl CurriculumState {
    fn push(&mut self, map: Heightmap, origin: Origin, success: f64, epoch: usize) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.dataset.push(TerrainRecord {
            id,
            map,
            success_rate: Some(success),
            last_eval_epoch: epoch as u64,
            origin,
        });
        id
    }
}

/// One held-out evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldoutPoint {
    pub epoch: usize,
    pub normalized_return: f64,
    pub success: f64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub state: CurriculumState,
    pub metrics_csv: String,
    pub heldout_maps: Vec<Heightmap>,
    pub heldout_history: Vec<HeldoutPoint>,
    pub stopped_early: bool,
}

pub const METRICS_HEADER: &str =
    "epoch,phase,env_id,success_rate,lambda_var,k,heldout_return,heldout_success,wall_ms";

/// Metrics CSV row builder with deterministic formatting. The `wall_ms`
/// column is written as zero so metrics files are byte-identical across
/// reruns and worker counts; wall-clock timing lives in the run manifest.
struct Metrics {
    rows: Vec<String>,
}

impl Metrics {
    fn new() -> Self {
        Self { rows: vec![METRICS_HEADER.to_string()] }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        epoch: usize,
        phase: &str,
        env_id: Option<u64>,
        success: Option<f64>,
        lambda_var: Option<f64>,
        k: Option<usize>,
        heldout_return: Option<f64>,
        heldout_success: Option<f64>,
    ) {
        let fmt_f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        self.rows.push(format!(
            "{},{},{},{},{},{},{},{},0",
            epoch,
            phase,
            env_id.map(|v| v.to_string()).unwrap_or_default(),
            fmt_f(success),
            fmt_f(lambda_var),
            k.map(|v| v.to_string()).unwrap_or_default(),
            fmt_f(heldout_return),
            fmt_f(heldout_success),
        ));
    }

    fn finish(self) -> String {
        let mut out = self.rows.join("\n");
        out.push('\n');
        out
    }
}

/// Weighted selection: sample one measured record with probability
/// proportional to its weight under the given parameters.
pub fn selector(
    dataset: &[TerrainRecord],
    params: &WeightingParams,
    seed: u64,
) -> Result<usize, CurriculumError> {
    if dataset.is_empty() {
        return Err(CurriculumError::EmptyDataset);
    }
    let mut weights = Vec::with_capacity(dataset.len());
    for record in dataset {
        let s = record.success_rate.ok_or(CurriculumError::Unmeasured(record.id))?;
        weights.push(guidance::weight(s, params).map_err(CurriculumError::from)?);
    }
    let total: f64 = weights.iter().sum();
    let mut r = rng::substream(seed, "selector", &[]);
    if !(total > 0.0) {
        return Ok(r.random_range(0..dataset.len()));
    }
    let mut u = r.random_range(0.0..1.0) * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return Ok(i);
        }
    }
    Ok(dataset.len() - 1)
}

/// Build the frozen held-out evaluation set: terrains from mixed families
/// rescaled so their roughness values span the configured range exactly.
/// Derived solely from `heldout.seed`, never from the run seed, so every
/// run of an experiment shares the same benchmark.
pub fn build_heldout(config: &RunConfig) -> Result<Vec<Heightmap>, CurriculumError> {
    let n = config.curriculum_heldout_size;
    let (w, h, res) = (config.map_width, config.map_height, config.map_resolution);
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        let target = config.heldout_rough_lo
            + t * (config.heldout_rough_hi - config.heldout_rough_lo);
        let seed = rng::child(config.heldout_seed, "heldout", &[i as u64]);
        let base = match i % 4 {
            0 => procgen::generate_procedural(
                &ProcGenSpec { kind: ProcGenKind::Wave { count: 3, amplitude: 0.5 }, seed },
                w,
                h,
                res,
            )?,
            1 => procgen::generate_procedural(
                &ProcGenSpec {
                    kind: ProcGenKind::RandomUniform { height: 0.3, step: 0.03 },
                    seed,
                },
                w,
                h,
                res,
            )?,
            2 => procgen::generate_procedural(
                &ProcGenSpec {
                    kind: ProcGenKind::DiscreteObstacles { height: 0.5, size: 0.4, count: 6 },
                    seed,
                },
                w,
                h,
                res,
            )?,
            _ => {
                let mut r = rng::stream(seed);
                let bumps: Vec<(f64, f64, f64, f64)> = (0..4)
                    .map(|_| {
                        (
                            r.random_range(0.0..(w - 1) as f64),
                            r.random_range(0.0..(h - 1) as f64),
                            r.random_range(-1.0..1.0),
                            r.random_range(2.0..5.0),
                        )
                    })
                    .collect();
                procgen::bump_mean_map(w, h, res, &bumps)?
            }
        };
        // Roughness scales linearly with elevation; rescale exactly onto
        // the target.
        let rough = compute_stats(&base).roughness;
        let map = if rough > 1e-9 {
            let scale = target / rough;
            base.with_data(base.data().iter().map(|v| v * scale).collect())?
        } else {
            base
        };
        maps.push(map);
    }
    Ok(maps)
}

/// Difficulty signal for a terrain under the given mode.
fn measure(
    map: &Heightmap,
    policy: &PolicyParams,
    oracle: bool,
    eval_pairs: usize,
    seed: u64,
) -> f64 {
    if oracle {
        navsim::oracle_success_default(map)
    } else {
        navsim::success_rate(map, policy, eval_pairs, seed).rate
    }
}

/// Per-family difficulty parameters of the procedural curriculum.
#[derive(Debug, Clone, Copy)]
struct PgcState {
    slope_grade: f64,
    ru_height: f64,
    obstacle_height: f64,
    wave_amp: f64,
}

impl PgcState {
    fn easiest() -> Self {
        Self { slope_grade: 0.05, ru_height: 0.05, obstacle_height: 0.4, wave_amp: 0.1 }
    }

    fn spec(&self, family: usize, seed: u64) -> ProcGenSpec {
        let kind = match family % 4 {
            0 => ProcGenKind::Slope { grade: self.slope_grade },
            1 => ProcGenKind::RandomUniform { height: self.ru_height, step: 0.025 },
            2 => ProcGenKind::DiscreteObstacles {
                height: self.obstacle_height,
                size: 0.5,
                count: 8,
            },
            _ => ProcGenKind::Wave { count: 4, amplitude: self.wave_amp },
        };
        ProcGenSpec { kind, seed }
    }

    /// Scale the family's primary difficulty parameter: up when the
    /// terrain was too easy, down when too hard, clamped to legal ranges.
    fn adapt(&mut self, family: usize, success: f64, params: &WeightingParams) {
        let factor = if success > params.band_hi {
            1.15
        } else if success < params.band_lo {
            0.85
        } else {
            return;
        };
        match family % 4 {
            0 => self.slope_grade = (self.slope_grade * factor).clamp(0.05, procgen::SLOPE_MAX),
            1 => self.ru_height = (self.ru_height * factor).clamp(0.01, 0.45),
            2 => self.obstacle_height = (self.obstacle_height * factor).clamp(0.4, 10.0),
            _ => self.wave_amp = (self.wave_amp * factor).clamp(0.1, 1.0),
        }
    }
}

/// Run the configured curriculum. Deterministic in the config (including
/// its seed); the metrics CSV is byte-identical across reruns and worker
/// counts.
pub fn run(config: &RunConfig) -> Result<RunArtifacts, CurriculumError> {
    let root = config.seed;
    let mode = config.mode;
    let oracle = mode.oracle();
    let steps = config.diffusion_steps;
    let schedule = make_cosine_schedule(steps)?;
    let params = config.weighting_params();
    let sel_cfg = config.selection_config();
    let trainer = config.trainer_config();
    let prior = config.prior()?;
    let predictor = AnalyticGmPredictor::new(prior.clone());
    let heldout_maps = build_heldout(config)?;

    // Initial dataset: diffusion-family modes seed from the prior, the
    // procedural modes from their own generator family.
    let mut state = CurriculumState {
        dataset: Vec::new(),
        policy: PolicyParams::zeros(),
        epoch: 0,
        lambda_history: Vec::new(),
        root_seed: root,
        next_id: 0,
    };
    let mut pgc = PgcState::easiest();
    for i in 0..config.curriculum_initial_size {
        let seed = rng::child(root, "init", &[i as u64]);
        let (map, origin) = match mode {
            Mode::Pgc { .. } => {
                (procgen::generate_procedural(&pgc.spec(i, seed), config.map_width, config.map_height, config.map_resolution)?, Origin::Procedural)
            }
            Mode::Pg { .. } => {
                let spec = procgen::random_spec(seed);
                (procgen::generate_procedural(&spec, config.map_width, config.map_height, config.map_resolution)?, Origin::Procedural)
            }
            _ => (procgen::sample_prior(&prior, seed), Origin::Seed),
        };
        let id = state.next_id;
        state.next_id += 1;
        state.dataset.push(TerrainRecord::new(id, map, origin));
    }

    // Variability reference: raw variance of the initial dataset.
    let reference_scale = match config.diversity_reference {
        ReferenceScale::Fixed(v) => v,
        ReferenceScale::Initial => {
            let maps: Vec<&Heightmap> = state.dataset.iter().map(|r| &r.map).collect();
            top_component_variance(&maps, config.diversity_components)?.max(1e-12)
        }
    };

    let mut metrics = Metrics::new();
    let mut heldout_history: Vec<HeldoutPoint> = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..config.curriculum_epochs {
        state.epoch = epoch;
        run_epoch(
            config,
            &mut state,
            &mut pgc,
            &schedule,
            &predictor,
            &params,
            &sel_cfg,
            &trainer,
            reference_scale,
            epoch,
            &mut metrics,
        )
        .map_err(|e| CurriculumError::at(epoch, e))?;

        let last = epoch + 1 == config.curriculum_epochs;
        if epoch % config.curriculum_eval_every == 0 || last {
            let point = eval_heldout(config, &state.policy, &heldout_maps, oracle, epoch);
            metrics.push(
                epoch,
                "eval",
                None,
                None,
                None,
                None,
                Some(point.normalized_return),
                Some(point.success),
            );
            heldout_history.push(point);
            // Plateau rule: stop when the normalized return improved less
            // than the threshold over the trailing window of evaluations.
            let window = config.curriculum_plateau_window;
            if window > 0 && heldout_history.len() > window {
                let prev = heldout_history[heldout_history.len() - 1 - window];
                if point.normalized_return - prev.normalized_return
                    < config.curriculum_plateau_min_delta
                {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(RunArtifacts {
        state,
        metrics_csv: metrics.finish(),
        heldout_maps,
        heldout_history,
        stopped_early,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    config: &RunConfig,
    state: &mut CurriculumState,
    pgc: &mut PgcState,
    schedule: &NoiseSchedule,
    predictor: &AnalyticGmPredictor,
    params: &WeightingParams,
    sel_cfg: &guidance::SelectionConfig,
    trainer: &crate::learner::TrainerConfig,
    reference_scale: f64,
    epoch: usize,
    metrics: &mut Metrics,
) -> Result<(), CurriculumError> {
    let root = state.root_seed;
    let mode = config.mode;
    let oracle = mode.oracle();
    let steps = config.diffusion_steps;

    // Candidate pool for this epoch.
    let pool = subsample_indices(
        state.dataset.len(),
        config.synthesis_subsample_cap,
        rng::child(root, "pool", &[epoch as u64]),
    );

    // Refresh success rates: unmeasured records always; aged records when
    // selection is weighted (uniform selection never reads the rates).
    let refresh: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| {
            let r = &state.dataset[i];
            !r.measured()
                || (mode.weighted_selection()
                    && epoch as u64 >= r.last_eval_epoch + config.curriculum_refresh_age)
        })
        .collect();
    let rates: Vec<(usize, f64)> = refresh
        .par_iter()
        .map(|&i| {
            let record = &state.dataset[i];
            let seed = rng::child(root, "measure", &[record.id, epoch as u64]);
            (i, measure(&record.map, &state.policy, oracle, config.curriculum_eval_pairs, seed))
        })
        .collect();
    for (i, rate) in rates {
        state.dataset[i].success_rate = Some(rate);
        state.dataset[i].last_eval_epoch = epoch as u64;
    }

    // Selection over the pool.
    let pool_records: Vec<TerrainRecord> =
        pool.iter().map(|&i| state.dataset[i].clone()).collect();
    let selected_pool_ix = if mode.weighted_selection() {
        selector(&pool_records, params, rng::child(root, "select", &[epoch as u64]))?
    } else {
        rng::substream(root, "select", &[epoch as u64]).random_range(0..pool_records.len())
    };
    let selected = &pool_records[selected_pool_ix];
    metrics.push(
        epoch,
        "select",
        Some(selected.id),
        selected.success_rate,
        None,
        None,
        None,
        None,
    );

    // Policy update on the selected terrain.
    if !oracle {
        let (next, _) = optimize_step(
            &state.policy,
            &selected.map,
            trainer,
            epoch,
            rng::child(root, "optim", &[epoch as u64]),
        );
        state.policy = next;
    }

    // Dataset evolution.
    match mode {
        Mode::NAt { .. } => {}
        Mode::Adtg { .. } => {
            let pool_maps: Vec<&Heightmap> = pool_records.iter().map(|r| &r.map).collect();
            let raw = top_component_variance(&pool_maps, config.diversity_components)?;
            let lambda = (raw / reference_scale).clamp(0.0, 1.0);
            state.lambda_history.push(lambda);
            let k = forward_step(lambda, steps);
            let outcomes = guidance::synthesize_batch(
                &pool_records,
                config.curriculum_new_per_epoch,
                k,
                schedule,
                predictor,
                params,
                sel_cfg,
                rng::child(root, "synth", &[epoch as u64]),
            )?;
            for (i, outcome) in outcomes.into_iter().enumerate() {
                let seed = rng::child(root, "measure.new", &[epoch as u64, i as u64]);
                let s = measure(
                    &outcome.map,
                    &state.policy,
                    oracle,
                    config.curriculum_eval_pairs,
                    seed,
                );
                let id = state.push(outcome.map, Origin::Synthesized, s, epoch);
                metrics.push(
                    epoch,
                    "synthesize",
                    Some(id),
                    Some(s),
                    Some(lambda),
                    Some(k),
                    None,
                    None,
                );
            }
        }
        Mode::Dtg { .. } => {
            // Unguided generation: reverse chains from pure noise.
            let (w, h) = (config.map_width, config.map_height);
            let outcomes: Vec<Heightmap> = (0..config.curriculum_new_per_epoch)
                .into_par_iter()
                .map(|i| {
                    let seed = rng::child(root, "dtg", &[epoch as u64, i as u64]);
                    let mut r = rng::substream(seed, "start", &[]);
                    let values: Vec<f64> =
                        (0..w * h).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                    let start = Latent::new(steps, w, h, values);
                    reverse_sample(
                        &start,
                        predictor,
                        schedule,
                        config.map_resolution,
                        rng::child(seed, "reverse", &[]),
                    )
                })
                .collect::<Result<_, _>>()?;
            for (i, map) in outcomes.into_iter().enumerate() {
                let seed = rng::child(root, "measure.new", &[epoch as u64, i as u64]);
                let s = measure(&map, &state.policy, oracle, config.curriculum_eval_pairs, seed);
                let id = state.push(map, Origin::Synthesized, s, epoch);
                metrics.push(epoch, "synthesize", Some(id), Some(s), None, Some(steps), None, None);
            }
        }
        Mode::Pgc { .. } => {
            for i in 0..config.curriculum_new_per_epoch {
                let family = epoch * config.curriculum_new_per_epoch + i;
                let spec = pgc.spec(family, rng::child(root, "pgc", &[epoch as u64, i as u64]));
                let map = procgen::generate_procedural(
                    &spec,
                    config.map_width,
                    config.map_height,
                    config.map_resolution,
                )?;
                let seed = rng::child(root, "measure.new", &[epoch as u64, i as u64]);
                let s = measure(&map, &state.policy, oracle, config.curriculum_eval_pairs, seed);
                pgc.adapt(family, s, params);
                let id = state.push(map, Origin::Procedural, s, epoch);
                metrics.push(epoch, "generate", Some(id), Some(s), None, None, None, None);
            }
        }
        Mode::Pg { .. } => {
            for i in 0..config.curriculum_new_per_epoch {
                let spec = procgen::random_spec(rng::child(root, "pg", &[epoch as u64, i as u64]));
                let map = procgen::generate_procedural(
                    &spec,
                    config.map_width,
                    config.map_height,
                    config.map_resolution,
                )?;
                let seed = rng::child(root, "measure.new", &[epoch as u64, i as u64]);
                let s = measure(&map, &state.policy, oracle, config.curriculum_eval_pairs, seed);
                let id = state.push(map, Origin::Procedural, s, epoch);
                metrics.push(epoch, "generate", Some(id), Some(s), None, None, None, None);
            }
        }
    }
    Ok(())
}

/// Evaluate the policy on the frozen held-out set with frozen pair seeds.
pub fn eval_heldout(
    config: &RunConfig,
    policy: &PolicyParams,
    heldout: &[Heightmap],
    oracle: bool,
    epoch: usize,
) -> HeldoutPoint {
    let reports: Vec<(f64, f64)> = heldout
        .par_iter()
        .enumerate()
        .map(|(i, map)| {
            if oracle {
                let s = navsim::oracle_success_default(map);
                (s, s)
            } else {
                let seed = rng::child(config.heldout_seed, "heldout.pairs", &[i as u64]);
                let report = navsim::evaluate(map, policy, config.heldout_pairs, seed);
                (report.success_rate, report.mean_return / RETURN_UPPER_BOUND)
            }
        })
        .collect();
    let n = reports.len().max(1) as f64;
    let success = reports.iter().map(|r| r.0).sum::<f64>() / n;
    let normalized_return = reports.iter().map(|r| r.1).sum::<f64>() / n;
    HeldoutPoint { epoch, normalized_return, success }
}

/// Write the run directory: metrics, manifest, policy, dataset manifest,
/// and every terrain as `terrains/NNNN.ahf`.
pub fn save_run(
    dir: &Path,
    config: &RunConfig,
    artifacts: &RunArtifacts,
    wall_ms: u128,
) -> Result<(), CurriculumError> {
    fs::create_dir_all(dir.join("terrains"))?;
    fs::write(dir.join("metrics.csv"), &artifacts.metrics_csv)?;
    let manifest = format!(
        "# adtg run manifest\nversion={}\ntotal_wall_ms={}\nstopped_early={}\n{}",
        env!("CARGO_PKG_VERSION"),
        wall_ms,
        artifacts.stopped_early,
        config.render(),
    );
    fs::write(dir.join("run_manifest"), manifest)?;

    let mut policy_csv = Vec::new();
    artifacts.state.policy.write_csv(&mut policy_csv)?;
    fs::write(dir.join("policy.csv"), policy_csv)?;

    let mut dataset_csv = String::from("id,file,success_rate,last_eval_epoch,origin\n");
    for (i, record) in artifacts.state.dataset.iter().enumerate() {
        let file = format!("terrains/{i:04}.ahf");
        write_heightmap(&record.map, &dir.join(&file))?;
        dataset_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            record.id,
            file,
            record.success_rate.map(|s| format!("{s:.6}")).unwrap_or_default(),
            record.last_eval_epoch,
            record.origin.as_str(),
        ));
    }
    fs::write(dir.join("dataset.csv"), dataset_csv)?;
    Ok(())
}

/// Load a dataset directory written by [`save_run`] (or hand-assembled:
/// a `dataset.csv` manifest next to its terrain files).
pub fn load_dataset(dir: &Path) -> Result<Vec<TerrainRecord>, CurriculumError> {
    let manifest = dir.join("dataset.csv");
    let text = fs::read_to_string(&manifest)
        .map_err(|e| CurriculumError::Checkpoint(format!("{}: {e}", manifest.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CurriculumError::Checkpoint(format!(
                "dataset.csv line {}: expected 5 fields",
                lineno + 1
            )));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| CurriculumError::Checkpoint(format!("bad id '{}'", fields[0])))?;
        let map = read_heightmap(&dir.join(fields[1]))?;
        let success_rate = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse().map_err(|_| {
                CurriculumError::Checkpoint(format!("bad success rate '{}'", fields[2]))
            })?)
        };
        let last_eval_epoch: u64 = fields[3]
            .parse()
            .map_err(|_| CurriculumError::Checkpoint(format!("bad epoch '{}'", fields[3])))?;
        let origin = Origin::parse(fields[4])
            .ok_or_else(|| CurriculumError::Checkpoint(format!("bad origin '{}'", fields[4])))?;
        records.push(TerrainRecord { id, map, success_rate, last_eval_epoch, origin });
    }
    if records.is_empty() {
        return Err(CurriculumError::EmptyDataset);
    }
    Ok(records)
}
