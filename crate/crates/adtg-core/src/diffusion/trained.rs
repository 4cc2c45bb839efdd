//! Small trainable noise predictor.
//!
//! A fully-connected net (two tanh hidden layers, linear output) maps the
//! flattened latent grid plus a sinusoidal step embedding to a flattened
//! noise prediction. Training minimizes the MSE between the true
//! corruption noise and the prediction on samples corrupted to uniformly
//! drawn steps; gradients are computed by hand so the control path stays
//! free of autodiff dependencies.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::heightfield::Heightmap;
use crate::rng;

use super::{DiffusionError, Latent, NoisePredictor, NoiseSchedule};

/// Magic prefix of the predictor blob format.
pub const PREDICTOR_MAGIC: &[u8; 10] = b"ADTG-NP v1";

/// Training hyperparameters for [`train_predictor`].
#[derive(Debug, Clone)]
pub struct TrainHyperParams {
    pub hidden_width: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub sgd_steps: usize,
}

impl Default for TrainHyperParams {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            embed_dim: 16,
            learning_rate: 1e-3,
            batch_size: 16,
            sgd_steps: 2000,
        }
    }
}

/// Dense layer dimensions: `(outputs, inputs)`.
type LayerDims = (usize, usize);

/// Flat-parameter MLP: per layer, `out*in` weights row-major followed by
/// `out` biases.
#[derive(Debug, Clone, PartialEq)]
struct Mlp {
    dims: Vec<LayerDims>,
    params: Vec<f64>,
}

impl Mlp {
    fn new(dims: Vec<LayerDims>, seed: u64) -> Self {
        let mut r = rng::substream(seed, "mlp.init", &[]);
        let mut params = Vec::with_capacity(Self::param_count(&dims));
        for &(out, inp) in &dims {
            let scale = (2.0 / (inp + out) as f64).sqrt();
            for _ in 0..out * inp {
                params.push(scale * r.sample::<f64, _>(StandardNormal));
            }
            params.extend(std::iter::repeat_n(0.0, out));
        }
        Self { dims, params }
    }

    fn param_count(dims: &[LayerDims]) -> usize {
        dims.iter().map(|&(o, i)| o * i + o).sum()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.dims[..layer].iter().map(|&(o, i)| o * i + o).sum()
    }

    /// Forward pass; hidden layers tanh, output linear. Returns all layer
    /// activations (input first) for use in backprop.
    fn forward(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        for (layer, &(out, inp)) in self.dims.iter().enumerate() {
            let base = self.layer_offset(layer);
            let x = acts.last().unwrap();
            debug_assert_eq!(x.len(), inp);
            let mut y = vec![0.0; out];
            for o in 0..out {
                let row = base + o * inp;
                let mut acc = self.params[base + out * inp + o]; // bias
                for i in 0..inp {
                    acc += self.params[row + i] * x[i];
                }
                y[o] = if layer + 1 < self.dims.len() { acc.tanh() } else { acc };
            }
            acts.push(y);
        }
        acts
    }

    /// Accumulate parameter gradients for one sample given the output-layer
    /// loss gradient. Returns nothing; adds into `grad`.
    fn backward(&self, acts: &[Vec<f64>], dloss_dout: &[f64], grad: &mut [f64]) {
        let mut delta = dloss_dout.to_vec();
        for layer in (0..self.dims.len()).rev() {
            let (out, inp) = self.dims[layer];
            let base = self.layer_offset(layer);
            let x = &acts[layer];
            let y = &acts[layer + 1];
            // Hidden layers: delta through tanh'.
            if layer + 1 < self.dims.len() {
                for o in 0..out {
                    delta[o] *= 1.0 - y[o] * y[o];
                }
            }
            for o in 0..out {
                let row = base + o * inp;
                for i in 0..inp {
                    grad[row + i] += delta[o] * x[i];
                }
                grad[base + out * inp + o] += delta[o];
            }
            if layer > 0 {
                let mut prev = vec![0.0; inp];
                for o in 0..out {
                    let row = base + o * inp;
                    for (i, p) in prev.iter_mut().enumerate() {
                        *p += delta[o] * self.params[row + i];
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Trained noise predictor with its loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPredictor {
    mlp: Mlp,
    map_cells: usize,
    embed_dim: usize,
    loss_history: Vec<f64>,
}

impl TrainedPredictor {
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn param_count(&self) -> usize {
        self.mlp.params.len()
    }

    fn input(&self, values: &[f64], step: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.map_cells + self.embed_dim);
        input.extend_from_slice(values);
        input.extend(step_embedding(step, self.embed_dim));
        input
    }
}

impl NoisePredictor for TrainedPredictor {
    fn predict(&self, latent: &Latent, _schedule: &NoiseSchedule) -> Vec<f64> {
        assert_eq!(latent.values.len(), self.map_cells, "latent size mismatch");
        let acts = self.mlp.forward(&self.input(&latent.values, latent.step));
        acts.last().unwrap().clone()
    }
}

/// Sinusoidal embedding of the step index.
fn step_embedding(step: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    let half = dim / 2;
    for i in 0..half {
        let freq = 10_000f64.powf(-(i as f64) / half as f64);
        let angle = step as f64 * freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    if dim % 2 == 1 {
        out.push(1.0);
    }
    out
}

/// One minibatch draw: corrupt a random map to a random step and expose
/// the exact noise as the regression target.
struct Batch {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn draw_batch(
    dataset: &[Heightmap],
    schedule: &NoiseSchedule,
    hp: &TrainHyperParams,
    cells: usize,
    seed: u64,
) -> Batch {
    let mut r = rng::substream(seed, "train.batch", &[]);
    let mut inputs = Vec::with_capacity(hp.batch_size);
    let mut targets = Vec::with_capacity(hp.batch_size);
    for _ in 0..hp.batch_size {
        let map = &dataset[r.random_range(0..dataset.len())];
        let k = r.random_range(1..=schedule.steps());
        let abar = schedule.alpha_bar(k);
        let (sig, noise) = (abar.sqrt(), (1.0 - abar).sqrt());
        let eps: Vec<f64> = (0..cells).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let mut input = Vec::with_capacity(cells + hp.embed_dim);
        for (v, e) in map.data().iter().zip(&eps) {
            input.push(sig * v + noise * e);
        }
        input.extend(step_embedding(k, hp.embed_dim));
        inputs.push(input);
        targets.push(eps);
    }
    Batch { inputs, targets }
}

/// Mean batch loss and the full parameter gradient.
fn batch_loss_and_grad(mlp: &Mlp, batch: &Batch, cells: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; mlp.params.len()];
    let mut loss = 0.0;
    let batch_n = batch.inputs.len() as f64;
    for (input, target) in batch.inputs.iter().zip(&batch.targets) {
        let acts = mlp.forward(input);
        let out = acts.last().unwrap();
        let mut dloss = vec![0.0; out.len()];
        for c in 0..cells {
            let d = out[c] - target[c];
            loss += d * d / (cells as f64 * batch_n);
            dloss[c] = 2.0 * d / (cells as f64 * batch_n);
        }
        mlp.backward(&acts, &dloss, &mut grad);
    }
    (loss, grad)
}

/// Fit a predictor to `dataset` by plain SGD on the noise-regression MSE.
pub fn train_predictor(
    dataset: &[Heightmap],
    schedule: &NoiseSchedule,
    hp: &TrainHyperParams,
    seed: u64,
) -> Result<TrainedPredictor, DiffusionError> {
    if dataset.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let (w, h) = (dataset[0].width(), dataset[0].height());
    for (i, m) in dataset.iter().enumerate() {
        if m.width() != w || m.height() != h {
            return Err(DiffusionError::DimensionMismatch {
                index: i,
                got_w: m.width(),
                got_h: m.height(),
                want_w: w,
                want_h: h,
            });
        }
    }
    let cells = w * h;
    let dims = vec![
        (hp.hidden_width, cells + hp.embed_dim),
        (hp.hidden_width, hp.hidden_width),
        (cells, hp.hidden_width),
    ];
    let mut mlp = Mlp::new(dims, rng::child(seed, "train.init", &[]));
    let mut loss_history = Vec::with_capacity(hp.sgd_steps);
    for step in 0..hp.sgd_steps {
        let batch = draw_batch(
            dataset,
            schedule,
            hp,
            cells,
            rng::child(seed, "train.step", &[step as u64]),
        );
        let (loss, grad) = batch_loss_and_grad(&mlp, &batch, cells);
        for (p, g) in mlp.params.iter_mut().zip(&grad) {
            *p -= hp.learning_rate * g;
        }
        loss_history.push(loss);
    }
    Ok(TrainedPredictor { mlp, map_cells: cells, embed_dim: hp.embed_dim, loss_history })
}

/// Serialize predictor parameters: magic, `u32` layer count, then per
/// layer `u32` out, `u32` in, `f64` weights row-major, `f64` biases.
/// Little-endian throughout; round-trips bit-exactly.
pub fn predictor_to_bytes(p: &TrainedPredictor) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PREDICTOR_MAGIC);
    out.extend_from_slice(&(p.mlp.dims.len() as u32).to_le_bytes());
    for (layer, &(o, i)) in p.mlp.dims.iter().enumerate() {
        out.extend_from_slice(&(o as u32).to_le_bytes());
        out.extend_from_slice(&(i as u32).to_le_bytes());
        let base = p.mlp.layer_offset(layer);
        for v in &p.mlp.params[base..base + o * i + o] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`predictor_to_bytes`]. The loss history is not part of the
/// blob; a loaded predictor has an empty history.
pub fn predictor_from_bytes(bytes: &[u8]) -> Result<TrainedPredictor, DiffusionError> {
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], DiffusionError> {
        if *cursor + n > bytes.len() {
            return Err(DiffusionError::Truncated);
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    if take(&mut cursor, PREDICTOR_MAGIC.len())? != PREDICTOR_MAGIC {
        return Err(DiffusionError::BadMagic);
    }
    let layer_count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    if layer_count == 0 || layer_count > 64 {
        return Err(DiffusionError::Malformed(format!("layer count {layer_count}")));
    }
    let mut dims = Vec::with_capacity(layer_count);
    let mut params = Vec::new();
    for _ in 0..layer_count {
        let o = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let i = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        if o == 0 || i == 0 {
            return Err(DiffusionError::Malformed(format!("layer dims {o}x{i}")));
        }
        dims.push((o, i));
        for _ in 0..o * i + o {
            let v = f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(DiffusionError::Malformed("non-finite parameter".into()));
            }
            params.push(v);
        }
    }
    if cursor != bytes.len() {
        return Err(DiffusionError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - cursor
        )));
    }
    for w in dims.windows(2) {
        if w[1].1 != w[0].0 {
            return Err(DiffusionError::Malformed("layer dims do not chain".into()));
        }
    }
    let map_cells = dims.last().unwrap().0;
    let embed_dim = dims[0]
        .1
        .checked_sub(map_cells)
        .ok_or_else(|| DiffusionError::Malformed("input narrower than output".into()))?;
    Ok(TrainedPredictor {
        mlp: Mlp { dims, params },
        map_cells,
        embed_dim,
        loss_history: Vec::new(),
    })
}

pub fn write_predictor(p: &TrainedPredictor, path: &Path) -> Result<(), DiffusionError> {
    let mut file = File::create(path)?;
    file.write_all(&predictor_to_bytes(p))?;
    Ok(())
}

pub fn read_predictor(path: &Path) -> Result<TrainedPredictor, DiffusionError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    predictor_from_bytes(&bytes)
}
