//! The built-in pixelwise segmentation learner.
//!
//! A deliberately small stand-in for a full segmentation network: a
//! multilayer perceptron (9 -> 32 -> 32 -> 1, ReLU hidden, sigmoid
//! output) over local patch features, trained with plain minibatch SGD
//! on binary cross-entropy. It trains in seconds, supports dropout on
//! both hidden layers, and overfits to systematically corrupted masks
//! the same way a large network does, which is the dynamic the
//! relabeling pipeline exploits. Anything implementing the same train /
//! predict surface can replace it.
//!
//! Training is single-threaded and fully determined by (seed, data,
//! config); prediction may run concurrently across images.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureGrid, FEATURE_COUNT};
use crate::grid::{BinaryMask, GrayImage, ProbMap};

pub const HIDDEN_WIDTH: usize = 32;
const MODEL_MAGIC: &[u8; 4] = b"MMLP";
const MODEL_VERSION: u8 = 0x01;

/// Splitmix64-style mixer for deriving independent sub-seeds.
pub fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9)
        .wrapping_add(c);
    z ^= z >> 30;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 27;
    z
}

/// SGD settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 14,
            learning_rate: 0.1,
            batch_size: 128,
            dropout_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    // row-major: weights[o * in_dim + i]
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn he_init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        }
    }

    #[inline]
    fn forward(&self, input: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *slot = acc;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Numerically stable binary cross-entropy from the pre-sigmoid logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Scratch buffers for one forward/backward pass.
struct Pass {
    h1_pre: Vec<f64>,
    h1: Vec<f64>,
    h2_pre: Vec<f64>,
    h2: Vec<f64>,
    d_h1: Vec<f64>,
    d_h2: Vec<f64>,
    mask1: Vec<f64>,
    mask2: Vec<f64>,
}

impl Pass {
    fn new() -> Self {
        Self {
            h1_pre: vec![0.0; HIDDEN_WIDTH],
            h1: vec![0.0; HIDDEN_WIDTH],
            h2_pre: vec![0.0; HIDDEN_WIDTH],
            h2: vec![0.0; HIDDEN_WIDTH],
            d_h1: vec![0.0; HIDDEN_WIDTH],
            d_h2: vec![0.0; HIDDEN_WIDTH],
            mask1: vec![1.0; HIDDEN_WIDTH],
            mask2: vec![1.0; HIDDEN_WIDTH],
        }
    }

    fn ones_masks(&mut self) {
        self.mask1.iter_mut().for_each(|v| *v = 1.0);
        self.mask2.iter_mut().for_each(|v| *v = 1.0);
    }

    fn sample_masks(&mut self, rate: f64, rng: &mut ChaCha8Rng) {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        for m in self.mask1.iter_mut().chain(self.mask2.iter_mut()) {
            *m = if rng.gen::<f64>() < keep { scale } else { 0.0 };
        }
    }
}

/// Per-parameter gradient accumulator with the same layout as the model.
struct GradBuf {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GradBuf {
    fn zeros_like(model: &PixelClassifier) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// The pixelwise MLP classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelClassifier {
    layers: Vec<Layer>,
    dropout_rate: f64,
    init_seed: u64,
    epochs_trained: usize,
}

impl PixelClassifier {
    /// He-initialized 9 -> 32 -> 32 -> 1 network.
    pub fn new(init_seed: u64, dropout_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Parameter("dropout_rate must be in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(init_seed, 0x1417, 0));
        let layers = vec![
            Layer::he_init(FEATURE_COUNT, HIDDEN_WIDTH, &mut rng),
            Layer::he_init(HIDDEN_WIDTH, HIDDEN_WIDTH, &mut rng),
            Layer::he_init(HIDDEN_WIDTH, 1, &mut rng),
        ];
        Ok(Self {
            layers,
            dropout_rate,
            init_seed,
            epochs_trained: 0,
        })
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    /// Flattened parameter vector (per layer: weights row-major, then biases).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let expect: usize = self
            .layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum();
        if params.len() != expect {
            return Err(Error::Parameter(format!(
                "expected {expect} params, got {}",
                params.len()
            )));
        }
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[pos..pos + nw]);
            pos += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[pos..pos + nb]);
            pos += nb;
        }
        Ok(())
    }

    /// Forward pass for one feature vector; fills `pass` activations and
    /// returns the output logit.
    fn forward(&self, x: &[f64], pass: &mut Pass) -> f64 {
        self.layers[0].forward(x, &mut pass.h1_pre);
        for i in 0..HIDDEN_WIDTH {
            pass.h1[i] = pass.h1_pre[i].max(0.0) * pass.mask1[i];
        }
        self.layers[1].forward(&pass.h1, &mut pass.h2_pre);
        for i in 0..HIDDEN_WIDTH {
            pass.h2[i] = pass.h2_pre[i].max(0.0) * pass.mask2[i];
        }
        let out = &self.layers[2];
        let mut z = out.biases[0];
        for (w, h) in out.weights.iter().zip(&pass.h2) {
            z += w * h;
        }
        z
    }

    /// Backward pass for one sample; accumulates parameter gradients of
    /// the (unaveraged) per-sample loss into `grads`.
    fn backward(&self, x: &[f64], dz: f64, pass: &mut Pass, grads: &mut GradBuf) {
        let out = &self.layers[2];
        for i in 0..HIDDEN_WIDTH {
            grads.layers[2].0[i] += dz * pass.h2[i];
            // through dropout mask and ReLU of layer 2
            let up = dz * out.weights[i] * pass.mask2[i];
            pass.d_h2[i] = if pass.h2_pre[i] > 0.0 { up } else { 0.0 };
        }
        grads.layers[2].1[0] += dz;

        let l1 = &self.layers[1];
        for i in 0..HIDDEN_WIDTH {
            pass.d_h1[i] = 0.0;
        }
        for o in 0..HIDDEN_WIDTH {
            let g = pass.d_h2[o];
            if g == 0.0 {
                continue;
            }
            let row = &l1.weights[o * HIDDEN_WIDTH..(o + 1) * HIDDEN_WIDTH];
            let grow = &mut grads.layers[1].0[o * HIDDEN_WIDTH..(o + 1) * HIDDEN_WIDTH];
            for i in 0..HIDDEN_WIDTH {
                grow[i] += g * pass.h1[i];
                pass.d_h1[i] += g * row[i];
            }
            grads.layers[1].1[o] += g;
        }

        for i in 0..HIDDEN_WIDTH {
            let up = pass.d_h1[i] * pass.mask1[i];
            pass.d_h1[i] = if pass.h1_pre[i] > 0.0 { up } else { 0.0 };
        }
        for o in 0..HIDDEN_WIDTH {
            let g = pass.d_h1[o];
            if g == 0.0 {
                continue;
            }
            let grow = &mut grads.layers[0].0[o * FEATURE_COUNT..(o + 1) * FEATURE_COUNT];
            for i in 0..FEATURE_COUNT {
                grow[i] += g * x[i];
            }
            grads.layers[0].1[o] += g;
        }
    }

    /// Mean loss and gradient (flattened like [`Self::params`]) over a
    /// batch of feature vectors, without dropout or updates.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(inputs.len(), targets.len());
        let mut pass = Pass::new();
        let mut grads = GradBuf::zeros_like(self);
        let mut loss = 0.0;
        let scale = 1.0 / inputs.len() as f64;
        for (x, &y) in inputs.iter().zip(targets) {
            let z = self.forward(x, &mut pass);
            loss += bce_from_logit(z, y);
            let dz = (sigmoid(z) - y) * scale;
            self.backward(x, dz, &mut pass, &mut grads);
        }
        let mut flat = Vec::new();
        for (w, b) in &grads.layers {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        (loss * scale, flat)
    }

    /// One epoch of minibatch SGD over every pixel of `data`,
    /// reshuffling per epoch under the config seed. Returns the mean
    /// training loss of the epoch.
    pub fn train_epoch(
        &mut self,
        data: &[(GrayImage, BinaryMask)],
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let feats: Vec<FeatureGrid> = data.iter().map(|(img, _)| extract_features(img)).collect();
        let masks: Vec<BinaryMask> = data.iter().map(|(_, m)| m.clone()).collect();
        self.train_epoch_on_features(&feats, &masks, cfg)
    }

    /// [`Self::train_epoch`] over precomputed features.
    pub fn train_epoch_on_features(
        &mut self,
        feats: &[FeatureGrid],
        masks: &[BinaryMask],
        cfg: &TrainConfig,
    ) -> Result<f64> {
        cfg.validate()?;
        if feats.len() != masks.len() || feats.is_empty() {
            return Err(Error::Parameter(format!(
                "feature/mask counts differ or empty: {} vs {}",
                feats.len(),
                masks.len()
            )));
        }
        for (f, m) in feats.iter().zip(masks) {
            if f.height() != m.height() || f.width() != m.width() {
                return Err(Error::DimMismatch {
                    context: "train_epoch",
                    a_h: f.height(),
                    a_w: f.width(),
                    b_h: m.height(),
                    b_w: m.width(),
                });
            }
        }

        // global pixel index: (image, pixel)
        let mut order: Vec<(u32, u32)> = Vec::new();
        for (i, f) in feats.iter().enumerate() {
            for p in 0..f.pixel_count() {
                order.push((i as u32, p as u32));
            }
        }
        let epoch = self.epochs_trained;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, self.init_seed, epoch as u64));
        shuffle(&mut order, &mut rng);

        let mut pass = Pass::new();
        let mut grads = GradBuf::zeros_like(self);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            for &(img, px) in batch {
                if cfg.dropout_rate > 0.0 {
                    pass.sample_masks(cfg.dropout_rate, &mut rng);
                } else {
                    pass.ones_masks();
                }
                let x = feats[img as usize].pixel(px as usize);
                let y = masks[img as usize].data()[px as usize] as f64;
                let z = self.forward(x, &mut pass);
                total_loss += bce_from_logit(z, y);
                let dz = (sigmoid(z) - y) * scale;
                self.backward(x, dz, &mut pass, &mut grads);
            }
            for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= cfg.learning_rate * g;
                }
                for (b, g) in layer.biases.iter_mut().zip(gb) {
                    *b -= cfg.learning_rate * g;
                }
            }
        }
        let mean_loss = total_loss / order.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        self.epochs_trained += 1;
        Ok(mean_loss)
    }

    /// Per-pixel foreground probabilities. With `dropout_active` and a
    /// positive dropout rate, one thinned subnetwork is sampled from
    /// `seed` (hidden units masked by Bernoulli(1-d), scaled 1/(1-d))
    /// and applied to every pixel.
    pub fn predict(&self, image: &GrayImage, dropout_active: bool, seed: u64) -> Result<ProbMap> {
        Ok(self.predict_features(&extract_features(image), dropout_active, seed))
    }

    /// [`Self::predict`] over precomputed features.
    pub fn predict_features(
        &self,
        feats: &FeatureGrid,
        dropout_active: bool,
        seed: u64,
    ) -> ProbMap {
        let mut pass = Pass::new();
        if dropout_active && self.dropout_rate > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xD80, 0));
            pass.sample_masks(self.dropout_rate, &mut rng);
        }
        let mut data = Vec::with_capacity(feats.pixel_count());
        for p in 0..feats.pixel_count() {
            let z = self.forward(feats.pixel(p), &mut pass);
            data.push(sigmoid(z) as f32);
        }
        ProbMap::new(feats.height(), feats.width(), data)
            .expect("sigmoid output is always a probability")
    }

    // -- model file ---------------------------------------------------------

    /// Writes magic `MMLP`, version, layer dims, dropout rate, then all
    /// weights and biases as little-endian f32.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dims = self.layer_dims();
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.push(dims.len() as u8);
        for d in &dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.dropout_rate as f32).to_le_bytes());
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.biases) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 4 || &bytes[0..4] != MODEL_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "MMLP",
            });
        }
        if bytes.len() < 6 || bytes[4] != MODEL_VERSION {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: "unsupported version".into(),
            });
        }
        let ndims = bytes[5] as usize;
        if ndims < 2 {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("need >= 2 layer dims, got {ndims}"),
            });
        }
        let mut pos = 6;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            if pos + 4 > bytes.len() {
                return Err(Error::TruncatedPayload {
                    path: path.to_path_buf(),
                });
            }
            dims.push(u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize);
            pos += 4;
        }
        if dims.contains(&0) {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: "layer dims must be >= 1".into(),
            });
        }
        if pos + 4 > bytes.len() {
            return Err(Error::TruncatedPayload {
                path: path.to_path_buf(),
            });
        }
        let dropout_rate = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as f64;
        pos += 4;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("dropout rate {dropout_rate} out of [0, 1)"),
            });
        }

        let mut layers = Vec::with_capacity(ndims - 1);
        for win in dims.windows(2) {
            let (in_dim, out_dim) = (win[0], win[1]);
            let count = in_dim * out_dim + out_dim;
            if pos + 4 * count > bytes.len() {
                return Err(Error::TruncatedPayload {
                    path: path.to_path_buf(),
                });
            }
            let mut vals = Vec::with_capacity(count);
            for i in 0..count {
                vals.push(f32::from_le_bytes(
                    bytes[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap(),
                ) as f64);
            }
            pos += 4 * count;
            layers.push(Layer {
                in_dim,
                out_dim,
                weights: vals[..in_dim * out_dim].to_vec(),
                biases: vals[in_dim * out_dim..].to_vec(),
            });
        }
        Ok(Self {
            layers,
            dropout_rate,
            init_seed: 0,
            epochs_trained: 0,
        })
    }
}

/// Fisher-Yates driven by the given rng.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
