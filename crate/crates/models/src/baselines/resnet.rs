//! ResNet-10 over time with 1D convolutions: a stem convolution, four
//! residual stages of one two-convolution block each, global average pooling
//! and one linear classifier per task.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vru_core::seed::derive_seed_n;
use vru_nn::{softmax, AdamConfig, AdamState, Checkpoint, Graph, ParamStore, Tensor, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Conv, Dense};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResnetConfig {
    /// Time steps per window.
    pub input_len: usize,
    /// Features per time step.
    pub features: usize,
    pub channels: [usize; 4],
    /// Class count of every output head.
    pub heads: Vec<usize>,
}

impl Default for ResnetConfig {
    fn default() -> Self {
        ResnetConfig {
            input_len: 30,
            features: 6,
            channels: [32, 64, 128, 256],
            heads: vec![2],
        }
    }
}

impl ResnetConfig {
    pub const STRIDES: [usize; 4] = [1, 2, 2, 2];

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.features == 0 || self.channels.contains(&0) {
            return Err(ModelError::Config("resnet sizes must be positive".into()));
        }
        if self.heads.is_empty() || self.heads.iter().any(|&k| k < 2) {
            return Err(ModelError::Config(format!("resnet heads need at least two classes each, got {:?}", self.heads)));
        }
        Ok(())
    }

    /// Stem, eight block convolutions and the classifier. Projection
    /// shortcuts and extra heads are not counted.
    pub fn weighted_layers(&self) -> usize {
        1 + 2 * self.channels.len() + 1
    }
}

/// Per-feature affine standardization fitted on training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(features: usize) -> Self {
        Standardizer {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    /// Fits over every time step of every window (`len × features`, row-major).
    pub fn fit(windows: &[Vec<f64>], features: usize) -> Self {
        let mut sum = vec![0.0; features];
        let mut sq = vec![0.0; features];
        let mut n = 0.0;
        for w in windows {
            for row in w.chunks(features) {
                for (f, &v) in row.iter().enumerate() {
                    sum[f] += v;
                    sq[f] += v * v;
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return Self::identity(features);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, window: &[f64]) -> Vec<f64> {
        let f = self.mean.len();
        window
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % f]) / self.std[i % f])
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    conv1: Conv,
    conv2: Conv,
    proj: Option<Conv>,
}

#[derive(Debug, Clone)]
pub struct Resnet1d {
    pub config: ResnetConfig,
    pub store: ParamStore,
    pub scaler: Standardizer,
    stem: Conv,
    blocks: [Block; 4],
    heads: Vec<Dense>,
}

impl Resnet1d {
    pub fn new(config: ResnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let s = &mut store;
        let c = config.channels;
        let stem = Conv::new(s, "stem", 3, 1, config.features, c[0], 1, &mut rng);
        let mut c_in = c[0];
        let blocks = std::array::from_fn(|i| {
            let (c_out, stride) = (c[i], ResnetConfig::STRIDES[i]);
            let name = format!("stage{}", i + 1);
            let conv1 = Conv::new(s, &format!("{name}.conv1"), 3, 1, c_in, c_out, stride, &mut rng);
            let conv2 = Conv::new(s, &format!("{name}.conv2"), 3, 1, c_out, c_out, 1, &mut rng);
            let proj = (c_in != c_out || stride != 1)
                .then(|| Conv::new(s, &format!("{name}.proj"), 1, 1, c_in, c_out, stride, &mut rng));
            c_in = c_out;
            Block { conv1, conv2, proj }
        });
        let heads = config
            .heads
            .iter()
            .enumerate()
            .map(|(i, &k)| Dense::new(s, &format!("head{i}"), c[3], k, &mut rng))
            .collect();
        let scaler = Standardizer::identity(config.features);
        Ok(Resnet1d {
            config,
            store,
            scaler,
            stem,
            blocks,
            heads,
        })
    }

    /// Forward pass over an already standardized `len × features` window.
    pub fn forward(&self, g: &mut Graph, window: &[f64]) -> Result<Vec<Var>> {
        let (l, f) = (self.config.input_len, self.config.features);
        if window.len() != l * f {
            return Err(ModelError::Input(format!("window of {} values, expected {l}x{f}", window.len())));
        }
        let x = g.input(Tensor::from_vec(&[l, 1, f], window.to_vec())?);
        let y = self.stem.apply(g, x)?;
        let mut y = g.relu(y);
        for b in &self.blocks {
            let z = b.conv1.apply(g, y)?;
            let z = g.relu(z);
            let z = b.conv2.apply(g, z)?;
            let skip = match b.proj {
                Some(p) => p.apply(g, y)?,
                None => y,
            };
            let z = g.add(z, skip)?;
            y = g.relu(z);
        }
        let pooled = g.global_avg_pool(y)?;
        self.heads.iter().map(|h| Ok(h.apply(g, pooled)?)).collect()
    }

    /// Class distributions per head for a raw (unstandardized) window.
    pub fn predict(&self, window: &[f64]) -> Result<Vec<Vec<f64>>> {
        let x = self.scaler.apply(window);
        let mut g = Graph::new(&self.store);
        let logits = self.forward(&mut g, &x)?;
        Ok(logits.iter().map(|&l| softmax(g.value(l).data())).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "model": "resnet1d",
            "config": self.config,
            "scaler": self.scaler,
        });
        Checkpoint::from_store(&self.store, meta.to_string(), None)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let bad = |detail: String| ModelError::Format {
            path: "<checkpoint>".into(),
            detail,
        };
        let meta: serde_json::Value =
            serde_json::from_str(&ckpt.metadata).map_err(|e| bad(format!("metadata: {e}")))?;
        if meta.get("model").and_then(|m| m.as_str()) != Some("resnet1d") {
            return Err(bad("not a resnet1d checkpoint".into()));
        }
        let config: ResnetConfig = serde_json::from_value(meta["config"].clone()).map_err(|e| bad(format!("config: {e}")))?;
        let scaler: Standardizer = serde_json::from_value(meta["scaler"].clone()).map_err(|e| bad(format!("scaler: {e}")))?;
        let mut model = Resnet1d::new(config, 0)?;
        ckpt.restore_into(&mut model.store)?;
        model.scaler = scaler;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResnetTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Loss multiplier per head.
    pub head_weights: Vec<f64>,
    pub standardize: bool,
}

impl Default for ResnetTrainConfig {
    fn default() -> Self {
        ResnetTrainConfig {
            epochs: 100,
            lr: 1e-4,
            batch_size: 32,
            head_weights: vec![1.0],
            standardize: true,
        }
    }
}

/// Weighted sum of per-head cross-entropies for one standardized window.
pub fn resnet_loss(g: &mut Graph, model: &Resnet1d, window: &[f64], labels: &[usize], weights: &[f64]) -> Result<Var> {
    let logits = model.forward(g, window)?;
    if labels.len() != logits.len() || weights.len() != logits.len() {
        return Err(ModelError::Input(format!(
            "{} heads, {} labels, {} weights",
            logits.len(),
            labels.len(),
            weights.len()
        )));
    }
    let terms: Vec<Var> = logits
        .iter()
        .zip(labels.iter().zip(weights))
        .map(|(&l, (&y, &w))| g.softmax_ce(l, y, w))
        .collect::<vru_nn::Result<_>>()?;
    Ok(g.add_n(&terms)?)
}

/// Trains with Adam on shuffled mini-batches; returns the mean training
/// loss of every epoch.
pub fn train_resnet(
    model: &mut Resnet1d,
    windows: &[Vec<f64>],
    labels: &[Vec<usize>],
    cfg: &ResnetTrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if windows.is_empty() || windows.len() != labels.len() {
        return Err(ModelError::Input(format!("{} windows for {} label rows", windows.len(), labels.len())));
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::Config("batch_size must be positive".into()));
    }
    model.scaler = if cfg.standardize {
        Standardizer::fit(windows, model.config.features)
    } else {
        Standardizer::identity(model.config.features)
    };
    let inputs: Vec<Vec<f64>> = windows.iter().map(|w| model.scaler.apply(w)).collect();
    let mut adam = AdamState::new(
        &model.store,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed_n(seed, &[epoch as u64])));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut g = Graph::new(&model.store);
                let loss = resnet_loss(&mut g, model, &inputs[i], &labels[i], &cfg.head_weights)?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(ModelError::Diverged {
                        epoch: epoch + 1,
                        detail: "non-finite resnet loss".into(),
                    });
                }
                total += value;
                let scaled = g.scale(loss, scale);
                let grads = g.backward(scaled)?;
                drop(g);
                grads.accumulate_into(&mut model.store);
            }
            adam.step(&mut model.store);
        }
        history.push(total / inputs.len() as f64);
    }
    Ok(history)
}
