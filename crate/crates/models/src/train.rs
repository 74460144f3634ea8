//! Mini-batch training loop for [`VruNet`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vru_core::data::{augment, AugmentOps, SequenceSample};
use vru_core::seed::derive_seed_n;
use vru_nn::{AdamConfig, AdamState, Graph, ParamStore};

use crate::error::{ModelError, Result};
use crate::eval::{Collected, EvalReport};
use crate::inputs::ModelInputs;
use crate::vrunet::{action_loss, target_centers, trajectory_mse, ClassWeights, VruNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm ceiling; zero disables clipping.
    pub clip_norm: f64,
    /// Number of leading epochs that feed ground-truth centres to the decoder.
    pub teacher_forcing_epochs: usize,
    /// Epochs without validation improvement before the learning rate is halved.
    pub lr_patience: usize,
    pub lr_decay: f64,
    pub min_lr: f64,
    pub class_weighting: bool,
    /// Probability of mirroring a training window each epoch.
    pub flip_prob: f64,
    pub keypoint_sigma: f64,
    pub pixel_dropout: f64,
    pub mask_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            lr: 1e-5,
            clip_norm: 5.0,
            teacher_forcing_epochs: 50,
            lr_patience: 25,
            lr_decay: 0.5,
            min_lr: 1e-8,
            class_weighting: true,
            flip_prob: 0.0,
            keypoint_sigma: 0.0,
            pixel_dropout: 0.0,
            mask_noise: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("clip_norm", self.clip_norm),
            ("min_lr", self.min_lr),
            ("keypoint_sigma", self.keypoint_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("lr_decay", self.lr_decay),
            ("flip_prob", self.flip_prob),
            ("pixel_dropout", self.pixel_dropout),
            ("mask_noise", self.mask_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    fn augments(&self) -> bool {
        self.flip_prob > 0.0 || self.keypoint_sigma > 0.0 || self.pixel_dropout > 0.0 || self.mask_noise > 0.0
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub val_ap: [Option<f64>; 5],
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,lr,ap_gait,ap_attn,ap_ornt,ap_dist,ap_xng";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let ap: Vec<String> = self
            .val_ap
            .iter()
            .map(|a| a.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}")))
            .collect();
        format!(
            "{},{:.8},{:.8},{:e},{}",
            self.epoch,
            self.train_loss,
            self.val_loss,
            self.lr,
            ap.join(",")
        )
    }
}

/// Schedule and best-model bookkeeping carried across resumed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub epochs_done: usize,
    /// Infinite before the first validation; JSON stores that as `null`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub best_val: f64,
    pub best_epoch: usize,
    pub since_improvement: usize,
}

fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Default for TrainProgress {
    fn default() -> Self {
        TrainProgress {
            epochs_done: 0,
            best_val: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }
}

pub struct Trainer {
    pub model: VruNet,
    pub adam: AdamState,
    pub progress: TrainProgress,
    /// Parameters at the epoch with the lowest validation loss.
    pub best: Option<ParamStore>,
    pub config: TrainConfig,
    pub class_weights: ClassWeights,
    seed: u64,
}

struct Prepared {
    inputs: ModelInputs,
    labels: [usize; 5],
    target: Vec<[f64; 2]>,
}

fn prepare(model: &VruNet, s: &SequenceSample) -> Result<Prepared> {
    Ok(Prepared {
        inputs: model.inputs(s)?,
        labels: s.labels.indices(),
        target: target_centers(s, model.config.traj_unit),
    })
}

impl Trainer {
    pub fn new(model: VruNet, config: TrainConfig, train: &[SequenceSample], seed: u64) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(
            &model.store,
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
        );
        Self::resume(model, adam, TrainProgress::default(), config, train, seed)
    }

    /// Continues from saved optimizer state and progress. The learning rate
    /// stored in `adam` is kept.
    pub fn resume(
        model: VruNet,
        adam: AdamState,
        progress: TrainProgress,
        config: TrainConfig,
        train: &[SequenceSample],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(ModelError::Input("empty training set".into()));
        }
        if adam.m.len() != model.store.len() {
            return Err(ModelError::Config("optimizer state does not match the model".into()));
        }
        let class_weights = if config.class_weighting {
            let labels: Vec<[usize; 5]> = train.iter().map(|s| s.labels.indices()).collect();
            ClassWeights::inverse_frequency(&labels)
        } else {
            ClassWeights::uniform()
        };
        Ok(Trainer {
            model,
            adam,
            progress,
            best: None,
            config,
            class_weights,
            seed,
        })
    }

    fn l2_term(&self) -> f64 {
        let m = &self.model;
        let sum: f64 = m.decoder_params().iter().map(|&id| m.store.value(id).sum_squares()).sum();
        m.config.beta_traj * m.config.lambda_reg * sum
    }

    /// Per-window objective `α·L_action + β·MSE`, optionally with gradients
    /// accumulated into the parameter store scaled by `grad_scale`.
    fn window_loss(&mut self, p: &Prepared, teacher: bool, grad_scale: Option<f64>) -> Result<f64> {
        let cfg = self.model.config.clone();
        let model = &self.model;
        let mut g = Graph::new(&model.store);
        let f = model.forward(&mut g, &p.inputs, teacher.then_some(p.target.as_slice()))?;
        let act = action_loss(&mut g, &f.logits, p.labels, &cfg.loss_weights, &self.class_weights)?;
        let mse = trajectory_mse(&mut g, &f.centers, &p.target)?;
        let a = g.scale(act, cfg.alpha_action);
        let b = g.scale(mse, cfg.beta_traj);
        let loss = g.add(a, b).map_err(ModelError::from)?;
        let value = g.value(loss).item();
        if let Some(scale) = grad_scale {
            if value.is_finite() {
                let scaled = g.scale(loss, scale);
                let grads = g.backward(scaled)?;
                drop(g);
                grads.accumulate_into(&mut self.model.store);
            }
        }
        Ok(value)
    }

    fn apply_l2_grads(&mut self) {
        let c = 2.0 * self.model.config.beta_traj * self.model.config.lambda_reg;
        if c == 0.0 {
            return;
        }
        for id in self.model.decoder_params() {
            let p = self.model.store.get_mut(id);
            for (g, v) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
                *g += c * v;
            }
        }
    }

    /// Mean objective and report over `samples` without teacher forcing.
    pub fn validate(&mut self, samples: &[SequenceSample]) -> Result<(f64, EvalReport)> {
        let mut total = 0.0;
        let mut c = Collected::default();
        for s in samples {
            let p = prepare(&self.model, s)?;
            total += self.window_loss(&p, false, None)?;
            let b = self.model.predict_inputs(&p.inputs)?;
            c.push_bundle(&b, s)?;
        }
        let n = samples.len().max(1) as f64;
        Ok((total / n + self.l2_term(), EvalReport::from_collected(&c)?))
    }

    fn epoch_samples(&self, train: &[SequenceSample], epoch: usize) -> Result<Vec<Prepared>> {
        let cfg = &self.config;
        train
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !cfg.augments() {
                    return prepare(&self.model, s);
                }
                let seed = derive_seed_n(self.seed, &[0xA6, epoch as u64, i as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ops = AugmentOps {
                    flip: rand::Rng::random_bool(&mut rng, cfg.flip_prob),
                    pixel_dropout: cfg.pixel_dropout,
                    keypoint_sigma: cfg.keypoint_sigma,
                    mask_noise: cfg.mask_noise,
                };
                prepare(&self.model, &augment(s, &ops, seed ^ 1))
            })
            .collect()
    }

    /// Runs one epoch and updates the schedule and best parameters.
    pub fn run_epoch(&mut self, train: &[SequenceSample], val: &[SequenceSample]) -> Result<EpochLog> {
        if train.is_empty() || val.is_empty() {
            return Err(ModelError::Input("training needs non-empty train and val sets".into()));
        }
        let epoch = self.progress.epochs_done + 1;
        let teacher = self.progress.epochs_done < self.config.teacher_forcing_epochs;
        let prepared = self.epoch_samples(train, epoch)?;
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_n(self.seed, &[0x5F, epoch as u64]));
        order.shuffle(&mut rng);

        let mut sum = 0.0;
        for (bi, batch) in order.chunks(self.config.batch_size).enumerate() {
            self.model.store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += self.window_loss(&prepared[i], teacher, Some(scale))?;
            }
            batch_loss = batch_loss * scale + self.l2_term();
            if !batch_loss.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    detail: format!("non-finite training loss in batch {bi}"),
                });
            }
            self.apply_l2_grads();
            if self.config.clip_norm > 0.0 {
                let norm = self.model.store.clip_grad_norm(self.config.clip_norm);
                if !norm.is_finite() {
                    return Err(ModelError::Diverged {
                        epoch,
                        detail: format!("non-finite gradient norm in batch {bi}"),
                    });
                }
            }
            self.adam.step(&mut self.model.store);
            sum += batch_loss * batch.len() as f64;
        }
        let train_loss = sum / prepared.len() as f64;

        let (val_loss, report) = self.validate(val)?;
        if !val_loss.is_finite() {
            return Err(ModelError::Diverged {
                epoch,
                detail: "non-finite validation loss".into(),
            });
        }
        let lr = self.adam.lr();
        let pr = &mut self.progress;
        pr.epochs_done = epoch;
        if val_loss < pr.best_val {
            pr.best_val = val_loss;
            pr.best_epoch = epoch;
            pr.since_improvement = 0;
            self.best = Some(self.model.store.clone());
        } else {
            pr.since_improvement += 1;
            if self.config.lr_patience > 0 && pr.since_improvement >= self.config.lr_patience {
                pr.since_improvement = 0;
                let next = (lr * self.config.lr_decay).max(self.config.min_lr.min(lr));
                self.adam.set_lr(next);
            }
        }
        Ok(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
            val_ap: report.ap,
        })
    }

    /// Runs `epochs` more epochs, calling `on_epoch` after each.
    pub fn fit(
        &mut self,
        train: &[SequenceSample],
        val: &[SequenceSample],
        epochs: usize,
        mut on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        let mut log = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let row = self.run_epoch(train, val)?;
            on_epoch(&row, self)?;
            log.push(row);
        }
        Ok(log)
    }

    /// The model with the best validation parameters, or the current one.
    pub fn best_model(&self) -> VruNet {
        let mut m = self.model.clone();
        if let Some(best) = &self.best {
            m.store = best.clone();
        }
        m
    }
}
