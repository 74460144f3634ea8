//! The multi-task network: pose, box and scene encoders fused by
//! concatenation into five classification heads, plus an LSTM
//! encoder-decoder for future box centres.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vru_core::data::masks::NUM_CLASSES;
use vru_core::data::{SequenceSample, Task};
use vru_core::geometry::NUM_JOINTS;
use vru_nn::{lstm_cell, lstm_sequence, softmax, Checkpoint, Graph, LstmParams, ParamId, ParamStore, Tensor, Var};

use crate::error::{ModelError, Result};
use crate::inputs::ModelInputs;
use crate::layers::{ceil_div, Conv, Dense};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub gait: f64,
    pub attention: f64,
    pub orientation: f64,
    pub distraction: f64,
    pub crossing: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::uniform(1.0)
    }
}

impl LossWeights {
    pub fn uniform(w: f64) -> Self {
        LossWeights {
            gait: w,
            attention: w,
            orientation: w,
            distraction: w,
            crossing: w,
        }
    }

    /// Weights in head order.
    pub fn to_array(self) -> [f64; 5] {
        [self.gait, self.attention, self.orientation, self.distraction, self.crossing]
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        LossWeights {
            gait: w[0],
            attention: w[1],
            orientation: w[2],
            distraction: w[3],
            crossing: w[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.to_array();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(ModelError::Config(format!("loss weights must be finite and >= 0, got {w:?}")));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(ModelError::Config("loss weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VruNetConfig {
    pub obs_len: usize,
    pub horizon: usize,
    pub mask_h: usize,
    pub mask_w: usize,
    /// Channels of both convolutions in the pose and box encoders.
    pub conv_channels: usize,
    /// Channels of the first and second convolution pair of the scene encoder.
    pub scene_channels: [usize; 2],
    /// Widths of the two scene FC pairs.
    pub scene_fc: [usize; 2],
    /// Width of the pose and box embedding FC layers.
    pub embed: usize,
    pub head_hidden: usize,
    /// LSTM width of the encoders and the decoder.
    pub hidden: usize,
    pub loss_weights: LossWeights,
    pub lambda_reg: f64,
    pub alpha_action: f64,
    pub beta_traj: f64,
    /// Replace the scene embedding with zeros.
    pub ablate_scene: bool,
    /// Unit of the box-centre offsets fed to the box encoder, as a fraction
    /// of the image size.
    pub motion_unit: f64,
    /// Unit of the decoder frame, as a fraction of the image size. The frame
    /// is anchored at the last observed box centre and the trajectory MSE is
    /// measured in it.
    pub traj_unit: f64,
}

impl Default for VruNetConfig {
    fn default() -> Self {
        VruNetConfig {
            obs_len: 30,
            horizon: 30,
            mask_h: 90,
            mask_w: 160,
            conv_channels: 256,
            scene_channels: [256, 512],
            scene_fc: [1024, 256],
            embed: 256,
            head_hidden: 256,
            hidden: 256,
            loss_weights: LossWeights::default(),
            lambda_reg: 0.0003,
            alpha_action: 1.0,
            beta_traj: 1.0,
            ablate_scene: false,
            motion_unit: 0.1,
            traj_unit: 0.01,
        }
    }
}

impl VruNetConfig {
    /// Full-resolution layer sizes.
    pub fn full_resolution() -> Self {
        VruNetConfig {
            mask_h: 360,
            mask_w: 640,
            ..Self::default()
        }
    }

    /// Narrow layers sized for the synthetic corpus on a single CPU core.
    pub fn desk() -> Self {
        VruNetConfig {
            mask_h: 36,
            mask_w: 64,
            conv_channels: 16,
            scene_channels: [8, 16],
            scene_fc: [64, 32],
            embed: 32,
            head_hidden: 32,
            hidden: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("obs_len", self.obs_len),
            ("horizon", self.horizon),
            ("mask_h", self.mask_h),
            ("mask_w", self.mask_w),
            ("conv_channels", self.conv_channels),
            ("scene_channels[0]", self.scene_channels[0]),
            ("scene_channels[1]", self.scene_channels[1]),
            ("scene_fc[0]", self.scene_fc[0]),
            ("scene_fc[1]", self.scene_fc[1]),
            ("embed", self.embed),
            ("head_hidden", self.head_hidden),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("lambda_reg", self.lambda_reg),
            ("alpha_action", self.alpha_action),
            ("beta_traj", self.beta_traj),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("motion_unit", self.motion_unit), ("traj_unit", self.traj_unit)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.loss_weights.validate()
    }

    /// Time steps seen by the encoder LSTMs after two stride-2 convolutions.
    pub fn encoder_steps(&self) -> usize {
        ceil_div(ceil_div(self.obs_len, 2), 2)
    }

    /// Spatial size of the scene feature map before flattening.
    pub fn scene_grid(&self) -> (usize, usize) {
        let shrink = |n: usize| (0..4).fold(n, |a, _| ceil_div(a, 2));
        (shrink(self.mask_h), shrink(self.mask_w))
    }

    pub fn scene_flatten_len(&self) -> usize {
        let (h, w) = self.scene_grid();
        h * w * self.scene_channels[1]
    }

    pub fn fused_len(&self) -> usize {
        2 * self.embed + self.scene_fc[1]
    }
}

/// Class distributions for every head plus normalized future centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub gait: Vec<f64>,
    pub attention: Vec<f64>,
    pub orientation: Vec<f64>,
    pub distraction: Vec<f64>,
    pub crossing: Vec<f64>,
    pub trajectory: Vec<[f64; 2]>,
}

impl PredictionBundle {
    /// Distributions in head order.
    pub fn distributions(&self) -> [&[f64]; 5] {
        [&self.gait, &self.attention, &self.orientation, &self.distraction, &self.crossing]
    }

    pub fn argmax(&self) -> [usize; 5] {
        self.distributions().map(|d| {
            d.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                .0
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct SeqEncoder {
    conv1: Conv,
    conv2: Conv,
    lstm: LstmParams,
    fc1: Dense,
    fc2: Dense,
}

#[derive(Debug, Clone, Copy)]
struct SceneEncoder {
    convs: [Conv; 4],
    fcs: [Dense; 4],
}

#[derive(Debug, Clone, Copy)]
struct Head {
    fc1: Dense,
    fc2: Dense,
}

#[derive(Debug, Clone, Copy)]
struct Decoder {
    lstm: LstmParams,
    out: Dense,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub logits: [Var; 5],
    /// One `[2]` node per future step, in the decoder frame.
    pub centers: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct VruNet {
    pub config: VruNetConfig,
    pub store: ParamStore,
    pose: SeqEncoder,
    boxes: SeqEncoder,
    scene: SceneEncoder,
    heads: [Head; 5],
    decoder: Decoder,
}

fn seq_encoder(store: &mut ParamStore, name: &str, width: usize, channels: usize, cfg: &VruNetConfig, rng: &mut ChaCha8Rng) -> SeqEncoder {
    let c = cfg.conv_channels;
    let conv1 = Conv::new(store, &format!("{name}.conv1"), 3, 3, channels, c, 2, rng);
    let conv2 = Conv::new(store, &format!("{name}.conv2"), 3, 3, c, c, 2, rng);
    let cols = ceil_div(ceil_div(width, 2), 2);
    let lstm = LstmParams::new(store, &format!("{name}.lstm"), cols * c, cfg.hidden, rng);
    let fc1 = Dense::new(store, &format!("{name}.fc1"), cfg.hidden, cfg.embed, rng);
    let fc2 = Dense::new(store, &format!("{name}.fc2"), cfg.embed, cfg.embed, rng);
    SeqEncoder {
        conv1,
        conv2,
        lstm,
        fc1,
        fc2,
    }
}

impl VruNet {
    pub fn new(config: VruNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let pose = seq_encoder(&mut store, "pose", NUM_JOINTS, 3, &config, &mut rng);
        let boxes = seq_encoder(&mut store, "box", 4, 1, &config, &mut rng);

        let [f1, f2] = config.scene_channels;
        let s = &mut store;
        let convs = [
            Conv::new(s, "scene.conv1", 3, 3, NUM_CLASSES, f1, 2, &mut rng),
            Conv::new(s, "scene.conv2", 3, 3, f1, f1, 2, &mut rng),
            Conv::new(s, "scene.conv3", 3, 3, f1, f2, 2, &mut rng),
            Conv::new(s, "scene.conv4", 3, 3, f2, f2, 2, &mut rng),
        ];
        let [a, b] = config.scene_fc;
        let flat = config.scene_flatten_len();
        let fcs = [
            Dense::new(s, "scene.fc1", flat, a, &mut rng),
            Dense::new(s, "scene.fc2", a, a, &mut rng),
            Dense::new(s, "scene.fc3", a, b, &mut rng),
            Dense::new(s, "scene.fc4", b, b, &mut rng),
        ];
        let scene = SceneEncoder { convs, fcs };

        let fused = config.fused_len();
        let heads = Task::ALL.map(|t| Head {
            fc1: Dense::new(s, &format!("head.{}.fc1", t.short_name()), fused, config.head_hidden, &mut rng),
            fc2: Dense::new(s, &format!("head.{}.fc2", t.short_name()), config.head_hidden, t.classes(), &mut rng),
        });
        let decoder = Decoder {
            lstm: LstmParams::new(s, "decoder.lstm", 2, config.hidden, &mut rng),
            out: Dense::new(s, "decoder.out", config.hidden, 2, &mut rng),
        };
        // The decoder starts out predicting a stationary pedestrian.
        s.get_mut(decoder.out.w).value.fill(0.0);
        Ok(VruNet {
            config,
            store,
            pose,
            boxes,
            scene,
            heads,
            decoder,
        })
    }

    /// Parameters of the trajectory decoder, the only ones under L2.
    pub fn decoder_params(&self) -> Vec<ParamId> {
        let d = &self.decoder;
        vec![d.lstm.weights, d.lstm.bias, d.out.w, d.out.b]
    }

    /// Parameters of the scene encoder.
    pub fn scene_params(&self) -> Vec<ParamId> {
        let s = &self.scene;
        s.convs
            .iter()
            .flat_map(|c| [c.k, c.b])
            .chain(s.fcs.iter().flat_map(|f| f.params()))
            .collect()
    }

    fn check_inputs(&self, x: &ModelInputs) -> Result<()> {
        let c = &self.config;
        let expect = |what: &str, got: &[usize], want: &[usize]| {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::Input(format!("{what} tensor has shape {got:?}, model expects {want:?}")))
            }
        };
        expect("pose", x.pose.shape(), &[c.obs_len, NUM_JOINTS, 3])?;
        expect("box", x.boxes.shape(), &[c.obs_len, 4, 1])?;
        expect("scene", x.scene.shape(), &[c.mask_h, c.mask_w, NUM_CLASSES])
    }

    fn run_seq_encoder(&self, g: &mut Graph, enc: &SeqEncoder, x: &Tensor) -> Result<(Var, (Var, Var))> {
        let x = g.input(x.clone());
        let y = enc.conv1.apply(g, x)?;
        let y = g.relu(y);
        let y = enc.conv2.apply(g, y)?;
        let y = g.relu(y);
        let shape = g.shape(y).to_vec();
        let row = shape[1] * shape[2];
        let steps: Vec<Var> = (0..shape[0])
            .map(|t| g.slice(y, t * row, row))
            .collect::<vru_nn::Result<_>>()?;
        let (h, c) = lstm_sequence(g, &steps, &enc.lstm)?;
        let e = enc.fc1.apply(g, h)?;
        let e = g.relu(e);
        let e = enc.fc2.apply(g, e)?;
        let e = g.relu(e);
        Ok((e, (h, c)))
    }

    /// Pose branch: `[N, 17, 3]` → embedding.
    pub fn encode_pose(&self, g: &mut Graph, pose: &Tensor) -> Result<Var> {
        Ok(self.run_seq_encoder(g, &self.pose, pose)?.0)
    }

    /// Box branch: `[N, 4, 1]` → embedding and the final LSTM `(h, c)`.
    pub fn encode_box(&self, g: &mut Graph, boxes: &Tensor) -> Result<(Var, (Var, Var))> {
        self.run_seq_encoder(g, &self.boxes, boxes)
    }

    /// Scene branch over a time-averaged one-hot mask `[H, W, 5]`.
    pub fn encode_scene(&self, g: &mut Graph, scene: &Tensor) -> Result<Var> {
        let s = &self.scene;
        let mut y = g.input(scene.clone());
        for (i, conv) in s.convs.iter().enumerate() {
            y = conv.apply(g, y)?;
            y = g.relu(y);
            if i % 2 == 1 {
                let shape = g.shape(y);
                // Feature maps smaller than the window are passed through.
                if shape[0] >= 2 && shape[1] >= 2 {
                    y = g.maxpool(y, 2, 1)?;
                }
            }
        }
        for fc in &s.fcs {
            y = fc.apply(g, y)?;
            y = g.relu(y);
        }
        Ok(y)
    }

    /// Builds the full forward pass. Decoder outputs are in the decoder frame
    /// (see [`VruNetConfig::traj_unit`]). With `teacher`, decoder step
    /// `t > 0` consumes ground-truth centre `t - 1`, in the same frame,
    /// instead of its own previous output.
    pub fn forward(&self, g: &mut Graph, x: &ModelInputs, teacher: Option<&[[f64; 2]]>) -> Result<ForwardVars> {
        self.check_inputs(x)?;
        let cfg = &self.config;
        if let Some(t) = teacher {
            if t.len() != cfg.horizon {
                return Err(ModelError::Input(format!("{} teacher centres for horizon {}", t.len(), cfg.horizon)));
            }
        }
        let pose = self.encode_pose(g, &x.pose)?;
        let (boxes, (h0, c0)) = self.encode_box(g, &x.boxes)?;
        let scene = if cfg.ablate_scene {
            g.input(Tensor::zeros(&[cfg.scene_fc[1]]))
        } else {
            self.encode_scene(g, &x.scene)?
        };
        let fused = g.concat(&[pose, boxes, scene]);
        let mut logits = Vec::with_capacity(5);
        for head in &self.heads {
            let z = head.fc1.apply(g, fused)?;
            let z = g.relu(z);
            logits.push(head.fc2.apply(g, z)?);
        }

        let mut centers = Vec::with_capacity(cfg.horizon);
        let (mut h, mut c) = (h0, c0);
        // The last observed centre is the origin of the decoder frame.
        let mut prev = g.input(Tensor::zeros(&[2]));
        for step in 0..cfg.horizon {
            if let (Some(t), true) = (teacher, step > 0) {
                prev = g.input(Tensor::vector(t[step - 1].to_vec()));
            }
            (h, c) = lstm_cell(g, prev, h, c, &self.decoder.lstm)?;
            let delta = self.decoder.out.apply(g, h)?;
            let center = g.add(prev, delta)?;
            centers.push(center);
            prev = center;
        }
        Ok(ForwardVars {
            logits: logits.try_into().expect("five heads"),
            centers,
        })
    }

    pub fn inputs(&self, sample: &SequenceSample) -> Result<ModelInputs> {
        ModelInputs::from_sample(sample, self.config.motion_unit)
    }

    pub fn predict_inputs(&self, x: &ModelInputs) -> Result<PredictionBundle> {
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, x, None)?;
        let [gait, attention, orientation, distraction, crossing] = f.logits.map(|l| softmax(g.value(l).data()));
        let u = self.config.traj_unit;
        let trajectory = f
            .centers
            .iter()
            .map(|&c| {
                let d = g.value(c).data();
                [x.last_center[0] + u * d[0], x.last_center[1] + u * d[1]]
            })
            .collect();
        Ok(PredictionBundle {
            gait,
            attention,
            orientation,
            distraction,
            crossing,
            trajectory,
        })
    }

    pub fn predict(&self, sample: &SequenceSample) -> Result<PredictionBundle> {
        self.predict_inputs(&self.inputs(sample)?)
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value, optimizer: Option<&vru_nn::AdamState>) -> Checkpoint {
        let meta = serde_json::json!({
            "model": "vrunet",
            "config": self.config,
            "extra": extra,
        });
        Checkpoint::from_store(&self.store, meta.to_string(), optimizer)
    }

    /// Rebuilds a network from a checkpoint written by [`VruNet::to_checkpoint`].
    /// Returns the model and the `extra` metadata.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, serde_json::Value)> {
        let bad = |detail: String| ModelError::Format {
            path: "<checkpoint>".into(),
            detail,
        };
        let meta: serde_json::Value =
            serde_json::from_str(&ckpt.metadata).map_err(|e| bad(format!("metadata: {e}")))?;
        if meta.get("model").and_then(|m| m.as_str()) != Some("vrunet") {
            return Err(bad("not a vrunet checkpoint".into()));
        }
        let config: VruNetConfig = serde_json::from_value(meta["config"].clone()).map_err(|e| bad(format!("config: {e}")))?;
        let mut model = VruNet::new(config, 0)?;
        ckpt.restore_into(&mut model.store)?;
        Ok((model, meta["extra"].clone()))
    }
}

/// Per-task class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub per_task: [Vec<f64>; 5],
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            per_task: Task::ALL.map(|t| vec![1.0; t.classes()]),
        }
    }

    /// Inverse-frequency weights `n / (K · n_c)`, so the weight averaged
    /// over samples is one. Absent classes get weight one.
    pub fn inverse_frequency(labels: &[[usize; 5]]) -> Self {
        let n = labels.len() as f64;
        let per_task = Task::ALL.map(|t| {
            let k = t.classes();
            let mut counts = vec![0usize; k];
            for l in labels {
                counts[l[t.index()]] += 1;
            }
            counts
                .iter()
                .map(|&c| if c == 0 { 1.0 } else { n / (k as f64 * c as f64) })
                .collect()
        });
        ClassWeights { per_task }
    }

    pub fn weight(&self, task: usize, class: usize) -> f64 {
        self.per_task[task][class]
    }
}

/// `Σ_k ω_k · c_k[y_k] · CE_k` over the five heads.
pub fn action_loss(
    g: &mut Graph,
    logits: &[Var; 5],
    labels: [usize; 5],
    weights: &LossWeights,
    class_weights: &ClassWeights,
) -> Result<Var> {
    let w = weights.to_array();
    let terms: Vec<Var> = (0..5)
        .map(|k| g.softmax_ce(logits[k], labels[k], w[k] * class_weights.weight(k, labels[k])))
        .collect::<vru_nn::Result<_>>()?;
    Ok(g.add_n(&terms)?)
}

/// Mean squared error over all predicted coordinates.
pub fn trajectory_mse(g: &mut Graph, centers: &[Var], target: &[[f64; 2]]) -> Result<Var> {
    if centers.len() != target.len() {
        return Err(ModelError::Input(format!("{} predicted vs {} target centres", centers.len(), target.len())));
    }
    let pred = g.concat(centers);
    let t = g.input(Tensor::vector(target.iter().flatten().copied().collect()));
    Ok(g.mse(pred, t)?)
}

/// Trajectory MSE plus `λ · Σ p²` over the decoder parameters.
pub fn traj_loss(g: &mut Graph, model: &VruNet, centers: &[Var], target: &[[f64; 2]], lambda: f64) -> Result<Var> {
    let mse = trajectory_mse(g, centers, target)?;
    let reg = g.l2_penalty(&model.decoder_params(), lambda)?;
    Ok(g.add(mse, reg)?)
}

pub fn total_loss(g: &mut Graph, action: Var, traj: Var, alpha: f64, beta: f64) -> Result<Var> {
    let a = g.scale(action, alpha);
    let b = g.scale(traj, beta);
    Ok(g.add(a, b)?)
}

/// Ground-truth future centres of a sample in the decoder frame.
pub fn target_centers(s: &SequenceSample, traj_unit: f64) -> Vec<[f64; 2]> {
    let [w, h] = s.image_size;
    let [lx, ly] = s.last_center();
    s.future_centers
        .iter()
        .map(|c| [(c[0] - lx) / (w * traj_unit), (c[1] - ly) / (h * traj_unit)])
        .collect()
}
