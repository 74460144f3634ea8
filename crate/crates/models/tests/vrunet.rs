use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vru_core::data::masks::NUM_CLASSES;
use vru_core::geometry::NUM_JOINTS;
use vru_nn::gradcheck::check_params;
use vru_nn::{Graph, Tensor};
use vru_models::vrunet::{action_loss, total_loss, traj_loss, trajectory_mse};
use vru_models::{ClassWeights, LossWeights, ModelInputs, VruNet, VruNetConfig};

/// Whole networks contain hundreds of ReLUs, so a 1e-3 step regularly
/// straddles a kink; a smaller step keeps the difference quotient local.
const FULL_MODEL_STEP: f64 = 1e-5;

fn tiny() -> VruNetConfig {
    VruNetConfig {
        obs_len: 4,
        horizon: 3,
        mask_h: 8,
        mask_w: 8,
        conv_channels: 3,
        scene_channels: [3, 4],
        scene_fc: [6, 5],
        embed: 5,
        head_hidden: 6,
        hidden: 8,
        ..VruNetConfig::default()
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Random inputs; the scene is a random distribution over the mask classes
/// per cell, as a time-averaged one-hot mask would be.
fn random_inputs(cfg: &VruNetConfig, seed: u64) -> ModelInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = uniform(&[cfg.mask_h, cfg.mask_w, NUM_CLASSES], 0.0, 1.0, &mut rng);
    for cell in scene.data_mut().chunks_mut(NUM_CLASSES) {
        let total: f64 = cell.iter().sum();
        cell.iter_mut().for_each(|v| *v /= total);
    }
    ModelInputs {
        pose: uniform(&[cfg.obs_len, NUM_JOINTS, 3], 0.0, 1.0, &mut rng),
        boxes: uniform(&[cfg.obs_len, 4, 1], -1.0, 1.0, &mut rng),
        scene,
        last_center: [0.5, 0.6],
        image_size: [640.0, 360.0],
    }
}

fn random_target(horizon: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect()
}

/// Gives the zero-initialized decoder output layer a nonzero value so its
/// gradient paths are exercised.
fn perturb_all(model: &mut VruNet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.store.iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
}

/// Positive biases keep the narrow ReLU layers of the tiny config active,
/// so every branch contributes gradient.
fn lift_biases(model: &mut VruNet) {
    for p in model.store.iter_mut() {
        if p.name.ends_with(".b") {
            p.value.data_mut().iter_mut().for_each(|v| *v += 0.2);
        }
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn encoder_time_axis_is_quartered() {
    let cfg = VruNetConfig {
        obs_len: 16,
        ..tiny()
    };
    assert_eq!(cfg.encoder_steps(), 4);
    assert_eq!(VruNetConfig::default().encoder_steps(), 8);
}

#[test]
fn scene_flatten_matches_layer_arithmetic() {
    // Four stride-2 same-padded convs; the stride-1 pools keep the size.
    assert_eq!(VruNetConfig::default().scene_grid(), (6, 10));
    assert_eq!(VruNetConfig::desk().scene_grid(), (3, 4));
    assert_eq!(VruNetConfig::full_resolution().scene_grid(), (23, 40));
    assert_eq!(tiny().scene_grid(), (1, 1));
    let cfg = VruNetConfig::default();
    assert_eq!(cfg.scene_flatten_len(), 6 * 10 * 512);
    assert_eq!(cfg.fused_len(), 768);
}

#[test]
fn forward_shapes_and_valid_distributions() {
    let cfg = tiny();
    let model = VruNet::new(cfg.clone(), 3).unwrap();
    for seed in 0..20 {
        let x = random_inputs(&cfg, seed);
        let b = model.predict_inputs(&x).unwrap();
        let classes = [2, 2, 4, 2, 2];
        for (d, k) in b.distributions().iter().zip(classes) {
            assert_eq!(d.len(), k);
            assert!(d.iter().all(|&p| p >= 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
        assert_eq!(b.trajectory.len(), cfg.horizon);
    }
}

#[test]
fn fresh_decoder_predicts_stationary_pedestrian() {
    let cfg = tiny();
    let model = VruNet::new(cfg.clone(), 5).unwrap();
    let x = random_inputs(&cfg, 9);
    let b = model.predict_inputs(&x).unwrap();
    for p in &b.trajectory {
        assert!((p[0] - x.last_center[0]).abs() < 1e-6 && (p[1] - x.last_center[1]).abs() < 1e-6, "{p:?}");
    }
}

#[test]
fn forward_is_deterministic() {
    let cfg = tiny();
    let a = VruNet::new(cfg.clone(), 11).unwrap();
    let b = VruNet::new(cfg.clone(), 11).unwrap();
    let x = random_inputs(&cfg, 1);
    assert_eq!(a.predict_inputs(&x).unwrap(), b.predict_inputs(&x).unwrap());
    assert_eq!(a.predict_inputs(&x).unwrap(), a.predict_inputs(&x).unwrap());
}

#[test]
fn wrong_input_shape_is_rejected() {
    let cfg = tiny();
    let model = VruNet::new(cfg.clone(), 1).unwrap();
    let mut x = random_inputs(&cfg, 1);
    x.pose = Tensor::zeros(&[5, NUM_JOINTS, 3]);
    assert!(model.predict_inputs(&x).is_err());
}

#[test]
fn action_loss_matches_direct_recomputation() {
    let cfg = tiny();
    let model = VruNet::new(cfg.clone(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..10 {
        let x = random_inputs(&cfg, seed);
        let labels = [rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..4), rng.random_range(0..2), rng.random_range(0..2)];
        let w = LossWeights::from_array(std::array::from_fn(|_| rng.random_range(0.1..2.0)));
        let cw = ClassWeights::inverse_frequency(&[[0, 0, 0, 0, 0], [1, 0, 1, 1, 0], [1, 1, 2, 1, 1], [1, 0, 3, 0, 0]]);
        let mut g = Graph::new(&model.store);
        let out = model.forward(&mut g, &x, None).unwrap();
        let loss = action_loss(&mut g, &out.logits, labels, &w, &cw).unwrap();
        let expect: f64 = (0..5)
            .map(|k| {
                let p = softmax(g.value(out.logits[k]).data());
                w.to_array()[k] * cw.per_task[k][labels[k]] * -p[labels[k]].ln()
            })
            .sum();
        let got = g.value(loss).item();
        assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn inverse_frequency_weights_average_to_one() {
    let labels = [[0, 1, 0, 1, 1], [1, 1, 1, 1, 1], [1, 1, 2, 1, 0], [1, 0, 2, 1, 0]];
    let cw = ClassWeights::inverse_frequency(&labels);
    // Exact only for tasks whose classes all occur.
    for k in [0, 1, 4] {
        let mean: f64 = labels.iter().map(|l| cw.weight(k, l[k])).sum::<f64>() / labels.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }
    // gait: one sample of class 0 out of four.
    assert!((cw.weight(0, 0) - 2.0).abs() < 1e-12);
    // orientation class 3 never occurs.
    assert_eq!(cw.weight(2, 3), 1.0);
}

#[test]
fn scaling_loss_weights_scales_action_loss() {
    let cfg = tiny();
    let model = VruNet::new(cfg.clone(), 4).unwrap();
    let x = random_inputs(&cfg, 4);
    let base = LossWeights::from_array([1.0, 0.5, 2.0, 0.25, 1.5]);
    let loss_at = |w: &LossWeights| {
        let mut g = Graph::new(&model.store);
        let out = model.forward(&mut g, &x, None).unwrap();
        let l = action_loss(&mut g, &out.logits, [1, 0, 3, 1, 0], w, &ClassWeights::uniform()).unwrap();
        g.value(l).item()
    };
    let l0 = loss_at(&base);
    for c in [0.5, 3.0, 17.0] {
        let scaled = LossWeights::from_array(base.to_array().map(|w| w * c));
        let l = loss_at(&scaled);
        assert!((l - c * l0).abs() <= 1e-12 * l.abs());
        let mut m2 = model.clone();
        m2.config.loss_weights = scaled;
        assert_eq!(m2.predict_inputs(&x).unwrap().argmax(), model.predict_inputs(&x).unwrap().argmax());
    }
}

#[test]
fn traj_loss_matches_direct_recomputation() {
    let cfg = tiny();
    let mut model = VruNet::new(cfg.clone(), 6).unwrap();
    perturb_all(&mut model, 6);
    let x = random_inputs(&cfg, 6);
    let target = random_target(cfg.horizon, 6);
    for lambda in [0.0, 0.0003, 0.1] {
        let mut g = Graph::new(&model.store);
        let out = model.forward(&mut g, &x, None).unwrap();
        let loss = traj_loss(&mut g, &model, &out.centers, &target, lambda).unwrap();
        let mut sq = 0.0;
        for (c, t) in out.centers.iter().zip(&target) {
            let v = g.value(*c).data();
            sq += (v[0] - t[0]).powi(2) + (v[1] - t[1]).powi(2);
        }
        let mse = sq / (2 * cfg.horizon) as f64;
        let reg: f64 = model
            .decoder_params()
            .iter()
            .flat_map(|&id| model.store.value(id).data().to_vec())
            .map(|p| p * p)
            .sum();
        let expect = mse + lambda * reg;
        assert!((g.value(loss).item() - expect).abs() <= 1e-12 * expect.max(1.0));
    }
}

#[test]
fn traj_loss_vanishes_for_perfect_prediction_and_zero_decoder() {
    let cfg = tiny();
    let mut model = VruNet::new(cfg.clone(), 8).unwrap();
    for id in model.decoder_params() {
        model.store.get_mut(id).value.fill(0.0);
    }
    let x = random_inputs(&cfg, 8);
    let mut g = Graph::new(&model.store);
    let out = model.forward(&mut g, &x, None).unwrap();
    let target: Vec<[f64; 2]> = out.centers.iter().map(|&c| [g.value(c).data()[0], g.value(c).data()[1]]).collect();
    let loss = traj_loss(&mut g, &model, &out.centers, &target, 0.0003).unwrap();
    assert_eq!(g.value(loss).item(), 0.0);
    let mse = trajectory_mse(&mut g, &out.centers, &target).unwrap();
    assert_eq!(g.value(mse).item(), 0.0);
}

#[test]
fn total_loss_mixes_components() {
    let store = vru_nn::ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.input(Tensor::scalar(1.0));
    let t = g.input(Tensor::scalar(1.0));
    let l = total_loss(&mut g, a, t, 1.0, 1.0).unwrap();
    assert_eq!(g.value(l).item(), 2.0);
    let l = total_loss(&mut g, a, t, 1.0, 0.0).unwrap();
    assert_eq!(g.value(l).item(), 1.0);
}

fn full_loss(model: &VruNet, g: &mut Graph, x: &ModelInputs, target: &[[f64; 2]], alpha: f64, beta: f64) -> vru_nn::Result<vru_nn::Var> {
    let err = |e: vru_models::ModelError| vru_nn::NnError::Invalid { op: "model", detail: e.to_string() };
    let out = model.forward(g, x, None).map_err(err)?;
    let cw = ClassWeights::inverse_frequency(&[[0, 1, 2, 0, 1], [1, 1, 3, 1, 0]]);
    let act = action_loss(g, &out.logits, [0, 1, 2, 1, 0], &model.config.loss_weights, &cw).map_err(err)?;
    let traj = traj_loss(g, model, &out.centers, target, 0.01).map_err(err)?;
    total_loss(g, act, traj, alpha, beta).map_err(err)
}

#[test]
fn full_model_gradient_check() {
    let cfg = tiny();
    for seed in 0..5 {
        let mut model = VruNet::new(cfg.clone(), seed).unwrap();
        perturb_all(&mut model, seed + 100);
        lift_biases(&mut model);
        let x = random_inputs(&cfg, seed + 200);
        let target = random_target(cfg.horizon, seed + 300);
        let mut store = model.store.clone();
        let r = check_params(&mut store, FULL_MODEL_STEP, 6, seed, |g| full_loss(&model, g, &x, &target, 1.0, 1.0)).unwrap();
        assert!(r.max_rel_error <= 1e-3, "seed {seed}: {r:?}");
        assert!(r.checked > 100);
        let mut g = Graph::new(&model.store);
        let l = full_loss(&model, &mut g, &x, &target, 1.0, 1.0).unwrap();
        let grads = g.backward(l).unwrap();
        let k = model.scene_params()[0];
        let scene_grad = grads.param_grads().find(|(id, _)| *id == k).map(|(_, t)| t.data().iter().map(|v| v.abs()).sum::<f64>());
        assert!(scene_grad.unwrap_or(0.0) > 0.0, "scene branch is inactive");
    }
}

#[test]
fn total_gradient_is_weighted_sum_of_components() {
    let cfg = tiny();
    let mut model = VruNet::new(cfg.clone(), 21).unwrap();
    perturb_all(&mut model, 21);
    let x = random_inputs(&cfg, 21);
    let target = random_target(cfg.horizon, 21);
    let grads = |alpha: f64, beta: f64| {
        let mut g = Graph::new(&model.store);
        let l = full_loss(&model, &mut g, &x, &target, alpha, beta).unwrap();
        let grads = g.backward(l).unwrap();
        let mut store = model.store.clone();
        store.zero_grads();
        grads.accumulate_into(&mut store);
        store.iter().flat_map(|p| p.grad.data().to_vec()).collect::<Vec<f64>>()
    };
    let (ga, gt, gm) = (grads(1.0, 0.0), grads(0.0, 1.0), grads(0.7, 2.5));
    for i in 0..gm.len() {
        let expect = 0.7 * ga[i] + 2.5 * gt[i];
        assert!((gm[i] - expect).abs() <= 1e-9 * expect.abs().max(1e-6));
    }
}

#[test]
fn pose_branch_gradient_check() {
    let cfg = tiny();
    let mut model = VruNet::new(cfg.clone(), 31).unwrap();
    perturb_all(&mut model, 31);
    let x = random_inputs(&cfg, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let proj = uniform(&[cfg.embed, 1], -1.0, 1.0, &mut rng);
    let mut store = model.store.clone();
    let r = check_params(&mut store, FULL_MODEL_STEP, 8, 31, |g| {
        let e = model.encode_pose(g, &x.pose).map_err(|e| vru_nn::NnError::Invalid { op: "model", detail: e.to_string() })?;
        let w = g.input(proj.clone());
        g.linear(e, w, None)
    })
    .unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}

#[test]
fn ablated_model_ignores_scene() {
    let cfg = VruNetConfig {
        ablate_scene: true,
        ..tiny()
    };
    let model = VruNet::new(cfg.clone(), 41).unwrap();
    let x = random_inputs(&cfg, 41);
    let mut y = x.clone();
    y.scene = random_inputs(&cfg, 42).scene;
    assert_eq!(model.predict_inputs(&x).unwrap(), model.predict_inputs(&y).unwrap());
    let mut full = VruNet::new(tiny(), 41).unwrap();
    lift_biases(&mut full);
    assert_ne!(full.predict_inputs(&x).unwrap(), full.predict_inputs(&y).unwrap());
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let cfg = tiny();
    let mut model = VruNet::new(cfg.clone(), 51).unwrap();
    perturb_all(&mut model, 51);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.to_checkpoint(serde_json::json!({"epoch": 7}), None).save(&path).unwrap();
    let (back, extra) = VruNet::from_checkpoint(&vru_nn::Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(extra["epoch"], 7);
    assert_eq!(back.config, cfg);
    let x = random_inputs(&cfg, 51);
    assert_eq!(back.predict_inputs(&x).unwrap(), model.predict_inputs(&x).unwrap());
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        VruNetConfig { obs_len: 0, ..tiny() },
        VruNetConfig { hidden: 0, ..tiny() },
        VruNetConfig { lambda_reg: -1.0, ..tiny() },
        VruNetConfig { loss_weights: LossWeights::uniform(0.0), ..tiny() },
    ] {
        assert!(VruNet::new(cfg, 0).is_err());
    }
}
