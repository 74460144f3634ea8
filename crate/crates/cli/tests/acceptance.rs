//! End-to-end acceptance checks. Every criterion prints one PASS or FAIL
//! line; the test fails if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vru_core::data::augment::flip_sample;
use vru_core::data::corpus::encode_corpus;
use vru_core::data::masks::{MaskGrid, MaskPack, NUM_CLASSES, ROAD};
use vru_core::data::synth::to_scenes;
use vru_core::data::{
    build_samples, make_windows, split, synthesize_scenes, ActionLabels, LabeledTrack, SceneContext, SequenceSample,
    SynthSpec, TrackFrame, WindowConfig,
};
use vru_core::geometry::{attention_features, distraction_features, gait_features, joint, Keypoint, PoseFrame, NUM_JOINTS};
use vru_core::metrics::{average_precision, displacement_errors};
use vru_core::tracking::{associate, BBox, KalmanConfig, KalmanState, Mat8, Tracker, TrackerConfig, Vec8};
use vru_models::baselines::resnet::resnet_loss;
use vru_models::baselines::{ModularConfig, ModularModel, Resnet1d, ResnetConfig};
use vru_models::eval::{evaluate_vrunet, EvalReport};
use vru_models::vrunet::{action_loss, total_loss, traj_loss};
use vru_models::{smooth_trajectory, ClassWeights, ModelInputs, TrainConfig, Trainer, VruNet, VruNetConfig};
use vru_nn::gradcheck::{check_inputs, check_inputs_with, check_params, GradCheck};
use vru_nn::{lstm_cell, Graph, LstmParams, NnError, ParamStore, Tensor, Var};
use vru_oracles as oracle;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

// ---------------------------------------------------------------- gradients

const OP_STEP: f64 = 1e-3;
const OP_TOL: f64 = 1e-4;
/// Whole networks hold many ReLUs; a small step keeps the difference
/// quotient on one side of each kink.
const MODEL_STEP: f64 = 1e-5;
const MODEL_TOL: f64 = 1e-3;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn project(g: &mut Graph, v: Var, seed: u64) -> vru_nn::Result<Var> {
    let n = g.value(v).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.input(random(&[n, 1], &mut rng));
    g.linear(v, w, None)
}

fn op_check(name: &str, worst: &mut Vec<(String, f64)>, r: vru_nn::Result<GradCheck>) -> Result<(), String> {
    let r = r.map_err(|e| format!("{name}: {e}"))?;
    worst.push((name.to_string(), r.max_rel_error));
    ensure(r.max_rel_error <= OP_TOL, || format!("{name}: relative error {:.2e}", r.max_rel_error))
}

fn tiny_vrunet() -> VruNetConfig {
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

fn tiny_inputs(cfg: &VruNetConfig, rng: &mut impl Rng) -> ModelInputs {
    let mut scene = random(&[cfg.mask_h, cfg.mask_w, NUM_CLASSES], rng);
    for cell in scene.data_mut().chunks_mut(NUM_CLASSES) {
        cell.iter_mut().for_each(|v| *v = v.abs() + 0.01);
        let total: f64 = cell.iter().sum();
        cell.iter_mut().for_each(|v| *v /= total);
    }
    let mut pose = random(&[cfg.obs_len, NUM_JOINTS, 3], rng);
    pose.data_mut().iter_mut().for_each(|v| *v = v.abs());
    ModelInputs {
        pose,
        boxes: random(&[cfg.obs_len, 4, 1], rng),
        scene,
        last_center: [0.5, 0.6],
        image_size: [640.0, 360.0],
    }
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = Vec::new();
    for case in 0..10u64 {
        let (h, w) = (rng.random_range(1..7), rng.random_range(1..7));
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let (kh, kw, stride) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..3));
        let inputs = [random(&[h, w, ci], &mut rng), random(&[kh, kw, ci, co], &mut rng), random(&[co], &mut rng)];
        op_check(
            "conv2d",
            &mut worst,
            check_inputs(&inputs, OP_STEP, |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), stride)?;
                project(g, y, case)
            }),
        )?;

        let (h, w, c) = (rng.random_range(2..7), rng.random_range(2..7), rng.random_range(1..3));
        let n = h * w * c;
        let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        for i in (1..n).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor::from_vec(&[h, w, c], vals).unwrap();
        op_check(
            "maxpool",
            &mut worst,
            check_inputs(&[x], OP_STEP, |g, v| {
                let y = g.maxpool(v[0], 2, stride)?;
                project(g, y, case)
            }),
        )?;

        let (n, m) = (rng.random_range(1..8), rng.random_range(1..8));
        let inputs = [random(&[n], &mut rng), random(&[n, m], &mut rng), random(&[m], &mut rng)];
        op_check(
            "linear",
            &mut worst,
            check_inputs(&inputs, OP_STEP, |g, v| {
                let y = g.linear(v[0], v[1], Some(v[2]))?;
                let y = g.tanh(y);
                project(g, y, case)
            }),
        )?;

        let n = rng.random_range(2..10);
        let a = random(&[n], &mut rng);
        let a = Tensor::vector(a.data().iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { *v }).collect());
        let b = random(&[n], &mut rng);
        op_check(
            "elementwise",
            &mut worst,
            check_inputs(&[a, b], OP_STEP, |g, v| {
                let s = g.sigmoid(v[0]);
                let t = g.tanh(v[1]);
                let r = g.relu(v[0]);
                let m = g.mul(s, t)?;
                let d = g.sub(m, r)?;
                let e = g.add(d, v[1])?;
                let c = g.concat(&[e, t]);
                let sl = g.slice(c, 1, n)?;
                let sc = g.scale(sl, 0.7);
                let sum = g.add_n(&[sc, sl])?;
                let re = g.reshape(sum, &[n, 1])?;
                let sq = g.sum_squares(re);
                let p = project(g, re, case)?;
                g.add(p, sq)
            }),
        )?;

        let x = random(&[rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5)], &mut rng);
        op_check(
            "global_avg_pool",
            &mut worst,
            check_inputs(&[x], OP_STEP, |g, v| {
                let y = g.global_avg_pool(v[0])?;
                let y = g.tanh(y);
                project(g, y, case)
            }),
        )?;

        let k = rng.random_range(2..6);
        let label = rng.random_range(0..k);
        let weight = rng.random_range(0.1..2.0);
        op_check(
            "softmax_ce",
            &mut worst,
            check_inputs(&[random(&[k], &mut rng)], OP_STEP, |g, v| g.softmax_ce(v[0], label, weight)),
        )?;

        let n = rng.random_range(1..10);
        op_check(
            "mse",
            &mut worst,
            check_inputs(&[random(&[n], &mut rng), random(&[n], &mut rng)], OP_STEP, |g, v| g.mse(v[0], v[1])),
        )?;
    }

    let mut store = ParamStore::new();
    let p = LstmParams::new(&mut store, "lstm", 3, 5, &mut rng);
    let a = store.add("a", random(&[4], &mut rng));
    let xs: Vec<Tensor> = (0..3).map(|_| random(&[3], &mut rng)).collect();
    let lstm = |g: &mut Graph, xs: &[Var]| -> vru_nn::Result<Var> {
        let mut h = g.input(Tensor::zeros(&[5]));
        let mut c = g.input(Tensor::zeros(&[5]));
        for &x in xs {
            (h, c) = lstm_cell(g, x, h, c, &p)?;
        }
        let hc = g.concat(&[h, c]);
        project(g, hc, 4)
    };
    op_check(
        "lstm_cell (inputs)",
        &mut worst,
        check_inputs_with(&store, &xs, OP_STEP, |g, v| lstm(g, v)),
    )?;
    op_check(
        "lstm_cell (params) + l2_penalty",
        &mut worst,
        check_params(&mut store, OP_STEP, 1000, 0, |g| {
            let v: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
            let l = lstm(g, &v)?;
            let reg = g.l2_penalty(&[a], 0.3)?;
            g.add(l, reg)
        }),
    )?;

    let as_nn = |e: vru_models::ModelError| NnError::Invalid { op: "model", detail: e.to_string() };
    let cfg = tiny_vrunet();
    for seed in 0..3u64 {
        let mut model = VruNet::new(cfg.clone(), seed).unwrap();
        let mut prng = ChaCha8Rng::seed_from_u64(seed + 100);
        for param in model.store.iter_mut() {
            let lift = if param.name.ends_with(".b") { 0.2 } else { 0.0 };
            param.value.data_mut().iter_mut().for_each(|v| *v += lift + prng.random_range(-0.05..0.05));
        }
        let x = tiny_inputs(&cfg, &mut prng);
        let target: Vec<[f64; 2]> = (0..cfg.horizon).map(|_| [prng.random_range(-2.0..2.0), prng.random_range(-2.0..2.0)]).collect();
        let cw = ClassWeights::inverse_frequency(&[[0, 1, 2, 0, 1], [1, 1, 3, 1, 0]]);
        let mut store = model.store.clone();
        let r = check_params(&mut store, MODEL_STEP, 6, seed, |g| {
            let out = model.forward(g, &x, None).map_err(as_nn)?;
            let act = action_loss(g, &out.logits, [0, 1, 2, 1, 0], &model.config.loss_weights, &cw).map_err(as_nn)?;
            let traj = traj_loss(g, &model, &out.centers, &target, 0.01).map_err(as_nn)?;
            total_loss(g, act, traj, 1.0, 1.0).map_err(as_nn)
        })
        .map_err(|e| format!("vrunet: {e}"))?;
        worst.push(("vrunet".into(), r.max_rel_error));
        ensure(r.max_rel_error <= MODEL_TOL, || format!("vrunet seed {seed}: relative error {:.2e}", r.max_rel_error))?;
    }

    for seed in 0..3u64 {
        let rcfg = ResnetConfig {
            input_len: 6,
            features: 3,
            channels: [2, 3, 3, 4],
            heads: vec![2, 4],
        };
        let mut model = Resnet1d::new(rcfg, seed).unwrap();
        let mut prng = ChaCha8Rng::seed_from_u64(seed + 10);
        for param in model.store.iter_mut() {
            param.value.data_mut().iter_mut().for_each(|v| *v += prng.random_range(-0.1..0.1));
        }
        let window: Vec<f64> = (0..18).map(|_| prng.random_range(-1.0..1.0)).collect();
        let mut store = model.store.clone();
        let r = check_params(&mut store, MODEL_STEP, 10, seed, |g| {
            resnet_loss(g, &model, &window, &[1, 2], &[1.0, 0.7]).map_err(as_nn)
        })
        .map_err(|e| format!("resnet: {e}"))?;
        worst.push(("resnet-10".into(), r.max_rel_error));
        ensure(r.max_rel_error <= MODEL_TOL, || format!("resnet seed {seed}: relative error {:.2e}", r.max_rel_error))?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    let (name, err) = worst.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Ok(format!(
        "{} checks, worst {name} at {err:.2e}, {:.1}s",
        worst.len(),
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- overfit

fn corpus(scenes: usize, seed: u64, prefix: &str) -> Vec<SequenceSample> {
    let spec = SynthSpec {
        scenes,
        prefix: prefix.into(),
        ..SynthSpec::default()
    };
    let (sc, packs) = to_scenes(&synthesize_scenes(&spec, seed).unwrap());
    build_samples(&sc, &packs, &WindowConfig::default()).unwrap().0
}

fn criterion_overfit() -> Outcome {
    let start = Instant::now();
    let samples = corpus(16, 3, "fit");
    ensure(samples.len() == 32, || format!("expected 32 samples, got {}", samples.len()))?;
    let model = VruNet::new(VruNetConfig::desk(), 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, cfg, &samples, 5).map_err(|e| e.to_string())?;
    let mut last = None;
    for _ in 0..500 {
        let row = trainer.run_epoch(&samples, &samples).map_err(|e| e.to_string())?;
        if row.epoch % 10 != 0 {
            continue;
        }
        let rep = evaluate_vrunet(&trainer.model, &samples).map_err(|e| e.to_string())?;
        let ade = rep.ade.unwrap_or(f64::INFINITY);
        let min_acc = rep.accuracy.iter().cloned().fold(1.0, f64::min);
        last = Some((row.epoch, min_acc, ade));
        if min_acc >= 0.95 && ade <= 2.0 {
            within(start.elapsed(), Duration::from_secs(600))?;
            return Ok(format!(
                "epoch {}: lowest head accuracy {min_acc:.3}, ADE {ade:.2} px, {:.1}s",
                row.epoch,
                start.elapsed().as_secs_f64()
            ));
        }
    }
    let (epoch, acc, ade) = last.unwrap_or((0, 0.0, f64::INFINITY));
    Err(format!("after {epoch} epochs: lowest head accuracy {acc:.3}, ADE {ade:.2} px"))
}

// ---------------------------------------------------------------- generalization

struct Generalization {
    full: Vec<EvalReport>,
    ablated: Vec<EvalReport>,
    modular: EvalReport,
    test_windows: usize,
    elapsed: Duration,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn generalization() -> &'static Result<Generalization, String> {
    static CELL: std::sync::OnceLock<Result<Generalization, String>> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let train = corpus(300, 11, "tr");
        let val = corpus(25, 12, "va");
        let test = corpus(500, 13, "te");
        let mut full = Vec::new();
        let mut ablated = Vec::new();
        for seed in 1..=3u64 {
            for ablate in [false, true] {
                let mc = VruNetConfig {
                    conv_channels: 16,
                    ablate_scene: ablate,
                    ..VruNetConfig::desk()
                };
                let tc = TrainConfig {
                    epochs: 30,
                    lr: 1e-3,
                    flip_prob: 0.5,
                    mask_noise: 0.05,
                    ..TrainConfig::default()
                };
                let model = VruNet::new(mc, seed).map_err(|e| e.to_string())?;
                let mut trainer = Trainer::new(model, tc, &train, seed).map_err(|e| e.to_string())?;
                trainer.fit(&train, &val, 30, |_, _| Ok(())).map_err(|e| e.to_string())?;
                let rep = evaluate_vrunet(&trainer.best_model(), &test).map_err(|e| e.to_string())?;
                if ablate { &mut ablated } else { &mut full }.push(rep);
            }
        }
        let modular = ModularModel::train(&train, ModularConfig::desk(), 7, &mut |_| {}).map_err(|e| e.to_string())?;
        let modular = EvalReport::from_collected(&modular.collect(&test).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        Ok(Generalization {
            full,
            ablated,
            modular,
            test_windows: test.len(),
            elapsed: start.elapsed(),
        })
    })
}

const GAIT: usize = 0;
const XNG: usize = 4;

fn crossing_aps(reports: &[EvalReport]) -> Vec<f64> {
    reports.iter().map(|r| r.ap[XNG].unwrap_or(0.0)).collect()
}

fn criterion_generalization() -> Outcome {
    let g = generalization().as_ref().map_err(|e| e.clone())?;
    ensure(g.test_windows >= 1000, || format!("only {} test windows", g.test_windows))?;
    let vrunet = median(crossing_aps(&g.full));
    let modular = g.modular.ap[XNG].unwrap_or(0.0);
    let gait = g.modular.ap[GAIT].unwrap_or(0.0);
    let detail = format!(
        "{} windows: VRUNet XNG AP {vrunet:.3} (median of 3), modular XNG AP {modular:.3}, modular GAIT AP {gait:.3}, {:.0}s",
        g.test_windows,
        g.elapsed.as_secs_f64()
    );
    ensure(vrunet >= 0.90 && modular >= 0.85 && gait >= 0.95, || detail.clone())?;
    within(g.elapsed, Duration::from_secs(1800))?;
    Ok(detail)
}

fn criterion_scene_benefit() -> Outcome {
    let g = generalization().as_ref().map_err(|e| e.clone())?;
    let gaps: Vec<f64> = crossing_aps(&g.full)
        .iter()
        .zip(crossing_aps(&g.ablated))
        .map(|(f, a)| 100.0 * (f - a))
        .collect();
    let gap = median(gaps.clone());
    let detail = format!(
        "median crossing AP gain {gap:.2} points (per seed {:?}); full {:?}, ablated {:?}",
        gaps.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
        crossing_aps(&g.full).iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        crossing_aps(&g.ablated).iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
    );
    ensure(gap >= 2.0, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- oracles

fn random_pose(rng: &mut impl Rng) -> PoseFrame {
    let mut p = PoseFrame::default();
    for k in &mut p.keypoints {
        *k = Keypoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..360.0), rng.random_range(0.0..1.0));
    }
    p
}

fn xy(p: &PoseFrame, j: usize) -> [f64; 2] {
    [p.keypoints[j].x, p.keypoints[j].y]
}

fn dense(m: &Mat8) -> oracle::Dense {
    (0..8).map(|i| (0..8).map(|j| m[(i, j)]).collect()).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_state(rng: &mut impl Rng) -> KalmanState {
    let mut mean = Vec8::zeros();
    for i in 0..8 {
        mean[i] = rng.random_range(-50.0..50.0);
    }
    mean[2] = rng.random_range(5.0..50.0);
    mean[3] = rng.random_range(5.0..50.0);
    let mut a = Mat8::zeros();
    for v in a.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    KalmanState {
        mean,
        cov: a * a.transpose() + Mat8::identity() * 0.5,
    }
}

fn criterion_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    const N: usize = 150;
    use joint::*;
    for i in 0..N {
        let p = random_pose(&mut rng);
        let g = gait_features(&p);
        let want = [
            oracle::distance(xy(&p, R_ANKLE), xy(&p, R_KNEE)),
            oracle::distance(xy(&p, L_ANKLE), xy(&p, L_KNEE)),
            oracle::joint_angle(xy(&p, R_HIP), xy(&p, R_KNEE), xy(&p, R_ANKLE)).unwrap(),
            oracle::joint_angle(xy(&p, L_HIP), xy(&p, L_KNEE), xy(&p, L_ANKLE)).unwrap(),
        ];
        let got = [g.d1, g.d2, g.theta1, g.theta2];
        for (a, b) in got.iter().zip(want) {
            ensure(close(*a, b, 1e-9), || format!("gait feature {i}: {a} vs {b}"))?;
        }
        ensure(g.x == oracle::exact_midpoint(p.keypoints[L_HIP].x, p.keypoints[R_HIP].x), || "hip midpoint x".into())?;
        let d = distraction_features(&p);
        let want = [
            oracle::joint_angle(xy(&p, L_SHOULDER), xy(&p, L_ELBOW), xy(&p, L_WRIST)).unwrap(),
            oracle::joint_angle(xy(&p, R_SHOULDER), xy(&p, R_ELBOW), xy(&p, R_WRIST)).unwrap(),
            oracle::segment_angle(xy(&p, L_ELBOW), xy(&p, L_WRIST), xy(&p, R_ELBOW), xy(&p, R_WRIST)).unwrap(),
            oracle::segment_angle(xy(&p, L_SHOULDER), xy(&p, L_ELBOW), xy(&p, R_SHOULDER), xy(&p, R_ELBOW)).unwrap(),
        ];
        for (a, b) in d.to_array().iter().zip(want) {
            ensure(close(*a, b, 1e-9), || format!("distraction feature {i}: {a} vs {b}"))?;
        }
        let att = attention_features(&p);
        for (slot, j) in [NOSE, L_EYE, R_EYE, L_EAR, R_EAR, L_SHOULDER, R_SHOULDER].into_iter().enumerate() {
            let k = p.keypoints[j];
            ensure(att.values[3 * slot..3 * slot + 3] == [k.x, k.y, k.v], || format!("attention slot {slot}"))?;
        }
    }

    let kcfg = KalmanConfig::default();
    for i in 0..N {
        let s = random_state(&mut rng);
        let dt = rng.random_range(1..5u32);
        let p = s.predict(dt, &kcfg);
        let (m, c) = oracle::kalman_predict(s.mean.as_slice(), &dense(&s.cov), f64::from(dt), kcfg.q_pos, kcfg.q_vel);
        let obs = BBox::new(
            rng.random_range(-60.0..60.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(5.0..50.0),
            rng.random_range(5.0..50.0),
        );
        let u = s.update(&obs, &kcfg).map_err(|e| e.to_string())?;
        let (um, uc) = oracle::kalman_update(s.mean.as_slice(), &dense(&s.cov), &obs.to_array(), kcfg.r).unwrap();
        for r in 0..8 {
            ensure(close(p.mean[r], m[r], 1e-9) && close(u.mean[r], um[r], 1e-9), || format!("kalman mean {i}"))?;
            for col in 0..8 {
                ensure(close(p.cov[(r, col)], c[r][col], 1e-9) && close(u.cov[(r, col)], uc[r][col], 1e-9), || {
                    format!("kalman covariance {i}")
                })?;
            }
        }
    }

    for i in 0..N {
        let rows = rng.random_range(1..5);
        let cols = rng.random_range(1..5);
        let mut b = || {
            BBox::new(
                rng.random_range(0.0..20.0),
                rng.random_range(0.0..20.0),
                rng.random_range(4.0..14.0),
                rng.random_range(4.0..14.0),
            )
        };
        let tracks: Vec<BBox> = (0..rows).map(|_| b()).collect();
        let dets: Vec<BBox> = (0..cols).map(|_| b()).collect();
        let iou_min = if i % 3 == 0 { 0.0 } else { 0.2 };
        let got = associate(&tracks, &dets, iou_min).total_iou();
        let weights: Vec<Vec<f64>> = tracks
            .iter()
            .map(|t| dets.iter().map(|d| oracle::iou(t.to_array(), d.to_array())).collect())
            .collect();
        let best = oracle::best_assignment(&weights, iou_min);
        ensure((got - best).abs() <= 1e-9, || format!("assignment {i}: {got} vs {best}"))?;
    }

    for i in 0..N {
        let n = rng.random_range(1..40);
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 8.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        let got = average_precision(&scores, &labels).map_err(|e| e.to_string())?;
        let want = oracle::average_precision(&scores, &labels);
        ensure((got - want).abs() <= 1e-12, || format!("AP {i}: {got} vs {want}"))?;

        let len = rng.random_range(1..40);
        let mut pt = || [rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)];
        let pred: Vec<[f64; 2]> = (0..len).map(|_| pt()).collect();
        let gt: Vec<[f64; 2]> = (0..len).map(|_| pt()).collect();
        let e = displacement_errors(&pred, &gt).map_err(|e| e.to_string())?;
        let (ade, fde) = oracle::displacement(&pred, &gt);
        ensure(close(e.ade, ade, 1e-12) && close(e.fde, fde, 1e-12), || format!("displacement {i}"))?;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{N} instances per component, {:.2}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- invariants

fn plain_track(len: usize) -> LabeledTrack {
    LabeledTrack {
        scene_id: "s".into(),
        person_id: 1,
        frames: (0..len)
            .map(|t| TrackFrame {
                frame: t as i64,
                bbox: BBox::new(t as f64, 2.0 * t as f64, 10.0, 20.0),
                pose: PoseFrame::default(),
                labels: ActionLabels::from_indices([0, 0, 0, 0, 0]).unwrap(),
                context: SceneContext::default(),
                padded: false,
            })
            .collect(),
    }
}

fn plain_masks(len: usize) -> MaskPack {
    let mut p = MaskPack::new(4, 3, 640.0, 360.0);
    for t in 0..len {
        p.insert(t as i64, MaskGrid::filled(4, 3, ROAD)).unwrap();
    }
    p
}

fn vru(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vru"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("vru {args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn full_run(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| root.join(name).display().to_string();
    vru(&["--seed", "9", "synth", "--out", &p("raw"), "--scenes", "8"])?;
    vru(&["--seed", "9", "build", "--input", &p("raw"), "--out", &p("data")])?;
    vru(&["--seed", "9", "train", "--data", &p("data"), "--out", &p("run"), "--preset", "desk", "--epochs", "2"])?;
    vru(&["--seed", "9", "train", "--model", "modular", "--data", &p("data"), "--out", &p("modular"), "--preset", "desk"])?;
    vru(&["eval", "--model", &p("run/best.ckpt"), "--data", &p("data"), "--out", &p("report.csv")])?;
    vru(&["predict", "--model", &p("run/best.ckpt"), "--input", &p("raw"), "--out", &p("pred.jsonl")])?;
    vru(&["track", "--input", &p("raw/annotations.jsonl"), "--out", &p("tracked.jsonl")])?;
    Ok(tree_bytes(root))
}

fn criterion_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut windows_checked = 0;
    for i in 0..200 {
        let cfg = WindowConfig {
            obs_len: rng.random_range(1..40),
            horizon: rng.random_range(1..40),
            stride: rng.random_range(1..30),
            min_duration_s: 0.0,
            pad_min_fraction: 1.0,
            ..WindowConfig::default()
        };
        let len = rng.random_range(1..200);
        let starts = oracle::window_starts(len, cfg.span(), cfg.stride);
        ensure(cfg.window_count(len) == starts.len(), || format!("case {i}: window_count {len}"))?;
        let made = make_windows(&plain_track(len), &plain_masks(len), &cfg).map_err(|e| e.to_string())?;
        let got: Vec<usize> = made.iter().map(|w| w.start_frame as usize).collect();
        ensure(got == starts, || format!("case {i}: starts {got:?} vs {starts:?}"))?;
        windows_checked += made.len();
    }

    let samples = corpus(40, 2, "inv");
    for s in &samples {
        let back = flip_sample(&flip_sample(s));
        let same = back.labels == s.labels
            && back.masks == s.masks
            && back.poses.iter().zip(&s.poses).all(|(p, q)| {
                p.keypoints
                    .iter()
                    .zip(&q.keypoints)
                    .all(|(a, b)| close(a.x, b.x, 1e-12) && a.y == b.y && a.v == b.v)
            })
            && back.boxes.iter().zip(&s.boxes).all(|(a, b)| close(a.cx, b.cx, 1e-12) && a.cy == b.cy)
            && back.future_centers.iter().zip(&s.future_centers).all(|(a, b)| close(a[0], b[0], 1e-12) && a[1] == b[1]);
        ensure(same, || format!("double flip changed {}/{}", s.scene_id, s.start_frame))?;
    }

    for seed in 0..10 {
        let parts = split(samples.clone(), [0.6, 0.2, 0.2], seed).map_err(|e| e.to_string())?;
        ensure(parts.train.len() + parts.val.len() + parts.test.len() == samples.len(), || "split lost samples".into())?;
        let scenes = |v: &[SequenceSample]| v.iter().map(|s| s.scene_id.clone()).collect::<BTreeSet<_>>();
        let (a, b, c) = (scenes(&parts.train), scenes(&parts.val), scenes(&parts.test));
        ensure(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c), || format!("scene leakage with seed {seed}"))?;
    }

    let a = encode_corpus(&corpus(30, 77, "det")).map_err(|e| e.to_string())?;
    let b = encode_corpus(&corpus(30, 77, "det")).map_err(|e| e.to_string())?;
    ensure(a == b, || "synthesis is not deterministic".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = full_run(&dir.path().join("one"))?;
    let second = full_run(&dir.path().join("two"))?;
    ensure(first == second, || {
        let differing: Vec<&str> = first
            .iter()
            .zip(&second)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.as_str())
            .collect();
        format!("pipeline runs differ in {differing:?}")
    })?;

    for i in 0..200 {
        let n = rng.random_range(1..60);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)]).collect();
        let once = smooth_trajectory(&pts).points;
        let twice = smooth_trajectory(&once).points;
        let ok = once
            .iter()
            .zip(&twice)
            .all(|(a, b)| close(a[0], b[0], 1e-9) && close(a[1], b[1], 1e-9));
        ensure(ok && once.len() == n, || format!("smoothing case {i} is not idempotent"))?;
    }
    Ok(format!(
        "200 window configs ({windows_checked} windows), {} double flips, 10 splits, {} files byte-identical across runs, 200 smoothings",
        samples.len(),
        first.len()
    ))
}

// ---------------------------------------------------------------- tracker

fn criterion_tracker() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let scenes = 20;
    for scene in 0..scenes {
        // Ten pedestrians in separate horizontal bands, each at constant velocity.
        let peds: Vec<([f64; 2], [f64; 2])> = (0..10)
            .map(|i| {
                let start = [rng.random_range(100.0..1100.0), 40.0 + 70.0 * i as f64];
                let vel = [rng.random_range(-4.0..4.0), rng.random_range(-0.1..0.1)];
                (start, vel)
            })
            .collect();
        let truth = |p: usize, t: i64| {
            let (s, v) = peds[p];
            BBox::new(s[0] + v[0] * t as f64, s[1] + v[1] * t as f64, 20.0, 50.0)
        };
        let mut tracker = Tracker::new(TrackerConfig::default());
        for t in 0..100 {
            let dets: Vec<(BBox, PoseFrame)> = (0..10).map(|p| (truth(p, t), PoseFrame::default())).collect();
            tracker.step(t, &dets).map_err(|e| e.to_string())?;
        }
        let tracks = tracker.finish();
        ensure(tracks.len() == 10, || format!("scene {scene}: {} tracks", tracks.len()))?;
        let mut owner: HashMap<usize, u64> = HashMap::new();
        for track in &tracks {
            ensure(track.history.len() == 100, || format!("scene {scene}: track {} has {} frames", track.id, track.history.len()))?;
            let who = |e: &vru_core::tracking::TrackEntry| (0..10).find(|&p| truth(p, e.frame) == e.bbox);
            let first = who(&track.history[0]).ok_or("unmatched detection")?;
            for e in &track.history {
                ensure(who(e) == Some(first), || format!("scene {scene}: identity switch in track {}", track.id))?;
                if e.frame >= 20 {
                    let tr = truth(first, e.frame);
                    worst = worst.max((e.filtered.cx - tr.cx).hypot(e.filtered.cy - tr.cy));
                }
            }
            ensure(owner.insert(first, track.id).is_none(), || format!("scene {scene}: pedestrian {first} split"))?;
        }
    }
    ensure(worst <= 1.0, || format!("steady-state error {worst:.3} px"))?;
    Ok(format!("{scenes} scenes x 10 pedestrians x 100 frames, 0 identity switches, steady-state error {worst:.2e} px"))
}

// ---------------------------------------------------------------- driver

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gradient suite", criterion_gradients),
        ("overfit check", criterion_overfit),
        ("synthetic generalization", criterion_generalization),
        ("scene context benefit", criterion_scene_benefit),
        ("oracle equivalence", criterion_oracles),
        ("pipeline invariants", criterion_invariants),
        ("tracker", criterion_tracker),
    ];
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match &outcome {
            Ok(detail) => format!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed.push(i + 1);
                format!("criterion {}: FAIL  {name}: {detail}", i + 1)
            }
        };
        println!("{line}");
        lines.push(line);
    }
    println!("\n{}", lines.join("\n"));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
