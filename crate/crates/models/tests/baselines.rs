use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vru_core::data::synth::to_scenes;
use vru_core::data::{build_samples, synthesize_scenes, Gait, LaneWidth, SceneContext, SynthSpec, WindowConfig};
use vru_nn::gradcheck::check_params;
use vru_nn::Graph;
use vru_models::baselines::modular::{attention_window, distraction_vector, gait_window};
use vru_models::baselines::resnet::resnet_loss;
use vru_models::baselines::*;

const FULL_MODEL_STEP: f64 = 1e-5;

fn tiny_resnet(heads: Vec<usize>) -> ResnetConfig {
    ResnetConfig {
        input_len: 6,
        features: 3,
        channels: [2, 3, 3, 4],
        heads,
    }
}

fn quick_train(epochs: usize, heads: usize) -> ResnetTrainConfig {
    ResnetTrainConfig {
        epochs,
        lr: 1e-3,
        head_weights: vec![1.0; heads],
        ..ResnetTrainConfig::default()
    }
}

fn small_channels(features: usize, heads: Vec<usize>) -> ResnetConfig {
    ResnetConfig {
        input_len: 30,
        features,
        channels: [8, 8, 16, 16],
        heads,
    }
}

fn accuracy(model: &Resnet1d, windows: &[Vec<f64>], labels: &[usize], head: usize) -> f64 {
    let hits = windows
        .iter()
        .zip(labels)
        .filter(|(w, &y)| {
            let p = &model.predict(w).unwrap()[head];
            vru_models::eval::argmax(p) == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

#[test]
fn resnet_has_ten_weighted_layers() {
    assert_eq!(ResnetConfig::default().weighted_layers(), 10);
    assert_eq!(tiny_resnet(vec![2, 4]).weighted_layers(), 10);
}

#[test]
fn resnet_gradient_check() {
    for seed in 0..3 {
        let mut model = Resnet1d::new(tiny_resnet(vec![2, 3]), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
        // Move off the zero-bias initialization, which sits on ReLU kinks
        // wherever a receptive field is dead.
        for p in model.store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        let window: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut store = model.store.clone();
        let r = check_params(&mut store, FULL_MODEL_STEP, 10, seed, |g| {
            resnet_loss(g, &model, &window, &[1, 2], &[1.0, 0.7])
                .map_err(|e| vru_nn::NnError::Invalid { op: "resnet", detail: e.to_string() })
        })
        .unwrap();
        assert!(r.max_rel_error <= 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn zero_orientation_weight_removes_its_gradient() {
    let model = Resnet1d::new(tiny_resnet(vec![2, 4]), 5).unwrap();
    let window: Vec<f64> = (0..18).map(|i| (i as f64 * 0.37).sin()).collect();
    let grads_for = |orientation: usize| {
        let mut g = Graph::new(&model.store);
        let l = resnet_loss(&mut g, &model, &window, &[1, orientation], &[1.0, 0.0]).unwrap();
        let grads = g.backward(l).unwrap();
        let mut store = model.store.clone();
        store.zero_grads();
        grads.accumulate_into(&mut store);
        store
    };
    let base = grads_for(0);
    for o in 1..4 {
        let other = grads_for(o);
        for (a, b) in base.iter().zip(other.iter()) {
            assert_eq!(a.grad, b.grad, "{}", a.name);
        }
    }
    for p in base.iter().filter(|p| p.name.starts_with("head1")) {
        assert!(p.grad.data().iter().all(|&v| v == 0.0), "{}", p.name);
    }
}

/// Windows whose first feature oscillates for walkers and is flat for
/// standers; the other features are label-independent noise.
fn gait_corpus(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let walking = i % 2 == 0;
        let phase = rng.random_range(0.0..6.3);
        let level = rng.random_range(20.0..40.0);
        let mut w = Vec::with_capacity(180);
        for t in 0..30 {
            let d1 = if walking { level + 8.0 * (phase + t as f64 * 0.6).sin() } else { level };
            w.push(d1 + rng.random_range(-0.5..0.5));
            for _ in 0..5 {
                w.push(rng.random_range(-1.0..1.0));
            }
        }
        windows.push(w);
        labels.push(if walking { Gait::Walking.index() } else { Gait::Standing.index() });
    }
    (windows, labels)
}

#[test]
fn resnet_separates_walking_from_standing() {
    let (w, y) = gait_corpus(128, 1);
    let mut model = Resnet1d::new(small_channels(6, vec![2]), 1).unwrap();
    let rows: Vec<Vec<usize>> = y.iter().map(|&l| vec![l]).collect();
    train_resnet(&mut model, &w, &rows, &quick_train(30, 1), 1).unwrap();
    let acc = accuracy(&model, &w, &y, 0);
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn resnet_without_signal_is_at_chance() {
    let w = vec![vec![0.0; 180]; 100];
    let y: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let rows: Vec<Vec<usize>> = y.iter().map(|&l| vec![l]).collect();
    let mut model = Resnet1d::new(small_channels(6, vec![2]), 2).unwrap();
    train_resnet(&mut model, &w, &rows, &quick_train(5, 1), 2).unwrap();
    let acc = accuracy(&model, &w, &y, 0);
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
}

#[test]
fn resnet_training_is_deterministic() {
    let (w, y) = gait_corpus(32, 3);
    let rows: Vec<Vec<usize>> = y.iter().map(|&l| vec![l]).collect();
    let run = || {
        let mut m = Resnet1d::new(small_channels(6, vec![2]), 3).unwrap();
        let h = train_resnet(&mut m, &w, &rows, &quick_train(3, 1), 3).unwrap();
        (h, m.store)
    };
    let (ha, sa) = run();
    let (hb, sb) = run();
    assert_eq!(ha, hb);
    for (a, b) in sa.iter().zip(sb.iter()) {
        assert_eq!(a.value, b.value);
    }
}

/// Attention windows: looking iff the face keypoints are visible.
/// Orientation: the nose x offset from the shoulder midpoint and the
/// visibility of the ears encode the four quadrants.
fn attention_corpus(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<[usize; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let looking = rng.random_bool(0.5);
        let orientation = i % 4;
        let (nose_dx, ear_v) = match orientation {
            0 => (-6.0, [0.0, 1.0]),
            1 => (6.0, [1.0, 0.0]),
            2 => (0.0, [1.0, 1.0]),
            _ => (0.0, [0.0, 0.0]),
        };
        let face_v = if looking { 1.0 } else { 0.0 };
        let mut w = Vec::with_capacity(30 * 21);
        for _ in 0..30 {
            let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-0.5..0.5);
            let cx = 50.0;
            // nose, left eye, right eye, left ear, right ear, shoulders
            let joints = [
                (cx + nose_dx, 20.0, if orientation == 3 { 0.0 } else { 1.0 }),
                (cx + nose_dx - 2.0, 18.0, face_v),
                (cx + nose_dx + 2.0, 18.0, face_v),
                (cx - 4.0, 19.0, ear_v[0]),
                (cx + 4.0, 19.0, ear_v[1]),
                (cx - 10.0, 30.0, 1.0),
                (cx + 10.0, 30.0, 1.0),
            ];
            for (x, y, v) in joints {
                w.extend_from_slice(&[x + jitter(&mut rng), y + jitter(&mut rng), v]);
            }
        }
        windows.push(w);
        labels.push([if looking { 0 } else { 1 }, orientation]);
    }
    (windows, labels)
}

#[test]
fn resnet_learns_attention_and_orientation_jointly() {
    let (w, y) = attention_corpus(160, 4);
    let rows: Vec<Vec<usize>> = y.iter().map(|l| l.to_vec()).collect();
    let mut model = Resnet1d::new(small_channels(21, vec![2, 4]), 4).unwrap();
    train_resnet(&mut model, &w, &rows, &quick_train(40, 2), 4).unwrap();
    let att: Vec<usize> = y.iter().map(|l| l[0]).collect();
    let ornt: Vec<usize> = y.iter().map(|l| l[1]).collect();
    let a = accuracy(&model, &w, &att, 0);
    let o = accuracy(&model, &w, &ornt, 1);
    assert!(a >= 0.99, "attention {a}");
    assert!(o >= 0.95, "orientation {o}");
}

#[test]
fn resnet_checkpoint_round_trip() {
    let (w, y) = gait_corpus(16, 5);
    let rows: Vec<Vec<usize>> = y.iter().map(|&l| vec![l]).collect();
    let mut m = Resnet1d::new(small_channels(6, vec![2]), 5).unwrap();
    train_resnet(&mut m, &w, &rows, &quick_train(1, 1), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    m.to_checkpoint().save(&path).unwrap();
    let back = Resnet1d::from_checkpoint(&vru_nn::Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back.predict(&w[0]).unwrap(), m.predict(&w[0]).unwrap());
    assert_eq!(back.scaler, m.scaler);
}

#[test]
fn rbf_is_one_at_zero_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-10.0..10.0)).collect();
        assert_eq!(rbf(&x, &x, rng.random_range(0.01..5.0)), 1.0);
    }
}

#[test]
fn rbf_kernel_matrix_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let n = 5 + trial;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let gamma = rng.random_range(0.1..3.0);
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&pts[i], &pts[j], gamma));
        assert_eq!(k, k.transpose());
        let eig = SymmetricEigen::new(k);
        assert!(eig.eigenvalues.min() >= -1e-9, "{}", eig.eigenvalues.min());
    }
}

fn clusters(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pos = i % 2 == 0;
            let c = if pos { sep } else { -sep };
            (vec![c + rng.random_range(-1.0..1.0), c + rng.random_range(-1.0..1.0)], pos)
        })
        .unzip()
}

#[test]
fn svm_separates_clusters() {
    let (x, y) = clusters(60, 3.0, 8);
    let (m, fit) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    assert!(fit.converged);
    assert!(!m.support_vectors.is_empty());
    for (xi, &yi) in x.iter().zip(&y) {
        assert_eq!(m.predict(xi), yi);
    }
}

#[test]
fn svm_satisfies_kkt_conditions() {
    let tol = 1e-3;
    for seed in 0..5 {
        // Overlapping clusters, so some multipliers reach the box bound.
        let (x, y) = clusters(80, 0.6, seed);
        let cfg = SvmConfig::default();
        let (m, _) = train_svc(&x, &y, &cfg).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let yv = if yi { 1.0 } else { -1.0 };
            let alpha = m
                .support_vectors
                .iter()
                .zip(&m.dual_coef)
                .find(|(sv, _)| *sv == xi)
                .map_or(0.0, |(_, &a)| a * yv);
            assert!((-1e-12..=cfg.c + 1e-12).contains(&alpha), "alpha {alpha}");
            let margin = yv * m.decision(xi);
            if alpha <= 1e-12 {
                assert!(margin >= 1.0 - tol, "seed {seed}: free point margin {margin}");
            } else if alpha >= cfg.c - 1e-12 {
                assert!(margin <= 1.0 + tol, "seed {seed}: bound SV margin {margin}");
            } else {
                assert!((margin - 1.0).abs() <= tol, "seed {seed}: SV margin {margin}");
            }
        }
        let balance: f64 = m.dual_coef.iter().sum();
        assert!(balance.abs() < 1e-9);
    }
}

#[test]
fn svm_decision_matches_kernel_sum() {
    let (x, y) = clusters(40, 1.0, 9);
    let (m, _) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let q = vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let mut sum = m.bias;
        for (sv, a) in m.support_vectors.iter().zip(&m.dual_coef) {
            let d2: f64 = sv.iter().zip(&q).map(|(u, v)| (u - v) * (u - v)).sum();
            sum += a * (-m.gamma * d2).exp();
        }
        assert!((m.decision(&q) - sum).abs() <= 1e-9);
    }
}

#[test]
fn svm_default_gamma_is_inverse_dimension() {
    let (x, y) = clusters(20, 3.0, 10);
    let (m, _) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    assert_eq!(m.gamma, 0.5);
    assert_eq!(m.c, 1.0);
}

#[test]
fn svm_rejects_degenerate_labels() {
    let (x, _) = clusters(10, 3.0, 11);
    assert!(train_svc(&x, &[true; 10], &SvmConfig::default()).is_err());
    let mut y = vec![true; 10];
    y[0] = false;
    assert!(train_svc(&x, &y, &SvmConfig::default()).is_err());
}

#[test]
fn svm_json_round_trip() {
    let (x, y) = clusters(30, 1.0, 12);
    let (m, _) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("svm.json");
    m.save(&path).unwrap();
    let back = SvmModel::load(&path).unwrap();
    assert_eq!(back, m);
}

#[test]
fn svm_training_is_deterministic() {
    let (x, y) = clusters(50, 0.5, 13);
    let a = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    let b = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    assert_eq!(a.0, b.0);
}

/// Averaged distraction features: phoning raises the elbow angles.
fn distraction_corpus(n: usize, informative: bool, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let phoning = rng.random_bool(0.5);
            let shift = if informative && phoning { 1.2 } else { 0.0 };
            let f = vec![
                rng.random_range(0.5..1.5) + shift,
                rng.random_range(0.5..1.5) + shift,
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ];
            (f, phoning)
        })
        .unzip()
}

#[test]
fn distraction_svm_on_separable_features() {
    let (x, y) = distraction_corpus(200, true, 14);
    let (m, _) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    let (tx, ty) = distraction_corpus(200, true, 15);
    let acc = tx.iter().zip(&ty).filter(|(f, &l)| m.predict(f) == l).count() as f64 / 200.0;
    assert!(acc >= 0.95, "{acc}");
}

#[test]
fn distraction_svm_without_signal_is_at_chance() {
    let (x, y) = distraction_corpus(200, false, 16);
    let (m, _) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    let (tx, ty) = distraction_corpus(400, false, 17);
    let acc = tx.iter().zip(&ty).filter(|(f, &l)| m.predict(f) == l).count() as f64 / 400.0;
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
}

#[test]
fn intent_features_of_nothing_are_zero() {
    let rows = intent_rows(&[FrameActions::none(); 30], [0.0; 5]);
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.iter().all(|&v| v == 0.0)));
}

#[test]
fn intent_features_of_walking_only() {
    let walking = FrameActions {
        gait: Gait::Walking.index(),
        ..FrameActions::none()
    };
    assert_eq!(intent_rows(&[walking], [0.0; 5]), vec![[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
}

#[test]
fn intent_features_carry_context_and_orientation() {
    let ctx = SceneContext {
        traffic_light: true,
        traffic_sign: false,
        crosswalk: true,
        lane: LaneWidth::Wide,
    };
    let a = FrameActions {
        orientation: 3,
        ..FrameActions::none()
    };
    let rows = build_intent_features(&[a; 30], &ctx);
    assert_eq!(rows.len(), 30);
    assert_eq!(rows[7], [0.0, 0.0, 0.0, 3.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
}

/// Crossing iff the pedestrian walks and a crosswalk is present.
#[test]
fn crossing_svm_on_separable_intent_features() {
    let make = |n: usize, seed: u64| -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let walking = rng.random_bool(0.5);
                let crosswalk = rng.random_bool(0.5);
                let a = FrameActions {
                    gait: if walking { Gait::Walking.index() } else { Gait::Standing.index() },
                    attention: rng.random_range(0..2),
                    orientation: rng.random_range(0..4),
                    ..FrameActions::none()
                };
                let ctx = SceneContext {
                    traffic_light: rng.random_bool(0.5),
                    traffic_sign: rng.random_bool(0.5),
                    crosswalk,
                    lane: if rng.random_bool(0.5) { LaneWidth::Wide } else { LaneWidth::Narrow },
                };
                (build_intent_features(&[a; 30], &ctx).concat(), walking && crosswalk)
            })
            .unzip()
    };
    let (x, y) = make(200, 18);
    let (m, _) = train_svc(&x, &y, &SvmConfig::default()).unwrap();
    let (tx, ty) = make(200, 19);
    let acc = tx.iter().zip(&ty).filter(|(f, &l)| m.predict(f) == l).count() as f64 / 200.0;
    assert!(acc >= 0.9, "{acc}");
}

#[test]
fn feature_windows_have_expected_widths() {
    let spec = SynthSpec {
        scenes: 2,
        ..SynthSpec::default()
    };
    let (sc, packs) = to_scenes(&synthesize_scenes(&spec, 1).unwrap());
    let s = &build_samples(&sc, &packs, &WindowConfig::default()).unwrap().0[0];
    assert_eq!(gait_window(&s.poses).len(), 30 * 6);
    assert_eq!(attention_window(&s.poses).len(), 30 * 21);
    assert_eq!(distraction_vector(&s.poses, false).len(), 4);
    assert_eq!(distraction_vector(&s.poses, true).len(), 30 * 4);
}

#[test]
fn modular_pipeline_trains_predicts_and_round_trips() {
    let spec = SynthSpec {
        scenes: 30,
        ..SynthSpec::default()
    };
    let (sc, packs) = to_scenes(&synthesize_scenes(&spec, 2).unwrap());
    let samples = build_samples(&sc, &packs, &WindowConfig::default()).unwrap().0;
    let mut cfg = ModularConfig::desk();
    cfg.gait.epochs = 2;
    cfg.attention.epochs = 2;
    let mut messages = Vec::new();
    let m = ModularModel::train(&samples, cfg, 3, &mut |s| messages.push(s.to_string())).unwrap();
    assert_eq!(messages.len(), 4);
    let p = m.predict(&samples[0]).unwrap();
    assert_eq!(p.scores.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 4, 2, 2]);
    assert_eq!(m.intent_vector(&samples[0]).unwrap().len(), 30 * 9);

    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let back = ModularModel::load(dir.path()).unwrap();
    for s in samples.iter().take(5) {
        assert_eq!(back.predict(s).unwrap(), m.predict(s).unwrap());
    }
    assert!(ModularModel::load(&dir.path().join("missing")).is_err());
}
