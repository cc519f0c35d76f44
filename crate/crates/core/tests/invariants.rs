//! Randomized property tests: structural invariants that must hold for
//! arbitrary shapes, seeds, and values, checked over generated cases.
//! Fixed-example coverage lives in the unit tests next to each module.

use proptest::prelude::*;

use poselift_core::autoencoder::{encode, AutoEncoderParams};
use poselift_core::eval::{limb_lengths, log_ratio_matrix, mpjpe, ratio_error_matrix};
use poselift_core::numerics::{
    conv2d_forward, dense_forward, maxpool2x2, maxpool2x2_backward, AdamConfig, AdamState,
};
use poselift_core::synthdata::{
    generate, sample_pose, ActionSpec, CameraConfig, GenerateConfig, SkeletonModel, SubjectSpec,
};
use poselift_core::{Pose, RngStream, Tensor};

fn coords(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-800.0f64..800.0, len)
}

fn adam_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
    (1usize..8).prop_flat_map(|len| {
        (
            prop::collection::vec(-5.0f64..5.0, len),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, len), 0..6),
            1e-4f64..0.05,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adam_zero_gradient_is_a_no_op_for_any_state(
        (start, warm_grads, learning_rate) in adam_case(),
    ) {
        let len = start.len();
        let mut params = Tensor::vector(start).unwrap();
        let mut state =
            AdamState::new(&[len], AdamConfig::with_learning_rate(learning_rate)).unwrap();
        for grad in &warm_grads {
            state
                .step(&mut params, &Tensor::vector(grad.clone()).unwrap())
                .unwrap();
        }
        let before = params.clone();
        let count = state.step_count();
        state.step(&mut params, &Tensor::zeros(&[len])).unwrap();
        prop_assert_eq!(params, before);
        prop_assert_eq!(state.step_count(), count);
    }
}

fn dense_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize, usize)> {
    (1usize..6, 1usize..6).prop_flat_map(|(rows, cols)| {
        (
            prop::collection::vec(-3.0f64..3.0, rows * cols),
            prop::collection::vec(-3.0f64..3.0, rows),
            prop::collection::vec(-3.0f64..3.0, cols),
            Just(rows),
            Just(cols),
        )
    })
}

fn conv_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, [usize; 4])> {
    (1usize..3, 1usize..3, 4usize..9, 1usize..4).prop_flat_map(|(cin, cout, size, k)| {
        (
            prop::collection::vec(-2.0f64..2.0, cin * size * size),
            prop::collection::vec(-2.0f64..2.0, cout * cin * k * k),
            prop::collection::vec(-2.0f64..2.0, cout),
            Just([cin, cout, size, k]),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dense_and_conv_forwards_are_pure(
        (w, b, x, rows, cols) in dense_case(),
        (image, kernels, kbias, [cin, cout, size, k]) in conv_case(),
    ) {
        let w = Tensor::from_vec(&[rows, cols], w).unwrap();
        let b = Tensor::vector(b).unwrap();
        let x = Tensor::vector(x).unwrap();
        let first = dense_forward(&w, &b, &x).unwrap();
        let second = dense_forward(&w, &b, &x).unwrap();
        prop_assert_eq!(first.as_slice(), second.as_slice());

        let image = Tensor::from_vec(&[cin, size, size], image).unwrap();
        let kernels = Tensor::from_vec(&[cout, cin, k, k], kernels).unwrap();
        let kbias = Tensor::vector(kbias).unwrap();
        let first = conv2d_forward(&image, &kernels, &kbias).unwrap();
        let second = conv2d_forward(&image, &kernels, &kbias).unwrap();
        prop_assert_eq!(first.as_slice(), second.as_slice());
    }
}

fn pool_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, [usize; 3])> {
    (1usize..4, 2usize..9, 2usize..9).prop_flat_map(|(c, h, w)| {
        (
            prop::collection::vec(-5.0f64..5.0, c * h * w),
            prop::collection::vec(0.5f64..3.0, c * (h / 2) * (w / 2)),
            Just([c, h, w]),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn maxpool_backward_is_nonzero_in_at_most_one_entry_per_window(
        (input, upstream, [c, h, w]) in pool_case(),
    ) {
        let input = Tensor::from_vec(&[c, h, w], input).unwrap();
        let (pooled, argmax) = maxpool2x2(&input).unwrap();
        let upstream = Tensor::from_vec(pooled.shape(), upstream).unwrap();
        let grad = maxpool2x2_backward(&[c, h, w], &argmax, &upstream).unwrap();
        let g = grad.as_slice();

        let mut window_of = vec![None; c * h * w];
        for ch in 0..c {
            for wi in 0..h / 2 {
                for wj in 0..w / 2 {
                    for di in 0..2 {
                        for dj in 0..2 {
                            let idx = ch * h * w + (2 * wi + di) * w + (2 * wj + dj);
                            window_of[idx] = Some((ch, wi, wj));
                        }
                    }
                }
            }
        }
        let mut nonzero_per_window = std::collections::BTreeMap::new();
        for (idx, &value) in g.iter().enumerate() {
            match window_of[idx] {
                Some(window) => {
                    if value != 0.0 {
                        *nonzero_per_window.entry(window).or_insert(0usize) += 1;
                    }
                }
                // Truncated last row/column receives no gradient at all.
                None => prop_assert_eq!(value, 0.0),
            }
        }
        for (&window, &count) in &nonzero_per_window {
            prop_assert!(count <= 1, "window {window:?} has {count} nonzero entries");
        }
    }
}

fn ae_shape_case() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..7).prop_flat_map(|joints| {
        (
            Just(joints),
            1usize..=3 * joints,
            1usize..5,
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn middle_layers_not_wider_than_the_pose_are_rejected(
        (joints, middle, extra, seed) in ae_shape_case(),
    ) {
        let dim = 3 * joints;
        let mut rng = RngStream::new(seed);
        prop_assert!(AutoEncoderParams::init(dim, &[middle], &mut rng).is_err());
        prop_assert!(AutoEncoderParams::init(dim, &[dim + extra, middle], &mut rng).is_err());
        prop_assert!(AutoEncoderParams::init(dim, &[dim + extra], &mut rng).is_ok());
        prop_assert!(AutoEncoderParams::init(dim, &[dim + 1, dim + extra], &mut rng).is_ok());
    }
}

fn code_case() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, u64)> {
    (2usize..6, 1usize..6, any::<bool>()).prop_flat_map(|(joints, extra, two_layers)| {
        let dim = 3 * joints;
        let layers = if two_layers {
            vec![dim + extra, dim + extra + 1]
        } else {
            vec![dim + extra]
        };
        (coords(dim), Just(layers), any::<u64>())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn latent_codes_are_never_negative((pose, layers, seed) in code_case()) {
        let dim = pose.len();
        let ae = AutoEncoderParams::init(dim, &layers, &mut RngStream::new(seed)).unwrap();
        let pose = Pose::new(pose).unwrap();
        let code = encode(&ae, &pose).unwrap();
        prop_assert!(code.values().iter().all(|&v| v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generated_poses_keep_exact_subject_limb_lengths(
        seed in any::<u64>(),
        scale_a in 0.8f64..1.2,
        scale_b in 0.8f64..1.2,
    ) {
        let model = SkeletonModel::default_human();
        let camera = CameraConfig {
            image_size: 16,
            mm_per_pixel: 200.0,
            ..CameraConfig::default()
        };
        let config = GenerateConfig {
            n_train: 6,
            n_test: 3,
            train_subjects: vec![SubjectSpec { id: 0, limb_scale: scale_a }],
            test_subjects: vec![SubjectSpec { id: 1, limb_scale: scale_b }],
            actions: vec![ActionSpec { name: "calm".into(), angle_scale: 0.5 }],
            seed,
        };
        let dataset = generate(&model, &camera, &config).unwrap();

        prop_assert!(dataset.train.iter().all(|r| r.subject_id == 0));
        prop_assert!(dataset.test.iter().all(|r| r.subject_id == 1));

        for record in dataset.train.iter().chain(&dataset.test) {
            let scale = if record.subject_id == 0 { scale_a } else { scale_b };
            let scaled = model.scaled(scale).unwrap();
            let realized = limb_lengths(&record.pose, &scaled).unwrap();
            for (limb, &length) in scaled.limbs().iter().zip(&realized) {
                let expected = scaled.limb_length(limb.child);
                prop_assert!(
                    (length - expected).abs() <= 1e-9 * expected.max(1.0),
                    "limb {} has length {length}, expected {expected}",
                    limb.name
                );
            }
        }
    }
}

fn pose_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize, f64)> {
    (2usize..7).prop_flat_map(|joints| {
        let dim = 3 * joints;
        (coords(dim), coords(dim), coords(dim), 0..dim, 0.5f64..50.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mpjpe_satisfies_the_metric_axioms(
        (p, q, r, perturb_at, delta) in pose_triple(),
    ) {
        let mut moved = p.clone();
        moved[perturb_at] += delta;
        let moved = Pose::new(moved).unwrap();
        let p = Pose::new(p).unwrap();
        let q = Pose::new(q).unwrap();
        let r = Pose::new(r).unwrap();

        prop_assert_eq!(mpjpe(&p, &p).unwrap(), 0.0);
        prop_assert!(mpjpe(&p, &moved).unwrap() > 0.0);
        let pq = mpjpe(&p, &q).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert_eq!(pq, mpjpe(&q, &p).unwrap());
        let (pr, qr) = (mpjpe(&p, &r).unwrap(), mpjpe(&q, &r).unwrap());
        prop_assert!(pr <= pq + qr + 1e-9 * (1.0 + pq + qr));
    }

    #[test]
    fn mpjpe_is_invariant_under_a_common_rotation(
        (p, q, _, _, _) in pose_triple(),
        yaw in -3.14f64..3.14,
        pitch in -3.14f64..3.14,
        roll in -3.14f64..3.14,
    ) {
        let rotate = |pose: &[f64]| -> Pose {
            let (sa, ca) = roll.sin_cos();
            let (sb, cb) = pitch.sin_cos();
            let (sc, cc) = yaw.sin_cos();
            // R = Rz(yaw) * Ry(pitch) * Rx(roll), applied per joint.
            let rot = [
                [cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa],
                [sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa],
                [-sb, cb * sa, cb * ca],
            ];
            let mut out = vec![0.0; pose.len()];
            for j in 0..pose.len() / 3 {
                let v = [pose[3 * j], pose[3 * j + 1], pose[3 * j + 2]];
                for (axis, row) in rot.iter().enumerate() {
                    out[3 * j + axis] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
                }
            }
            Pose::new(out).unwrap()
        };
        let plain = mpjpe(&Pose::new(p.clone()).unwrap(), &Pose::new(q.clone()).unwrap()).unwrap();
        let rotated = mpjpe(&rotate(&p), &rotate(&q)).unwrap();
        prop_assert!(
            (plain - rotated).abs() <= 1e-8 * (1.0 + plain),
            "mpjpe {plain} changed to {rotated} under rotation"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn log_ratio_matrices_are_antisymmetric_with_zero_diagonal(seed in any::<u64>()) {
        let model = SkeletonModel::default_human();
        let pose = sample_pose(&model, &mut RngStream::new(seed));
        let matrix = log_ratio_matrix(&pose, &model).unwrap();
        let n = matrix.dim();
        for i in 0..n {
            prop_assert_eq!(matrix.get(i, i), 0.0);
            for j in 0..n {
                prop_assert_eq!(matrix.get(i, j), -matrix.get(j, i));
            }
        }
    }

    #[test]
    fn ratio_error_ignores_uniform_prediction_scale(
        seed in any::<u64>(),
        scale in 0.25f64..4.0,
    ) {
        let model = SkeletonModel::default_human();
        let master = RngStream::new(seed);
        let mut pred_rng = master.substream(1);
        let mut truth_rng = master.substream(2);
        let predictions: Vec<Pose> =
            (0..3).map(|_| sample_pose(&model, &mut pred_rng)).collect();
        let truths: Vec<Pose> =
            (0..3).map(|_| sample_pose(&model, &mut truth_rng)).collect();
        let scaled: Vec<Pose> = predictions
            .iter()
            .map(|p| {
                Pose::new(p.as_slice().iter().map(|v| v * scale).collect()).unwrap()
            })
            .collect();

        let plain = ratio_error_matrix(&predictions, &truths, &model).unwrap();
        let rescaled = ratio_error_matrix(&scaled, &truths, &model).unwrap();
        prop_assert_eq!(plain.flagged_samples(), 0);
        prop_assert_eq!(rescaled.flagged_samples(), 0);
        for (a, b) in plain.values().iter().zip(rescaled.values()) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }
}
