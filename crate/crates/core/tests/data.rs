mod common;

use std::path::PathBuf;

use latentprobe::data::{
    calibrate_sigma, decode_idx, decode_nact, dump_activations, encode_nact, gen_gaussian_task, load_activations,
    load_mnist, parse_idx_images, parse_idx_labels, random_orthogonal, tuning_curve_embed, ActivationSet, Split,
    ToySpec, IMAGES_MAGIC, LABELS_MAGIC,
};
use ndarray::{Array2, ArrayView1};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn small_spec(n_id: usize, seed: u64) -> ToySpec {
    ToySpec {
        n_id,
        train_per_class: 50,
        test_per_class: 10,
        seed,
        ..ToySpec::default()
    }
}

#[test]
fn rotation_is_orthogonal() {
    for n in 2..=8 {
        let q = random_orthogonal(n, n as u64).unwrap();
        assert!((common::det_cofactor(&q).abs() - 1.0).abs() < 1e-10, "n = {n}");
    }
    let q = random_orthogonal(32, 5).unwrap();
    let gram = q.t().dot(&q);
    for ((i, j), v) in gram.indexed_iter() {
        let want = if i == j { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-12);
    }
}

#[test]
fn default_task_shape() {
    let task = gen_gaussian_task(&ToySpec {
        sigma: Some(1.0),
        ..ToySpec::default()
    })
    .unwrap();
    assert_eq!(task.dataset.train_features.dim(), (50_000, 32));
    assert_eq!(task.dataset.test_features.dim(), (10_000, 32));
    assert_eq!(task.dataset.n_classes, 10);
}

fn nearest_centroid(x: ArrayView1<f64>, centers: &Array2<f64>) -> usize {
    centers
        .rows()
        .into_iter()
        .map(|c| c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

#[test]
fn calibrated_noise_gives_target_accuracy_on_fresh_draws() {
    for n_id in [2, 4, 8, 16] {
        let task = gen_gaussian_task(&small_spec(n_id, 3)).unwrap();
        let mut r = common::rng(999 + n_id as u64);
        let k = task.centers.nrows();
        let draws = 100_000;
        let mut hits = 0;
        let mut x = ndarray::Array1::<f64>::zeros(task.centers.ncols());
        for _ in 0..draws {
            let c = r.random_range(0..k);
            for (j, v) in x.iter_mut().enumerate() {
                *v = task.centers[[c, j]] + task.sigma * r.sample::<f64, _>(StandardNormal);
            }
            hits += usize::from(nearest_centroid(x.view(), &task.centers) == c);
        }
        let acc = hits as f64 / draws as f64;
        assert!((acc - 0.70).abs() <= 0.02, "n_id {n_id}: {acc}");
    }
}

#[test]
fn calibration_rejects_unreachable_targets() {
    let centers = ndarray::array![[0.0, 0.0], [1.0, 0.0]];
    assert!(calibrate_sigma(centers.view(), 0.5, 0).is_err());
    assert!(calibrate_sigma(centers.view(), 1.0, 0).is_err());
    assert!(calibrate_sigma(centers.slice(ndarray::s![..1, ..]), 0.9, 0).is_err());
    let c = calibrate_sigma(centers.view(), 0.8, 0).unwrap();
    assert!((c.estimated_accuracy - 0.8).abs() <= 0.01);
}

#[test]
fn centers_span_exactly_the_intrinsic_subspace() {
    for n_id in [2, 4, 8, 16] {
        let task = gen_gaussian_task(&ToySpec {
            sigma: Some(1.0),
            ..small_spec(n_id, 11)
        })
        .unwrap();
        // Undo the rotation: only the first n_id coordinates may be nonzero.
        let back = task.centers.dot(&task.rotation);
        let largest = back.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for row in back.rows() {
            for (j, v) in row.iter().enumerate() {
                if j >= n_id {
                    assert!(v.abs() < 1e-8 * largest, "n_id {n_id} col {j}: {v}");
                }
            }
        }
        let gram = task.centers.t().dot(&task.centers);
        let eig = common::symmetric_eigenvalues(&gram);
        let rank = n_id.min(task.centers.nrows());
        assert!(eig[rank - 1] > 1e-6 * eig[0]);
        assert!(eig[rank..].iter().all(|&e| e.abs() < 1e-12 * eig[0]));
    }
}

#[test]
fn seeds_control_the_task() {
    let a = gen_gaussian_task(&small_spec(4, 1)).unwrap();
    let b = gen_gaussian_task(&small_spec(4, 1)).unwrap();
    let c = gen_gaussian_task(&small_spec(4, 2)).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.sigma, b.sigma);
    assert_ne!(a.centers, c.centers);
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        ToySpec { n_id: 40, ..ToySpec::default() },
        ToySpec { n_id: 0, ..ToySpec::default() },
        ToySpec { n_classes: 1, ..ToySpec::default() },
        ToySpec { target_accuracy: 0.05, ..ToySpec::default() },
        ToySpec { sigma: Some(-1.0), ..ToySpec::default() },
    ] {
        assert!(gen_gaussian_task(&spec).is_err(), "{spec:?}");
    }
}

#[test]
fn tuning_response_is_gaussian_in_distance() {
    let centers = ndarray::array![[0.0, 0.0], [1.0, 2.0]];
    let x = ndarray::array![[1.0, 1.0]];
    let r = tuning_curve_embed(x.view(), centers.view(), 0.5).unwrap();
    assert!((r[[0, 0]] - (-2.0_f64 / (2.0 * 0.25)).exp()).abs() < 1e-15);
    assert!((r[[0, 1]] - (-1.0_f64 / (2.0 * 0.25)).exp()).abs() < 1e-15);
}

fn idx_images(n: u32, rows: u32, cols: u32) -> Vec<u8> {
    let mut v = IMAGES_MAGIC.to_be_bytes().to_vec();
    for x in [n, rows, cols] {
        v.extend(x.to_be_bytes());
    }
    v.extend((0..n * rows * cols).map(|i| (i % 256) as u8));
    v
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut v = LABELS_MAGIC.to_be_bytes().to_vec();
    v.extend((labels.len() as u32).to_be_bytes());
    v.extend(labels);
    v
}

#[test]
fn idx_round_trip_and_errors() {
    let imgs = idx_images(3, 2, 2);
    let set = decode_idx(&imgs, &idx_labels(&[0, 9, 4])).unwrap();
    assert_eq!(set.features.dim(), (3, 4));
    assert_eq!(set.labels, vec![0, 9, 4]);
    assert_eq!(set.features[[1, 0]], 4.0 / 255.0);
    assert!(decode_idx(&imgs, &idx_labels(&[0, 1])).is_err());
    assert!(decode_idx(&imgs[..imgs.len() - 1], &idx_labels(&[0, 1, 2])).is_err());
    assert!(decode_idx(&idx_labels(&[0]), &imgs).is_err());
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LATENTPROBE_MNIST")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.is_dir().then_some(dir)
}

#[test]
fn official_mnist_shapes() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST files not present; skipping");
        return;
    };
    let d = load_mnist(dir, None, None).unwrap();
    assert_eq!(d.train_features.dim(), (60_000, 784));
    assert_eq!(d.test_features.dim(), (10_000, 784));
    assert!(d.train_features.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let mut counts = [0usize; 10];
    for &l in &d.train_labels {
        counts[l] += 1;
    }
    assert!(counts.iter().all(|&c| c > 5000));
}

fn activation_set(seed: u64) -> ActivationSet {
    let mut r = common::rng(seed);
    let acts = common::normal_matrix(&mut r, 17, 5);
    let labels: Vec<usize> = (0..17).map(|i| i % 3).collect();
    let preds: Vec<usize> = (0..17).map(|i| (i * 7) % 3).collect();
    ActivationSet::new(acts, labels, preds, 3, Split::Test, "net").unwrap()
}

#[test]
fn nact_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let set = activation_set(4);
    let (a, b) = (dir.path().join("a.nact"), dir.path().join("b.nact"));
    dump_activations(&set, &a).unwrap();
    dump_activations(&set, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = load_activations(&a).unwrap();
    assert_eq!(back.activations, set.quantized());
    assert_eq!(back.labels, set.labels);
    assert_eq!(back.base_predictions, set.base_predictions);
    assert_eq!(back.base_accuracy, set.base_accuracy);
    assert_eq!(back.split, Split::Test);
}

#[test]
fn truncated_nact_is_rejected() {
    let bytes = encode_nact(&activation_set(1)).unwrap();
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(decode_nact(&bytes[..cut], "cut").is_err(), "cut {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_nact(&bad, "magic").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn idx_parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64), magic in any::<bool>()) {
        let mut input = bytes;
        if magic && input.len() >= 4 {
            input[..4].copy_from_slice(&IMAGES_MAGIC.to_be_bytes());
        }
        let _ = parse_idx_images(&input);
        let _ = parse_idx_labels(&input);
        let _ = decode_idx(&input, &input);
    }

    #[test]
    fn nact_decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode_nact(&bytes, "fuzz");
    }

    #[test]
    fn nact_round_trips(seed in any::<u64>()) {
        let set = activation_set(seed);
        let back = decode_nact(&encode_nact(&set).unwrap(), "x").unwrap();
        prop_assert_eq!(back.activations, set.quantized());
        prop_assert_eq!(back.labels, set.labels);
    }
}
