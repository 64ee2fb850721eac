mod oracles;

use divscan_core::tensor_io::{load_bundle, write_bundle};
use divscan_core::toytrain::{
    centroid_init_head, contrastive_loss, controlled_label_injection, cross_entropy,
    pretrain_instance_discrimination, BatchSampler, ControlCycle, InjectionConfig, LabeledData,
    PretrainConfig, SyntheticTask, ToyModel,
};
use nalgebra::{DMatrix, DVector};
use oracles::{central_difference, relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;

/// Apply `f` to a copy of the model with one scalar parameter replaced.
fn perturbed(model: &ToyModel, which: usize, idx: usize, value: f64) -> ToyModel {
    let mut m = model.clone();
    match which {
        0 => m.w1[idx] = value,
        1 => m.b1[idx] = value,
        2 => m.w2[idx] = value,
        _ => m.b2[idx] = value,
    }
    m
}

fn param(model: &ToyModel, which: usize, idx: usize) -> f64 {
    match which {
        0 => model.w1[idx],
        1 => model.b1[idx],
        2 => model.w2[idx],
        _ => model.b2[idx],
    }
}

fn setup(seed: u64) -> (ToyModel, DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ToyModel::init(4, 5, 3, seed).unwrap();
    let x = DMatrix::from_fn(7, 4, |_, _| rng.sample(StandardNormal));
    let labels = (0..7).map(|_| rng.random_range(0..3)).collect();
    (model, x, labels)
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    for seed in 0..5 {
        let (model, x, labels) = setup(seed);
        let (_, _, g) = cross_entropy(&model, &x, &labels, true);
        let grads: [&[f64]; 4] = [
            g.w1.as_ref().unwrap().as_slice(),
            g.b1.as_ref().unwrap().as_slice(),
            g.w2.as_slice(),
            g.b2.as_slice(),
        ];
        for (which, grad) in grads.iter().enumerate() {
            for (idx, &analytic) in grad.iter().enumerate() {
                let at = param(&model, which, idx);
                let f = |v| cross_entropy(&perturbed(&model, which, idx, v), &x, &labels, false).0;
                let numeric = central_difference(f, at, H);
                let err = relative_error(analytic, numeric);
                assert!(err < 1e-5, "param {which}[{idx}]: {analytic} vs {numeric}");
            }
        }
    }
}

#[test]
fn head_only_gradients_skip_backbone() {
    let (model, x, labels) = setup(9);
    let (l1, a1, head) = cross_entropy(&model, &x, &labels, false);
    let (l2, a2, full) = cross_entropy(&model, &x, &labels, true);
    assert!(head.w1.is_none() && head.b1.is_none());
    assert_eq!((l1, a1, &head.w2, &head.b2), (l2, a2, &full.w2, &full.b2));
}

#[test]
fn contrastive_gradients_match_finite_differences() {
    for seed in 0..4 {
        let (model, x, _) = setup(seed + 20);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
            0.3 * rng.sample::<f64, _>(StandardNormal)
        });
        let (_, g) = contrastive_loss(&model, &x, &noise, 0.5);
        for (which, grad) in [g.w1.as_slice(), g.b1.as_slice()].iter().enumerate() {
            for (idx, &analytic) in grad.iter().enumerate() {
                let at = param(&model, which, idx);
                let f = |v| contrastive_loss(&perturbed(&model, which, idx, v), &x, &noise, 0.5).0;
                let numeric = central_difference(f, at, H);
                let err = relative_error(analytic, numeric);
                assert!(err < 1e-5, "param {which}[{idx}]: {analytic} vs {numeric}");
            }
        }
    }
}

fn task() -> SyntheticTask {
    SyntheticTask::generate(3, 5, 30, 0.5, 2.0, 4).unwrap()
}

fn config(cycle: ControlCycle, steps: usize, seed: u64) -> InjectionConfig {
    InjectionConfig {
        control_cycle: cycle,
        steps,
        lr: 0.2,
        batch_size: 16,
        seed,
        diversity_every: None,
    }
}

/// Every step updates all four parameter blocks with the same minibatch.
fn reference_joint_loop(model: &ToyModel, data: &LabeledData, cfg: &InjectionConfig) -> ToyModel {
    let mut m = model.clone();
    let mut sampler = BatchSampler::new(data.len(), cfg.batch_size, cfg.seed);
    for _ in 0..cfg.steps {
        let (x, labels) = data.batch(&sampler.next_batch());
        let (_, _, g) = cross_entropy(&m, &x, &labels, true);
        let lr = cfg.lr;
        m.w2.zip_apply(&g.w2, |w, d| *w -= lr * d);
        m.b2.zip_apply(&g.b2, |w, d| *w -= lr * d);
        m.w1.zip_apply(g.w1.as_ref().unwrap(), |w, d| *w -= lr * d);
        m.b1.zip_apply(g.b1.as_ref().unwrap(), |w, d| *w -= lr * d);
    }
    m
}

#[test]
fn cycle_one_is_joint_training() {
    let t = task();
    let model = ToyModel::init(5, 8, 3, 1).unwrap();
    let cfg = config(ControlCycle::Every(1), 40, 7);
    let run = controlled_label_injection(&model, &t.data, &cfg).unwrap();
    assert_eq!(run.model, reference_joint_loop(&model, &t.data, &cfg));
}

#[test]
fn infinite_cycle_freezes_backbone() {
    let t = task();
    let model = ToyModel::init(5, 8, 3, 1).unwrap();
    let run =
        controlled_label_injection(&model, &t.data, &config(ControlCycle::Never, 40, 7)).unwrap();
    assert_eq!(run.model.w1, model.w1);
    assert_eq!(run.model.b1, model.b1);
    assert_eq!(run.backbone_updates(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backbone_update_count(t in 1usize..12, steps in 1usize..40) {
        let data = task().data;
        let model = ToyModel::init(5, 4, 3, 0).unwrap();
        let run = controlled_label_injection(&model, &data, &config(ControlCycle::Every(t), steps, 0)).unwrap();
        prop_assert_eq!(run.backbone_updates(), steps / t);
    }
}

#[test]
fn runs_are_deterministic() {
    let t = task();
    let model = ToyModel::init(5, 8, 3, 2).unwrap();
    let cfg = config(ControlCycle::Every(3), 30, 11);
    let a = controlled_label_injection(&model, &t.data, &cfg).unwrap();
    let b = controlled_label_injection(&model, &t.data, &cfg).unwrap();
    assert_eq!(a, b);
    let c = controlled_label_injection(&model, &t.data, &config(ControlCycle::Every(3), 30, 12))
        .unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn head_only_loss_is_monotone() {
    let t = SyntheticTask::generate(2, 3, 20, 0.2, 4.0, 6).unwrap();
    let model = ToyModel::init(3, 6, 2, 3).unwrap();
    let cfg = InjectionConfig {
        control_cycle: ControlCycle::Never,
        steps: 200,
        lr: 1e-3,
        batch_size: t.data.len(),
        seed: 0,
        diversity_every: None,
    };
    let run = controlled_label_injection(&model, &t.data, &cfg).unwrap();
    for w in run.log.windows(2) {
        assert!(
            w[1].loss <= w[0].loss,
            "step {}: {} -> {}",
            w[1].step,
            w[0].loss,
            w[1].loss
        );
    }
}

fn mean_cos(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    pairs: impl Iterator<Item = (usize, usize)>,
) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    for (i, j) in pairs {
        let (u, v) = (a.row(i), b.row(j));
        total += u.dot(&v) / (u.norm() * v.norm());
        count += 1;
    }
    total / count as f64
}

#[test]
fn pretraining_pulls_views_together() {
    let means = DMatrix::from_row_slice(2, 4, &[4.0, 0.0, 0.0, 0.0, -4.0, 0.0, 0.0, 0.0]);
    let t = SyntheticTask::from_means(means, 0.5, 32, 2).unwrap();
    let model = ToyModel::init(4, 8, 2, 8).unwrap();
    let cfg = PretrainConfig {
        epochs: 40,
        seed: 5,
        ..PretrainConfig::default()
    };
    let trained = pretrain_instance_discrimination(&model, &t.data, &cfg).unwrap();
    assert_eq!((&trained.w2, &trained.b2), (&model.w2, &model.b2));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = &t.data.x;
    let noisy = x + DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
        0.1 * rng.sample::<f64, _>(StandardNormal)
    });
    let (u, v) = (trained.embed(x), trained.embed(&noisy));
    let n = x.nrows();
    let within = mean_cos(&u, &v, (0..n).map(|i| (i, i)));
    let cross = mean_cos(
        &u,
        &u,
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
    );
    assert!(within > cross, "{within} <= {cross}");
}

#[test]
fn centroid_head_rows() {
    let model = ToyModel {
        w1: DMatrix::identity(2, 2),
        b1: DVector::zeros(2),
        w2: DMatrix::zeros(2, 2),
        b2: DVector::from_element(2, 0.3),
    };
    let x = DMatrix::from_row_slice(4, 2, &[0.1, 0.0, 0.3, 0.0, 0.0, 0.2, 0.0, 0.2]);
    let data = LabeledData::new(x, vec![0, 0, 1, 1], 2).unwrap();
    let head = centroid_init_head(&model, &data).unwrap();
    let row0 = ((0.1f64.tanh() + 0.3f64.tanh()) / 2.0, 0.0);
    assert!((head.w2[(0, 0)] - row0.0).abs() < 1e-15 && head.w2[(0, 1)] == row0.1);
    assert_eq!((head.w2[(1, 0)], head.w2[(1, 1)]), (0.0, 0.2f64.tanh()));
    assert_eq!(head.b2, DVector::zeros(2));

    let sparse = LabeledData::new(data.x.clone(), vec![0, 0, 1, 1], 3).unwrap();
    let three = ToyModel::init(2, 2, 3, 0).unwrap();
    assert!(centroid_init_head(&three, &sparse).is_err());
}

#[test]
fn bundle_export_round_trips() {
    let model = ToyModel::init(3, 4, 2, 5).unwrap();
    let bundle = model.to_bundle("toy", Some(0.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    let loaded = load_bundle(dir.path()).unwrap();
    let back = ToyModel::from_bundle(&loaded).unwrap();
    assert_eq!(back.to_bundle("toy", Some(0.5)).unwrap(), bundle);
    assert!((back.w1.clone() - model.w1.clone()).abs().max() < 1e-6);
}
