use divscan_core::gbdt::{fit, importance_table, FeatureRecord, GbdtConfig};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

fn uniform(rng: &mut ChaCha8Rng, n: usize, f: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, f, |_, _| rng.random_range(0.0..1.0))
}

#[test]
fn informative_feature_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = uniform(&mut rng, 200, 5);
    let y: Vec<f64> = (0..200).map(|i| 3.0 * x[(i, 0)]).collect();
    let model = fit(&x, &y, &GbdtConfig::default()).unwrap();
    let imp = model.importance();
    assert!(imp[0] > 0.95, "{imp:?}");
    assert!(*model.train_mse().last().unwrap() < 1e-3);
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let noise = Normal::new(0.0, 0.01).unwrap();
    let y_noisy: Vec<f64> = y.iter().map(|v| v + rng.sample(noise)).collect();
    let model = fit(&x, &y_noisy, &GbdtConfig::default()).unwrap();
    assert!(model.importance()[0] > 0.9);
    for w in model.train_mse().windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn more_trees_fit_better() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let x = uniform(&mut rng, 100, 2);
    let y: Vec<f64> = (0..100)
        .map(|i| (6.0 * x[(i, 0)]).sin() + x[(i, 1)])
        .collect();
    let mse = |trees| {
        let cfg = GbdtConfig {
            n_trees: trees,
            ..GbdtConfig::default()
        };
        *fit(&x, &y, &cfg).unwrap().train_mse().last().unwrap()
    };
    let (a, b, c) = (mse(5), mse(50), mse(200));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn constant_target_never_splits() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let x = uniform(&mut rng, 30, 3);
    let model = fit(&x, &[2.5; 30], &GbdtConfig::default()).unwrap();
    assert!(model.trees().iter().all(|t| t.num_splits() == 0));
    assert_eq!(model.importance(), vec![0.0; 3]);
    assert!(model.predict(&x).iter().all(|&p| p == 2.5));
}

#[test]
fn duplicated_feature_shares_credit() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let x = uniform(&mut rng, 150, 3);
    let y: Vec<f64> = (0..150)
        .map(|i| 2.0 * x[(i, 0)] + 0.3 * x[(i, 1)])
        .collect();
    let single = fit(&x, &y, &GbdtConfig::default()).unwrap().importance();
    let dup = DMatrix::from_fn(150, 4, |i, j| x[(i, [0, 1, 2, 0][j])]);
    let doubled = fit(&dup, &y, &GbdtConfig::default()).unwrap().importance();
    assert!(
        (doubled[0] + doubled[3] - single[0]).abs() < 0.05,
        "{single:?} {doubled:?}"
    );
}

fn records(rows: &[(f64, f64, f64)]) -> Vec<FeatureRecord> {
    rows.iter()
        .map(|&(cis, cka, transfer)| FeatureRecord {
            features: IndexMap::from([("cis".to_owned(), cis), ("cka".to_owned(), cka)]),
            transfer,
        })
        .collect()
}

#[test]
fn importance_table_tracks_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let rows: Vec<(f64, f64, f64)> = (0..40)
        .map(|_| {
            let cis = rng.random_range(0.0..1.0);
            (cis, rng.random_range(0.0..1.0), cis)
        })
        .collect();
    let imp = importance_table(&records(&rows), &GbdtConfig::default()).unwrap();
    assert_eq!(imp.features, vec!["cis", "cka"]);
    assert!(imp.share("cis").unwrap() > 0.9);

    let collinear: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|&(c, _, _)| (c, 2.0 * c + 1.0, c))
        .collect();
    let imp = importance_table(&records(&collinear), &GbdtConfig::default()).unwrap();
    assert!(imp.shares.iter().sum::<f64>() > 0.9);

    let mut broken = records(&rows);
    broken[3].features.shift_remove("cka");
    assert!(importance_table(&broken, &GbdtConfig::default()).is_err());
}
