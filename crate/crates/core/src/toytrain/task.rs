use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::ToyModel;
use crate::error::{ensure, Result};

/// Inputs (N × p) with class indices in [0, K).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledData {
    pub fn new(x: DMatrix<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        ensure!(
            x.nrows() == labels.len(),
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        );
        ensure!(x.nrows() >= 1, "dataset is empty");
        ensure!(
            labels.iter().all(|&l| l < num_classes),
            "label out of range for {num_classes} classes"
        );
        ensure!(x.iter().all(|v| v.is_finite()), "inputs must be finite");
        Ok(Self {
            x,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, as a batch matrix plus labels.
    pub fn batch(&self, indices: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        let x = self.x.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (x, labels)
    }
}

/// K isotropic Gaussian blobs in R^p with shared σ.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    /// K × p class means.
    pub means: DMatrix<f64>,
    pub sigma: f64,
    pub per_class: usize,
    pub seed: u64,
    pub data: LabeledData,
}

impl SyntheticTask {
    /// Sample `per_class` points around each given mean, class by class.
    pub fn from_means(
        means: DMatrix<f64>,
        sigma: f64,
        per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        let (k, p) = means.shape();
        ensure!(
            k >= 1 && p >= 1,
            "need at least one class mean of positive dimension"
        );
        ensure!(
            sigma > 0.0 && sigma.is_finite(),
            "sigma must be positive, got {sigma}"
        );
        ensure!(per_class >= 1, "each class needs at least one sample");
        for i in 0..k {
            for j in i + 1..k {
                ensure!(
                    means.row(i) != means.row(j),
                    "class means {i} and {j} coincide"
                );
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let n = k * per_class;
        let mut x = DMatrix::zeros(n, p);
        let mut labels = Vec::with_capacity(n);
        for c in 0..k {
            for s in 0..per_class {
                let r = c * per_class + s;
                for j in 0..p {
                    x[(r, j)] = means[(c, j)] + noise.sample(&mut rng);
                }
                labels.push(c);
            }
        }
        Ok(Self {
            means,
            sigma,
            per_class,
            seed,
            data: LabeledData::new(x, labels, k)?,
        })
    }

    /// Random class means at distance `separation` from the origin.
    pub fn generate(
        classes: usize,
        dim: usize,
        per_class: usize,
        sigma: f64,
        separation: f64,
        seed: u64,
    ) -> Result<Self> {
        ensure!(separation > 0.0, "separation must be positive");
        ensure!(
            classes >= 1 && dim >= 1,
            "need positive class count and dimension"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut means = DMatrix::from_fn(classes, dim, |_, _| StandardNormal.sample(&mut rng));
        for mut row in means.row_iter_mut() {
            let norm = row.norm();
            row *= separation / norm;
        }
        Self::from_means(means, sigma, per_class, seed)
    }
}

/// Set head row i to the mean backbone embedding of class i; zero the bias.
pub fn centroid_init_head(model: &ToyModel, data: &LabeledData) -> Result<ToyModel> {
    let k = model.classes();
    ensure!(
        data.num_classes == k,
        "data has {} classes, head has {k}",
        data.num_classes
    );
    ensure!(data.dim() == model.input_dim(), "input dimension mismatch");
    let emb = model.embed(&data.x);
    let mut sums = DMatrix::zeros(k, model.hidden());
    let mut counts = vec![0usize; k];
    for (i, &l) in data.labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += emb.row(i);
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(crate::error::invalid!("class {empty} has no samples"));
    }
    for (c, mut row) in sums.row_iter_mut().enumerate() {
        row /= counts[c] as f64;
    }
    let mut out = model.clone();
    out.w2 = sums;
    out.b2.fill(0.0);
    Ok(out)
}
