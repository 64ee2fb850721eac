use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LabeledData, ToyModel};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub noise_sigma: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 0,
            lr: 0.5,
            batch_size: 32,
            noise_sigma: 0.1,
            temperature: 0.2,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.batch_size >= 2,
            "contrastive batches need at least 2 samples for negatives"
        );
        ensure!(
            self.lr > 0.0 && self.lr.is_finite(),
            "learning rate must be positive"
        );
        ensure!(
            self.temperature > 0.0 && self.temperature.is_finite(),
            "temperature must be positive"
        );
        ensure!(
            self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
            "noise sigma must be non-negative"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneGradients {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
}

const NORM_FLOOR: f64 = 1e-12;

fn normalize_rows(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let norms: Vec<f64> = m.row_iter().map(|r| r.norm().max(NORM_FLOOR)).collect();
    let mut out = m.clone();
    for (mut row, n) in out.row_iter_mut().zip(&norms) {
        row /= *n;
    }
    (out, norms)
}

/// Backprop through row normalisation: d(u/‖u‖) → du.
fn normalize_rows_backward(
    unit: &DMatrix<f64>,
    norms: &[f64],
    grad_unit: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = grad_unit.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let u = unit.row(i);
        let along = u.dot(&grad_unit.row(i));
        row -= u * along;
        row /= norms[i];
    }
    out
}

/// Instance-discrimination loss of a batch against its noised views.
///
/// Each sample's positive is its own view `x + noise`; every other view in
/// the batch is a negative. Similarities are cosines divided by
/// `temperature`; the loss is the batch-mean softmax cross-entropy.
pub fn contrastive_loss(
    model: &ToyModel,
    x: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    temperature: f64,
) -> (f64, BackboneGradients) {
    let b = x.nrows();
    let xv = x + noise;
    let u = model.embed(x);
    let v = model.embed(&xv);
    let (un, u_norms) = normalize_rows(&u);
    let (vn, v_norms) = normalize_rows(&v);
    let sim = &un * vn.transpose() / temperature;

    let mut grad_sim = DMatrix::zeros(b, b);
    let mut loss = 0.0;
    for i in 0..b {
        let row = sim.row(i);
        let max = row.max();
        let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        loss += lse - sim[(i, i)];
        for j in 0..b {
            let p = (sim[(i, j)] - lse).exp();
            grad_sim[(i, j)] = (p - if i == j { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    let grad_un = &grad_sim * &vn / temperature;
    let grad_vn = grad_sim.transpose() * &un / temperature;
    let mut dzu = normalize_rows_backward(&un, &u_norms, &grad_un);
    let mut dzv = normalize_rows_backward(&vn, &v_norms, &grad_vn);
    dzu.zip_apply(&u, |g, a| *g *= 1.0 - a * a);
    dzv.zip_apply(&v, |g, a| *g *= 1.0 - a * a);

    let w1 = dzu.transpose() * x + dzv.transpose() * &xv;
    let b1 = (dzu.row_sum() + dzv.row_sum()).transpose();
    (loss / b as f64, BackboneGradients { w1, b1 })
}

/// Train the backbone with the contrastive loss; the head is left as is.
pub fn pretrain_instance_discrimination(
    model: &ToyModel,
    data: &LabeledData,
    cfg: &PretrainConfig,
) -> Result<ToyModel> {
    cfg.validate()?;
    ensure!(data.dim() == model.input_dim(), "input dimension mismatch");
    let mut model = model.clone();
    if cfg.epochs == 0 {
        return Ok(model);
    }
    ensure!(
        data.len() >= 2,
        "contrastive pretraining needs at least 2 samples"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let (x, _) = data.batch(chunk);
            let eps = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| noise.sample(&mut rng));
            let (loss, g) = contrastive_loss(&model, &x, &eps, cfg.temperature);
            ensure!(
                loss.is_finite(),
                "contrastive pretraining diverged in epoch {epoch}"
            );
            model.w1.zip_apply(&g.w1, |w, d| *w -= cfg.lr * d);
            model.b1.zip_apply(&g.b1, |w, d| *w -= cfg.lr * d);
        }
    }
    Ok(model)
}
