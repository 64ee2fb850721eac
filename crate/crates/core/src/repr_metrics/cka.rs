use nalgebra::DMatrix;

use crate::error::{ensure, Result};
use crate::tensor_io::{LayerKind, LayerTensor};

/// n examples × p activation channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    matrix: DMatrix<f64>,
}

impl ActivationMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        ensure!(
            matrix.nrows() >= 2,
            "activation matrix needs at least 2 examples"
        );
        ensure!(
            matrix.ncols() >= 1,
            "activation matrix needs at least 1 channel"
        );
        ensure!(
            matrix.iter().all(|v| v.is_finite()),
            "activation matrix contains non-finite values"
        );
        Ok(Self { matrix })
    }

    /// Read an `activation` layer of shape [n, p].
    pub fn from_layer(layer: &LayerTensor) -> Result<Self> {
        ensure!(
            layer.kind() == LayerKind::Activation,
            "layer '{}' is {}, not activation",
            layer.name(),
            layer.kind()
        );
        let (n, p) = (layer.shape()[0], layer.shape()[1]);
        Self::new(DMatrix::from_fn(n, p, |i, j| {
            f64::from(layer.data()[i * p + j])
        }))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn num_examples(&self) -> usize {
        self.matrix.nrows()
    }

    /// Copy with every column shifted to zero mean.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for mut col in m.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        m
    }
}

/// Linear CKA on column-centred activations.
///
/// Computed in feature space as ‖YᵀX‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F), which equals
/// the cosine between the n×n example Gram matrices.
pub fn cka_linear(x: &ActivationMatrix, y: &ActivationMatrix) -> Result<f64> {
    ensure!(
        x.num_examples() == y.num_examples(),
        "CKA needs the same examples: {} vs {} rows",
        x.num_examples(),
        y.num_examples()
    );
    let xc = x.centered();
    let yc = y.centered();
    let cross = yc.transpose() * &xc;
    let gx = xc.transpose() * &xc;
    let gy = yc.transpose() * &yc;
    let denom = gx.norm() * gy.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((cross.norm_squared() / denom).min(1.0))
}

/// Unbiased HSIC estimator of two n×n kernel matrices (n ≥ 4).
pub fn hsic_unbiased(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    ensure!(n >= 4, "unbiased HSIC needs at least 4 examples, got {n}");
    ensure!(
        k.shape() == (n, n) && l.shape() == (n, n),
        "HSIC kernels must both be {n}×{n}"
    );
    let mut kt = k.clone();
    let mut lt = l.clone();
    kt.fill_diagonal(0.0);
    lt.fill_diagonal(0.0);

    let trace = kt.component_mul(&lt).sum();
    let k_rows = kt.column_sum();
    let l_rows = lt.column_sum();
    let nf = n as f64;
    let term2 = k_rows.sum() * l_rows.sum() / ((nf - 1.0) * (nf - 2.0));
    let term3 = 2.0 / (nf - 2.0) * k_rows.dot(&l_rows);
    Ok((trace + term2 - term3) / (nf * (nf - 3.0)))
}

/// Minibatch CKA: unbiased HSIC averaged over aligned batches, then
/// normalised as HSIC(X,Y) / √(HSIC(X,X)·HSIC(Y,Y)).
pub fn cka_minibatch(
    x_batches: &[ActivationMatrix],
    y_batches: &[ActivationMatrix],
) -> Result<f64> {
    ensure!(
        !x_batches.is_empty(),
        "minibatch CKA needs at least one batch"
    );
    ensure!(
        x_batches.len() == y_batches.len(),
        "batch lists differ in length: {} vs {}",
        x_batches.len(),
        y_batches.len()
    );
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (i, (x, y)) in x_batches.iter().zip(y_batches).enumerate() {
        ensure!(
            x.num_examples() == y.num_examples(),
            "batch {i}: {} vs {} rows",
            x.num_examples(),
            y.num_examples()
        );
        ensure!(
            x.num_examples() >= 4,
            "batch {i} has {} examples; at least 4 are needed",
            x.num_examples()
        );
        let k = x.matrix() * x.matrix().transpose();
        let l = y.matrix() * y.matrix().transpose();
        xy += hsic_unbiased(&k, &l)?;
        xx += hsic_unbiased(&k, &k)?;
        yy += hsic_unbiased(&l, &l)?;
    }
    let b = x_batches.len() as f64;
    let (xy, xx, yy) = (xy / b, xx / b, yy / b);
    let denom = (xx * yy).sqrt();
    if !(denom > 0.0) {
        return Ok(0.0);
    }
    Ok(xy / denom)
}

/// Pairwise linear CKA between every pair of stages (symmetric, unit diagonal).
pub fn cka_matrix(stages: &[ActivationMatrix]) -> Result<DMatrix<f64>> {
    let s = stages.len();
    let mut m = DMatrix::identity(s, s);
    for i in 0..s {
        for j in i + 1..s {
            let v = cka_linear(&stages[i], &stages[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Mean CKA over all unordered pairs of distinct stages.
pub fn cka_abstraction_score(stages: &[ActivationMatrix]) -> Result<f64> {
    ensure!(
        stages.len() >= 2,
        "abstraction score needs at least 2 stages, got {}",
        stages.len()
    );
    let m = cka_matrix(stages)?;
    let s = stages.len();
    let mut total = 0.0;
    for i in 0..s {
        for j in i + 1..s {
            total += m[(i, j)];
        }
    }
    Ok(total / (s * (s - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> ActivationMatrix {
        ActivationMatrix::new(DMatrix::from_fn(rows, cols, f)).unwrap()
    }

    fn wiggle(i: usize, j: usize) -> f64 {
        ((i * 31 + j * 17) as f64 * 0.713).sin() + 0.1 * j as f64
    }

    #[test]
    fn self_and_scaled() {
        let x = act(20, 5, wiggle);
        assert!((cka_linear(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = ActivationMatrix::new(x.matrix() * -3.5).unwrap();
        assert!((cka_linear(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_mismatch_and_zero_gram() {
        let x = act(20, 5, wiggle);
        let y = act(19, 5, wiggle);
        assert!(cka_linear(&x, &y).is_err());
        let c = act(20, 3, |_, j| j as f64);
        assert_eq!(cka_linear(&x, &c).unwrap(), 0.0);
    }

    #[test]
    fn minibatch_identity_and_small_batch() {
        let xs: Vec<_> = (0..3)
            .map(|b| act(10, 4, |i, j| wiggle(i + 10 * b, j)))
            .collect();
        assert!((cka_minibatch(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let tiny = vec![act(3, 4, wiggle)];
        assert!(cka_minibatch(&tiny, &tiny).is_err());
        assert!(cka_minibatch(&xs, &xs[..2]).is_err());
    }

    #[test]
    fn abstraction_score_pairs() {
        let a = act(15, 3, wiggle);
        let b = act(15, 4, |i, j| wiggle(i, j).powi(2));
        let c = act(15, 2, |i, j| wiggle(i + 1, j));
        let want = (cka_linear(&a, &b).unwrap()
            + cka_linear(&a, &c).unwrap()
            + cka_linear(&b, &c).unwrap())
            / 3.0;
        let got = cka_abstraction_score(&[a.clone(), b, c]).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!(
            (cka_abstraction_score(&[a.clone(), a.clone(), a.clone()]).unwrap() - 1.0).abs()
                < 1e-12
        );
        assert!(cka_abstraction_score(&[a]).is_err());
    }
}
