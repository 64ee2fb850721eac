use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Result};
use crate::tensor_io::{LayerKind, LayerTensor, TensorBundle};

/// p → h → K network: backbone `tanh(W1 x + b1)`, linear head `W2 a + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    /// h × p
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// K × h
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

pub(crate) const W1_LAYER: &str = "backbone.w1";
pub(crate) const B1_LAYER: &str = "backbone.b1";
const W2_LAYER: &str = "head.w";
const B2_LAYER: &str = "head.b";

impl ToyModel {
    /// Gaussian weights scaled by 1/√fan_in, zero biases.
    pub fn init(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        ensure!(
            input_dim >= 1 && hidden >= 1 && classes >= 1,
            "model dimensions must be positive (p={input_dim}, h={hidden}, K={classes})"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).unwrap();
        let w1 = DMatrix::from_fn(hidden, input_dim, |_, _| n1.sample(&mut rng));
        let w2 = DMatrix::from_fn(classes, hidden, |_, _| n2.sample(&mut rng));
        Ok(Self {
            w1,
            b1: DVector::zeros(hidden),
            w2,
            b2: DVector::zeros(classes),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .all(|v| v.is_finite())
    }

    /// Backbone embeddings of a batch (B × p) → B × h.
    pub fn embed(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w1.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b1.transpose();
        }
        z.map(f64::tanh)
    }

    /// Head logits of embeddings (B × h) → B × K.
    pub fn head_logits(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut logits = a * self.w2.transpose();
        for mut row in logits.row_iter_mut() {
            row += self.b2.transpose();
        }
        logits
    }

    pub fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.head_logits(&self.embed(x))
    }

    /// Export as a bundle. The backbone weight is stored in fully-connected
    /// layout [p, h] so each hidden unit is one feature column.
    pub fn to_bundle(
        &self,
        model_id: &str,
        upstream_accuracy: Option<f64>,
    ) -> Result<TensorBundle> {
        let f32s = |m: &DMatrix<f64>| -> Vec<f32> {
            // column-major storage of M equals row-major storage of Mᵀ
            m.iter().map(|&v| v as f32).collect()
        };
        let (p, h, k) = (self.input_dim(), self.hidden(), self.classes());
        let layers = vec![
            LayerTensor::new(
                W1_LAYER,
                LayerKind::FullyConnected,
                vec![p, h],
                1,
                f32s(&self.w1),
            )?,
            LayerTensor::new(
                B1_LAYER,
                LayerKind::Bias,
                vec![h],
                1,
                self.b1.iter().map(|&v| v as f32).collect(),
            )?,
            LayerTensor::new(
                W2_LAYER,
                LayerKind::FullyConnected,
                vec![h, k],
                1,
                f32s(&self.w2),
            )?,
            LayerTensor::new(
                B2_LAYER,
                LayerKind::Bias,
                vec![k],
                1,
                self.b2.iter().map(|&v| v as f32).collect(),
            )?,
        ];
        TensorBundle::new(model_id, layers, upstream_accuracy)
    }
}

/// Parameter gradients. Backbone entries are `None` when they were not
/// computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Option<DMatrix<f64>>,
    pub b1: Option<DVector<f64>>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Mean softmax cross-entropy over a batch, its accuracy, and gradients.
/// Backbone gradients are only computed when `with_backbone` is set.
pub fn cross_entropy(
    model: &ToyModel,
    x: &DMatrix<f64>,
    labels: &[usize],
    with_backbone: bool,
) -> (f64, f64, Gradients) {
    let b = x.nrows();
    let a = model.embed(x);
    let logits = model.head_logits(&a);
    let mut grad_logits = DMatrix::zeros(b, model.classes());
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.max();
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        if row
            .iter()
            .enumerate()
            .all(|(j, &v)| j == label || v < row[label])
        {
            correct += 1;
        }
        for j in 0..model.classes() {
            let p = (row[j] - lse).exp();
            grad_logits[(i, j)] = (p - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    let w2 = grad_logits.transpose() * &a;
    let b2 = grad_logits.row_sum().transpose();
    let (w1, b1) = if with_backbone {
        let mut dz = &grad_logits * &model.w2;
        dz.zip_apply(&a, |g, act| *g *= 1.0 - act * act);
        (Some(dz.transpose() * x), Some(dz.row_sum().transpose()))
    } else {
        (None, None)
    };
    (
        loss / b as f64,
        correct as f64 / b as f64,
        Gradients { w1, b1, w2, b2 },
    )
}

impl ToyModel {
    /// Rebuild a model written by [`ToyModel::to_bundle`].
    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let get = |name: &str| {
            bundle.layer(name).ok_or_else(|| {
                crate::error::invalid!("bundle '{}' has no layer '{name}'", bundle.model_id())
            })
        };
        let (w1, b1, w2, b2) = (
            get(W1_LAYER)?,
            get(B1_LAYER)?,
            get(W2_LAYER)?,
            get(B2_LAYER)?,
        );
        let (p, h) = (w1.shape()[0], w1.shape()[1]);
        let k = w2.shape()[1];
        ensure!(
            w2.shape()[0] == h && b1.len() == h && b2.len() == k,
            "bundle '{}' has inconsistent toy-model layer shapes",
            bundle.model_id()
        );
        let widen = |d: &[f32]| d.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        Ok(Self {
            w1: DMatrix::from_column_slice(h, p, &widen(w1.data())),
            b1: DVector::from_vec(widen(b1.data())),
            w2: DMatrix::from_column_slice(k, h, &widen(w2.data())),
            b2: DVector::from_vec(widen(b2.data())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_layout_round_trip() {
        let m = ToyModel::init(3, 4, 2, 7).unwrap();
        let bundle = m.to_bundle("toy", None).unwrap();
        let w1 = bundle.layer(W1_LAYER).unwrap();
        assert_eq!(w1.shape(), &[3, 4]);
        // row-major [p, h]: element (input 1, hidden 2)
        assert_eq!(w1.data()[4 + 2], m.w1[(2, 1)] as f32);
        let back = ToyModel::from_bundle(&bundle).unwrap();
        assert_eq!(back.w1.map(|v| v as f32), m.w1.map(|v| v as f32));
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(
            ToyModel::init(3, 4, 2, 1).unwrap(),
            ToyModel::init(3, 4, 2, 1).unwrap()
        );
        assert_ne!(
            ToyModel::init(3, 4, 2, 1).unwrap(),
            ToyModel::init(3, 4, 2, 2).unwrap()
        );
        assert!(ToyModel::init(0, 4, 2, 1).is_err());
    }

    #[test]
    fn head_only_skips_backbone() {
        let m = ToyModel::init(3, 4, 2, 1).unwrap();
        let x = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64 * 0.1);
        let (_, _, g) = cross_entropy(&m, &x, &[0, 1, 0, 1, 1], false);
        assert!(g.w1.is_none() && g.b1.is_none());
        let (_, _, g) = cross_entropy(&m, &x, &[0, 1, 0, 1, 1], true);
        assert!(g.w1.is_some() && g.b1.is_some());
    }
}
