//! Feed-forward acoustic model mapping spliced feature frames to state
//! posterior probabilities.

mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use train::{
    init_model, loss_and_gradient, mean_cross_entropy, train_toy, LayerGradient, ToyArchitecture, ToyTraining,
    TrainHyper,
};

use crate::dsp::{splice, FeatureMatrix};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    /// Elementwise activations only; softmax is applied per row by the caller.
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
            Activation::Softmax => unreachable!("softmax is a row operation"),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Softmax => unreachable!("softmax is a row operation"),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidModel(format!("unknown activation {other:?}"))),
        }
    }
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// One affine layer `act(W x + b)`; `weight` is `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `act(W x + b)` for every row of `input`; returns (pre-activation, output).
    fn forward_batch(&self, input: &Matrix) -> (Matrix, Matrix) {
        let n = input.rows();
        let mut z = Matrix::zeros(n, self.out_dim());
        for i in 0..n {
            let x = input.row(i);
            for (o, zo) in z.row_mut(i).iter_mut().enumerate() {
                *zo = self.bias[o] + self.weight.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        let mut a = z.clone();
        match self.activation {
            Activation::Softmax => (0..n).for_each(|i| softmax_in_place(a.row_mut(i))),
            act => a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v)),
        }
        (z, a)
    }
}

/// Acoustic model `theta`: layer stack plus the context splicing applied to
/// its input features.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    layers: Vec<Layer>,
    input_dim: usize,
    left_context: usize,
    right_context: usize,
}

impl AcousticModel {
    pub fn new(layers: Vec<Layer>, input_dim: usize, left_context: usize, right_context: usize) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if layers.is_empty() {
            return bad("model has no layers".into());
        }
        if input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        let spliced = input_dim * (left_context + right_context + 1);
        let mut expected_in = spliced;
        for (i, layer) in layers.iter().enumerate() {
            if layer.out_dim() == 0 {
                return bad(format!("layer {i} has zero outputs"));
            }
            if layer.bias.len() != layer.out_dim() {
                return bad(format!(
                    "layer {i}: bias length {} != out_dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                ));
            }
            if layer.in_dim() != expected_in {
                return bad(format!(
                    "dimension chain broken at layer {i}: in_dim {} but previous output is {expected_in}",
                    layer.in_dim()
                ));
            }
            let last = i + 1 == layers.len();
            match (layer.activation, last) {
                (Activation::Softmax, false) => return bad(format!("softmax at hidden layer {i}")),
                (act, true) if act != Activation::Softmax => {
                    return bad(format!("final activation must be softmax, found {act}"))
                }
                _ => {}
            }
            if !layer.weight.all_finite() || !layer.bias.iter().all(|v| v.is_finite()) {
                return bad(format!("layer {i} has non-finite parameters"));
            }
            expected_in = layer.out_dim();
        }
        Ok(Self { layers, input_dim, left_context, right_context })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn left_context(&self) -> usize {
        self.left_context
    }

    pub fn right_context(&self) -> usize {
        self.right_context
    }

    pub fn spliced_dim(&self) -> usize {
        self.input_dim * (self.left_context + self.right_context + 1)
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Network input for `f`: spliced with the model's context when `f` has
    /// the raw feature dimension, used as is when already spliced.
    pub fn prepare_input(&self, f: &FeatureMatrix) -> Result<Matrix> {
        let spliced_dim = self.spliced_dim();
        if f.dim() == self.input_dim {
            Ok(splice(f, self.left_context, self.right_context).into_values())
        } else if f.dim() == spliced_dim {
            Ok(f.values().clone())
        } else {
            Err(Error::Shape {
                expected: format!("feature dim {} (or {} spliced)", self.input_dim, spliced_dim),
                got: format!("feature dim {}", f.dim()),
            })
        }
    }

    /// Runs a prepared `N x spliced_dim` input through every layer.
    pub fn forward_matrix(&self, input: &Matrix) -> Result<PosteriorMatrix> {
        let mut a = input.clone();
        for layer in &self.layers {
            a = layer.forward_batch(&a).1;
            if !a.all_finite() {
                return Err(Error::NonFinite("acoustic model activations"));
            }
        }
        Ok(PosteriorMatrix(a))
    }

    /// State posterior probabilities for every frame of `f`.
    pub fn forward(&self, f: &FeatureMatrix) -> Result<PosteriorMatrix> {
        self.forward_matrix(&self.prepare_input(f)?)
    }
}

/// `N x I` row-stochastic matrix of state posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix(Matrix);

impl PosteriorMatrix {
    /// Checks entries lie in `[0, 1]` and rows sum to one within `1e-6`.
    ///
    /// Exact zeros are accepted: softmax underflow produces them and the
    /// measures floor before taking logs.
    pub fn new(values: Matrix) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::EmptyInput("posterior matrix has no classes"));
        }
        for (i, row) in values.iter_rows().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParameter(format!("posterior row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!("posterior row {i} sums to {s}")));
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(n_frames: usize, n_classes: usize) -> Self {
        let mut m = Matrix::zeros(n_frames, n_classes);
        m.as_mut_slice().iter_mut().for_each(|v| *v = 1.0 / n_classes as f64);
        Self(m)
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn n_frames(&self) -> usize {
        self.0.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.cols()
    }

    pub fn truncated(&self, n: usize) -> Self {
        let mut m = self.0.clone();
        m.truncate_rows(n);
        Self(m)
    }

    /// Index of the most probable class per frame.
    pub fn argmax(&self) -> Vec<usize> {
        self.0
            .iter_rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                    .0
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;
    use alloc::vec;

    fn softmax_layer(in_dim: usize, bias: Vec<f64>) -> Layer {
        Layer { weight: Matrix::zeros(bias.len(), in_dim), bias, activation: Activation::Softmax }
    }

    fn features(rows: usize, dim: usize) -> FeatureMatrix {
        let data = (0..rows * dim).map(|i| libm::sin(i as f64)).collect();
        FeatureMatrix::new(Matrix::from_vec(rows, dim, data).unwrap(), FeatureKind::Fbank, 10.0).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let m = AcousticModel::new(vec![softmax_layer(3, vec![0.0; 4])], 3, 0, 0).unwrap();
        let p = m.forward(&features(5, 3)).unwrap();
        assert!(p.values().as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn bias_only_softmax_closed_form() {
        let m = AcousticModel::new(vec![softmax_layer(2, vec![1.0, 0.0])], 2, 0, 0).unwrap();
        let p = m.forward(&features(3, 2)).unwrap();
        let e = libm::exp(1.0);
        for row in p.values().iter_rows() {
            assert!((row[0] - e / (e + 1.0)).abs() < 1e-15);
            assert!((row[0] - 0.7311).abs() < 1e-4 && (row[1] - 0.2689).abs() < 1e-4);
        }
    }

    #[test]
    fn spliced_or_raw_input() {
        let m = AcousticModel::new(vec![softmax_layer(6, vec![0.0; 2])], 2, 1, 1).unwrap();
        let raw = features(4, 2);
        assert_eq!(m.forward(&raw).unwrap().n_frames(), 4);
        let pre = splice(&raw, 1, 1);
        assert_eq!(m.forward(&pre).unwrap(), m.forward(&raw).unwrap());
        assert!(matches!(m.forward(&features(4, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(AcousticModel::new(vec![], 2, 0, 0), Err(Error::InvalidModel(_))));
        let hidden = Layer { weight: Matrix::zeros(3, 2), bias: vec![0.0; 3], activation: Activation::Relu };
        // chain mismatch: 3 outputs feed a layer expecting 4
        let out = softmax_layer(4, vec![0.0; 2]);
        assert!(AcousticModel::new(vec![hidden.clone(), out], 2, 0, 0).is_err());
        // final layer not softmax
        assert!(AcousticModel::new(vec![hidden.clone()], 2, 0, 0).is_err());
        // softmax in a hidden position
        let sm_hidden = softmax_layer(2, vec![0.0; 3]);
        assert!(AcousticModel::new(vec![sm_hidden, softmax_layer(3, vec![0.0; 2])], 2, 0, 0).is_err());
        // first layer must see the spliced dimension
        assert!(AcousticModel::new(vec![softmax_layer(2, vec![0.0; 2])], 2, 1, 0).is_err());
    }

    #[test]
    fn huge_logits_stay_finite() {
        let m = AcousticModel::new(vec![softmax_layer(1, vec![1000.0, -1000.0, 999.0])], 1, 0, 0).unwrap();
        let p = m.forward(&features(2, 1)).unwrap();
        assert!(p.values().all_finite());
        let s: f64 = p.values().row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn activation_names_round_trip() {
        for a in [Activation::Sigmoid, Activation::Relu, Activation::Tanh, Activation::Softmax] {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn posterior_validation() {
        assert!(PosteriorMatrix::new(Matrix::from_rows(&[[0.5, 0.5]]).unwrap()).is_ok());
        assert!(PosteriorMatrix::new(Matrix::from_rows(&[[1.0, 0.0]]).unwrap()).is_ok());
        assert!(PosteriorMatrix::new(Matrix::from_rows(&[[0.6, 0.5]]).unwrap()).is_err());
        assert!(PosteriorMatrix::new(Matrix::from_rows(&[[1.5, -0.5]]).unwrap()).is_err());
    }
}
