//! Full-batch gradient descent on mean frame cross-entropy. Only meant for
//! building small deterministic fixture models.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, AcousticModel, Layer};
use crate::dsp::FeatureMatrix;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyArchitecture {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub n_classes: usize,
    pub left_context: usize,
    pub right_context: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTraining {
    /// Lowest-loss parameters seen, never worse than the initialization.
    pub model: AcousticModel,
    /// Loss of the initialization followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl ToyTraining {
    pub fn final_loss(&self) -> f64 {
        self.loss_history.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Seeded init, weights and biases uniform in `+-1/sqrt(fan_in)`.
pub fn init_model(input_dim: usize, arch: &ToyArchitecture, seed: u64) -> Result<AcousticModel> {
    if arch.activation == Activation::Softmax {
        return Err(Error::InvalidParameter("hidden activation cannot be softmax".into()));
    }
    if arch.n_classes == 0 || arch.hidden.contains(&0) {
        return Err(Error::InvalidParameter("layer widths must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fan_in = input_dim * (arch.left_context + arch.right_context + 1);
    let mut layers = Vec::with_capacity(arch.hidden.len() + 1);
    let widths = arch.hidden.iter().map(|&h| (h, arch.activation)).chain([(arch.n_classes, Activation::Softmax)]);
    for (out_dim, activation) in widths {
        let limit = 1.0 / libm::sqrt(fan_in as f64);
        let weight: Vec<f64> = (0..out_dim * fan_in).map(|_| rng.random_range(-limit..limit)).collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        layers.push(Layer { weight: Matrix::from_vec(out_dim, fan_in, weight)?, bias, activation });
        fan_in = out_dim;
    }
    AcousticModel::new(layers, input_dim, arch.left_context, arch.right_context)
}

fn check_labels(n_frames: usize, labels: &[usize], n_classes: usize) -> Result<()> {
    if n_frames == 0 {
        return Err(Error::EmptyInput("no training frames"));
    }
    if labels.len() != n_frames {
        return Err(Error::Shape {
            expected: format!("{n_frames} labels"),
            got: format!("{} labels", labels.len()),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    Ok(())
}

/// `logsumexp(z) - z_label` averaged over rows.
fn cross_entropy_from_logits(logits: &Matrix, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .iter_rows()
        .zip(labels)
        .map(|(z, &y)| {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(z.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            lse - z[y]
        })
        .sum();
    total / labels.len() as f64
}

/// Mean cross-entropy and its gradient for a prepared (spliced) input.
pub fn loss_and_gradient(model: &AcousticModel, input: &Matrix, labels: &[usize]) -> Result<(f64, Vec<LayerGradient>)> {
    check_labels(input.rows(), labels, model.n_classes())?;
    let n = input.rows();
    let layers = model.layers();
    // outputs[0] is the input, outputs[l+1] the activation of layer l
    let mut pre = Vec::with_capacity(layers.len());
    let mut outputs = Vec::with_capacity(layers.len() + 1);
    outputs.push(input.clone());
    for layer in layers {
        let (z, a) = layer.forward_batch(outputs.last().expect("non-empty"));
        pre.push(z);
        outputs.push(a);
    }
    let loss = cross_entropy_from_logits(pre.last().expect("non-empty"), labels);
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }

    // d loss / d logits = (p - onehot) / N
    let mut delta = outputs.last().expect("non-empty").clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n as f64);
    }

    let mut grads: Vec<LayerGradient> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let prev = &outputs[l];
        let mut gw = Matrix::zeros(layer.out_dim(), layer.in_dim());
        let mut gb = alloc::vec![0.0; layer.out_dim()];
        for i in 0..n {
            let d = delta.row(i);
            let x = prev.row(i);
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                gb[o] += dv;
                gw.row_mut(o).iter_mut().zip(x).for_each(|(g, xv)| *g += dv * xv);
            }
        }
        if l > 0 {
            let below = &layers[l - 1];
            let mut next = Matrix::zeros(n, layer.in_dim());
            for i in 0..n {
                let d = delta.row(i);
                let acc = next.row_mut(i);
                for (o, &dv) in d.iter().enumerate() {
                    acc.iter_mut().zip(layer.weight.row(o)).for_each(|(a, w)| *a += dv * w);
                }
                let (z, a) = (pre[l - 1].row(i), outputs[l].row(i));
                for ((g, &zv), &av) in acc.iter_mut().zip(z).zip(a) {
                    *g *= below.activation.derivative(zv, av);
                }
            }
            delta = next;
        }
        grads.push(LayerGradient { weight: gw, bias: gb });
    }
    grads.reverse();
    Ok((loss, grads))
}

/// Mean cross-entropy of `model` on labelled features.
pub fn mean_cross_entropy(model: &AcousticModel, features: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    let input = model.prepare_input(features)?;
    check_labels(input.rows(), labels, model.n_classes())?;
    let mut logits = input;
    for layer in model.layers() {
        let (z, a) = layer.forward_batch(&logits);
        logits = if layer.activation == Activation::Softmax { z } else { a };
    }
    Ok(cross_entropy_from_logits(&logits, labels))
}

/// Trains a softmax network on frame labels by full-batch gradient descent.
///
/// Deterministic for a given seed. Returns the parameters with the lowest
/// training loss observed, so the result is never worse than the seeded
/// initialization; with `epochs == 0` that initialization is returned.
pub fn train_toy(
    features: &FeatureMatrix,
    labels: &[usize],
    arch: &ToyArchitecture,
    hyper: &TrainHyper,
) -> Result<ToyTraining> {
    check_labels(features.n_frames(), labels, arch.n_classes)?;
    if features.n_frames() < arch.n_classes {
        return Err(Error::TooFewFrames { needed: arch.n_classes, got: features.n_frames() });
    }
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {} must be positive", hyper.learning_rate)));
    }
    let mut model = init_model(features.dim(), arch, hyper.seed)?;
    let input = model.prepare_input(features)?;
    let (mut loss, mut grads) = loss_and_gradient(&model, &input, labels)?;
    let mut history = alloc::vec![loss];
    let mut best = (loss, model.clone());
    for _ in 0..hyper.epochs {
        for (layer, g) in model.layers_mut().iter_mut().zip(&grads) {
            layer.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()).for_each(|(w, gw)| {
                *w -= hyper.learning_rate * gw;
            });
            layer.bias.iter_mut().zip(&g.bias).for_each(|(b, gb)| *b -= hyper.learning_rate * gb);
        }
        match loss_and_gradient(&model, &input, labels) {
            Ok((l, g)) => {
                loss = l;
                grads = g;
            }
            // diverged; keep the best parameters found so far
            Err(Error::NonFinite(_)) => break,
            Err(e) => return Err(e),
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, model.clone());
        }
    }
    Ok(ToyTraining { model: best.1, loss_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;
    use alloc::vec;

    fn toy_data() -> (FeatureMatrix, Vec<usize>) {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [libm::sin(i as f64), libm::cos(i as f64 * 0.7)]).collect();
        let labels = (0..30).map(|i| i % 3).collect();
        (FeatureMatrix::new(Matrix::from_rows(&rows).unwrap(), FeatureKind::Fbank, 10.0).unwrap(), labels)
    }

    fn arch() -> ToyArchitecture {
        ToyArchitecture { hidden: vec![4], activation: Activation::Tanh, n_classes: 3, left_context: 0, right_context: 0 }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (f, y) = toy_data();
        let hyper = TrainHyper { learning_rate: 0.1, epochs: 0, seed: 7 };
        let t = train_toy(&f, &y, &arch(), &hyper).unwrap();
        assert_eq!(t.model, init_model(2, &arch(), 7).unwrap());
        assert_eq!(t.loss_history.len(), 1);
        assert!((t.loss_history[0] - mean_cross_entropy(&t.model, &f, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn label_errors() {
        let (f, mut y) = toy_data();
        let hyper = TrainHyper { learning_rate: 0.1, epochs: 1, seed: 0 };
        y[3] = 5;
        assert_eq!(
            train_toy(&f, &y, &arch(), &hyper).unwrap_err(),
            Error::LabelOutOfRange { label: 5, n_classes: 3 }
        );
        assert!(matches!(train_toy(&f, &y[..10], &arch(), &hyper), Err(Error::Shape { .. })));
    }

    #[test]
    fn same_seed_same_bits() {
        let (f, y) = toy_data();
        let hyper = TrainHyper { learning_rate: 0.2, epochs: 20, seed: 11 };
        let a = train_toy(&f, &y, &arch(), &hyper).unwrap();
        let b = train_toy(&f, &y, &arch(), &hyper).unwrap();
        assert_eq!(a, b);
        assert!(a.final_loss() <= a.loss_history[0]);
    }
}
