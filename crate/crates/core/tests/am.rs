use agekit_core::am::{
    init_model, loss_and_gradient, mean_cross_entropy, train_toy, AcousticModel, Activation, Layer,
    ToyArchitecture, TrainHyper,
};
use agekit_core::dsp::{splice, FeatureKind, FeatureMatrix};
use agekit_core::Matrix;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

fn random_layer(rng: &mut StdRng, in_dim: usize, out_dim: usize, activation: Activation) -> Layer {
    let w = (0..in_dim * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Layer {
        weight: Matrix::from_vec(out_dim, in_dim, w).unwrap(),
        bias: (0..out_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        activation,
    }
}

fn random_features(rng: &mut StdRng, rows: usize, dim: usize) -> FeatureMatrix {
    let data = (0..rows * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    FeatureMatrix::new(Matrix::from_vec(rows, dim, data).unwrap(), FeatureKind::Fbank, 10.0).unwrap()
}

fn three_layer_model(rng: &mut StdRng) -> AcousticModel {
    let (dim, left, right) = (4, 1, 2);
    let layers = vec![
        random_layer(rng, dim * 4, 9, Activation::Sigmoid),
        random_layer(rng, 9, 7, Activation::Relu),
        random_layer(rng, 7, 6, Activation::Tanh),
        random_layer(rng, 6, 5, Activation::Softmax),
    ];
    AcousticModel::new(layers, dim, left, right).unwrap()
}

/// Straight-line forward pass written without any library helpers.
fn reference_forward(model: &AcousticModel, f: &FeatureMatrix) -> Vec<Vec<f64>> {
    let n = f.n_frames();
    let d = f.dim();
    let (l, r) = (model.left_context() as isize, model.right_context() as isize);
    let mut out = Vec::new();
    for t in 0..n as isize {
        let mut x = Vec::new();
        for off in -l..=r {
            let src = (t + off).clamp(0, n as isize - 1) as usize;
            for j in 0..d {
                x.push(f.values().get(src, j));
            }
        }
        for layer in model.layers() {
            let mut z = vec![0.0; layer.out_dim()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (i, xi) in x.iter().enumerate() {
                    acc += layer.weight.get(o, i) * xi;
                }
                *zo = acc;
            }
            x = match layer.activation {
                Activation::Sigmoid => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
                Activation::Relu => z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect(),
                Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
                Activation::Softmax => {
                    let m = z.iter().cloned().fold(f64::MIN, f64::max);
                    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    e.iter().map(|v| v / s).collect()
                }
            };
        }
        out.push(x);
    }
    out
}

#[test]
fn forward_matches_reference_implementation() {
    let mut rng = StdRng::seed_from_u64(42);
    for _ in 0..10 {
        let model = three_layer_model(&mut rng);
        let f = random_features(&mut rng, 25, 4);
        let p = model.forward(&f).unwrap();
        let reference = reference_forward(&model, &f);
        let mut max_diff: f64 = 0.0;
        for (i, row) in reference.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                max_diff = max_diff.max((p.values().get(i, j) - v).abs());
            }
        }
        assert!(max_diff < 1e-9, "max diff {max_diff}");
    }
}

#[test]
fn logit_shift_leaves_posteriors_unchanged() {
    let mut rng = StdRng::seed_from_u64(8);
    let model = three_layer_model(&mut rng);
    let f = random_features(&mut rng, 30, 4);
    let base = model.forward(&f).unwrap();
    for c in [-50.0, -1.0, 3.5, 200.0] {
        let mut layers = model.layers().to_vec();
        layers.last_mut().unwrap().bias.iter_mut().for_each(|b| *b += c);
        let shifted = AcousticModel::new(layers, 4, 1, 2).unwrap().forward(&f).unwrap();
        let diff = base
            .values()
            .as_slice()
            .iter()
            .zip(shifted.values().as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "shift {c}: diff {diff}");
    }
}

proptest! {
    #[test]
    fn posteriors_are_row_stochastic(seed in any::<u64>(), rows in 1usize..30, scale in 0.1f64..100.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let model = three_layer_model(&mut rng);
        let data = (0..rows * 4).map(|_| rng.random_range(-scale..scale)).collect();
        let f = FeatureMatrix::new(Matrix::from_vec(rows, 4, data).unwrap(), FeatureKind::Fbank, 10.0).unwrap();
        let p = model.forward(&f).unwrap();
        prop_assert_eq!(p.n_frames(), rows);
        for row in p.values().iter_rows() {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

fn with_parameter(model: &AcousticModel, layer: usize, index: usize, value: f64) -> AcousticModel {
    let mut layers = model.layers().to_vec();
    let l = &mut layers[layer];
    let nw = l.weight.as_slice().len();
    if index < nw {
        l.weight.as_mut_slice()[index] = value;
    } else {
        l.bias[index - nw] = value;
    }
    AcousticModel::new(layers, model.input_dim(), model.left_context(), model.right_context()).unwrap()
}

fn parameter(model: &AcousticModel, layer: usize, index: usize) -> f64 {
    let l = &model.layers()[layer];
    let nw = l.weight.as_slice().len();
    if index < nw {
        l.weight.as_slice()[index]
    } else {
        l.bias[index - nw]
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = StdRng::seed_from_u64(2024);
    let arch = ToyArchitecture {
        hidden: vec![6],
        activation: Activation::Tanh,
        n_classes: 4,
        left_context: 1,
        right_context: 1,
    };
    let model = init_model(3, &arch, 5).unwrap();
    let f = random_features(&mut rng, 40, 3);
    let labels: Vec<usize> = (0..40).map(|_| rng.random_range(0..4)).collect();
    let input = splice(&f, 1, 1).into_values();
    let (_, grads) = loss_and_gradient(&model, &input, &labels).unwrap();
    let h = 1e-5;
    for _ in 0..10 {
        let layer = rng.random_range(0..2);
        let count = model.layers()[layer].weight.as_slice().len() + model.layers()[layer].bias.len();
        let index = rng.random_range(0..count);
        let p0 = parameter(&model, layer, index);
        let plus = mean_cross_entropy(&with_parameter(&model, layer, index, p0 + h), &f, &labels).unwrap();
        let minus = mean_cross_entropy(&with_parameter(&model, layer, index, p0 - h), &f, &labels).unwrap();
        let numeric = (plus - minus) / (2.0 * h);
        let g = &grads[layer];
        let nw = g.weight.as_slice().len();
        let analytic = if index < nw { g.weight.as_slice()[index] } else { g.bias[index - nw] };
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-6, "layer {layer} param {index}: analytic {analytic} numeric {numeric} rel {rel}");
    }
}

fn clusters(seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let centers = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..200 {
            rows.push([cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            labels.push(c);
        }
    }
    (FeatureMatrix::new(Matrix::from_rows(&rows).unwrap(), FeatureKind::Fbank, 10.0).unwrap(), labels)
}

fn cluster_arch() -> ToyArchitecture {
    ToyArchitecture { hidden: vec![16], activation: Activation::Tanh, n_classes: 3, left_context: 0, right_context: 0 }
}

#[test]
fn separable_clusters_are_learned() {
    let (f, labels) = clusters(1);
    let hyper = TrainHyper { learning_rate: 0.5, epochs: 300, seed: 3 };
    let trained = train_toy(&f, &labels, &cluster_arch(), &hyper).unwrap();
    let predicted = trained.model.forward(&f).unwrap().argmax();
    let correct = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
    let accuracy = correct as f64 / labels.len() as f64;
    assert!(accuracy >= 0.95, "accuracy {accuracy}");
    assert!(trained.final_loss() <= trained.loss_history[0]);
}

#[test]
fn small_learning_rate_never_increases_loss() {
    let (f, labels) = clusters(1);
    let hyper = TrainHyper { learning_rate: 1e-3, epochs: 200, seed: 3 };
    let trained = train_toy(&f, &labels, &cluster_arch(), &hyper).unwrap();
    assert_eq!(trained.loss_history.len(), 201);
    for w in trained.loss_history.windows(2) {
        assert!(w[1] <= w[0], "loss rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn training_is_seed_deterministic() {
    let (f, labels) = clusters(4);
    let hyper = TrainHyper { learning_rate: 0.3, epochs: 25, seed: 99 };
    let a = train_toy(&f, &labels, &cluster_arch(), &hyper).unwrap();
    let b = train_toy(&f, &labels, &cluster_arch(), &hyper).unwrap();
    let bits = |m: &AcousticModel| -> Vec<u64> {
        m.layers()
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    assert_eq!(bits(&a.model), bits(&b.model));
    let c = train_toy(&f, &labels, &cluster_arch(), &TrainHyper { seed: 100, ..hyper }).unwrap();
    assert_ne!(bits(&a.model), bits(&c.model));
}
