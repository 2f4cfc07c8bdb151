//! Shared finite-difference machinery for the integration suites.
//!
//! Comparison contract: every gradient coordinate must satisfy
//! |analytic − numeric| ≤ 1e-5 · max(|analytic|, |numeric|, 1e-4).
//! Coordinates where both sides are below 1e-8 are dead paths (dropout zeros,
//! inactive ReLUs) and are skipped. The 1e-4 floor absorbs the ~1e-10
//! absolute roundoff that central differences at h = 1e-6 carry, which
//! otherwise swamps the relative error of near-zero coordinates; every
//! coordinate at or above the floor is held to the full 1e-5 relative bound.

use ancm_core::anchors::AnchorSet;
use ancm_core::linalg::{Matrix, Shape};
use ancm_core::metrics::{self, MetricKind};
use ancm_core::ncm;
use ancm_core::network::{grad_tensors, DropoutMasks, LayerSpec, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_TOL: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-4;
pub const FD_H: f64 = 1e-6;

/// What a comparison certified: how many coordinates were held to the pure
/// relative bound, and the worst relative error among them.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdStats {
    pub certified: usize,
    pub max_rel: f64,
}

impl FdStats {
    pub fn merge(&mut self, other: FdStats) {
        self.certified += other.certified;
        self.max_rel = self.max_rel.max(other.max_rel);
    }
}

/// Asserts the comparison contract over two gradient slices.
pub fn compare_slices(analytic: &[f64], numeric: &[f64], ctx: &str) -> FdStats {
    assert_eq!(analytic.len(), numeric.len(), "{ctx}: length mismatch");
    let mut stats = FdStats::default();
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let denom = a.abs().max(n.abs());
        if denom <= 1e-8 {
            continue;
        }
        let err = (a - n).abs();
        assert!(
            err <= FD_TOL * denom.max(FD_FLOOR),
            "{ctx}: coordinate {i}: analytic {a:e} vs finite difference {n:e}"
        );
        if denom >= FD_FLOOR {
            stats.certified += 1;
            stats.max_rel = stats.max_rel.max(err / denom);
        }
    }
    stats
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::new(rows, cols, data).expect("sized buffer")
}

/// L = Σ probe ⊙ out: a fixed random linear functional of the network output,
/// so dL/dout is the probe itself and layer gradients are isolated from any
/// loss-side machinery.
pub fn probe_loss(out: &Matrix, probe: &Matrix) -> f64 {
    out.data().iter().zip(probe.data()).map(|(o, p)| o * p).sum()
}

fn nudge_param(net: &mut Network, tensor: usize, coord: usize, delta: f64) {
    net.param_tensors_mut()[tensor].0[coord] += delta;
}

/// Checks every parameter gradient and every input gradient of `net` under
/// the probe loss against central finite differences.
pub fn check_network_grads(
    net: &mut Network,
    x: &Matrix,
    masks: &DropoutMasks,
    probe: &Matrix,
    ctx: &str,
) -> FdStats {
    // Rescale the probe so the probe loss stays O(1). Central differences at
    // h = 1e-6 carry roundoff proportional to the loss magnitude (~|f|·1e-10);
    // keeping |f| near 1 keeps that below the comparison floor. The rescale is
    // linear, so it changes analytic and numeric gradients identically.
    let (out0, trace) = net.forward_with_masks(x, masks).expect("forward");
    let magnitude: f64 = out0
        .data()
        .iter()
        .zip(probe.data())
        .map(|(o, p)| (o * p).abs())
        .sum();
    let scale = 1.0 / magnitude.max(1.0);
    let probe = &Matrix::new(
        probe.rows(),
        probe.cols(),
        probe.data().iter().map(|p| p * scale).collect(),
    )
    .expect("probe shape");
    let (grads, input_grad) = net.backward(&trace, probe).expect("backward");
    let analytic: Vec<Vec<f64>> = grad_tensors(&grads)
        .iter()
        .map(|(g, _)| g.to_vec())
        .collect();

    let loss = |net: &Network| -> f64 {
        probe_loss(&net.forward_with_masks(x, masks).expect("forward").0, probe)
    };

    let mut stats = FdStats::default();
    for (ti, a) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for ci in 0..a.len() {
            nudge_param(net, ti, ci, FD_H);
            let up = loss(net);
            nudge_param(net, ti, ci, -2.0 * FD_H);
            let down = loss(net);
            nudge_param(net, ti, ci, FD_H);
            numeric.push((up - down) / (2.0 * FD_H));
        }
        stats.merge(compare_slices(a, &numeric, &format!("{ctx}: tensor {ti}")));
    }

    let mut x_fd = x.clone();
    let mut numeric = Vec::with_capacity(x.rows() * x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            x_fd.row_mut(r)[c] += FD_H;
            let up = probe_loss(&net.forward_with_masks(&x_fd, masks).expect("forward").0, probe);
            x_fd.row_mut(r)[c] -= 2.0 * FD_H;
            let down = probe_loss(&net.forward_with_masks(&x_fd, masks).expect("forward").0, probe);
            x_fd.row_mut(r)[c] += FD_H;
            numeric.push((up - down) / (2.0 * FD_H));
        }
    }
    stats.merge(compare_slices(
        input_grad.data(),
        &numeric,
        &format!("{ctx}: input"),
    ));
    stats
}

/// One gradient-check instance: a single-layer (or minimal) network around
/// the given specs, random input and probe, all gradients checked.
pub fn check_layer_instance(
    rng: &mut ChaCha8Rng,
    input_shape: Shape,
    specs: Vec<LayerSpec>,
    batch: usize,
    ctx: &str,
) -> FdStats {
    let seed = rng.random::<u64>();
    let mut net = Network::new(input_shape, specs, seed).expect("valid layer config");
    let x = random_matrix(rng, batch, input_shape.len(), 2.0);
    let masks = net.draw_masks(batch);
    let out_len = net.output_shape().len();
    let probe = random_matrix(rng, batch, out_len, 1.0);
    check_network_grads(&mut net, &x, &masks, &probe, ctx)
}

/// Builds a random valid stack: depth ≤ 6, dense widths ≤ 32, conv widths
/// ≤ 4 channels.
///
/// BatchNorm is only placed while the signal is generic, i.e. before any
/// ReLU/Dropout since the last parametric layer. A zeroing layer can leave a
/// whole channel identically zero across the batch; BatchNorm then emits
/// exactly beta = 0 and a downstream ReLU sits on its kink, where central
/// differences measure the kink crossing instead of the subgradient.
#[allow(dead_code)] // exercised by the gradients suite, not every binary
pub fn random_stack(rng: &mut ChaCha8Rng) -> (Shape, Vec<LayerSpec>) {
    let input_shape = if rng.random::<bool>() {
        Shape::Flat(rng.random_range(2..=16))
    } else {
        Shape::Image {
            channels: rng.random_range(1..=3),
            height: rng.random_range(3..=6),
            width: rng.random_range(3..=6),
        }
    };
    let depth = rng.random_range(1..=6);
    let mut shape = input_shape;
    let mut specs = Vec::with_capacity(depth);
    let mut zeroed_since_mix = false;
    for _ in 0..depth {
        let spec = loop {
            let candidate = match shape {
                Shape::Image {
                    channels,
                    height,
                    width,
                } => {
                    let poolable = height >= 2 && width >= 2;
                    match rng.random_range(0..if poolable { 6 } else { 5 }) {
                        0 => LayerSpec::Conv3x3 {
                            in_channels: channels,
                            out_channels: rng.random_range(1..=4),
                        },
                        1 => LayerSpec::BatchNorm { channels },
                        2 => LayerSpec::ReLU,
                        3 => LayerSpec::Dropout {
                            p: [0.0, 0.2, 0.5][rng.random_range(0..3)],
                        },
                        4 => LayerSpec::Flatten,
                        _ => LayerSpec::MaxPool2x2,
                    }
                }
                Shape::Flat(d) => match rng.random_range(0..4) {
                    0 => LayerSpec::Dense {
                        input: d,
                        output: rng.random_range(1..=32),
                    },
                    1 => LayerSpec::BatchNorm { channels: d },
                    2 => LayerSpec::ReLU,
                    _ => LayerSpec::Dropout {
                        p: [0.0, 0.2, 0.5][rng.random_range(0..3)],
                    },
                },
            };
            if zeroed_since_mix && matches!(candidate, LayerSpec::BatchNorm { .. }) {
                continue;
            }
            break candidate;
        };
        zeroed_since_mix = match spec {
            LayerSpec::ReLU => true,
            LayerSpec::Dropout { p } => zeroed_since_mix || p > 0.0,
            LayerSpec::Dense { .. } | LayerSpec::Conv3x3 { .. } => false,
            _ => zeroed_since_mix,
        };
        shape = match spec {
            LayerSpec::Dense { output, .. } => Shape::Flat(output),
            LayerSpec::Conv3x3 { out_channels, .. } => match shape {
                Shape::Image { height, width, .. } => Shape::Image {
                    channels: out_channels,
                    height,
                    width,
                },
                _ => unreachable!(),
            },
            LayerSpec::MaxPool2x2 => match shape {
                Shape::Image {
                    channels,
                    height,
                    width,
                } => Shape::Image {
                    channels,
                    height: height / 2,
                    width: width / 2,
                },
                _ => unreachable!(),
            },
            LayerSpec::Flatten => Shape::Flat(shape.len()),
            _ => shape,
        };
        specs.push(spec);
    }
    (input_shape, specs)
}

/// The layer variants the per-family gradient checks cover.
#[derive(Clone, Copy, Debug)]
pub enum Family {
    Dense,
    Conv,
    MaxPool,
    BatchNorm,
    Relu,
    Dropout,
    Flatten,
}

/// One random single-layer instance of the given family, every gradient
/// checked against central differences.
pub fn exercise_family(rng: &mut ChaCha8Rng, family: Family, i: usize) -> FdStats {
    let ctx = format!("{family:?} instance {i}");
    match family {
        Family::Dense => {
            let input = rng.random_range(1..=8);
            let output = rng.random_range(1..=8);
            let batch = rng.random_range(1..=4);
            check_layer_instance(
                rng,
                Shape::Flat(input),
                vec![LayerSpec::Dense { input, output }],
                batch,
                &ctx,
            )
        }
        Family::Conv => {
            let in_channels = rng.random_range(1..=3);
            let out_channels = rng.random_range(1..=3);
            let shape = Shape::Image {
                channels: in_channels,
                height: rng.random_range(1..=5),
                width: rng.random_range(1..=5),
            };
            let batch = rng.random_range(1..=3);
            check_layer_instance(
                rng,
                shape,
                vec![LayerSpec::Conv3x3 {
                    in_channels,
                    out_channels,
                }],
                batch,
                &ctx,
            )
        }
        Family::MaxPool => {
            let shape = Shape::Image {
                channels: rng.random_range(1..=3),
                height: rng.random_range(2..=6),
                width: rng.random_range(2..=6),
            };
            let batch = rng.random_range(1..=3);
            check_layer_instance(rng, shape, vec![LayerSpec::MaxPool2x2], batch, &ctx)
        }
        Family::BatchNorm => {
            let (shape, channels) = if rng.random::<bool>() {
                let c = rng.random_range(1..=4);
                (
                    Shape::Image {
                        channels: c,
                        height: rng.random_range(2..=4),
                        width: rng.random_range(2..=4),
                    },
                    c,
                )
            } else {
                let d = rng.random_range(1..=8);
                (Shape::Flat(d), d)
            };
            let batch = rng.random_range(2..=4);
            check_layer_instance(
                rng,
                shape,
                vec![LayerSpec::BatchNorm { channels }],
                batch,
                &ctx,
            )
        }
        Family::Relu => {
            let d = rng.random_range(1..=10);
            let batch = rng.random_range(1..=4);
            check_layer_instance(rng, Shape::Flat(d), vec![LayerSpec::ReLU], batch, &ctx)
        }
        Family::Dropout => {
            let d = rng.random_range(1..=10);
            let batch = rng.random_range(1..=4);
            let p = [0.0, 0.1, 0.3, 0.5, 0.7][rng.random_range(0..5)];
            check_layer_instance(
                rng,
                Shape::Flat(d),
                vec![LayerSpec::Dropout { p }],
                batch,
                &ctx,
            )
        }
        Family::Flatten => {
            let shape = Shape::Image {
                channels: rng.random_range(1..=3),
                height: rng.random_range(1..=4),
                width: rng.random_range(1..=4),
            };
            let batch = rng.random_range(1..=4);
            check_layer_instance(rng, shape, vec![LayerSpec::Flatten], batch, &ctx)
        }
    }
}

/// One random pair of vectors: the metric's gradient in its first argument
/// against central differences.
pub fn exercise_metric_grad(rng: &mut ChaCha8Rng, kind: MetricKind, i: usize) -> FdStats {
    let d = rng.random_range(2..=16);
    let f1: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let f2: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let eval = metrics::eval(kind, &f1, &f2).expect("metric eval");
    let mut numeric = Vec::with_capacity(d);
    let mut probe = f1.clone();
    for j in 0..d {
        probe[j] += FD_H;
        let up = metrics::eval(kind, &probe, &f2).expect("metric eval").value;
        probe[j] -= 2.0 * FD_H;
        let down = metrics::eval(kind, &probe, &f2).expect("metric eval").value;
        probe[j] += FD_H;
        numeric.push((up - down) / (2.0 * FD_H));
    }
    compare_slices(&eval.grad_f1, &numeric, &format!("{kind} instance {i}"))
}

/// One random batch: the anchor loss's feature gradient against central
/// differences of the loss computed through the posterior path.
pub fn exercise_anchor_loss_grad(rng: &mut ChaCha8Rng, kind: MetricKind, i: usize) -> FdStats {
    let classes = rng.random_range(2..=5);
    let dim = rng.random_range(2..=6);
    let batch = rng.random_range(1..=4);
    let s = AnchorSet::generate_repulsion(classes, dim, rng.random::<u64>(), 60)
        .expect("repulsion anchors");
    let features = random_matrix(rng, batch, dim, 2.0);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (_, grad) =
        ncm::loss_and_feature_grad(&features, &s, &labels, kind).expect("loss gradient");
    let loss_of = |m: &Matrix| -> f64 {
        ncm::ncm_loss(&ncm::posteriors(m, &s, kind).expect("posteriors"), &labels)
            .expect("loss")
            .value
    };
    let mut fd = features.clone();
    let mut numeric = Vec::with_capacity(batch * dim);
    for r in 0..batch {
        for c in 0..dim {
            fd.row_mut(r)[c] += FD_H;
            let up = loss_of(&fd);
            fd.row_mut(r)[c] -= 2.0 * FD_H;
            let down = loss_of(&fd);
            fd.row_mut(r)[c] += FD_H;
            numeric.push((up - down) / (2.0 * FD_H));
        }
    }
    compare_slices(
        grad.data(),
        &numeric,
        &format!("anchor loss {kind} instance {i}"),
    )
}

/// One random batch: all three softmax-baseline gradients (features, head
/// weights, head bias) against central differences.
pub fn exercise_softmax_grad(rng: &mut ChaCha8Rng, i: usize) -> FdStats {
    let classes = rng.random_range(2..=5);
    let dim = rng.random_range(2..=6);
    let batch = rng.random_range(1..=4);
    let features = random_matrix(rng, batch, dim, 2.0);
    let w = random_matrix(rng, dim, classes, 1.0);
    let b: Vec<f64> = (0..classes).map(|_| rng.random_range(-0.5..0.5)).collect();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let eval = ncm::softmax_baseline(&features, &w, &b, &labels).expect("softmax eval");
    let ctx = format!("softmax instance {i}");
    let mut stats = FdStats::default();

    let mut fd = features.clone();
    let mut numeric = Vec::new();
    for r in 0..batch {
        for c in 0..dim {
            fd.row_mut(r)[c] += FD_H;
            let up = ncm::softmax_baseline(&fd, &w, &b, &labels).expect("eval").loss;
            fd.row_mut(r)[c] -= 2.0 * FD_H;
            let down = ncm::softmax_baseline(&fd, &w, &b, &labels).expect("eval").loss;
            fd.row_mut(r)[c] += FD_H;
            numeric.push((up - down) / (2.0 * FD_H));
        }
    }
    stats.merge(compare_slices(
        eval.feature_grad.data(),
        &numeric,
        &format!("{ctx}: features"),
    ));

    let mut fd = w.clone();
    let mut numeric = Vec::new();
    for r in 0..dim {
        for c in 0..classes {
            fd.row_mut(r)[c] += FD_H;
            let up = ncm::softmax_baseline(&features, &fd, &b, &labels).expect("eval").loss;
            fd.row_mut(r)[c] -= 2.0 * FD_H;
            let down = ncm::softmax_baseline(&features, &fd, &b, &labels).expect("eval").loss;
            fd.row_mut(r)[c] += FD_H;
            numeric.push((up - down) / (2.0 * FD_H));
        }
    }
    stats.merge(compare_slices(
        eval.weight_grad.data(),
        &numeric,
        &format!("{ctx}: weights"),
    ));

    let mut fd = b.clone();
    let mut numeric = Vec::new();
    for c in 0..classes {
        fd[c] += FD_H;
        let up = ncm::softmax_baseline(&features, &w, &fd, &labels).expect("eval").loss;
        fd[c] -= 2.0 * FD_H;
        let down = ncm::softmax_baseline(&features, &w, &fd, &labels).expect("eval").loss;
        fd[c] += FD_H;
        numeric.push((up - down) / (2.0 * FD_H));
    }
    stats.merge(compare_slices(&eval.bias_grad, &numeric, &format!("{ctx}: bias")));
    stats
}
