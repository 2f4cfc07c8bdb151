//! Small feed-forward networks — dense, 3×3 convolution, 2×2 max-pooling,
//! batch normalization, ReLU, inverted dropout and flatten — with manual
//! forward and backward passes over batches of row-major samples.
//!
//! A batch is a `Matrix` with one sample per row. Image-shaped samples are
//! flattened channel-major: index (c, y, x) lives at `(c*h + y)*w + x`.
//! Everything is deterministic in the construction seed: initialization and
//! dropout masks come from dedicated counter-based generators, and every
//! accumulation runs in a fixed order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{matmul_nt, matmul_tn, Matrix, Shape};

/// Numerical guard inside the batch-norm denominator: 1/sqrt(var + EPS).
pub const BN_EPS: f64 = 1e-5;
/// Running statistics update: running = MOMENTUM*running + (1−MOMENTUM)*batch.
pub const BN_MOMENTUM: f64 = 0.9;

/// Salt applied to the construction seed for the dropout mask stream, so the
/// mask draws are independent of the initialization draws.
const DROPOUT_STREAM_SALT: u64 = 0x64726f70_6f757421;

/// One layer of the stack, by what it computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// x·W + b on flat inputs; W is input×output.
    Dense { input: usize, output: usize },
    /// 3×3 convolution, stride 1, zero padding 1: spatial size is preserved.
    Conv3x3 { in_channels: usize, out_channels: usize },
    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2x2,
    /// Per-channel normalization with learned scale and shift.
    BatchNorm { channels: usize },
    /// Elementwise max(0, x).
    ReLU,
    /// Inverted dropout: keep with probability 1−p and scale kept values by
    /// 1/(1−p) during training; identity at evaluation time.
    Dropout { p: f64 },
    /// Reinterpret an image shape as a flat vector; the data does not move.
    Flatten,
}

impl LayerSpec {
    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv3x3 { .. } => "conv3x3",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::ReLU => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
        }
    }
}

/// Learned tensors of one layer. Parameter-free layers hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    Dense {
        w: Matrix,
        b: Vec<f64>,
    },
    /// Kernel weights laid out as w[((oc*in_c) + ic)*9 + (dy+1)*3 + (dx+1)].
    Conv {
        w: Vec<f64>,
        b: Vec<f64>,
    },
    BatchNorm {
        scale: Vec<f64>,
        shift: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

/// What kind of parameter a tensor holds; weight decay applies only to
/// `Weight` tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

impl ParamClass {
    /// Whether weight decay applies to this tensor.
    pub fn decays(self) -> bool {
        matches!(self, ParamClass::Weight)
    }
}

/// Parameter gradients of one layer, mirroring [`LayerParams`]. Running
/// statistics are not learned, so batch-norm carries only scale and shift.
#[derive(Debug, Clone)]
pub enum LayerGrads {
    None,
    Dense { dw: Matrix, db: Vec<f64> },
    Conv { dw: Vec<f64>, db: Vec<f64> },
    BatchNorm { dscale: Vec<f64>, dshift: Vec<f64> },
}

/// Flattens layer gradients into (slice, class) pairs in the same order as
/// [`Network::param_tensors_mut`], so the two can be zipped by an optimizer.
pub fn grad_tensors(grads: &[LayerGrads]) -> Vec<(&[f64], ParamClass)> {
    let mut out = Vec::new();
    for g in grads {
        match g {
            LayerGrads::None => {}
            LayerGrads::Dense { dw, db } => {
                out.push((dw.data(), ParamClass::Weight));
                out.push((db.as_slice(), ParamClass::Bias));
            }
            LayerGrads::Conv { dw, db } => {
                out.push((dw.as_slice(), ParamClass::Weight));
                out.push((db.as_slice(), ParamClass::Bias));
            }
            LayerGrads::BatchNorm { dscale, dshift } => {
                out.push((dscale.as_slice(), ParamClass::BnScale));
                out.push((dshift.as_slice(), ParamClass::BnShift));
            }
        }
    }
    out
}

/// Dropout keep-indicators (entries 0.0 or 1.0) for each layer; `None` for
/// layers without dropout. Drawing these separately from the forward pass
/// lets gradient checks re-run the identical stochastic function.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    masks: Vec<Option<Matrix>>,
}

impl DropoutMasks {
    pub fn mask_of_layer(&self, layer: usize) -> Option<&Matrix> {
        self.masks.get(layer).and_then(|m| m.as_ref())
    }
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    layers: Vec<LayerTrace>,
    batch: usize,
}

#[derive(Debug, Clone)]
enum LayerTrace {
    Dense {
        input: Matrix,
    },
    Conv {
        input: Matrix,
    },
    /// Winning position of each pooled window, coded as dy*2 + dx.
    Pool {
        argmax: Vec<u8>,
    },
    BatchNorm {
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    /// 1 where the input was positive.
    ReLU {
        mask: Vec<u8>,
    },
    Dropout {
        mask: Matrix,
    },
    Flatten,
}

enum StatMode {
    Batch,
    Running,
}

/// A layer stack with its parameters. Construction validates that every
/// layer's expected input shape matches what the previous layer produces.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    /// shapes[i] is the input shape of layer i; shapes.last() is the output.
    shapes: Vec<Shape>,
    seed: u64,
    dropout_rng: ChaCha8Rng,
}

/// Computes the shape each layer produces, validating conformance. Errors
/// name the offending layer index.
fn plan_shapes(input_shape: Shape, specs: &[LayerSpec]) -> Result<Vec<Shape>> {
    let bad = |i: usize, spec: &LayerSpec, msg: String| {
        Err(Error::InvalidArgument(format!(
            "layer {i} ({}): {msg}",
            spec.name()
        )))
    };
    if input_shape.len() == 0 {
        return Err(Error::InvalidArgument("empty input shape".into()));
    }
    let mut shapes = vec![input_shape];
    for (i, spec) in specs.iter().enumerate() {
        let prev = *shapes.last().expect("seeded with input shape");
        let next = match *spec {
            LayerSpec::Dense { input, output } => {
                if input == 0 || output == 0 {
                    return bad(i, spec, "zero-sized dense layer".into());
                }
                match prev {
                    Shape::Flat(d) if d == input => Shape::Flat(output),
                    other => {
                        return bad(
                            i,
                            spec,
                            format!("expects flat input of {input}, got {other}"),
                        )
                    }
                }
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                if in_channels == 0 || out_channels == 0 {
                    return bad(i, spec, "zero-channel convolution".into());
                }
                match prev {
                    Shape::Image {
                        channels,
                        height,
                        width,
                    } if channels == in_channels => Shape::Image {
                        channels: out_channels,
                        height,
                        width,
                    },
                    other => {
                        return bad(
                            i,
                            spec,
                            format!("expects an image with {in_channels} channels, got {other}"),
                        )
                    }
                }
            }
            LayerSpec::MaxPool2x2 => match prev {
                Shape::Image {
                    channels,
                    height,
                    width,
                } if height >= 2 && width >= 2 => Shape::Image {
                    channels,
                    height: height / 2,
                    width: width / 2,
                },
                other => {
                    return bad(
                        i,
                        spec,
                        format!("expects an image at least 2x2, got {other}"),
                    )
                }
            },
            LayerSpec::BatchNorm { channels } => {
                let ok = match prev {
                    Shape::Image { channels: c, .. } => c == channels,
                    Shape::Flat(d) => d == channels,
                };
                if !ok {
                    return bad(i, spec, format!("expects {channels} channels, got {prev}"));
                }
                prev
            }
            LayerSpec::ReLU => prev,
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return bad(i, spec, format!("rate must be in [0, 1), got {p}"));
                }
                prev
            }
            LayerSpec::Flatten => match prev {
                Shape::Image { .. } => Shape::Flat(prev.len()),
                other => return bad(i, spec, format!("expects an image, got {other}")),
            },
        };
        shapes.push(next);
    }
    Ok(shapes)
}

/// The (channels, plane) decomposition batch-norm works over: an image
/// normalizes each channel across batch and spatial positions, a flat shape
/// normalizes each feature across the batch.
fn bn_geometry(shape: Shape) -> (usize, usize) {
    match shape {
        Shape::Flat(d) => (d, 1),
        Shape::Image {
            channels,
            height,
            width,
        } => (channels, height * width),
    }
}

fn init_params(specs: &[LayerSpec], seed: u64) -> Vec<LayerParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, bound: f64| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-bound..bound)).collect()
    };
    specs
        .iter()
        .map(|spec| match *spec {
            LayerSpec::Dense { input, output } => {
                let bound = (6.0 / (input + output) as f64).sqrt();
                LayerParams::Dense {
                    w: Matrix::new(input, output, uniform(input * output, bound))
                        .expect("sized buffer"),
                    b: vec![0.0; output],
                }
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                // Each 3×3 tap touches 9 values per channel, so the fan
                // counts 9·channels on both sides.
                let bound = (6.0 / (9 * (in_channels + out_channels)) as f64).sqrt();
                LayerParams::Conv {
                    w: uniform(out_channels * in_channels * 9, bound),
                    b: vec![0.0; out_channels],
                }
            }
            LayerSpec::BatchNorm { channels } => LayerParams::BatchNorm {
                scale: vec![1.0; channels],
                shift: vec![0.0; channels],
                running_mean: vec![0.0; channels],
                running_var: vec![1.0; channels],
            },
            _ => LayerParams::None,
        })
        .collect()
}

impl Network {
    /// Builds the stack and initializes parameters: dense and conv weights
    /// uniform in ±sqrt(6/(fan_in+fan_out)), biases zero, batch-norm scale 1
    /// and shift 0 with running statistics (0, 1). Identical seeds produce
    /// bitwise-identical networks.
    pub fn new(input_shape: Shape, specs: Vec<LayerSpec>, seed: u64) -> Result<Network> {
        let shapes = plan_shapes(input_shape, &specs)?;
        let params = init_params(&specs, seed);
        Ok(Network {
            specs,
            params,
            shapes,
            seed,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM_SALT),
        })
    }

    /// Rebuilds a network from stored tensors (the checkpoint path),
    /// revalidating both the shape plan and every tensor size.
    pub fn from_parts(
        input_shape: Shape,
        specs: Vec<LayerSpec>,
        params: Vec<LayerParams>,
        seed: u64,
    ) -> Result<Network> {
        let shapes = plan_shapes(input_shape, &specs)?;
        if params.len() != specs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} layers but {} parameter sets",
                specs.len(),
                params.len()
            )));
        }
        for (i, (spec, p)) in specs.iter().zip(&params).enumerate() {
            let expected = init_params(std::slice::from_ref(spec), 0)
                .pop()
                .expect("one spec in, one param out");
            let matches = match (&expected, p) {
                (LayerParams::None, LayerParams::None) => true,
                (LayerParams::Dense { w: ew, b: eb }, LayerParams::Dense { w, b }) => {
                    ew.rows() == w.rows() && ew.cols() == w.cols() && eb.len() == b.len()
                }
                (LayerParams::Conv { w: ew, b: eb }, LayerParams::Conv { w, b }) => {
                    ew.len() == w.len() && eb.len() == b.len()
                }
                (
                    LayerParams::BatchNorm { scale: es, .. },
                    LayerParams::BatchNorm {
                        scale,
                        shift,
                        running_mean,
                        running_var,
                    },
                ) => {
                    es.len() == scale.len()
                        && es.len() == shift.len()
                        && es.len() == running_mean.len()
                        && es.len() == running_var.len()
                }
                _ => false,
            };
            if !matches {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} ({}): stored parameters do not fit the layer",
                    spec.name()
                )));
            }
        }
        Ok(Network {
            specs,
            params,
            shapes,
            seed,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM_SALT),
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("plan includes input shape")
    }

    /// Dimension of the feature vector the stack produces per sample.
    pub fn feature_dim(&self) -> usize {
        self.output_shape().len()
    }

    /// Every learned tensor as a mutable slice, paired with its class, in a
    /// fixed order (layers in order; weights before biases, scale before
    /// shift). Running statistics are excluded — they are not optimized.
    pub fn param_tensors_mut(&mut self) -> Vec<(&mut [f64], ParamClass)> {
        let mut out = Vec::new();
        for p in &mut self.params {
            match p {
                LayerParams::None => {}
                LayerParams::Dense { w, b } => {
                    out.push((w.data_mut(), ParamClass::Weight));
                    out.push((b.as_mut_slice(), ParamClass::Bias));
                }
                LayerParams::Conv { w, b } => {
                    out.push((w.as_mut_slice(), ParamClass::Weight));
                    out.push((b.as_mut_slice(), ParamClass::Bias));
                }
                LayerParams::BatchNorm { scale, shift, .. } => {
                    out.push((scale.as_mut_slice(), ParamClass::BnScale));
                    out.push((shift.as_mut_slice(), ParamClass::BnShift));
                }
            }
        }
        out
    }

    /// Draws dropout keep-masks for a batch from the network's dedicated
    /// mask stream. Each call advances the stream.
    pub fn draw_masks(&mut self, batch: usize) -> DropoutMasks {
        let masks = self
            .specs
            .iter()
            .enumerate()
            .map(|(i, spec)| match *spec {
                LayerSpec::Dropout { p } => {
                    let len = self.shapes[i].len();
                    let data = (0..batch * len)
                        .map(|_| if self.dropout_rng.random::<f64>() < p { 0.0 } else { 1.0 })
                        .collect();
                    Some(Matrix::new(batch, len, data).expect("sized buffer"))
                }
                _ => None,
            })
            .collect();
        DropoutMasks { masks }
    }

    /// Training-mode forward pass: draws fresh dropout masks, normalizes
    /// with batch statistics, updates the running statistics, and returns
    /// the trace the backward pass consumes.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        let masks = self.draw_masks(x.rows());
        self.forward_train_with_masks(x, &masks)
    }

    /// [`Network::forward_train`] with caller-supplied dropout masks,
    /// letting the caller replay the identical pass afterwards (e.g. to
    /// locate a non-finite layer).
    pub fn forward_train_with_masks(
        &mut self,
        x: &Matrix,
        masks: &DropoutMasks,
    ) -> Result<(Matrix, ForwardTrace)> {
        let (out, trace, stats) = self.forward_pass(x, Some(masks), StatMode::Batch, true)?;
        for (layer, mean, var) in stats {
            if let LayerParams::BatchNorm {
                running_mean,
                running_var,
                ..
            } = &mut self.params[layer]
            {
                for (r, m) in running_mean.iter_mut().zip(&mean) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
                }
                for (r, v) in running_var.iter_mut().zip(&var) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
                }
            }
        }
        Ok((out, trace.expect("trace requested")))
    }

    /// Evaluation-mode forward pass: dropout is the identity and batch-norm
    /// uses the running statistics. Bitwise deterministic.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        let (out, _, _) = self.forward_pass(x, None, StatMode::Running, false)?;
        Ok(out)
    }

    /// Training-mode forward pass with caller-supplied dropout masks and no
    /// running-statistics update: the deterministic function that
    /// [`Network::backward`] differentiates, which is what finite-difference
    /// checks need to probe.
    pub fn forward_with_masks(
        &self,
        x: &Matrix,
        masks: &DropoutMasks,
    ) -> Result<(Matrix, ForwardTrace)> {
        let (out, trace, _) = self.forward_pass(x, Some(masks), StatMode::Batch, true)?;
        Ok((out, trace.expect("trace requested")))
    }

    /// Replays a training-mode pass with the given masks and reports the
    /// first layer whose output contains a non-finite value, as
    /// (index, layer name). Running statistics are not touched.
    pub fn first_nonfinite_layer(
        &self,
        x: &Matrix,
        masks: &DropoutMasks,
    ) -> Result<Option<(usize, &'static str)>> {
        let mut current = x.clone();
        for i in 0..self.specs.len() {
            let out = self.forward_single_layer(&current, masks, i)?;
            if out.data().iter().any(|v| !v.is_finite()) {
                return Ok(Some((i, self.specs[i].name())));
            }
            current = out;
        }
        Ok(None)
    }

    /// Applies just layer `i` of the stack to `x` (which must already be in
    /// layer i's input shape), in training mode with the given masks.
    fn forward_single_layer(
        &self,
        x: &Matrix,
        masks: &DropoutMasks,
        layer: usize,
    ) -> Result<Matrix> {
        let sub = Network {
            specs: vec![self.specs[layer]],
            params: vec![self.params[layer].clone()],
            shapes: vec![self.shapes[layer], self.shapes[layer + 1]],
            seed: self.seed,
            dropout_rng: self.dropout_rng.clone(),
        };
        let single_mask = DropoutMasks {
            masks: vec![masks.mask_of_layer(layer).cloned()],
        };
        let (out, _, _) = sub.forward_pass(x, Some(&single_mask), StatMode::Batch, false)?;
        Ok(out)
    }

    #[allow(clippy::type_complexity)]
    fn forward_pass(
        &self,
        x: &Matrix,
        masks: Option<&DropoutMasks>,
        stats: StatMode,
        want_trace: bool,
    ) -> Result<(Matrix, Option<ForwardTrace>, Vec<(usize, Vec<f64>, Vec<f64>)>)> {
        if x.cols() != self.shapes[0].len() {
            return Err(Error::shape(
                "forward",
                format!("batch {}x{}", x.rows(), x.cols()),
                format!("input shape {}", self.shapes[0]),
            ));
        }
        let batch = x.rows();
        let mut current = x.clone();
        let mut traces = Vec::new();
        let mut batch_stats = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let in_shape = self.shapes[i];
            let trace = match (*spec, &self.params[i]) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { w, b }) => {
                    let mut out = current.matmul(w)?;
                    for r in 0..batch {
                        for (v, &bias) in out.row_mut(r).iter_mut().zip(b) {
                            *v += bias;
                        }
                    }
                    let input = std::mem::replace(&mut current, out);
                    want_trace.then_some(LayerTrace::Dense { input })
                }
                (
                    LayerSpec::Conv3x3 {
                        in_channels,
                        out_channels,
                    },
                    LayerParams::Conv { w, b },
                ) => {
                    let (h, wd) = match in_shape {
                        Shape::Image { height, width, .. } => (height, width),
                        Shape::Flat(_) => unreachable!("plan_shapes enforces image input"),
                    };
                    let out = conv3x3_forward(
                        &current,
                        in_channels,
                        out_channels,
                        h,
                        wd,
                        w,
                        b,
                    );
                    let input = std::mem::replace(&mut current, out);
                    want_trace.then_some(LayerTrace::Conv { input })
                }
                (LayerSpec::MaxPool2x2, _) => {
                    let (c, h, wd) = match in_shape {
                        Shape::Image {
                            channels,
                            height,
                            width,
                        } => (channels, height, width),
                        Shape::Flat(_) => unreachable!("plan_shapes enforces image input"),
                    };
                    let (out, argmax) = maxpool_forward(&current, c, h, wd);
                    current = out;
                    want_trace.then_some(LayerTrace::Pool { argmax })
                }
                (
                    LayerSpec::BatchNorm { .. },
                    LayerParams::BatchNorm {
                        scale,
                        shift,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let (channels, plane) = bn_geometry(in_shape);
                    match stats {
                        StatMode::Batch => {
                            let (out, normalized, inv_std, mean, var) =
                                bn_forward_batch(&current, channels, plane, scale, shift);
                            batch_stats.push((i, mean, var));
                            current = out;
                            want_trace.then_some(LayerTrace::BatchNorm {
                                normalized,
                                inv_std,
                            })
                        }
                        StatMode::Running => {
                            bn_forward_running(
                                &mut current,
                                channels,
                                plane,
                                scale,
                                shift,
                                running_mean,
                                running_var,
                            );
                            want_trace.then_some(LayerTrace::BatchNorm {
                                normalized: Matrix::zeros(0, 0),
                                inv_std: Vec::new(),
                            })
                        }
                    }
                }
                (LayerSpec::ReLU, _) => {
                    let mut mask = want_trace.then(|| vec![0u8; batch * current.cols()]);
                    for (j, v) in current.data_mut().iter_mut().enumerate() {
                        if *v > 0.0 {
                            if let Some(m) = &mut mask {
                                m[j] = 1;
                            }
                        } else {
                            *v = 0.0;
                        }
                    }
                    want_trace.then(|| LayerTrace::ReLU {
                        mask: mask.expect("allocated when tracing"),
                    })
                }
                (LayerSpec::Dropout { p }, _) => match masks {
                    Some(m) => {
                        let mask = m.mask_of_layer(i).ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "layer {i} (dropout): no mask supplied"
                            ))
                        })?;
                        if mask.rows() != batch || mask.cols() != current.cols() {
                            return Err(Error::shape(
                                "dropout mask",
                                format!("{}x{}", mask.rows(), mask.cols()),
                                format!("{}x{}", batch, current.cols()),
                            ));
                        }
                        let keep_scale = 1.0 / (1.0 - p);
                        for (v, &keep) in current.data_mut().iter_mut().zip(mask.data()) {
                            *v *= keep * keep_scale;
                        }
                        want_trace.then(|| LayerTrace::Dropout { mask: mask.clone() })
                    }
                    None => want_trace.then(|| LayerTrace::Dropout {
                        mask: Matrix::zeros(0, 0),
                    }),
                },
                (LayerSpec::Flatten, _) => want_trace.then_some(LayerTrace::Flatten),
                (spec, params) => unreachable!(
                    "layer {i}: spec {spec:?} paired with params {params:?}"
                ),
            };
            if let Some(t) = trace {
                traces.push(t);
            }
        }
        let trace = want_trace.then_some(ForwardTrace {
            layers: traces,
            batch,
        });
        Ok((current, trace, batch_stats))
    }

    /// Backpropagates `output_grad` (∂loss/∂features, one row per sample)
    /// through the traced forward pass. Returns per-layer parameter
    /// gradients and the gradient with respect to the network input.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_grad: &Matrix,
    ) -> Result<(Vec<LayerGrads>, Matrix)> {
        if trace.layers.len() != self.specs.len() {
            return Err(Error::InvalidArgument(format!(
                "trace covers {} layers, network has {}",
                trace.layers.len(),
                self.specs.len()
            )));
        }
        if output_grad.rows() != trace.batch || output_grad.cols() != self.feature_dim() {
            return Err(Error::shape(
                "backward",
                format!("{}x{}", output_grad.rows(), output_grad.cols()),
                format!("{}x{}", trace.batch, self.feature_dim()),
            ));
        }
        let batch = trace.batch;
        let mut grad = output_grad.clone();
        let mut layer_grads = vec![LayerGrads::None; self.specs.len()];
        for i in (0..self.specs.len()).rev() {
            let in_shape = self.shapes[i];
            match (self.specs[i], &self.params[i], &trace.layers[i]) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { w, .. }, LayerTrace::Dense { input }) => {
                    let dw = matmul_tn(input, &grad)?;
                    let mut db = vec![0.0; grad.cols()];
                    for r in 0..batch {
                        for (acc, &g) in db.iter_mut().zip(grad.row(r)) {
                            *acc += g;
                        }
                    }
                    let dx = matmul_nt(&grad, w)?;
                    layer_grads[i] = LayerGrads::Dense { dw, db };
                    grad = dx;
                }
                (
                    LayerSpec::Conv3x3 {
                        in_channels,
                        out_channels,
                    },
                    LayerParams::Conv { w, .. },
                    LayerTrace::Conv { input },
                ) => {
                    let (h, wd) = match in_shape {
                        Shape::Image { height, width, .. } => (height, width),
                        Shape::Flat(_) => unreachable!("plan_shapes enforces image input"),
                    };
                    let (dw, db, dx) =
                        conv3x3_backward(input, &grad, in_channels, out_channels, h, wd, w);
                    layer_grads[i] = LayerGrads::Conv { dw, db };
                    grad = dx;
                }
                (LayerSpec::MaxPool2x2, _, LayerTrace::Pool { argmax }) => {
                    let (c, h, wd) = match in_shape {
                        Shape::Image {
                            channels,
                            height,
                            width,
                        } => (channels, height, width),
                        Shape::Flat(_) => unreachable!("plan_shapes enforces image input"),
                    };
                    grad = maxpool_backward(&grad, argmax, c, h, wd);
                }
                (
                    LayerSpec::BatchNorm { .. },
                    LayerParams::BatchNorm { scale, .. },
                    LayerTrace::BatchNorm {
                        normalized,
                        inv_std,
                    },
                ) => {
                    if normalized.rows() == 0 {
                        return Err(Error::InvalidArgument(
                            "backward needs a training-mode trace".into(),
                        ));
                    }
                    let (channels, plane) = bn_geometry(in_shape);
                    let (dscale, dshift, dx) =
                        bn_backward(&grad, normalized, inv_std, scale, channels, plane);
                    layer_grads[i] = LayerGrads::BatchNorm { dscale, dshift };
                    grad = dx;
                }
                (LayerSpec::ReLU, _, LayerTrace::ReLU { mask }) => {
                    for (g, &m) in grad.data_mut().iter_mut().zip(mask) {
                        if m == 0 {
                            *g = 0.0;
                        }
                    }
                }
                (LayerSpec::Dropout { p }, _, LayerTrace::Dropout { mask }) => {
                    if mask.rows() == 0 {
                        return Err(Error::InvalidArgument(
                            "backward needs a training-mode trace".into(),
                        ));
                    }
                    let keep_scale = 1.0 / (1.0 - p);
                    for (g, &keep) in grad.data_mut().iter_mut().zip(mask.data()) {
                        *g *= keep * keep_scale;
                    }
                }
                (LayerSpec::Flatten, _, LayerTrace::Flatten) => {}
                (spec, _, tr) => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i}: trace {tr:?} does not match layer {spec:?}"
                    )))
                }
            }
        }
        Ok((layer_grads, grad))
    }
}

/// out[x] += l·s[x−1] + c·s[x] + r·s[x+1], reading zeros outside `s`.
fn tap3_row(out: &mut [f64], s: &[f64], l: f64, c: f64, r: f64) {
    let w = out.len();
    if w == 1 {
        out[0] += c * s[0];
        return;
    }
    out[0] += c * s[0] + r * s[1];
    for x in 1..w - 1 {
        out[x] += l * s[x - 1] + c * s[x] + r * s[x + 1];
    }
    out[w - 1] += l * s[w - 2] + c * s[w - 1];
}

/// One interior output row of the zero-padded 3×3 correlation: all nine taps
/// applied to the three source rows in a single pass over x.
fn tap9_row(out: &mut [f64], up: &[f64], mid: &[f64], dn: &[f64], t: &[f64]) {
    let w = out.len();
    if w == 1 {
        out[0] += t[1] * up[0] + t[4] * mid[0] + t[7] * dn[0];
        return;
    }
    out[0] += t[1] * up[0]
        + t[2] * up[1]
        + t[4] * mid[0]
        + t[5] * mid[1]
        + t[7] * dn[0]
        + t[8] * dn[1];
    for x in 1..w - 1 {
        out[x] += t[0] * up[x - 1]
            + t[1] * up[x]
            + t[2] * up[x + 1]
            + t[3] * mid[x - 1]
            + t[4] * mid[x]
            + t[5] * mid[x + 1]
            + t[6] * dn[x - 1]
            + t[7] * dn[x]
            + t[8] * dn[x + 1];
    }
    out[w - 1] += t[0] * up[w - 2]
        + t[1] * up[w - 1]
        + t[3] * mid[w - 2]
        + t[4] * mid[w - 1]
        + t[6] * dn[w - 2]
        + t[7] * dn[w - 1];
}

/// Accumulates one source plane into one output plane through a 3×3 kernel,
/// zero padding 1. `taps` is row-major over (dy, dx).
fn correlate_plane(out: &mut [f64], s: &[f64], taps: &[f64], h: usize, w: usize) {
    if h == 1 {
        tap3_row(&mut out[..w], &s[..w], taps[3], taps[4], taps[5]);
        return;
    }
    // Top row: no row above; contributions from its own and the next row.
    tap3_row(&mut out[..w], &s[..w], taps[3], taps[4], taps[5]);
    tap3_row(&mut out[..w], &s[w..2 * w], taps[6], taps[7], taps[8]);
    for y in 1..h - 1 {
        let (up, rest) = s[(y - 1) * w..].split_at(w);
        let (mid, rest) = rest.split_at(w);
        tap9_row(&mut out[y * w..(y + 1) * w], up, mid, &rest[..w], taps);
    }
    let y = h - 1;
    tap3_row(&mut out[y * w..], &s[(y - 1) * w..y * w], taps[0], taps[1], taps[2]);
    tap3_row(&mut out[y * w..], &s[y * w..(y + 1) * w], taps[3], taps[4], taps[5]);
}

fn conv3x3_forward(
    x: &Matrix,
    in_c: usize,
    out_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
) -> Matrix {
    let plane = h * w;
    let mut out = Matrix::zeros(x.rows(), out_c * plane);
    for b in 0..x.rows() {
        let input = x.row(b);
        let output = out.row_mut(b);
        for oc in 0..out_c {
            let out_plane = &mut output[oc * plane..(oc + 1) * plane];
            out_plane.fill(bias[oc]);
            for ic in 0..in_c {
                let in_plane = &input[ic * plane..(ic + 1) * plane];
                let taps = &weights[((oc * in_c) + ic) * 9..((oc * in_c) + ic) * 9 + 9];
                correlate_plane(out_plane, in_plane, taps, h, w);
            }
        }
    }
    out
}

/// The three shifted dot products of one row pair in a single pass:
/// (Σ g[x]·s[x−1], Σ g[x]·s[x], Σ g[x]·s[x+1]), reading zeros outside `s`.
fn tap3_dots(g: &[f64], s: &[f64]) -> (f64, f64, f64) {
    let w = g.len();
    if w == 1 {
        return (0.0, g[0] * s[0], 0.0);
    }
    let mut l = 0.0;
    let mut c = g[0] * s[0];
    let mut r = g[0] * s[1];
    for x in 1..w - 1 {
        l += g[x] * s[x - 1];
        c += g[x] * s[x];
        r += g[x] * s[x + 1];
    }
    l += g[w - 1] * s[w - 2];
    c += g[w - 1] * s[w - 1];
    (l, c, r)
}

fn conv3x3_backward(
    x: &Matrix,
    dout: &Matrix,
    in_c: usize,
    out_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
) -> (Vec<f64>, Vec<f64>, Matrix) {
    let plane = h * w;
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; out_c];
    let mut dx = Matrix::zeros(x.rows(), in_c * plane);
    for b in 0..x.rows() {
        let input = x.row(b);
        let dout_row = dout.row(b);
        let dx_row = dx.row_mut(b);
        for oc in 0..out_c {
            let g_plane = &dout_row[oc * plane..(oc + 1) * plane];
            db[oc] += g_plane.iter().sum::<f64>();
            for ic in 0..in_c {
                let in_plane = &input[ic * plane..(ic + 1) * plane];
                let base = ((oc * in_c) + ic) * 9;
                // Tap gradients pair each dout row with the input row dy
                // below it, over all three x shifts at once.
                for dy in -1isize..=1 {
                    let ylo = (-dy).max(0) as usize;
                    let yhi = h - dy.max(0) as usize;
                    let t = base + ((dy + 1) * 3) as usize;
                    let (mut tl, mut tc, mut tr) = (0.0, 0.0, 0.0);
                    for y in ylo..yhi {
                        let src = (y as isize + dy) as usize;
                        let (l, c, r) = tap3_dots(
                            &g_plane[y * w..(y + 1) * w],
                            &in_plane[src * w..(src + 1) * w],
                        );
                        tl += l;
                        tc += c;
                        tr += r;
                    }
                    dw[t] += tl;
                    dw[t + 1] += tc;
                    dw[t + 2] += tr;
                }
            }
        }
        // dx[y][x] collects dout[y−dy][x−dx'] for every tap (dy, dx'): a
        // correlation of dout with the 180°-rotated kernel.
        for ic in 0..in_c {
            let dx_plane = &mut dx_row[ic * plane..(ic + 1) * plane];
            for oc in 0..out_c {
                let g_plane = &dout_row[oc * plane..(oc + 1) * plane];
                let base = ((oc * in_c) + ic) * 9;
                let k = &weights[base..base + 9];
                let rot = [k[8], k[7], k[6], k[5], k[4], k[3], k[2], k[1], k[0]];
                correlate_plane(dx_plane, g_plane, &rot, h, w);
            }
        }
    }
    (dw, db, dx)
}

fn maxpool_forward(x: &Matrix, c: usize, h: usize, w: usize) -> (Matrix, Vec<u8>) {
    let (oh, ow) = (h / 2, w / 2);
    let out_plane = oh * ow;
    let mut out = Matrix::zeros(x.rows(), c * out_plane);
    let mut argmax = vec![0u8; x.rows() * c * out_plane];
    for b in 0..x.rows() {
        let input = x.row(b);
        let output = out.row_mut(b);
        for ch in 0..c {
            let in_plane = &input[ch * h * w..(ch + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_pos = 0u8;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let v = in_plane[(oy * 2 + dy) * w + ox * 2 + dx];
                            // Strict comparison keeps the first maximum in
                            // row-major window order on ties.
                            if v > best {
                                best = v;
                                best_pos = (dy * 2 + dx) as u8;
                            }
                        }
                    }
                    let o = (ch * oh + oy) * ow + ox;
                    output[o] = best;
                    argmax[b * c * out_plane + o] = best_pos;
                }
            }
        }
    }
    (out, argmax)
}

fn maxpool_backward(dout: &Matrix, argmax: &[u8], c: usize, h: usize, w: usize) -> Matrix {
    let (oh, ow) = (h / 2, w / 2);
    let out_plane = oh * ow;
    let mut dx = Matrix::zeros(dout.rows(), c * h * w);
    for b in 0..dout.rows() {
        let g = dout.row(b);
        let dx_row = dx.row_mut(b);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = (ch * oh + oy) * ow + ox;
                    let pos = argmax[b * c * out_plane + o];
                    let (dy, dxo) = ((pos / 2) as usize, (pos % 2) as usize);
                    dx_row[ch * h * w + (oy * 2 + dy) * w + ox * 2 + dxo] += g[o];
                }
            }
        }
    }
    dx
}

/// Returns (output, normalized, inv_std, batch_mean, batch_var).
fn bn_forward_batch(
    x: &Matrix,
    channels: usize,
    plane: usize,
    scale: &[f64],
    shift: &[f64],
) -> (Matrix, Matrix, Vec<f64>, Vec<f64>, Vec<f64>) {
    let batch = x.rows();
    let m = (batch * plane) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for b in 0..batch {
        let row = x.row(b);
        for (c, acc) in mean.iter_mut().enumerate() {
            *acc += row[c * plane..(c + 1) * plane].iter().sum::<f64>();
        }
    }
    for acc in mean.iter_mut() {
        *acc /= m;
    }
    for b in 0..batch {
        let row = x.row(b);
        for (c, acc) in var.iter_mut().enumerate() {
            for &v in &row[c * plane..(c + 1) * plane] {
                let d = v - mean[c];
                *acc += d * d;
            }
        }
    }
    // Biased variance: the same m in both moments.
    for acc in var.iter_mut() {
        *acc /= m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut normalized = x.clone();
    let mut out = Matrix::zeros(batch, x.cols());
    for b in 0..batch {
        let n_row = normalized.row_mut(b);
        let o_row = out.row_mut(b);
        for c in 0..channels {
            let (mu, s, g, sh) = (mean[c], inv_std[c], scale[c], shift[c]);
            for i in c * plane..(c + 1) * plane {
                n_row[i] = (n_row[i] - mu) * s;
                o_row[i] = g * n_row[i] + sh;
            }
        }
    }
    (out, normalized, inv_std, mean, var)
}

fn bn_forward_running(
    x: &mut Matrix,
    channels: usize,
    plane: usize,
    scale: &[f64],
    shift: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) {
    let batch = x.rows();
    let inv_std: Vec<f64> = running_var
        .iter()
        .map(|v| 1.0 / (v + BN_EPS).sqrt())
        .collect();
    for b in 0..batch {
        let row = x.row_mut(b);
        for c in 0..channels {
            let (mu, s, g, sh) = (running_mean[c], inv_std[c], scale[c], shift[c]);
            for v in &mut row[c * plane..(c + 1) * plane] {
                *v = g * (*v - mu) * s + sh;
            }
        }
    }
}

fn bn_backward(
    dout: &Matrix,
    normalized: &Matrix,
    inv_std: &[f64],
    scale: &[f64],
    channels: usize,
    plane: usize,
) -> (Vec<f64>, Vec<f64>, Matrix) {
    let batch = dout.rows();
    let m = (batch * plane) as f64;
    let mut dscale = vec![0.0; channels];
    let mut dshift = vec![0.0; channels];
    for b in 0..batch {
        let g_row = dout.row(b);
        let n_row = normalized.row(b);
        for c in 0..channels {
            for i in c * plane..(c + 1) * plane {
                dscale[c] += g_row[i] * n_row[i];
                dshift[c] += g_row[i];
            }
        }
    }
    // dx = γ·inv_std·(g − mean(g) − x̂·mean(g·x̂)), means per channel over
    // the batch×plane normalization set; this is the closed form of
    // backpropagating through mean and variance with biased variance.
    let mut dx = Matrix::zeros(batch, dout.cols());
    for b in 0..batch {
        let g_row = dout.row(b);
        let n_row = normalized.row(b);
        let dx_row = dx.row_mut(b);
        for c in 0..channels {
            let mean_g = dshift[c] / m;
            let mean_gx = dscale[c] / m;
            let k = scale[c] * inv_std[c];
            for i in c * plane..(c + 1) * plane {
                dx_row[i] = k * (g_row[i] - mean_g - n_row[i] * mean_gx);
            }
        }
    }
    (dscale, dshift, dx)
}
