//! Anchor-based nearest-class-mean posterior, loss, gradient and classifier,
//! plus the classic means-derived NCM classifier (the correctness oracle for
//! the anchored decision rule) and the softmax baseline head.
//!
//! The posterior over classes is a softmax of negated metric distances:
//! p(c|x) = exp(−M(f, a_c)) / Σ_c′ exp(−M(f, a_c′)). The loss is the batch
//! mean of −ln p(y|x). Distances enter through the metrics module, so both
//! the euclidean and the cosine variant share every line of code here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::linalg::{matmul_nt, matmul_tn, Matrix};
use crate::metrics::{self, MetricKind};

/// ln is taken of max(p, POSTERIOR_FLOOR) so an underflowed posterior keeps
/// the loss finite early in training. Every clamped sample is counted.
pub const POSTERIOR_FLOOR: f64 = 1e-300;

/// Per-sample class posteriors; column c is p(class c | x).
#[derive(Debug, Clone)]
pub struct PosteriorBatch {
    probs: Matrix,
}

impl PosteriorBatch {
    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn batch_size(&self) -> usize {
        self.probs.rows()
    }

    pub fn class_count(&self) -> usize {
        self.probs.cols()
    }
}

/// Loss value plus how many posteriors had to be clamped to stay loggable.
#[derive(Debug, Clone, Copy)]
pub struct LossEval {
    pub value: f64,
    pub clamp_events: usize,
}

/// Per-class mean feature vectors with their sample counts.
#[derive(Debug, Clone)]
pub struct ClassMeans {
    pub means: Matrix,
    pub counts: Vec<usize>,
}

/// The linear classifier head of the softmax baseline: logits = f·W + b.
#[derive(Debug, Clone)]
pub struct SoftmaxHead {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl SoftmaxHead {
    /// Uniform ±sqrt(6/(d+C)) weights, zero bias, deterministic in the seed.
    pub fn new(feature_dim: usize, class_count: usize, seed: u64) -> SoftmaxHead {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (6.0 / (feature_dim + class_count) as f64).sqrt();
        let data = (0..feature_dim * class_count)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        SoftmaxHead {
            w: Matrix::new(feature_dim, class_count, data).expect("sized buffer"),
            b: vec![0.0; class_count],
        }
    }
}

/// Everything the softmax baseline produces for one batch.
#[derive(Debug, Clone)]
pub struct SoftmaxEval {
    pub loss: f64,
    pub clamp_events: usize,
    pub feature_grad: Matrix,
    pub weight_grad: Matrix,
    pub bias_grad: Vec<f64>,
}

fn check_feature_dims(op: &'static str, features: &Matrix, s: &AnchorSet) -> Result<()> {
    if features.cols() != s.dim() {
        return Err(Error::shape(
            op,
            format!("features {}x{}", features.rows(), features.cols()),
            format!("anchors in {} dims", s.dim()),
        ));
    }
    Ok(())
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::shape(
            "labels",
            format!("{} labels", labels.len()),
            format!("batch of {batch}"),
        ));
    }
    for &y in labels {
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes,
            });
        }
    }
    Ok(())
}

/// B×C matrix of metric distances, column c = M(f_i, anchor of class c).
fn distance_matrix(features: &Matrix, s: &AnchorSet, kind: MetricKind) -> Result<Matrix> {
    check_feature_dims("distances", features, s)?;
    let b = features.rows();
    let c = s.class_count();
    let mut out = Matrix::zeros(b, c);
    for i in 0..b {
        let f = features.row(i);
        let row = out.row_mut(i);
        for (class, slot) in row.iter_mut().enumerate() {
            *slot = metrics::eval(kind, f, s.anchor_of_class(class))?.value;
        }
    }
    Ok(out)
}

/// Softmax of negated distances, row by row, with max-score subtraction so
/// large distances cannot overflow the exponentials.
pub fn posteriors_from_distances(distances: &Matrix) -> Result<PosteriorBatch> {
    let mut probs = Matrix::zeros(distances.rows(), distances.cols());
    for i in 0..distances.rows() {
        let d = distances.row(i);
        let best = d.iter().copied().fold(f64::INFINITY, f64::min);
        let row = probs.row_mut(i);
        let mut total = 0.0;
        for (p, &m) in row.iter_mut().zip(d) {
            *p = (best - m).exp();
            total += *p;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    Ok(PosteriorBatch { probs })
}

/// p(c|x) for every sample and class.
pub fn posteriors(features: &Matrix, s: &AnchorSet, kind: MetricKind) -> Result<PosteriorBatch> {
    let distances = distance_matrix(features, s, kind)?;
    posteriors_from_distances(&distances)
}

/// Batch-mean negative log likelihood of the correct classes.
pub fn ncm_loss(p: &PosteriorBatch, labels: &[usize]) -> Result<LossEval> {
    check_labels(labels, p.batch_size(), p.class_count())?;
    let b = p.batch_size();
    let mut total = 0.0;
    let mut clamp_events = 0;
    for (i, &y) in labels.iter().enumerate() {
        let py = p.probs.get(i, y);
        if py < POSTERIOR_FLOOR {
            clamp_events += 1;
        }
        total -= py.max(POSTERIOR_FLOOR).ln();
    }
    Ok(LossEval {
        value: total / b as f64,
        clamp_events,
    })
}

/// ∂L/∂s for scores s_c = −M(f, a_c): exactly (p_c − 1{c=y})/B per entry.
pub fn score_gradient(p: &PosteriorBatch, labels: &[usize]) -> Result<Matrix> {
    check_labels(labels, p.batch_size(), p.class_count())?;
    let b = p.batch_size();
    let mut out = p.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let v = out.get(i, y);
        out.set(i, y, v - 1.0);
    }
    for v in out.data_mut() {
        *v /= b as f64;
    }
    Ok(out)
}

/// Loss, clamp count and feature gradient in one pass, reusing each metric
/// evaluation for both the posterior and the gradient. This is the form the
/// training loop calls.
pub fn loss_and_feature_grad(
    features: &Matrix,
    s: &AnchorSet,
    labels: &[usize],
    kind: MetricKind,
) -> Result<(LossEval, Matrix)> {
    check_feature_dims("loss_and_feature_grad", features, s)?;
    let b = features.rows();
    let c = s.class_count();
    check_labels(labels, b, c)?;
    let inv_b = 1.0 / b as f64;
    let mut grad = Matrix::zeros(b, features.cols());
    let mut total = 0.0;
    let mut clamp_events = 0;
    let mut values = vec![0.0; c];
    let mut probs = vec![0.0; c];
    for i in 0..b {
        let f = features.row(i);
        let evals: Vec<metrics::MetricEval> = (0..c)
            .map(|class| metrics::eval(kind, f, s.anchor_of_class(class)))
            .collect::<Result<_>>()?;
        for (v, e) in values.iter_mut().zip(&evals) {
            *v = e.value;
        }
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for (p, &m) in probs.iter_mut().zip(&values) {
            *p = (best - m).exp();
            z += *p;
        }
        for p in probs.iter_mut() {
            *p /= z;
        }
        let y = labels[i];
        if probs[y] < POSTERIOR_FLOOR {
            clamp_events += 1;
        }
        total -= probs[y].max(POSTERIOR_FLOOR).ln();
        let g = grad.row_mut(i);
        for (class, e) in evals.iter().enumerate() {
            // ∂L/∂M_c = (1{c=y} − p_c)/B, chained with ∇_f M_c.
            let coeff = ((class == y) as usize as f64 - probs[class]) * inv_b;
            for (gk, &mk) in g.iter_mut().zip(&e.grad_f1) {
                *gk += coeff * mk;
            }
        }
    }
    Ok((
        LossEval {
            value: total * inv_b,
            clamp_events,
        },
        grad,
    ))
}

/// Gradient of the batch loss with respect to the features. Anchors receive
/// no gradient — they are constants.
pub fn loss_feature_grad(
    features: &Matrix,
    s: &AnchorSet,
    labels: &[usize],
    kind: MetricKind,
) -> Result<Matrix> {
    Ok(loss_and_feature_grad(features, s, labels, kind)?.1)
}

/// Nearest-anchor decision rule: argmin over classes of M(f, a_c), ties to
/// the lowest class label.
pub fn classify(features: &Matrix, s: &AnchorSet, kind: MetricKind) -> Result<Vec<usize>> {
    check_feature_dims("classify", features, s)?;
    let mut out = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let f = features.row(i);
        let mut best_class = 0;
        let mut best_value = f64::INFINITY;
        for class in 0..s.class_count() {
            let value = metrics::eval(kind, f, s.anchor_of_class(class))?.value;
            if value < best_value {
                best_value = value;
                best_class = class;
            }
        }
        out.push(best_class);
    }
    Ok(out)
}

/// μ_c = mean of the features labelled c. Every class in 0..class_count must
/// be represented.
pub fn class_means(features: &Matrix, labels: &[usize], class_count: usize) -> Result<ClassMeans> {
    check_labels(labels, features.rows(), class_count)?;
    let d = features.cols();
    let mut means = Matrix::zeros(class_count, d);
    let mut counts = vec![0usize; class_count];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        let row = features.row(i);
        let m = means.row_mut(y);
        for (acc, &v) in m.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass(c));
        }
        for v in means.row_mut(c) {
            *v /= n as f64;
        }
    }
    Ok(ClassMeans { means, counts })
}

/// The classic NCM classifier: nearest class mean under the chosen metric,
/// ties to the lowest class label.
pub fn ncm_classic_classify(
    features: &Matrix,
    means: &ClassMeans,
    kind: MetricKind,
) -> Result<Vec<usize>> {
    if features.cols() != means.means.cols() {
        return Err(Error::shape(
            "ncm_classic_classify",
            format!("features {}x{}", features.rows(), features.cols()),
            format!("means in {} dims", means.means.cols()),
        ));
    }
    let mut out = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let f = features.row(i);
        let mut best_class = 0;
        let mut best_value = f64::INFINITY;
        for c in 0..means.means.rows() {
            let value = metrics::eval(kind, f, means.means.row(c))?.value;
            if value < best_value {
                best_value = value;
                best_class = c;
            }
        }
        out.push(best_class);
    }
    Ok(out)
}

/// Cross-entropy over logits f·W + b with max-subtraction, returning the
/// loss and all three gradients.
pub fn softmax_baseline(
    features: &Matrix,
    head_weights: &Matrix,
    head_bias: &[f64],
    labels: &[usize],
) -> Result<SoftmaxEval> {
    if features.cols() != head_weights.rows() || head_weights.cols() != head_bias.len() {
        return Err(Error::shape(
            "softmax_baseline",
            format!("features {}x{}", features.rows(), features.cols()),
            format!(
                "head {}x{} with bias {}",
                head_weights.rows(),
                head_weights.cols(),
                head_bias.len()
            ),
        ));
    }
    let b = features.rows();
    let c = head_weights.cols();
    check_labels(labels, b, c)?;
    let mut logits = features.matmul(head_weights)?;
    for i in 0..b {
        for (l, &bias) in logits.row_mut(i).iter_mut().zip(head_bias) {
            *l += bias;
        }
    }
    // Softmax rows in place.
    let mut probs = logits;
    let mut total_loss = 0.0;
    let mut clamp_events = 0;
    for i in 0..b {
        let row = probs.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
        let py = row[labels[i]];
        if py < POSTERIOR_FLOOR {
            clamp_events += 1;
        }
        total_loss -= py.max(POSTERIOR_FLOOR).ln();
    }
    let inv_b = 1.0 / b as f64;
    // dlogits = (p − onehot)/B, then everything else is linear algebra.
    let mut dlogits = probs;
    for (i, &y) in labels.iter().enumerate() {
        let v = dlogits.get(i, y);
        dlogits.set(i, y, v - 1.0);
    }
    for v in dlogits.data_mut() {
        *v *= inv_b;
    }
    let feature_grad = matmul_nt(&dlogits, head_weights)?;
    let weight_grad = matmul_tn(features, &dlogits)?;
    let mut bias_grad = vec![0.0; c];
    for i in 0..b {
        for (g, &v) in bias_grad.iter_mut().zip(dlogits.row(i)) {
            *g += v;
        }
    }
    Ok(SoftmaxEval {
        loss: total_loss * inv_b,
        clamp_events,
        feature_grad,
        weight_grad,
        bias_grad,
    })
}

/// Argmax of the baseline's logits; ties to the lowest class.
pub fn softmax_classify(features: &Matrix, head: &SoftmaxHead) -> Result<Vec<usize>> {
    let mut logits = features.matmul(&head.w)?;
    for i in 0..logits.rows() {
        for (l, &bias) in logits.row_mut(i).iter_mut().zip(&head.b) {
            *l += bias;
        }
    }
    logits.row_argmaxes()
}

/// Mean euclidean distance from each feature to the anchor of its own class.
pub fn mean_euclidean_to_anchor(
    features: &Matrix,
    labels: &[usize],
    s: &AnchorSet,
) -> Result<f64> {
    check_feature_dims("mean_euclidean_to_anchor", features, s)?;
    check_labels(labels, features.rows(), s.class_count())?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += metrics::euclidean(features.row(i), s.anchor_of_class(y))?.value;
    }
    Ok(total / features.rows() as f64)
}

/// Mean angle (radians) between each feature and the anchor of its own class.
pub fn mean_angle_to_anchor(features: &Matrix, labels: &[usize], s: &AnchorSet) -> Result<f64> {
    check_feature_dims("mean_angle_to_anchor", features, s)?;
    check_labels(labels, features.rows(), s.class_count())?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let cos_dist = metrics::cosine(features.row(i), s.anchor_of_class(y))?.value;
        total += (1.0 - cos_dist).clamp(-1.0, 1.0).acos();
    }
    Ok(total / features.rows() as f64)
}
