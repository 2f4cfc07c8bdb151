//! The batch-SGD training loop: shuffled epoch passes, forward/backward,
//! parameter updates, per-epoch evaluation, plateau scheduling, and the
//! CSV-persisted training log.

use std::path::Path;
use std::time::Instant;

use crate::anchors::AnchorSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::MetricKind;
use crate::ncm::{self, SoftmaxHead};
use crate::network::{grad_tensors, Network, ParamClass};
use crate::optim::{plateau_schedule, sgd_step, TrainConfig};

/// Batch size used for evaluation passes; a memory bound, not a tunable.
const EVAL_CHUNK: usize = 256;

/// What the feature extractor is trained against: fixed anchors under a
/// metric, or a learned linear softmax head (the baseline).
#[derive(Debug, Clone)]
pub enum Objective {
    AnchorNcm {
        anchors: AnchorSet,
        metric: MetricKind,
    },
    Softmax {
        head: SoftmaxHead,
    },
}

impl Objective {
    pub fn class_count(&self) -> usize {
        match self {
            Objective::AnchorNcm { anchors, .. } => anchors.class_count(),
            Objective::Softmax { head } => head.w.cols(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Objective::AnchorNcm { anchors, .. } => anchors.dim(),
            Objective::Softmax { head } => head.w.rows(),
        }
    }

    /// Class decisions for a feature batch.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        match self {
            Objective::AnchorNcm { anchors, metric } => {
                ncm::classify(features, anchors, *metric)
            }
            Objective::Softmax { head } => ncm::softmax_classify(features, head),
        }
    }

    /// Loss, clamp count, feature gradient, and (for the softmax head) the
    /// head's own parameter gradients.
    #[allow(clippy::type_complexity)]
    fn loss_and_grad(
        &self,
        features: &Matrix,
        labels: &[usize],
    ) -> Result<(f64, usize, Matrix, Option<(Matrix, Vec<f64>)>)> {
        match self {
            Objective::AnchorNcm { anchors, metric } => {
                let (loss, grad) =
                    ncm::loss_and_feature_grad(features, anchors, labels, *metric)?;
                Ok((loss.value, loss.clamp_events, grad, None))
            }
            Objective::Softmax { head } => {
                let ev = ncm::softmax_baseline(features, &head.w, &head.b, labels)?;
                Ok((
                    ev.loss,
                    ev.clamp_events,
                    ev.feature_grad,
                    Some((ev.weight_grad, ev.bias_grad)),
                ))
            }
        }
    }
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean per-sample train loss over the epoch's batches.
    pub train_loss: f64,
    /// Accuracy over the training set, evaluation mode.
    pub train_acc: f64,
    /// Accuracy over the held-out set, when one was supplied.
    pub test_acc: Option<f64>,
    /// Learning rate the epoch ran at.
    pub lr: f64,
    /// Wall-clock epoch duration. Kept in memory for reporting; the CSV
    /// serialization writes a constant in this column (see
    /// [`TrainLog::to_csv_string`]).
    pub seconds: f64,
    /// Posterior-floor clamp events during the epoch.
    pub clamp_events: usize,
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn new() -> TrainLog {
        TrainLog::default()
    }

    pub fn push(&mut self, record: TrainRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TrainRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_clamp_events(&self) -> usize {
        self.records.iter().map(|r| r.clamp_events).sum()
    }

    /// CSV rendering, one line per epoch. The seconds column is written as
    /// a constant `0.000`: logs are required to be byte-identical across
    /// reruns of the same seeded configuration, and wall time is the one
    /// field that cannot be. A missing test accuracy renders as NaN.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,test_acc,lr,seconds,clamp_events\n");
        for r in &self.records {
            let test = match r.test_acc {
                Some(v) => v.to_string(),
                None => "NaN".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},0.000,{}\n",
                r.epoch, r.train_loss, r.train_acc, test, r.lr, r.clamp_events
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Network,
    pub objective: Objective,
    pub log: TrainLog,
}

/// Trains the network against fixed anchors — the spec'd entry point. A
/// held-out set, or the softmax baseline, go through
/// [`train_with_objective`].
pub fn train(
    net: Network,
    s: &AnchorSet,
    kind: MetricKind,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainLog)> {
    let outcome = train_with_objective(
        net,
        Objective::AnchorNcm {
            anchors: s.clone(),
            metric: kind,
        },
        data,
        None,
        cfg,
    )?;
    Ok((outcome.net, outcome.log))
}

/// The full training loop. Per epoch: a seed+epoch-determined shuffle cut
/// into batches; per batch: training-mode forward → loss and feature
/// gradient → backward → SGD update (weight decay on weight tensors only);
/// then an evaluation-mode accuracy pass, a log record, and the plateau
/// rule to set the next epoch's rate. Anchors are never written to.
pub fn train_with_objective(
    mut net: Network,
    mut objective: Objective,
    train_data: &Dataset,
    test_data: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if objective.feature_dim() != net.feature_dim() {
        return Err(Error::shape(
            "train",
            format!("network features of {}", net.feature_dim()),
            format!("objective over {} dims", objective.feature_dim()),
        ));
    }
    if objective.class_count() != train_data.class_count() {
        return Err(Error::shape(
            "train",
            format!("objective with {} classes", objective.class_count()),
            format!("data with {} classes", train_data.class_count()),
        ));
    }
    if let Some(test) = test_data {
        if test.class_count() > objective.class_count() {
            return Err(Error::shape(
                "train",
                format!("objective with {} classes", objective.class_count()),
                format!("test data with {} classes", test.class_count()),
            ));
        }
    }

    let mut velocities: Vec<Vec<f64>> = net
        .param_tensors_mut()
        .iter()
        .map(|(t, _)| vec![0.0; t.len()])
        .collect();
    let mut head_velocity = match &objective {
        Objective::Softmax { head } => {
            Some((vec![0.0; head.w.data().len()], vec![0.0; head.b.len()]))
        }
        Objective::AnchorNcm { .. } => None,
    };

    let n = train_data.len();
    let mut log = TrainLog::new();
    let mut lr = cfg.lr;
    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut clamp_events = 0;
        for (batch_no, indices) in train_data
            .batches(cfg.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let (batch, labels) = train_data.gather(indices);
            let masks = net.draw_masks(batch.rows());
            let (features, trace) = net.forward_train_with_masks(&batch, &masks)?;
            let non_finite = |at: &str| -> Error {
                let layer = match net.first_nonfinite_layer(&batch, &masks) {
                    Ok(Some((i, name))) => format!("layer {i} ({name})"),
                    _ => at.to_string(),
                };
                Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                    layer,
                }
            };
            if features.data().iter().any(|v| !v.is_finite()) {
                return Err(non_finite("features"));
            }
            let (loss, clamps, feature_grad, head_grads) =
                objective.loss_and_grad(&features, &labels)?;
            if !loss.is_finite() {
                return Err(non_finite("loss"));
            }
            loss_sum += loss * labels.len() as f64;
            clamp_events += clamps;

            let (layer_grads, _) = net.backward(&trace, &feature_grad)?;
            let grads = grad_tensors(&layer_grads);
            let mut params = net.param_tensors_mut();
            for (((param, class), (grad, _)), velocity) in
                params.iter_mut().zip(&grads).zip(&mut velocities)
            {
                sgd_step(
                    param,
                    grad,
                    velocity,
                    *class,
                    lr,
                    cfg.momentum,
                    cfg.weight_decay,
                )?;
            }
            if let (
                Objective::Softmax { head },
                Some((dw, db)),
                Some((vw, vb)),
            ) = (&mut objective, head_grads, &mut head_velocity)
            {
                sgd_step(
                    head.w.data_mut(),
                    dw.data(),
                    vw,
                    ParamClass::Weight,
                    lr,
                    cfg.momentum,
                    cfg.weight_decay,
                )?;
                sgd_step(
                    &mut head.b,
                    &db,
                    vb,
                    ParamClass::Bias,
                    lr,
                    cfg.momentum,
                    cfg.weight_decay,
                )?;
            }
        }

        let train_acc = evaluate_accuracy(&net, &objective, train_data)?;
        let test_acc = match test_data {
            Some(d) => Some(evaluate_accuracy(&net, &objective, d)?),
            None => None,
        };
        log.push(TrainRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_acc,
            test_acc,
            lr,
            seconds: started.elapsed().as_secs_f64(),
            clamp_events,
        });
        lr = plateau_schedule(&log, &cfg.plateau);
    }
    Ok(TrainOutcome {
        net,
        objective,
        log,
    })
}

/// Fraction of samples the objective classifies correctly, in evaluation
/// mode, processed in fixed-size chunks.
pub fn evaluate_accuracy(net: &Network, objective: &Objective, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let mut correct = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let indices: Vec<usize> = (start..end).collect();
        let (batch, labels) = data.gather(&indices);
        let features = net.forward_eval(&batch)?;
        let predicted = objective.predict(&features)?;
        correct += predicted
            .iter()
            .zip(&labels)
            .filter(|(p, y)| p == y)
            .count();
        start = end;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Evaluation-mode features for every sample, in dataset order.
pub fn eval_features(net: &Network, data: &Dataset) -> Result<Matrix> {
    let mut out = Matrix::zeros(data.len(), net.feature_dim());
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let indices: Vec<usize> = (start..end).collect();
        let (batch, _) = data.gather(&indices);
        let features = net.forward_eval(&batch)?;
        for (i, row) in (start..end).zip(0..features.rows()) {
            out.row_mut(i).copy_from_slice(features.row(row));
        }
        start = end;
    }
    Ok(out)
}
