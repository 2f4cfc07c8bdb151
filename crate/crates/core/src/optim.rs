//! SGD with momentum and weight decay, plus the plateau learning-rate rule.

use crate::error::{Error, Result};
use crate::network::ParamClass;
use crate::train::TrainLog;

/// Learning-rate plateau rule: when the mean train loss improves by less
/// than `min_rel_improvement` (relatively) over the last `window` epochs at
/// the current rate, the rate is divided by `factor`. The trailing-window
/// bookkeeping guarantees at most one reduction per window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    pub window: usize,
    pub min_rel_improvement: f64,
    pub factor: f64,
}

impl Default for PlateauConfig {
    fn default() -> PlateauConfig {
        PlateauConfig {
            window: 5,
            min_rel_improvement: 1e-3,
            factor: 10.0,
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Dropout ratio consumed by architecture presets when they place
    /// dropout layers; the training loop itself reads the ratio baked into
    /// the network.
    pub dropout: f64,
    pub seed: u64,
    pub plateau: PlateauConfig,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 256,
            max_epochs: 30,
            dropout: 0.0,
            seed: 0,
            plateau: PlateauConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The defaults for small experiments: identical to [`Default`] except
    /// for a batch size of 64.
    pub fn desk_scale() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive and finite, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.plateau.window == 0 {
            return bad("plateau window must be at least 1 epoch".into());
        }
        if !(self.plateau.factor > 1.0 && self.plateau.factor.is_finite()) {
            return bad(format!(
                "plateau factor must exceed 1, got {}",
                self.plateau.factor
            ));
        }
        if !(self.plateau.min_rel_improvement >= 0.0
            && self.plateau.min_rel_improvement.is_finite())
        {
            return bad(format!(
                "plateau improvement threshold must be non-negative, got {}",
                self.plateau.min_rel_improvement
            ));
        }
        Ok(())
    }
}

/// One momentum-SGD update on a parameter tensor, in place:
/// g′ = g + weight_decay·w (only for tensors whose class decays),
/// v′ = momentum·v + g′, w′ = w − lr·v′.
pub fn sgd_step(
    w: &mut [f64],
    g: &[f64],
    v: &mut [f64],
    class: ParamClass,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if w.len() != g.len() || w.len() != v.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("param of {}", w.len()),
            format!("grad of {} and velocity of {}", g.len(), v.len()),
        ));
    }
    let decay = if class.decays() { weight_decay } else { 0.0 };
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        let g = g + decay * *w;
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

/// Learning rate for the next epoch, given the completed-epoch log. A pure
/// function of the log's loss and lr columns: the trailing run of epochs at
/// the current rate must span at least `window` records, and the relative
/// loss improvement across that window must fall below the threshold, for
/// the rate to drop by `factor`. Reductions therefore occur at most once
/// per window — right after one, the trailing run restarts from length 1.
pub fn plateau_schedule(log: &TrainLog, cfg: &PlateauConfig) -> f64 {
    let records = log.records();
    let Some(last) = records.last() else {
        return f64::NAN; // no epochs yet: the caller keeps its configured lr
    };
    let current_lr = last.lr;
    let run = records
        .iter()
        .rev()
        .take_while(|r| r.lr == current_lr)
        .count();
    if run < cfg.window {
        return current_lr;
    }
    let base = records[records.len() - cfg.window].train_loss;
    let improvement = (base - last.train_loss) / base.abs().max(1e-12);
    if improvement < cfg.min_rel_improvement {
        current_lr / cfg.factor
    } else {
        current_lr
    }
}
