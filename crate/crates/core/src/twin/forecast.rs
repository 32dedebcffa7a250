use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learncore::{Optimizer, OptimizerKind, ParamVector, SeqDims, SequenceModel};
use crate::netmodel::RequestTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub batch: usize,
    /// Windows drawn per epoch (all of them if the history is shorter).
    pub windows_per_epoch: usize,
    /// Fixed windows used to report the per-epoch loss.
    pub eval_windows: usize,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            window: 16,
            embed: 16,
            hidden: 32,
            epochs: 6,
            optimizer: OptimizerKind::Sgd,
            lr: 1.0,
            lr_decay: 0.5,
            batch: 32,
            windows_per_epoch: 4096,
            eval_windows: 2048,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.embed == 0 || self.hidden == 0 || self.batch == 0 {
            return Err(Error::invalid("forecaster window, sizes and batch must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite() && self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("forecaster lr must be positive"));
        }
        Ok(())
    }
}

/// One-step next-request model over the content catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecaster {
    pub model: SequenceModel<f32>,
    pub window: usize,
}

/// Outcome of training: the model and the loss on fixed evaluation windows
/// before training and after each epoch.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub forecaster: Forecaster,
    pub epoch_losses: Vec<f64>,
}

impl Forecaster {
    /// Untrained model with a zero output head (uniform predictions).
    pub fn new<R: Rng + ?Sized>(vocab: usize, cfg: &ForecasterConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let dims = SeqDims {
            vocab,
            embed: cfg.embed,
            hidden: cfg.hidden,
        };
        Ok(Self {
            model: SequenceModel::new(dims, cfg.window, rng)?,
            window: cfg.window,
        })
    }

    pub fn vocab(&self) -> usize {
        self.model.dims().vocab
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.model.params().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params = ParamVector::load(path)?;
        let window = params
            .manifest()
            .window
            .ok_or_else(|| Error::invalid("forecaster sidecar lacks a window"))?;
        Ok(Self {
            model: SequenceModel::from_params(params)?,
            window,
        })
    }
}

/// Distribution of the request following `window` (length must equal W).
pub fn forecast_next(forecaster: &Forecaster, window: &[usize]) -> Result<Vec<f32>> {
    if window.len() != forecaster.window {
        return Err(Error::DimensionMismatch {
            expected: forecaster.window,
            actual: window.len(),
        });
    }
    forecaster.model.predict(window)
}

/// Fits a forecaster to the content sequence of `history` using shuffled
/// minibatches of sliding windows and a per-epoch decaying step size.
pub fn train_forecaster<R: Rng + ?Sized>(
    history: &RequestTrace,
    vocab: usize,
    cfg: &ForecasterConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    cfg.validate()?;
    let seq = history.content_ids();
    if seq.len() <= cfg.window {
        return Err(Error::InsufficientData {
            needed: cfg.window + 1,
            actual: seq.len(),
        });
    }
    let mut forecaster = Forecaster::new(vocab, cfg, rng)?;
    let w = cfg.window;
    let mut starts: Vec<usize> = (0..seq.len() - w).collect();
    let windows = |idx: &[usize]| -> (Vec<&[usize]>, Vec<usize>) {
        (idx.iter().map(|&i| &seq[i..i + w]).collect(), idx.iter().map(|&i| seq[i + w]).collect())
    };

    let mut eval_idx = starts.clone();
    eval_idx.shuffle(rng);
    eval_idx.truncate(cfg.eval_windows.max(1));
    let (eval_w, eval_t) = windows(&eval_idx);
    let eval = |m: &SequenceModel<f32>| -> Result<f64> { Ok(m.loss(&eval_w, &eval_t)? as f64) };

    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr as f32, Some(5.0));
    let mut epoch_losses = vec![eval(&forecaster.model)?];
    for epoch in 0..cfg.epochs {
        opt.set_lr((cfg.lr * cfg.lr_decay.powi(epoch as i32)) as f32);
        starts.shuffle(rng);
        let take = cfg.windows_per_epoch.min(starts.len()).max(1);
        for chunk in starts[..take].chunks(cfg.batch) {
            let (bw, bt) = windows(chunk);
            let (_, grad) = forecaster.model.loss_and_grad(&bw, &bt)?;
            opt.step(forecaster.model.params_mut(), &grad);
        }
        epoch_losses.push(eval(&forecaster.model)?);
    }
    Ok(TrainReport {
        forecaster,
        epoch_losses,
    })
}
