//! Minibatch SGD with momentum for the desk-scale classifiers, plus the
//! end-to-end pipeline: train, optionally fit a temperature on held-out data,
//! and report calibration on a test split.

mod gradcheck;
mod model;

pub use gradcheck::{grad_check, param_grad_check, GradCheckConfig, GradCheckReport, FD_STEP, GRAD_REL_TOLERANCE};
pub use model::{forward, Architecture, ModelParams, DEFAULT_HIDDEN};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{LossSpec, LossWeights, TsMode, DEFAULT_FOCAL_GAMMA};
use crate::metrics::{full_report, BinningConfig, CalibrationReport};
use crate::numerics::{softmax, top1, LogitBatch};
use crate::rng::RngSeed;
use crate::temperature::{apply_temperature, fit_temperature, TempFitResult};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum TrainLoss {
    Ce,
    Focal {
        focal_gamma: f64,
    },
    /// `gamma` of the weights must be zero.
    CeMdca {
        weights: LossWeights,
    },
    CeMdcaTs {
        weights: LossWeights,
    },
}

impl TrainLoss {
    pub fn focal() -> Self {
        TrainLoss::Focal {
            focal_gamma: DEFAULT_FOCAL_GAMMA,
        }
    }

    /// CE + MDCA with weights (0.9, 0.1, 0).
    pub fn ce_mdca() -> Self {
        TrainLoss::CeMdca {
            weights: LossWeights::new(0.9, 0.1, 0.0).expect("constant weights are valid"),
        }
    }

    /// CE + MDCA + soft ordinal loss with the default weights.
    pub fn ce_mdca_ts() -> Self {
        TrainLoss::CeMdcaTs {
            weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainLoss::Focal { focal_gamma } if !(focal_gamma.is_finite() && *focal_gamma >= 0.0) => {
                Err(Error::Parameter(format!("focal gamma must be >= 0, got {focal_gamma}")))
            }
            TrainLoss::CeMdca { weights } if weights.gamma() != 0.0 => Err(Error::Parameter(
                "ce+mdca takes no ordinal term; gamma must be 0".into(),
            )),
            _ => Ok(()),
        }
    }

    /// The loss used for descent. The ordinal term always runs in soft mode here.
    pub fn spec(&self) -> LossSpec {
        match *self {
            TrainLoss::Ce => LossSpec::CrossEntropy,
            TrainLoss::Focal { focal_gamma } => LossSpec::Focal { focal_gamma },
            TrainLoss::CeMdca { weights } | TrainLoss::CeMdcaTs { weights } => LossSpec::Composite {
                weights,
                mode: TsMode::Soft,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: TrainLoss,
    pub architecture: Architecture,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: RngSeed,
    pub temp_scale: bool,
    pub num_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: TrainLoss::Ce,
            // softmax regression is already calibrated on shared-covariance Gaussian
            // classes; the hidden layer overfits and shows the overconfidence under study
            architecture: Architecture::Mlp1,
            hidden: DEFAULT_HIDDEN,
            epochs: 200,
            batch_size: 128,
            learning_rate: 0.05,
            momentum: 0.8,
            seed: RngSeed(42),
            temp_scale: false,
            num_bins: crate::metrics::DEFAULT_NUM_BINS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        BinningConfig::new(self.num_bins)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: ModelParams,
    /// Sample-weighted mean minibatch loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Mean top-1 confidence on the training set after each epoch.
    pub confidence_curve: Vec<f64>,
    pub train_accuracy: f64,
    pub temperature_fit: Option<TempFitResult>,
    /// Test-split calibration of the raw model.
    pub report_before: CalibrationReport,
    /// Test-split calibration after temperature scaling, when enabled.
    pub report_after: Option<CalibrationReport>,
}

impl TrainResult {
    /// The report of the final pipeline output.
    pub fn final_report(&self) -> &CalibrationReport {
        self.report_after.as_ref().unwrap_or(&self.report_before)
    }
}

fn evaluate_report(logits: &LogitBatch, data: &Dataset, bins: &BinningConfig) -> Result<CalibrationReport> {
    full_report(&softmax(logits), data.labels(), bins)
}

/// Train on `train_data`, fit a temperature on `val_data` when
/// `config.temp_scale` is set, and report on `test_data`.
pub fn train(
    train_data: &Dataset,
    val_data: Option<&Dataset>,
    test_data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    for (name, other) in [("test", Some(test_data)), ("validation", val_data)] {
        if let Some(other) = other {
            if (other.d(), other.k()) != (train_data.d(), train_data.k()) {
                return Err(Error::Dimension(format!(
                    "{name} split has d={}, k={} but training split has d={}, k={}",
                    other.d(),
                    other.k(),
                    train_data.d(),
                    train_data.k()
                )));
            }
        }
    }
    let val_data = match (config.temp_scale, val_data) {
        (true, None) => return Err(Error::Input("temperature scaling needs a validation split".into())),
        (true, Some(v)) if v.len() < 2 => {
            return Err(Error::Input(
                "temperature scaling needs at least 2 validation samples".into(),
            ))
        }
        (_, v) => v,
    };

    let loss = config.loss.spec();
    let mut params = ModelParams::init(
        config.architecture,
        train_data.d(),
        config.hidden,
        train_data.k(),
        config.seed.derive(0),
    )?;
    let mut velocity = vec![0.0; params.num_params()];
    let n = train_data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut confidence_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut config.seed.derive(1000 + epoch as u64).rng());
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let part = train_data.subset(batch);
            let (logits, cache) = params
                .forward_cached(part.features())
                .map_err(|_| Error::Divergence { epoch, loss: f64::NAN })?;
            let out = loss.evaluate(&logits, part.labels())?;
            if !out.value.is_finite() {
                return Err(Error::Divergence { epoch, loss: out.value });
            }
            epoch_loss += out.value * batch.len() as f64;
            let grad = params.backward(part.features(), &cache, &out.grad);
            for ((theta, v), g) in params.theta_mut().iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v + g;
                *theta -= config.learning_rate * *v;
            }
        }
        let epoch_loss = epoch_loss / n as f64;
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
        loss_curve.push(epoch_loss);
        let logits = forward(&params, train_data.features()).map_err(|_| Error::Divergence {
            epoch,
            loss: epoch_loss,
        })?;
        let (_, confs) = top1(&softmax(&logits));
        confidence_curve.push(confs.iter().sum::<f64>() / n as f64);
    }

    let bins = BinningConfig::new(config.num_bins)?;
    let train_accuracy = evaluate_report(&forward(&params, train_data.features())?, train_data, &bins)?.accuracy;
    let test_logits = forward(&params, test_data.features())?;
    let report_before = evaluate_report(&test_logits, test_data, &bins)?;

    let (temperature_fit, report_after) = match val_data.filter(|_| config.temp_scale) {
        Some(val) => {
            let val_logits = forward(&params, val.features())?;
            let fit = fit_temperature(&val_logits, val.labels())?;
            let scaled = apply_temperature(&test_logits, fit.temperature)?;
            let report = evaluate_report(&scaled, test_data, &bins)?;
            (Some(fit), Some(report))
        }
        None => (None, None),
    };

    Ok(TrainResult {
        params,
        loss_curve,
        confidence_curve,
        train_accuracy,
        temperature_fit,
        report_before,
        report_after,
    })
}

/// One rung of the calibration ablation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub loss: TrainLoss,
    pub temp_scale: bool,
    pub report: CalibrationReport,
    pub temperature: Option<f64>,
}

/// CE only, CE+MDCA, CE+MDCA+TS, and CE+MDCA+TS followed by temperature scaling.
///
/// The last two rungs share one trained model; the final rung is that
/// model's temperature-scaled output.
pub fn run_ablation(
    train_data: &Dataset,
    val_data: &Dataset,
    test_data: &Dataset,
    base: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let run = |loss: TrainLoss, temp_scale: bool| {
        let config = TrainConfig {
            loss,
            temp_scale,
            ..base.clone()
        };
        train(train_data, Some(val_data), test_data, &config)
    };
    let ce = run(TrainLoss::Ce, false)?;
    let ce_mdca = run(TrainLoss::ce_mdca(), false)?;
    let full = run(TrainLoss::ce_mdca_ts(), true)?;
    let row = |name: &str, loss, temp_scale, report: &CalibrationReport, temperature| AblationRow {
        name: name.to_string(),
        loss,
        temp_scale,
        report: report.clone(),
        temperature,
    };
    Ok(vec![
        row("ce", TrainLoss::Ce, false, &ce.report_before, None),
        row("ce+mdca", TrainLoss::ce_mdca(), false, &ce_mdca.report_before, None),
        row("ce+mdca+ts", TrainLoss::ce_mdca_ts(), false, &full.report_before, None),
        row(
            "ce+mdca+ts+temp",
            TrainLoss::ce_mdca_ts(),
            true,
            full.final_report(),
            full.temperature_fit.as_ref().map(|f| f.temperature.value()),
        ),
    ])
}
