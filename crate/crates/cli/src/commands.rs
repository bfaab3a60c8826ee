use std::fs;
use std::path::Path;

use ordcal_core::data::{generate_synthetic, load_logits_labels, Dataset, SyntheticConfig};
use ordcal_core::losses::{LossSpec, LossWeights, TsMode};
use ordcal_core::metrics::{full_report, BinningConfig, CalibrationReport};
use ordcal_core::temperature::{apply_temperature, fit_temperature, Temperature};
use ordcal_core::trainer::{
    grad_check, param_grad_check, run_ablation, train, Architecture, GradCheckConfig, TrainConfig, TrainLoss, FD_STEP,
    GRAD_REL_TOLERANCE,
};
use ordcal_core::{softmax, Error, LabelVector, LogitBatch, RngSeed};
use serde::Serialize;

use crate::report::{
    reliability_csv, summary, AblationRowDoc, Document, FitDoc, GradDoc, MetricsDoc, TemperatureDoc, TrainDoc,
};
use crate::{
    AblationArgs, ArchArg, EvalArgs, Failure, FitTempArgs, GradcheckArgs, LossArg, OptimArgs, ReliabilityArgs,
    SyntheticArgs, TrainDemoArgs,
};

type CmdResult = Result<(), Failure>;

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Print the document on stdout and, when requested, save a copy.
fn emit<C: Serialize, R: Serialize>(doc: &Document<C, R>, out: Option<&Path>) -> Result<(), Error> {
    let json = doc.to_json();
    print!("{json}");
    if let Some(path) = out {
        write_file(path, &json)?;
    }
    Ok(())
}

fn report(logits: &LogitBatch, labels: &LabelVector, bins: &BinningConfig) -> Result<CalibrationReport, Error> {
    full_report(&softmax(logits), labels, bins)
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let bins = BinningConfig::new(args.bins)?;
    let (mut logits, labels) = load_logits_labels(&args.input.logits, &args.input.labels)?;
    if let Some(t) = args.temperature {
        logits = apply_temperature(&logits, Temperature::new(t)?)?;
    }
    let metrics = MetricsDoc::from(&report(&logits, &labels, &bins)?);
    eprintln!("{}", summary("eval", &metrics));
    emit(&Document::new("eval", None, &args, metrics), args.out.as_deref())?;
    Ok(())
}

pub fn fit_temp(args: FitTempArgs) -> CmdResult {
    let bins = BinningConfig::new(args.bins)?;
    let (logits, labels) = load_logits_labels(&args.input.logits, &args.input.labels)?;
    let fit = fit_temperature(&logits, &labels)?;
    let before = MetricsDoc::from(&report(&logits, &labels, &bins)?);
    let after = MetricsDoc::from(&report(&apply_temperature(&logits, fit.temperature)?, &labels, &bins)?);
    eprintln!(
        "temperature {}  NLL {:.4} -> {:.4}",
        fit.temperature.value(),
        fit.nll_before,
        fit.nll_after
    );
    if fit.temperature.value() < 1.0 {
        eprintln!("note: fitted temperature is below 1; the logits were under-confident");
    }
    eprintln!("{}", summary("before", &before));
    eprintln!("{}", summary("after", &after));
    let converged = fit.converged;
    let doc = FitDoc {
        fit: TemperatureDoc::from(&fit),
        ece_before: before.ece,
        ece_after: after.ece,
        ece_before_pct: before.ece_pct,
        ece_after_pct: after.ece_pct,
        before,
        after,
    };
    emit(&Document::new("fit-temp", None, &args, doc), args.out.as_deref())?;
    if !converged {
        return Err(Failure::Numerical(
            "converged=false: every logit row is constant, so NLL does not depend on the temperature; reporting t = 1"
                .into(),
        ));
    }
    Ok(())
}

pub fn reliability(args: ReliabilityArgs) -> CmdResult {
    let bins = BinningConfig::new(args.bins)?;
    let (logits, labels) = load_logits_labels(&args.input.logits, &args.input.labels)?;
    let metrics = MetricsDoc::from(&report(&logits, &labels, &bins)?);
    write_file(&args.out, &reliability_csv(&metrics.bins))?;
    eprintln!("{}", summary("reliability", &metrics));
    emit(&Document::new("reliability", None, &args, metrics), None)?;
    Ok(())
}

fn synthetic_config(data: &SyntheticArgs, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        k: data.classes,
        d: data.dim,
        n_train: data.n_train,
        n_test: data.n_test,
        separation: data.separation,
        seed: RngSeed(seed),
    }
}

fn train_config(optim: &OptimArgs, loss: TrainLoss, temp_scale: bool) -> TrainConfig {
    TrainConfig {
        loss,
        architecture: match optim.arch {
            ArchArg::Linear => Architecture::Linear,
            ArchArg::Mlp1 => Architecture::Mlp1,
        },
        hidden: optim.hidden,
        epochs: optim.epochs,
        batch_size: optim.batch_size,
        learning_rate: optim.lr,
        momentum: optim.momentum,
        seed: RngSeed(optim.seed),
        temp_scale,
        num_bins: optim.bins,
    }
}

/// Generate the synthetic splits and carve the validation tail off training.
fn prepare_data(data: &SyntheticArgs, seed: u64) -> Result<(SyntheticConfig, Dataset, Dataset, Dataset), Error> {
    let config = synthetic_config(data, seed);
    let (train_all, test) = generate_synthetic(&config)?;
    let (fit, val) = train_all.split_tail(data.val_fraction)?;
    Ok((config, fit, val, test))
}

fn train_loss(args: &TrainDemoArgs) -> Result<TrainLoss, Error> {
    let weights = match (args.alpha, args.beta, args.gamma) {
        (None, None, None) => None,
        (Some(a), Some(b), Some(g)) => Some(LossWeights::new(a, b, g)?),
        _ => {
            return Err(Error::Parameter(
                "--alpha, --beta and --gamma must be given together".into(),
            ))
        }
    };
    match (args.loss, weights) {
        (LossArg::Ce, None) => Ok(TrainLoss::Ce),
        (LossArg::Focal, None) => Ok(TrainLoss::Focal {
            focal_gamma: args.focal_gamma,
        }),
        (LossArg::Ce | LossArg::Focal, Some(_)) => Err(Error::Parameter(
            "--alpha/--beta/--gamma apply only to ce+mdca and ce+mdca+ts".into(),
        )),
        (LossArg::CeMdca, None) => Ok(TrainLoss::ce_mdca()),
        (LossArg::CeMdca, Some(weights)) => Ok(TrainLoss::CeMdca { weights }),
        (LossArg::CeMdcaTs, None) => Ok(TrainLoss::ce_mdca_ts()),
        (LossArg::CeMdcaTs, Some(weights)) => Ok(TrainLoss::CeMdcaTs { weights }),
    }
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    synthetic: SyntheticConfig,
    val_fraction: f64,
    train: &'a TrainConfig,
}

pub fn train_demo(args: TrainDemoArgs) -> CmdResult {
    let loss = train_loss(&args)?;
    let config = train_config(&args.optim, loss, args.temp_scale);
    config.validate()?;
    let (synthetic, fit, val, test) = prepare_data(&args.data, args.optim.seed)?;
    let result = train(&fit, Some(&val), &test, &config)?;

    let doc = TrainDoc::new(&result, (fit.len(), val.len(), test.len()));
    eprintln!(
        "trained {} epochs: loss {:.4} -> {:.4}, train accuracy {:.2}%",
        doc.loss_curve.len(),
        doc.loss_curve.first().copied().unwrap_or(f64::NAN),
        doc.loss_curve.last().copied().unwrap_or(f64::NAN),
        100.0 * doc.train_accuracy
    );
    eprintln!("{}", summary("test", &doc.before_temperature));
    if let (Some(t), Some(after)) = (&doc.temperature, &doc.after_temperature) {
        eprintln!("{}", summary(&format!("test, t = {:.4}", t.temperature), after));
    }
    let echo = TrainEcho {
        synthetic,
        val_fraction: args.data.val_fraction,
        train: &config,
    };
    emit(
        &Document::new("train-demo", Some(args.optim.seed), echo, doc),
        args.out.as_deref(),
    )?;
    Ok(())
}

pub fn ablation(args: AblationArgs) -> CmdResult {
    let base = train_config(&args.optim, TrainLoss::Ce, false);
    base.validate()?;
    let (synthetic, fit, val, test) = prepare_data(&args.data, args.optim.seed)?;
    let rows: Vec<AblationRowDoc> = run_ablation(&fit, &val, &test, &base)?
        .into_iter()
        .map(|r| AblationRowDoc {
            name: r.name,
            temperature: r.temperature,
            report: MetricsDoc::from(&r.report),
        })
        .collect();
    eprintln!(
        "{:<18} {:>8} {:>8} {:>9} {:>8}",
        "configuration", "ECE %", "MCE %", "accuracy", "T"
    );
    for r in &rows {
        let t = r.temperature.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into());
        eprintln!(
            "{:<18} {:>8.2} {:>8.2} {:>8.2}% {:>8}",
            r.name,
            r.report.ece_pct,
            r.report.mce_pct,
            100.0 * r.report.accuracy,
            t
        );
    }
    let echo = TrainEcho {
        synthetic,
        val_fraction: args.data.val_fraction,
        train: &base,
    };
    emit(
        &Document::new("ablation", Some(args.optim.seed), echo, rows),
        args.out.as_deref(),
    )?;
    Ok(())
}

/// Every loss configuration the gradient check covers.
pub fn gradcheck_specs() -> Vec<LossSpec> {
    vec![
        LossSpec::CrossEntropy,
        LossSpec::Focal { focal_gamma: 0.0 },
        LossSpec::Focal { focal_gamma: 1.0 },
        LossSpec::Focal { focal_gamma: 2.0 },
        LossSpec::Mdca,
        LossSpec::Ts { mode: TsMode::Soft },
        LossSpec::Ts { mode: TsMode::Hard },
        LossSpec::Composite {
            weights: LossWeights::default(),
            mode: TsMode::Soft,
        },
    ]
}

pub fn gradcheck(args: GradcheckArgs) -> CmdResult {
    if args.trials == 0 {
        return Err(Error::Parameter("--trials must be at least 1".into()).into());
    }
    let config = GradCheckConfig {
        trials: args.trials,
        seed: RngSeed(args.seed),
        ..GradCheckConfig::default()
    };
    let losses = gradcheck_specs()
        .iter()
        .map(|spec| grad_check(spec, &config))
        .collect::<Result<Vec<_>, _>>()?;
    let composite = LossSpec::Composite {
        weights: LossWeights::default(),
        mode: TsMode::Soft,
    };
    let mut parameters = Vec::new();
    for arch in [Architecture::Linear, Architecture::Mlp1] {
        for spec in [LossSpec::CrossEntropy, composite] {
            parameters.push(param_grad_check(&spec, arch, &config)?);
        }
    }

    eprintln!(
        "{:<64} {:>7} {:>7} {:>12}  status",
        "loss", "checked", "skipped", "max rel err"
    );
    let mut failures = Vec::new();
    for r in losses.iter().chain(&parameters) {
        let status = match (r.differentiable, r.passed) {
            (false, true) => "non-differentiable (zero gradient)",
            (_, true) => "pass",
            (_, false) => "FAIL",
        };
        eprintln!(
            "{:<64} {:>7} {:>7} {:>12.3e}  {status}",
            r.loss, r.checked, r.skipped, r.max_rel_error
        );
        if !r.passed {
            let at = r
                .worst
                .as_ref()
                .map(|w| format!(" (trial {}, seed {}, n={}, k={})", w.trial, w.seed, w.n, w.k))
                .unwrap_or_default();
            failures.push(format!("{}: max relative error {:e}{at}", r.loss, r.max_rel_error));
        }
    }
    let doc = GradDoc {
        rel_tolerance: GRAD_REL_TOLERANCE,
        fd_step: FD_STEP,
        losses,
        parameters,
        passed: failures.is_empty(),
    };
    emit(
        &Document::new("gradcheck", Some(args.seed), &args, doc),
        args.out.as_deref(),
    )?;
    if !failures.is_empty() {
        return Err(Failure::Numerical(format!(
            "gradient check failed: {}",
            failures.join("; ")
        )));
    }
    Ok(())
}
