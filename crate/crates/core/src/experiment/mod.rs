//! Configuration-driven experiments: single runs, ρ grids over the AACE
//! kinds, and optimizer comparisons, with epoch telemetry written as CSV and
//! rendered as SVG.
//!
//! A run directory holds:
//!
//! - `manifest.json`: the echoed config, effective ρ, library version, wall time;
//! - `telemetry.csv`: one [`TelemetryRecord`] per epoch (see [`telemetry`]);
//! - `summary.json`: final and best validation accuracy, final test accuracy,
//!   final losses, and whether the run aborted;
//! - `steps.csv` when per-step output is enabled.
//!
//! Everything except the manifest's wall time is a pure function of the config.

pub mod config;
pub mod render;
pub mod telemetry;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, batches, split, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::loss::{batch_loss, batch_targets, TargetKind};
use crate::model::{Mlp, MlpSpec};
use crate::optim::{argmax, lr_at, sam_step, PerturbKind, SgdState, StepTelemetry};

pub use config::{DatasetSpec, RunConfig};
pub use render::render;
pub use telemetry::{TelemetryRecord, TELEMETRY_COLUMNS};

/// Independent seed stream `stream` of a run seed.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Standardized train/val/test splits of the configured dataset. Depends only
/// on the dataset spec, split fractions and seed, never on the optimizer.
pub fn prepare_data(cfg: &RunConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let full = match &cfg.dataset {
        DatasetSpec::Blobs {
            n_per_class,
            classes,
            dim,
            spread,
        } => data::gen_blobs(cfg.seed, *n_per_class, *classes, *dim, *spread)?,
        DatasetSpec::Spirals {
            n_per_class,
            classes,
            noise,
        } => data::gen_spirals(cfg.seed, *n_per_class, *classes, *noise)?,
        DatasetSpec::Csv { path } => data::load_csv(path)?,
    };
    let (train, val, test) = split(&full, cfg.split, derive_seed(cfg.seed, 1))?;
    let scaler = Standardizer::fit(&train);
    Ok((
        scaler.apply(&train),
        scaler.apply(&val),
        scaler.apply(&test),
    ))
}

/// Mean cross-entropy and accuracy over a whole dataset.
pub fn evaluate(model: &Mlp, ds: &Dataset) -> Result<(f64, f64)> {
    let batch = ds.as_batch();
    let mut f = model.forward(&batch.features)?;
    let targets = batch_targets(&mut f.tape, f.logits, &batch.labels, TargetKind::Ce)?;
    let loss = batch_loss(&mut f.tape, f.logits, &targets)?;
    let logits = f.tape.data(f.logits);
    let correct = (0..ds.len())
        .filter(|&r| argmax(logits.row(r)) == batch.labels[r])
        .count();
    Ok((
        f.tape.data(loss).data()[0],
        correct as f64 / ds.len() as f64,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub optimizer: PerturbKind,
    pub rho: Option<f64>,
    pub epochs: usize,
    pub epochs_completed: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub best_val_accuracy: Option<f64>,
    pub best_val_epoch: Option<usize>,
    pub final_test_accuracy: Option<f64>,
    pub aborted: bool,
    pub abort_reason: Option<String>,
}

/// Result of training in memory.
pub struct TrainOutcome {
    pub records: Vec<TelemetryRecord>,
    pub summary: Summary,
    pub model: Mlp,
    /// Set when a non-finite loss stopped the run early.
    pub abort: Option<Error>,
}

/// Trains per `cfg` without touching the filesystem. `observe` sees every
/// step as `(epoch, step, telemetry)`.
pub fn train(
    cfg: &RunConfig,
    mut observe: impl FnMut(usize, usize, &StepTelemetry),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let strategy = cfg.strategy()?;
    let (train_ds, val_ds, test_ds) = prepare_data(cfg)?;
    let spec = MlpSpec::new(
        train_ds.dim(),
        cfg.hidden.clone(),
        train_ds.classes(),
        derive_seed(cfg.seed, 2),
    );
    let mut model = Mlp::new(spec)?;
    let mut sgd = SgdState::new(cfg.base_lr, cfg.momentum, cfg.weight_decay);
    let batch_seed = derive_seed(cfg.seed, 3);

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut abort = None;
    'epochs: for epoch in 0..cfg.epochs {
        sgd.lr = lr_at(epoch, cfg.epochs, cfg.base_lr);
        let mut acc = telemetry::EpochAccumulator::default();
        for (step, idx) in batches(&train_ds, cfg.batch_size, batch_seed, epoch)
            .iter()
            .enumerate()
        {
            let batch = train_ds.batch(idx);
            match sam_step(&mut model, &batch, &strategy, &mut sgd) {
                Ok(t) => {
                    observe(epoch, step, &t);
                    acc.push(&t);
                }
                Err(e) => {
                    abort = Some(Error::Aborted {
                        epoch,
                        step,
                        source: Box::new(e),
                    });
                    break 'epochs;
                }
            }
        }
        let (val_loss, val_acc) = evaluate(&model, &val_ds)?;
        if !val_loss.is_finite() {
            abort = Some(Error::Aborted {
                epoch,
                step: acc.steps(),
                source: Box::new(Error::NonFinite {
                    what: "validation loss".into(),
                }),
            });
            break;
        }
        records.push(acc.finish(epoch, val_loss, val_acc, sgd.lr));
    }

    let best = records
        .iter()
        .fold(None::<&TelemetryRecord>, |best, r| match best {
            Some(b) if b.val_acc >= r.val_acc => Some(b),
            _ => Some(r),
        });
    let last = records.last();
    let final_test_accuracy = if abort.is_none() {
        Some(evaluate(&model, &test_ds)?.1)
    } else {
        None
    };
    let summary = Summary {
        optimizer: cfg.optimizer,
        rho: cfg.effective_rho(),
        epochs: cfg.epochs,
        epochs_completed: records.len(),
        final_train_loss: last.map(|r| r.train_loss),
        final_val_loss: last.map(|r| r.val_loss),
        final_val_accuracy: last.map(|r| r.val_acc),
        best_val_accuracy: best.map(|r| r.val_acc),
        best_val_epoch: best.map(|r| r.epoch),
        final_test_accuracy,
        aborted: abort.is_some(),
        abort_reason: abort.as_ref().map(|e| e.to_string()),
    };
    Ok(TrainOutcome {
        records,
        summary,
        model,
        abort,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    effective_rho: Option<f64>,
    library_version: &'static str,
    wall_time_seconds: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Trains per `cfg` and writes the run directory `cfg.output_dir`:
/// `telemetry.csv`, `summary.json`, `manifest.json`, the final weights as
/// `params.bin` + `params.json`, and `steps.csv` when `per_step` is set.
///
/// A non-finite loss still writes the telemetry gathered so far and a summary
/// marked `aborted`, then returns [`Error::Aborted`].
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let started = Instant::now();

    let mut step_rows = String::new();
    let per_step = cfg.per_step;
    let outcome = train(cfg, |epoch, step, t| {
        if per_step {
            step_rows.push_str(&telemetry::step_row(epoch, step, t));
        }
    })?;

    telemetry::write_telemetry(&dir.join("telemetry.csv"), &outcome.records)?;
    if per_step {
        let path = dir.join("steps.csv");
        std::fs::write(&path, format!("{}{step_rows}", telemetry::STEP_HEADER))
            .map_err(|e| Error::io(&path, e))?;
    }
    write_json(&dir.join("summary.json"), &outcome.summary)?;
    outcome.model.params.save(&dir.join("params"))?;
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            config: cfg,
            effective_rho: cfg.effective_rho(),
            library_version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    match outcome.abort {
        Some(e) => Err(e),
        None => Ok(RunOutcome {
            dir,
            summary: outcome.summary,
        }),
    }
}

/// One cell of a grid or comparison.
#[derive(Debug)]
pub struct Cell {
    pub kind: PerturbKind,
    pub rho: Option<f64>,
    pub epochs: usize,
    pub dir: PathBuf,
    pub result: Result<Summary>,
}

impl Cell {
    pub fn summary(&self) -> Option<&Summary> {
        self.result.as_ref().ok()
    }

    pub fn aborted(&self) -> bool {
        matches!(self.result, Err(Error::Aborted { .. }))
    }
}

fn run_cells(cfgs: Vec<RunConfig>) -> Vec<Cell> {
    cfgs.into_par_iter()
        .map(|c| Cell {
            kind: c.optimizer,
            rho: c.effective_rho(),
            epochs: c.epochs,
            dir: c.output_dir.clone(),
            result: run(&c).map(|o| o.summary),
        })
        .collect()
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn rho_label(rho: f64) -> String {
    format!("rho{rho}")
}

/// ρ grid over both AACE kinds. Writes `grid.csv` (rows = ρ, columns =
/// final validation accuracy per kind, then best validation accuracy per
/// kind) into `cfg.output_dir`; cell runs go to subdirectories. Failed cells
/// leave empty fields.
pub fn grid(cfg: &RunConfig, rhos: &[f64]) -> Result<Vec<Cell>> {
    if rhos.is_empty() {
        return Err(Error::Config(vec!["rho list is empty".into()]));
    }
    let bad: Vec<String> = rhos
        .iter()
        .filter(|r| !(**r > 0.0 && r.is_finite()))
        .map(|r| format!("rho: must be positive, got {r}"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Config(bad));
    }
    cfg.validate()?;
    let kinds = [PerturbKind::AaceNorm, PerturbKind::AaceRaw];
    let mut cfgs = Vec::new();
    for &rho in rhos {
        for kind in kinds {
            let mut c = cfg.clone();
            c.optimizer = kind;
            c.rho = Some(rho);
            c.output_dir = cfg.output_dir.join(format!("{kind}_{}", rho_label(rho)));
            cfgs.push(c);
        }
    }
    let cells = run_cells(cfgs);

    let mut csv = String::from("rho,AACE_NORM,AACE_RAW,AACE_NORM_best,AACE_RAW_best\n");
    for (rho, pair) in rhos.iter().zip(cells.chunks(2)) {
        let final_acc = |c: &Cell| field(c.summary().and_then(|s| s.final_val_accuracy));
        let best_acc = |c: &Cell| field(c.summary().and_then(|s| s.best_val_accuracy));
        csv.push_str(&format!(
            "{rho},{},{},{},{}\n",
            final_acc(&pair[0]),
            final_acc(&pair[1]),
            best_acc(&pair[0]),
            best_acc(&pair[1])
        ));
    }
    let path = cfg.output_dir.join("grid.csv");
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(cells)
}

/// Runs each kind at its default ρ. Plain SGD gets twice the configured
/// epochs, matching the two gradient evaluations per SAM step. Writes
/// `compare.csv` into `cfg.output_dir`.
pub fn compare(cfg: &RunConfig, kinds: &[PerturbKind]) -> Result<Vec<Cell>> {
    if kinds.is_empty() {
        return Err(Error::Config(vec!["kind list is empty".into()]));
    }
    cfg.validate()?;
    let cfgs = kinds
        .iter()
        .map(|&kind| {
            let mut c = cfg.clone();
            c.optimizer = kind;
            c.rho = kind.default_rho();
            if kind == PerturbKind::None {
                c.epochs *= 2;
            }
            c.output_dir = cfg.output_dir.join(kind.name());
            c
        })
        .collect();
    let cells = run_cells(cfgs);

    let mut csv = String::from("kind,rho,epochs,final_test_acc,final_val_acc,best_val_acc\n");
    for c in &cells {
        let s = c.summary();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.kind,
            field(c.rho),
            c.epochs,
            field(s.and_then(|s| s.final_test_accuracy)),
            field(s.and_then(|s| s.final_val_accuracy)),
            field(s.and_then(|s| s.best_val_accuracy)),
        ));
    }
    let path = cfg.output_dir.join("compare.csv");
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(cells)
}
