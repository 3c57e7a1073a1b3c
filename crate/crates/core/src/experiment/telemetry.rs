//! Epoch-mean telemetry and its CSV schema.
//!
//! Column order is fixed:
//!
//! ```text
//! epoch,train_loss,val_loss,perturb_loss,perturb_grad_norm,perturb_distance,train_acc,val_acc,lr
//! ```
//!
//! The three `perturb_*` fields are empty for plain SGD runs. Reals are
//! written in shortest round-trip form, so a file reads back bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::StepTelemetry;

pub const TELEMETRY_COLUMNS: [&str; 9] = [
    "epoch",
    "train_loss",
    "val_loss",
    "perturb_loss",
    "perturb_grad_norm",
    "perturb_distance",
    "train_acc",
    "val_acc",
    "lr",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TelemetryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub perturb_loss: Option<f64>,
    pub perturb_grad_norm: Option<f64>,
    pub perturb_distance: Option<f64>,
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
}

/// Running sums over the steps of one epoch.
#[derive(Clone, Debug, Default)]
pub struct EpochAccumulator {
    steps: usize,
    train_loss: f64,
    perturb_loss: f64,
    perturb_grad_norm: f64,
    perturb_distance: f64,
    perturbed_steps: usize,
    correct: usize,
    samples: usize,
}

impl EpochAccumulator {
    pub fn push(&mut self, step: &StepTelemetry) {
        self.steps += 1;
        self.train_loss += step.train_loss;
        if let (Some(l), Some(g), Some(d)) = (
            step.perturb_loss,
            step.perturb_grad_norm,
            step.perturb_distance,
        ) {
            self.perturb_loss += l;
            self.perturb_grad_norm += g;
            self.perturb_distance += d;
            self.perturbed_steps += 1;
        }
        self.correct += step.correct;
        self.samples += step.samples;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Arithmetic means over the steps seen.
    pub fn finish(&self, epoch: usize, val_loss: f64, val_acc: f64, lr: f64) -> TelemetryRecord {
        let n = self.steps as f64;
        let perturbed =
            |sum: f64| (self.perturbed_steps > 0).then(|| sum / self.perturbed_steps as f64);
        TelemetryRecord {
            epoch,
            train_loss: self.train_loss / n,
            val_loss,
            perturb_loss: perturbed(self.perturb_loss),
            perturb_grad_norm: perturbed(self.perturb_grad_norm),
            perturb_distance: perturbed(self.perturb_distance),
            train_acc: self.correct as f64 / self.samples as f64,
            val_acc,
            lr,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TelemetryRecord {
    pub fn to_fields(&self) -> [String; 9] {
        [
            self.epoch.to_string(),
            self.train_loss.to_string(),
            self.val_loss.to_string(),
            opt(self.perturb_loss),
            opt(self.perturb_grad_norm),
            opt(self.perturb_distance),
            self.train_acc.to_string(),
            self.val_acc.to_string(),
            self.lr.to_string(),
        ]
    }
}

pub fn telemetry_to_csv(records: &[TelemetryRecord]) -> String {
    let mut out = TELEMETRY_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&r.to_fields().join(","));
        out.push('\n');
    }
    out
}

pub fn write_telemetry(path: &Path, records: &[TelemetryRecord]) -> Result<()> {
    std::fs::write(path, telemetry_to_csv(records)).map_err(|e| Error::io(path, e))
}

/// Parses a telemetry file. Row numbers in errors are 1-based file lines.
pub fn read_telemetry(path: &Path) -> Result<Vec<TelemetryRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_telemetry(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

pub fn parse_telemetry(text: &str) -> std::result::Result<Vec<TelemetryRecord>, (usize, String)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == TELEMETRY_COLUMNS.join(",") => {}
        Some(_) => {
            return Err((
                1,
                format!("header must be `{}`", TELEMETRY_COLUMNS.join(",")),
            ))
        }
        None => return Err((1, "empty telemetry file".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TELEMETRY_COLUMNS.len() {
            return Err((n, format!("expected 9 fields, found {}", fields.len())));
        }
        let real = |j: usize| -> std::result::Result<f64, (usize, String)> {
            fields[j].trim().parse::<f64>().map_err(|_| {
                (
                    n,
                    format!("{}: `{}` is not a number", TELEMETRY_COLUMNS[j], fields[j]),
                )
            })
        };
        let optional = |j: usize| -> std::result::Result<Option<f64>, (usize, String)> {
            if fields[j].trim().is_empty() {
                Ok(None)
            } else {
                real(j).map(Some)
            }
        };
        let epoch = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| (n, format!("epoch: `{}` is not an integer", fields[0])))?;
        out.push(TelemetryRecord {
            epoch,
            train_loss: real(1)?,
            val_loss: real(2)?,
            perturb_loss: optional(3)?,
            perturb_grad_norm: optional(4)?,
            perturb_distance: optional(5)?,
            train_acc: real(6)?,
            val_acc: real(7)?,
            lr: real(8)?,
        });
    }
    Ok(out)
}

/// Per-step dump written with `per_step`; not part of the stable schema.
pub fn step_row(epoch: usize, step: usize, t: &StepTelemetry) -> String {
    format!(
        "{epoch},{step},{},{},{},{},{},{}\n",
        t.train_loss,
        opt(t.perturb_loss),
        opt(t.perturb_grad_norm),
        opt(t.perturb_distance),
        t.correct,
        t.samples
    )
}

pub const STEP_HEADER: &str =
    "epoch,step,train_loss,perturb_loss,perturb_grad_norm,perturb_distance,correct,samples\n";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(loss: f64, p: Option<f64>) -> StepTelemetry {
        StepTelemetry {
            perturb_loss: p,
            perturb_grad_norm: p.map(|v| v * 2.0),
            perturb_distance: p.map(|v| v * 3.0),
            train_loss: loss,
            correct: 3,
            samples: 4,
            perturbation: None,
            perturb_grad: None,
        }
    }

    #[test]
    fn epoch_means_are_step_means() {
        let mut acc = EpochAccumulator::default();
        acc.push(&step(1.0, Some(2.0)));
        acc.push(&step(3.0, Some(4.0)));
        let r = acc.finish(0, 0.5, 0.25, 0.1);
        assert_eq!(r.train_loss, 2.0);
        assert_eq!(r.perturb_loss, Some(3.0));
        assert_eq!(r.perturb_grad_norm, Some(6.0));
        assert_eq!(r.perturb_distance, Some(9.0));
        assert_eq!(r.train_acc, 0.75);
    }

    #[test]
    fn sgd_rows_leave_perturbation_fields_empty() {
        let mut acc = EpochAccumulator::default();
        acc.push(&step(1.0, None));
        let csv = telemetry_to_csv(&[acc.finish(0, 0.5, 1.0, 0.1)]);
        assert_eq!(csv.lines().nth(1).unwrap(), "0,1,0.5,,,,0.75,1,0.1");
    }

    #[test]
    fn malformed_rows_report_line() {
        let head = TELEMETRY_COLUMNS.join(",");
        let text = format!("{head}\n0,1,1,,,,1,1,0.1\n1,x,1,,,,1,1,0.1\n");
        assert_eq!(parse_telemetry(&text).unwrap_err().0, 3);
        let text = format!("{head}\n0,1,1\n");
        assert_eq!(parse_telemetry(&text).unwrap_err().0, 2);
        assert_eq!(parse_telemetry("a,b\n").unwrap_err().0, 1);
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            rows in prop::collection::vec(
                (any::<f64>().prop_filter("finite", |v| v.is_finite()),
                 prop::option::of(-1e6f64..1e6), 0.0f64..1.0),
                1..20)
        ) {
            let records: Vec<TelemetryRecord> = rows.iter().enumerate().map(|(i, (a, p, acc))| TelemetryRecord {
                epoch: i,
                train_loss: *a,
                val_loss: a / 3.0,
                perturb_loss: *p,
                perturb_grad_norm: p.map(|v| v.abs()),
                perturb_distance: *p,
                train_acc: *acc,
                val_acc: 1.0 - acc,
                lr: 0.1,
            }).collect();
            let back = parse_telemetry(&telemetry_to_csv(&records)).unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
