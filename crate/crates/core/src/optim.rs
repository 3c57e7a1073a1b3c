//! The two-pass sharpness-aware step, its perturbation strategies, the SGD
//! base update and the step learning-rate schedule.
//!
//! One [`sam_step`] runs, in order:
//!
//! 1. forward/backward of the strategy's perturbation loss at `w` (one-hot
//!    cross-entropy for [`PerturbKind::SamCeNorm`], AACE with freshly
//!    detached targets for the AACE kinds);
//! 2. `ε = gen_epsilon(g)`, snapshot `w`, move to `w + ε`;
//! 3. forward/backward of the training cross-entropy at `w + ε`;
//! 4. restore `w` from the snapshot (copy, not subtraction);
//! 5. SGD update of `w` with the gradient from step 3.
//!
//! With [`PerturbKind::None`] only the training pass and the update run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::loss::{batch_loss, batch_targets, TargetKind};
use crate::model::{Mlp, ParamVector};

/// Gradient norms below this skip normalized perturbations.
pub const ZERO_GRAD_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerturbKind {
    /// Plain SGD, no perturbation.
    None,
    /// `ε = ρ ∇L_CE / ‖∇L_CE‖`
    SamCeNorm,
    /// `ε = −ρ ∇L_AACE / ‖∇L_AACE‖`
    AaceNorm,
    /// `ε = −ρ ∇L_AACE`
    AaceRaw,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 4] = [
        PerturbKind::None,
        PerturbKind::SamCeNorm,
        PerturbKind::AaceNorm,
        PerturbKind::AaceRaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::None => "NONE",
            PerturbKind::SamCeNorm => "SAM_CE_NORM",
            PerturbKind::AaceNorm => "AACE_NORM",
            PerturbKind::AaceRaw => "AACE_RAW",
        }
    }

    /// ρ used when none is configured: 0.05 for CE-SAM, 0.2 for the AACE kinds.
    pub fn default_rho(self) -> Option<f64> {
        match self {
            PerturbKind::None => None,
            PerturbKind::SamCeNorm => Some(0.05),
            PerturbKind::AaceNorm | PerturbKind::AaceRaw => Some(0.2),
        }
    }

    pub fn is_normalized(self) -> bool {
        matches!(self, PerturbKind::SamCeNorm | PerturbKind::AaceNorm)
    }

    /// Loss whose gradient drives the perturbation.
    pub fn perturbation_loss(self) -> Option<TargetKind> {
        match self {
            PerturbKind::None => None,
            PerturbKind::SamCeNorm => Some(TargetKind::Ce),
            PerturbKind::AaceNorm | PerturbKind::AaceRaw => Some(TargetKind::Aace),
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbKind {
    type Err = String;

    /// Accepts the canonical names and the short aliases `sgd`, `sam`, `aace`
    /// (`aace` is the unnormalized variant).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "sgd" => Ok(PerturbKind::None),
            "sam_ce_norm" | "sam" => Ok(PerturbKind::SamCeNorm),
            "aace_norm" => Ok(PerturbKind::AaceNorm),
            "aace_raw" | "aace" => Ok(PerturbKind::AaceRaw),
            other => Err(format!(
                "unknown optimizer kind `{other}` (expected sgd, sam, aace, aace_norm or aace_raw)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbStrategy {
    kind: PerturbKind,
    rho: f64,
}

impl PerturbStrategy {
    /// `rho` must be positive and finite unless `kind` is `None`, where it is ignored.
    pub fn new(kind: PerturbKind, rho: f64) -> Result<Self> {
        if kind != PerturbKind::None && !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Config(vec![format!(
                "rho must be positive for {kind}, got {rho}"
            )]));
        }
        Ok(Self { kind, rho })
    }

    pub fn with_default_rho(kind: PerturbKind) -> Self {
        Self {
            kind,
            rho: kind.default_rho().unwrap_or(0.0),
        }
    }

    pub fn sgd() -> Self {
        Self::with_default_rho(PerturbKind::None)
    }

    pub fn kind(&self) -> PerturbKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// A constant weight offset with the strategy that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub eps: Vec<f64>,
    pub kind: PerturbKind,
    /// `‖ε‖₂`
    pub norm: f64,
    /// The zero-gradient guard fired and `ε = 0`.
    pub skipped: bool,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Builds `ε` from the gradient of the strategy's perturbation loss.
pub fn gen_epsilon(strategy: &PerturbStrategy, grad: &[f64]) -> Result<Perturbation> {
    let kind = strategy.kind;
    let rho = strategy.rho;
    let gnorm = l2_norm(grad);
    let (eps, skipped) = match kind {
        PerturbKind::None => return Err(Error::NoPerturbation),
        _ if kind.is_normalized() && gnorm < ZERO_GRAD_THRESHOLD => (vec![0.0; grad.len()], true),
        PerturbKind::SamCeNorm => (grad.iter().map(|g| rho * g / gnorm).collect(), false),
        PerturbKind::AaceNorm => (grad.iter().map(|g| -rho * g / gnorm).collect(), false),
        PerturbKind::AaceRaw => (grad.iter().map(|g| -rho * g).collect(), false),
    };
    let norm = l2_norm(&eps);
    Ok(Perturbation {
        eps,
        kind,
        norm,
        skipped,
    })
}

/// SGD with heavy-ball momentum and coupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

impl Default for SgdState {
    fn default() -> Self {
        Self::new(0.1, 0.9, 0.0005)
    }
}

/// `g' = g + wd·w; v ← μ·v + g'; w ← w − η·v`, using the gradients stored in `params`.
pub fn sgd_update(params: &mut ParamVector, state: &mut SgdState) -> Result<()> {
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    // fail before touching anything
    for p in params.iter() {
        if p.grad().is_none() {
            return Err(Error::MissingGrad(p.name().to_string()));
        }
    }
    for (p, v) in params.params_mut().iter_mut().zip(&mut state.velocity) {
        let g = p.grad().unwrap().to_vec();
        for ((w, vel), g) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
            let g = g + state.weight_decay * *w;
            *vel = state.momentum * *vel + g;
            *w -= state.lr * *vel;
        }
    }
    Ok(())
}

/// `base · 0.2^k`, where `k` counts the drop points `⌈0.3·total⌉`,
/// `⌈0.6·total⌉`, `⌈0.8·total⌉` already reached by `epoch`.
pub fn lr_at(epoch: usize, total_epochs: usize, base_lr: f64) -> f64 {
    let drops = [3, 6, 8]
        .iter()
        .filter(|&&tenths| epoch >= (tenths * total_epochs).div_ceil(10))
        .count();
    base_lr * 0.2f64.powi(drops as i32)
}

/// What one step measured.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTelemetry {
    /// Perturbation loss at `w` (absent for plain SGD).
    pub perturb_loss: Option<f64>,
    /// `‖∇ perturbation loss‖₂` at `w`.
    pub perturb_grad_norm: Option<f64>,
    /// `‖ε‖₂`.
    pub perturb_distance: Option<f64>,
    /// Training cross-entropy at the point the update gradient was taken
    /// (`w + ε`, or `w` for plain SGD).
    pub train_loss: f64,
    /// Correct predictions at `w`, out of `samples`.
    pub correct: usize,
    pub samples: usize,
    /// The offset applied, for callers that want to inspect it.
    pub perturbation: Option<Perturbation>,
    /// Gradient of the perturbation loss at `w`.
    pub perturb_grad: Option<Vec<f64>>,
}

impl StepTelemetry {
    pub fn skipped(&self) -> bool {
        self.perturbation.as_ref().is_some_and(|p| p.skipped)
    }
}

fn count_correct(logits: &crate::autodiff::Array, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax(logits.row(r)) == label)
        .count()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Forward + backward of `kind`'s cross-entropy at the model's current
/// weights. Leaves the gradient in `model.params` and returns the loss and
/// the logits.
fn loss_and_grad(
    model: &mut Mlp,
    batch: &Batch,
    kind: TargetKind,
    what: &str,
) -> Result<(f64, crate::autodiff::Array)> {
    let mut f = model.forward(&batch.features)?;
    let targets = batch_targets(&mut f.tape, f.logits, &batch.labels, kind)?;
    let loss = batch_loss(&mut f.tape, f.logits, &targets)?;
    let value = f.tape.data(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: what.to_string(),
        });
    }
    f.tape.backward(loss)?;
    model.params.reset_grads();
    model.params.accumulate_grads(&f.tape, &f.leaves);
    Ok((value, f.tape.data(f.logits).clone()))
}

pub fn sam_step(
    model: &mut Mlp,
    batch: &Batch,
    strategy: &PerturbStrategy,
    sgd: &mut SgdState,
) -> Result<StepTelemetry> {
    if batch.labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let samples = batch.labels.len();
    let Some(perturb_target) = strategy.kind.perturbation_loss() else {
        let (train_loss, logits) = loss_and_grad(model, batch, TargetKind::Ce, "training loss")?;
        sgd_update(&mut model.params, sgd)?;
        return Ok(StepTelemetry {
            perturb_loss: None,
            perturb_grad_norm: None,
            perturb_distance: None,
            train_loss,
            correct: count_correct(&logits, &batch.labels),
            samples,
            perturbation: None,
            perturb_grad: None,
        });
    };

    let (perturb_loss, logits) = loss_and_grad(model, batch, perturb_target, "perturbation loss")?;
    let grad = model.params.grad_flat()?;
    let eps = gen_epsilon(strategy, &grad)?;

    let snapshot = model.params.snapshot();
    model.params.apply_offset(&eps.eps)?;
    let trained = loss_and_grad(
        model,
        batch,
        TargetKind::Ce,
        "training loss at the perturbed point",
    );
    model.params.restore(&snapshot);
    let (train_loss, _) = trained?;

    sgd_update(&mut model.params, sgd)?;

    Ok(StepTelemetry {
        perturb_loss: Some(perturb_loss),
        perturb_grad_norm: Some(l2_norm(&grad)),
        perturb_distance: Some(eps.norm),
        train_loss,
        correct: count_correct(&logits, &batch.labels),
        samples,
        perturbation: Some(eps),
        perturb_grad: Some(grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Array;
    use crate::model::MlpSpec;

    fn strat(kind: PerturbKind, rho: f64) -> PerturbStrategy {
        PerturbStrategy::new(kind, rho).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        let e = gen_epsilon(&strat(PerturbKind::SamCeNorm, 0.05), &[3.0, 4.0]).unwrap();
        assert!((e.eps[0] - 0.03).abs() < 1e-15 && (e.eps[1] - 0.04).abs() < 1e-15);
        assert!((e.norm - 0.05).abs() < 1e-15);
        assert!(!e.skipped);

        let e = gen_epsilon(&strat(PerturbKind::AaceRaw, 0.2), &[3.0, 4.0]).unwrap();
        assert!((e.eps[0] + 0.6).abs() < 1e-15 && (e.eps[1] + 0.8).abs() < 1e-15);
        assert!((e.norm - 1.0).abs() < 1e-15);

        let e = gen_epsilon(&strat(PerturbKind::AaceNorm, 0.5), &[3.0, 4.0]).unwrap();
        assert!((e.eps[0] + 0.3).abs() < 1e-15 && (e.eps[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_guard() {
        let e = gen_epsilon(&strat(PerturbKind::SamCeNorm, 0.05), &[0.0, 0.0]).unwrap();
        assert!(e.skipped);
        assert_eq!(e.eps, vec![0.0, 0.0]);
        assert_eq!(e.norm, 0.0);

        // the raw kind has no guard
        let e = gen_epsilon(&strat(PerturbKind::AaceRaw, 0.2), &[1e-14, 0.0]).unwrap();
        assert!(!e.skipped);
        assert_eq!(e.eps[0], -0.2 * 1e-14);
    }

    #[test]
    fn none_kind_has_no_epsilon() {
        assert!(matches!(
            gen_epsilon(&PerturbStrategy::sgd(), &[1.0]),
            Err(Error::NoPerturbation)
        ));
    }

    #[test]
    fn rho_must_be_positive() {
        assert!(PerturbStrategy::new(PerturbKind::AaceRaw, 0.0).is_err());
        assert!(PerturbStrategy::new(PerturbKind::SamCeNorm, -1.0).is_err());
        assert!(PerturbStrategy::new(PerturbKind::None, 0.0).is_ok());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("sgd".parse(), Ok(PerturbKind::None));
        assert_eq!("sam".parse(), Ok(PerturbKind::SamCeNorm));
        assert_eq!("aace".parse(), Ok(PerturbKind::AaceRaw));
        assert_eq!("AACE_NORM".parse(), Ok(PerturbKind::AaceNorm));
        assert!("adam".parse::<PerturbKind>().is_err());
        for k in PerturbKind::ALL {
            assert_eq!(k.name().parse(), Ok(k));
        }
    }

    fn one_param(w: f64, g: f64) -> ParamVector {
        let mut p = ParamVector::new();
        p.push("w", vec![1], vec![w]);
        p.set_grads(&[g]).unwrap();
        p
    }

    #[test]
    fn sgd_plain_step() {
        let mut p = one_param(1.0, 2.0);
        sgd_update(&mut p, &mut SgdState::new(0.1, 0.0, 0.0)).unwrap();
        assert!((p.flatten()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_decay_only() {
        let mut p = one_param(1.0, 0.0);
        sgd_update(&mut p, &mut SgdState::new(0.1, 0.0, 0.0005)).unwrap();
        assert!((p.flatten()[0] - 0.99995).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_recurrence() {
        let mut p = one_param(0.0, 1.5);
        let mut s = SgdState::new(0.01, 0.9, 0.0);
        sgd_update(&mut p, &mut s).unwrap();
        sgd_update(&mut p, &mut s).unwrap();
        assert!((s.velocity()[0][0] - 1.9 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn sgd_requires_gradients() {
        let mut p = one_param(1.0, 1.0);
        p.reset_grads();
        assert!(matches!(
            sgd_update(&mut p, &mut SgdState::default()),
            Err(Error::MissingGrad(_))
        ));
        assert_eq!(p.flatten(), vec![1.0]);
    }

    #[test]
    fn lr_schedule() {
        assert_eq!(lr_at(0, 200, 0.1), 0.1);
        assert_eq!(lr_at(59, 200, 0.1), 0.1);
        assert!((lr_at(60, 200, 0.1) - 0.02).abs() < 1e-17);
        assert!((lr_at(120, 200, 0.1) - 0.004).abs() < 1e-17);
        assert!((lr_at(160, 200, 0.1) - 8e-4).abs() < 1e-17);
        assert!((lr_at(199, 200, 0.1) - 8e-4).abs() < 1e-17);
        // ⌈0.3·7⌉ = 3
        assert_eq!(lr_at(2, 7, 1.0), 1.0);
        assert_eq!(lr_at(3, 7, 1.0), 0.2);
        assert_eq!(lr_at(0, 1, 1.0), 1.0);
    }

    fn toy() -> (Mlp, Batch) {
        let model = Mlp::new(MlpSpec::new(2, vec![6], 3, 11)).unwrap();
        let batch = Batch {
            features: Array::from_rows(&[[0.5, -0.2], [-1.0, 0.8], [0.3, 0.9], [1.2, 1.1]]),
            labels: vec![0, 1, 2, 1],
        };
        (model, batch)
    }

    #[test]
    fn update_happens_at_the_restored_point() {
        let (mut model, batch) = toy();
        let w0 = model.params.flatten();
        let strategy = strat(PerturbKind::AaceRaw, 0.2);
        let mut sgd = SgdState::new(0.1, 0.0, 0.0);
        let tel = sam_step(&mut model, &batch, &strategy, &mut sgd).unwrap();

        // recompute the update gradient at w0 + ε independently
        let eps = tel.perturbation.unwrap().eps;
        let mut probe = model.clone();
        let shifted: Vec<f64> = w0.iter().zip(&eps).map(|(w, e)| w + e).collect();
        probe.params.unflatten(&shifted).unwrap();
        let (_, _) = loss_and_grad(&mut probe, &batch, TargetKind::Ce, "probe").unwrap();
        let g = probe.params.grad_flat().unwrap();
        let expected: Vec<f64> = w0.iter().zip(&g).map(|(w, g)| w - 0.1 * g).collect();
        assert_eq!(model.params.flatten(), expected);
    }

    #[test]
    fn tiny_rho_approaches_plain_gradient() {
        let (model, batch) = toy();
        let grad_after = |rho: Option<f64>| {
            let mut m = model.clone();
            match rho {
                None => {
                    loss_and_grad(&mut m, &batch, TargetKind::Ce, "g").unwrap();
                    m.params.grad_flat().unwrap()
                }
                Some(rho) => {
                    let mut sgd = SgdState::new(1.0, 0.0, 0.0);
                    let w0 = m.params.flatten();
                    sam_step(
                        &mut m,
                        &batch,
                        &strat(PerturbKind::SamCeNorm, rho),
                        &mut sgd,
                    )
                    .unwrap();
                    w0.iter()
                        .zip(m.params.flatten())
                        .map(|(a, b)| a - b)
                        .collect()
                }
            }
        };
        let plain = grad_after(None);
        let sam = grad_after(Some(1e-8));
        for (a, b) in plain.iter().zip(&sam) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn perturbation_telemetry() {
        let (mut model, batch) = toy();
        let mut sgd = SgdState::default();
        let tel = sam_step(
            &mut model,
            &batch,
            &strat(PerturbKind::SamCeNorm, 0.05),
            &mut sgd,
        )
        .unwrap();
        assert!((tel.perturb_distance.unwrap() - 0.05).abs() <= 0.05 * 1e-12);
        assert!(tel.perturb_loss.unwrap() > 0.0);
        assert_eq!(tel.samples, 4);

        let tel = sam_step(&mut model, &batch, &PerturbStrategy::sgd(), &mut sgd).unwrap();
        assert!(tel.perturb_loss.is_none() && tel.perturbation.is_none());
    }

    #[test]
    fn velocity_tracks_only_real_updates() {
        let (mut model, batch) = toy();
        let w0 = model.params.flatten();
        let mut sgd = SgdState::new(0.1, 0.9, 0.0);
        let tel = sam_step(
            &mut model,
            &batch,
            &strat(PerturbKind::AaceRaw, 0.2),
            &mut sgd,
        )
        .unwrap();

        // after one step from zero velocity, v is the gradient at w + ε
        let mut probe = model.clone();
        probe.params.unflatten(&w0).unwrap();
        probe
            .params
            .apply_offset(&tel.perturbation.unwrap().eps)
            .unwrap();
        loss_and_grad(&mut probe, &batch, TargetKind::Ce, "g").unwrap();
        assert_eq!(sgd.velocity().concat(), probe.params.grad_flat().unwrap());
    }
}
