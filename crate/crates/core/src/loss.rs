//! Softmax probabilities, one-hot cross-entropy, and the adaptive adversarial
//! cross-entropy (AACE) used to generate perturbations.
//!
//! AACE keeps the cross-entropy form `−Σ τᵢ log qᵢ` but swaps the one-hot
//! target for an adversarial one: zero on the true class, and the model's own
//! (detached) negative-class probabilities renormalized to sum to one. As the
//! model grows confident the gap between `q` and `τ` widens, so both the loss
//! and its logit gradient `q − τ` grow instead of vanishing.

use crate::autodiff::{log_softmax_row, Array, Tape, VarId};
use crate::error::{Error, Result};

/// Floor on the negative-class mass when building AACE targets.
pub const AACE_DENOM_FLOOR: f64 = 1e-12;

/// Predicted class probabilities for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::InvalidProbabilities(format!("{} classes", q.len())));
        }
        if q.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidProbabilities(format!("{q:?}")));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbabilities(format!("sums to {total}")));
        }
        Ok(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }
}

/// `qᵢ = exp(zᵢ − m) / Σⱼ exp(zⱼ − m)`, `m = max z`.
pub fn softmax_probs(z: &[f64]) -> ProbVector {
    ProbVector(log_softmax_row(z).into_iter().map(f64::exp).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TargetKind {
    Ce,
    Aace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetVector {
    tau: Vec<f64>,
    kind: TargetKind,
    true_class: usize,
}

impl TargetVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.tau
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn true_class(&self) -> usize {
        self.true_class
    }
}

fn check_class(t: usize, k: usize) -> Result<()> {
    if t >= k {
        return Err(Error::ClassOutOfRange {
            index: t,
            classes: k,
        });
    }
    Ok(())
}

/// One-hot target at `t`.
pub fn ce_targets(t: usize, k: usize) -> Result<TargetVector> {
    check_class(t, k)?;
    let mut tau = vec![0.0; k];
    tau[t] = 1.0;
    Ok(TargetVector {
        tau,
        kind: TargetKind::Ce,
        true_class: t,
    })
}

/// Adversarial target: `τ_t = 0`, `τᵢ = qᵢ / Σ_{j≠t} qⱼ` otherwise.
///
/// `q` must already be detached from any graph; the result is plain data.
/// When the negative mass falls below [`AACE_DENOM_FLOOR`] the denominator is
/// clamped and the result renormalized, and if every negative probability is
/// exactly zero the target is uniform over the negative classes.
pub fn aace_targets(q: &ProbVector, t: usize) -> Result<TargetVector> {
    let k = q.classes();
    check_class(t, k)?;
    let q = q.as_slice();
    let negative: f64 = q
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != t)
        .map(|(_, v)| v)
        .sum();
    let mut tau: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == t {
                0.0
            } else {
                v / negative.max(AACE_DENOM_FLOOR)
            }
        })
        .collect();
    if negative < AACE_DENOM_FLOOR {
        let mass: f64 = tau.iter().sum();
        if mass > 0.0 {
            tau.iter_mut().for_each(|v| *v /= mass);
        } else {
            let share = 1.0 / (k - 1) as f64;
            for (i, v) in tau.iter_mut().enumerate() {
                *v = if i == t { 0.0 } else { share };
            }
        }
    }
    Ok(TargetVector {
        tau,
        kind: TargetKind::Aace,
        true_class: t,
    })
}

/// `−Σᵢ τᵢ · logpᵢ` for a single row of log-probabilities; `τ` is a constant.
pub fn cross_entropy(tape: &mut Tape, logp: VarId, tau: &TargetVector) -> Result<VarId> {
    let shape = tape.data(logp).shape().to_vec();
    let weights = Array::new(shape, tau.tau.clone()).map_err(|_| Error::ShapeMismatch {
        op: "cross_entropy",
        left: tape.data(logp).shape().to_vec(),
        right: vec![tau.tau.len()],
    })?;
    let picked = tape.gather_class(logp, weights)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0))
}

/// Mean cross-entropy over a batch of logits `n × K`.
pub fn batch_loss(tape: &mut Tape, logits: VarId, targets: &[TargetVector]) -> Result<VarId> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let shape = tape.data(logits).shape().to_vec();
    let (rows, cols) = tape.data(logits).as_matrix();
    if rows != targets.len() || targets.iter().any(|t| t.tau.len() != cols) {
        return Err(Error::ShapeMismatch {
            op: "batch_loss",
            left: shape,
            right: vec![targets.len(), targets[0].tau.len()],
        });
    }
    let mut weights = Vec::with_capacity(rows * cols);
    for t in targets {
        weights.extend_from_slice(&t.tau);
    }
    let logp = tape.log_softmax(logits)?;
    let picked = tape.gather_class(logp, Array::new(shape, weights)?)?;
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -1.0))
}

/// Analytic logit gradient `q − τ` of cross-entropy with a constant target.
pub fn logit_grad_oracle(q: &ProbVector, tau: &TargetVector) -> Vec<f64> {
    q.0.iter().zip(&tau.tau).map(|(a, b)| a - b).collect()
}

/// Targets for a whole batch. AACE targets are built from probabilities of
/// a stop-gradded copy of `logits`, so they carry no gradient.
pub fn batch_targets(
    tape: &mut Tape,
    logits: VarId,
    labels: &[usize],
    kind: TargetKind,
) -> Result<Vec<TargetVector>> {
    let (rows, cols) = tape.data(logits).as_matrix();
    if rows != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "batch_targets",
            left: tape.data(logits).shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    match kind {
        TargetKind::Ce => labels.iter().map(|&t| ce_targets(t, cols)).collect(),
        TargetKind::Aace => {
            let frozen = tape.stop_grad(logits);
            let z = tape.data(frozen);
            (0..rows)
                .map(|r| aace_targets(&softmax_probs(z.row(r)), labels[r]))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn q(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn loss_from_logp(logp: &[f64], tau: &TargetVector) -> f64 {
        let mut t = Tape::new();
        let lp = t.constant(Array::vector(logp.to_vec()));
        let l = cross_entropy(&mut t, lp, tau).unwrap();
        t.data(l).data()[0]
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_probs(&[0.0, 0.0, 0.0]);
        assert!(p.as_slice().iter().all(|&v| close(v, 1.0 / 3.0, 1e-15)));

        let p = softmax_probs(&[1000.0, 0.0]);
        assert_eq!(p.as_slice()[0], 1.0);
        assert!(p.as_slice()[1] >= 0.0 && p.as_slice()[1] < 1e-300);

        let p = softmax_probs(&[std::f64::consts::LN_2, 0.0]);
        assert!(close(p.as_slice()[0], 2.0 / 3.0, 1e-15));
        assert!(close(p.as_slice()[1], 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn one_hot_targets() {
        assert_eq!(ce_targets(2, 4).unwrap().as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ce_targets(0, 2).unwrap().as_slice(), &[1.0, 0.0]);
        for k in 2..8 {
            for t in 0..k {
                assert_eq!(
                    ce_targets(t, k).unwrap().as_slice().iter().sum::<f64>(),
                    1.0
                );
            }
        }
        assert!(matches!(
            ce_targets(4, 4),
            Err(Error::ClassOutOfRange {
                index: 4,
                classes: 4
            })
        ));
    }

    #[test]
    fn aace_worked_example() {
        let tau = aace_targets(&q(&[0.8, 0.15, 0.05]), 0).unwrap();
        assert_eq!(tau.kind(), TargetKind::Aace);
        assert_eq!(tau.as_slice()[0], 0.0);
        assert!(close(tau.as_slice()[1], 0.75, 1e-15));
        assert!(close(tau.as_slice()[2], 0.25, 1e-15));
    }

    #[test]
    fn aace_uniform_input() {
        for k in [2usize, 3, 10] {
            for t in 0..k {
                let tau = aace_targets(&q(&vec![1.0 / k as f64; k]), t).unwrap();
                for (i, &v) in tau.as_slice().iter().enumerate() {
                    let want = if i == t { 0.0 } else { 1.0 / (k - 1) as f64 };
                    assert!(close(v, want, 1e-15));
                }
            }
        }
    }

    #[test]
    fn aace_clamp_path() {
        let tau = aace_targets(&q(&[1.0 - 1e-15, 7e-16, 3e-16]), 0).unwrap();
        assert!(tau.as_slice().iter().all(|v| v.is_finite()));
        let s: f64 = tau.as_slice()[1..].iter().sum();
        assert!(close(s, 1.0, 1e-12));
        assert!(close(tau.as_slice()[1], 0.7, 1e-12));

        // all negative mass exactly zero
        let tau = aace_targets(&q(&[0.0, 1.0, 0.0, 0.0]), 1).unwrap();
        assert_eq!(tau.as_slice(), &[1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let k = 10;
        let logp = vec![-(k as f64).ln(); k];
        assert!(close(
            loss_from_logp(&logp, &ce_targets(3, k).unwrap()),
            10f64.ln(),
            1e-12
        ));

        let tau = aace_targets(&q(&[0.9, 0.1]), 0).unwrap();
        assert_eq!(tau.as_slice(), &[0.0, 1.0]);
        let l = loss_from_logp(&[0.9f64.ln(), 0.1f64.ln()], &tau);
        assert!(close(l, 10f64.ln(), 1e-12));

        let probs = [0.8, 0.15, 0.05];
        let tau = aace_targets(&q(&probs), 0).unwrap();
        let l = loss_from_logp(&probs.map(f64::ln), &tau);
        assert!(close(l, 2.1717730570529086, 1e-12));
    }

    #[test]
    fn batch_loss_is_mean() {
        let z = Array::from_rows(&[[0.2, -1.0, 0.5], [1.0, 0.0, -0.3]]);
        let labels = [2usize, 0];

        let per_sample: Vec<f64> = (0..2)
            .map(|r| {
                let lp = log_softmax_row(z.row(r));
                -lp[labels[r]]
            })
            .collect();

        let mut t = Tape::new();
        let zv = t.constant(z.clone());
        let targets = batch_targets(&mut t, zv, &labels, TargetKind::Ce).unwrap();
        let l = batch_loss(&mut t, zv, &targets).unwrap();
        let mean = (per_sample[0] + per_sample[1]) / 2.0;
        assert!(close(t.data(l).data()[0], mean, 1e-12));

        // batch of one and duplicated batch agree
        let one = Array::from_rows(&[z.row(0)]);
        let two = Array::from_rows(&[z.row(0), z.row(0)]);
        let value = |x: Array, n: usize| {
            let mut t = Tape::new();
            let v = t.constant(x);
            let tg = vec![ce_targets(2, 3).unwrap(); n];
            let l = batch_loss(&mut t, v, &tg).unwrap();
            t.data(l).data()[0]
        };
        assert!(close(value(one, 1), per_sample[0], 1e-15));
        assert!(close(value(two, 2), per_sample[0], 1e-15));
    }

    #[test]
    fn empty_batch_rejected() {
        let mut t = Tape::new();
        let z = t.constant(Array::zeros(&[0, 3]));
        assert!(matches!(batch_loss(&mut t, z, &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn oracle_examples() {
        let tau = aace_targets(&q(&[0.9, 0.1]), 0).unwrap();
        let g = logit_grad_oracle(&q(&[0.9, 0.1]), &tau);
        assert!(close(g[0], 0.9, 1e-15) && close(g[1], -0.9, 1e-15));

        let g = logit_grad_oracle(&q(&[0.0, 1.0]), &ce_targets(1, 2).unwrap());
        assert_eq!(g, vec![0.0, 0.0]);

        let third = 1.0 / 3.0;
        let g = logit_grad_oracle(&q(&[third; 3]), &ce_targets(0, 3).unwrap());
        assert!(close(g[0], -2.0 / 3.0, 1e-15));
        assert!(close(g[1], third, 1e-15) && close(g[2], third, 1e-15));
    }

    #[test]
    fn aace_targets_carry_no_gradient() {
        let mut t = Tape::new();
        let z = t.param(Array::from_rows(&[[2.0, 0.5, -1.0]]));
        let targets = batch_targets(&mut t, z, &[0], TargetKind::Aace).unwrap();
        let l = batch_loss(&mut t, z, &targets).unwrap();
        t.backward(l).unwrap();
        let p = softmax_probs(&[2.0, 0.5, -1.0]);
        let want = logit_grad_oracle(&p, &targets[0]);
        for (a, b) in t.grad(z).unwrap().data().iter().zip(&want) {
            assert!(close(*a, *b, 1e-14));
        }
        // true-class gradient equals q_t
        assert!(close(t.grad(z).unwrap().data()[0], p.as_slice()[0], 1e-14));
    }
}
