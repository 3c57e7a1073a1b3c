//! MLP classifier and the parameter registry the SAM step operates on.
//!
//! Parameters live outside any tape in a [`ParamVector`]. Each forward pass
//! binds them onto a fresh [`Tape`] as gradient-requiring leaves; after
//! `backward` the caller pulls the leaf gradients back with
//! [`ParamVector::accumulate_grads`].

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Tape, VarId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered, uniquely named parameter arrays. Registry order defines the
/// layout of every flat vector (`flatten`, `grad_flat`, offsets).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector {
    params: Vec<Param>,
}

/// Copy of every parameter's data, in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSnapshot(Vec<Vec<f64>>);

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on a duplicate name or a shape/data mismatch.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name `{name}`"
        );
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.push(Param {
            name,
            shape,
            data,
            grad: None,
        });
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Total scalar count `P`.
    pub fn count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for p in &self.params {
            out.extend_from_slice(&p.data);
        }
        out
    }

    /// Overwrites every parameter from a flat vector in registry order.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        self.check_len(flat.len())?;
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.data.len();
            p.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_len(&self, actual: usize) -> Result<()> {
        let expected = self.count();
        if expected != actual {
            return Err(Error::LengthMismatch { expected, actual });
        }
        Ok(())
    }

    /// Concatenated gradients in registry order. Fails if any parameter has
    /// no gradient (never ran backward, or grads were reset).
    pub fn grad_flat(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.count());
        for p in &self.params {
            let g = p
                .grad
                .as_ref()
                .ok_or_else(|| Error::MissingGrad(p.name.clone()))?;
            out.extend_from_slice(g);
        }
        Ok(out)
    }

    pub fn reset_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Sets gradients directly, registry order. Mostly useful in tests.
    pub fn set_grads(&mut self, flat: &[f64]) -> Result<()> {
        self.check_len(flat.len())?;
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.data.len();
            p.grad = Some(flat[offset..offset + n].to_vec());
            offset += n;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot(self.params.iter().map(|p| p.data.clone()).collect())
    }

    /// Copies the snapshot back, bit for bit.
    pub fn restore(&mut self, snap: &ParamSnapshot) {
        assert_eq!(
            snap.0.len(),
            self.params.len(),
            "snapshot from another registry"
        );
        for (p, s) in self.params.iter_mut().zip(&snap.0) {
            p.data.copy_from_slice(s);
        }
    }

    /// `w ← w + ε` with `ε` laid out in registry order.
    pub fn apply_offset(&mut self, eps: &[f64]) -> Result<()> {
        self.check_len(eps.len())?;
        let mut offset = 0;
        for p in &mut self.params {
            for (w, e) in p.data.iter_mut().zip(&eps[offset..]) {
                *w += e;
            }
            offset += p.data.len();
        }
        Ok(())
    }

    /// Records every parameter on `tape` as a gradient-requiring leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<VarId> {
        self.params
            .iter()
            .map(|p| tape.param(Array::new(p.shape.clone(), p.data.clone()).unwrap()))
            .collect()
    }

    /// Adds the tape gradients of `leaves` (from [`ParamVector::bind`]) into
    /// the parameter gradients. Leaves the tape never reached get zeros.
    pub fn accumulate_grads(&mut self, tape: &Tape, leaves: &[VarId]) {
        assert_eq!(leaves.len(), self.params.len());
        for (p, &id) in self.params.iter_mut().zip(leaves) {
            let g = p.grad.get_or_insert_with(|| vec![0.0; p.data.len()]);
            if let Some(tg) = tape.grad(id) {
                for (a, b) in g.iter_mut().zip(tg.data()) {
                    *a += b;
                }
            }
        }
    }

    /// Writes `<stem>.bin` (little-endian f64, registry order) and
    /// `<stem>.json` (list of name/shape entries).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let mut bytes = Vec::with_capacity(self.count() * 8);
        for v in self.flatten() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let layout: Vec<ParamEntry> = self
            .params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
            })
            .collect();
        let text = serde_json::to_string_pretty(&layout)?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let layout: Vec<ParamEntry> = serde_json::from_str(&text)?;
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format {
                path: bin,
                message: format!("length {} is not a multiple of 8", bytes.len()),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expected: usize = layout
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        if expected != values.len() {
            return Err(Error::Format {
                path: bin,
                message: format!(
                    "sidecar describes {expected} values, blob holds {}",
                    values.len()
                ),
            });
        }
        let mut out = ParamVector::new();
        let mut offset = 0;
        for entry in layout {
            let n: usize = entry.shape.iter().product();
            if out.get(&entry.name).is_some() {
                return Err(Error::Format {
                    path: json,
                    message: format!("duplicate parameter `{}`", entry.name),
                });
            }
            out.push(entry.name, entry.shape, values[offset..offset + n].to_vec());
            offset += n;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden,
            classes,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidSpec(
                "every layer width must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Layer widths from input to logits.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.classes);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// He-normal weights (`σ = √(2 / fan_in)`), zero biases. Weights of layer
/// `l` are named `layer{l}.weight` with shape `[fan_in, fan_out]`.
pub fn init_params(spec: &MlpSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut params = ParamVector::new();
    for (l, w) in spec.widths().windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        let weights = (0..fan_in * fan_out)
            .map(|_| normal.sample(&mut rng))
            .collect();
        params.push(format!("layer{l}.weight"), vec![fan_in, fan_out], weights);
        params.push(format!("layer{l}.bias"), vec![fan_out], vec![0.0; fan_out]);
    }
    Ok(params)
}

/// A fully connected ReLU network producing class logits.
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    pub params: ParamVector,
}

/// One forward pass: the tape, the bound parameter leaves, and the logits node.
pub struct Forward {
    pub tape: Tape,
    pub leaves: Vec<VarId>,
    pub logits: VarId,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        let params = init_params(&spec)?;
        Ok(Self { spec, params })
    }

    /// Wraps existing parameters; the registry must match the spec's layout.
    pub fn from_params(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        let reference = init_params(&spec)?;
        let layout = |p: &ParamVector| {
            p.iter()
                .map(|q| (q.name().to_string(), q.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        if layout(&reference) != layout(&params) {
            return Err(Error::InvalidSpec(
                "parameter layout does not match spec".into(),
            ));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Logits `n × K` for a batch `x` of shape `n × input_dim`.
    pub fn forward(&self, x: &Array) -> Result<Forward> {
        let mut tape = Tape::new();
        let leaves = self.params.bind(&mut tape);
        let logits = self.forward_on(&mut tape, &leaves, x)?;
        Ok(Forward {
            tape,
            leaves,
            logits,
        })
    }

    pub fn forward_on(&self, tape: &mut Tape, leaves: &[VarId], x: &Array) -> Result<VarId> {
        if x.shape().len() != 2 || x.shape()[1] != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: x.shape().to_vec(),
                right: vec![self.spec.input_dim],
            });
        }
        let layers = leaves.len() / 2;
        let mut h = tape.constant(x.clone());
        for l in 0..layers {
            let z = tape.matmul(h, leaves[2 * l])?;
            h = tape.add(z, leaves[2 * l + 1])?;
            if l + 1 < layers {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Forward pass without keeping a tape around.
    pub fn logits(&self, x: &Array) -> Result<Array> {
        let f = self.forward(x)?;
        Ok(f.tape.data(f.logits).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_grad;
    use proptest::prelude::*;

    fn spec() -> MlpSpec {
        MlpSpec::new(2, vec![8], 3, 7)
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(&spec()).unwrap(), init_params(&spec()).unwrap());
        let other = init_params(&MlpSpec::new(2, vec![8], 3, 8)).unwrap();
        assert_ne!(init_params(&spec()).unwrap(), other);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = init_params(&spec()).unwrap();
        for param in p.iter().filter(|p| p.name().ends_with("bias")) {
            assert!(param.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(spec().param_count(), 51);
        assert_eq!(init_params(&spec()).unwrap().count(), 51);
    }

    #[test]
    fn weight_scale_is_he() {
        let p = init_params(&MlpSpec::new(50, vec![400], 2, 1)).unwrap();
        let w = p.get("layer0.weight").unwrap().data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        // σ² = 2/50 = 0.04; 20000 samples
        assert!((var - 0.04).abs() < 0.003, "{var}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MlpSpec::new(2, vec![8], 1, 0).validate().is_err());
        assert!(MlpSpec::new(2, vec![0], 3, 0).validate().is_err());
        assert!(MlpSpec::new(0, vec![], 3, 0).validate().is_err());
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut m = Mlp::new(spec()).unwrap();
        for p in m.params.params_mut() {
            if p.name.ends_with("weight") {
                p.data.fill(0.0);
            }
        }
        m.params
            .get_mut("layer1.bias")
            .unwrap()
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 2.0]);
        let x = Array::from_rows(&[[1.0, 2.0], [3.0, -4.0], [0.0, 0.0], [9.0, 9.0]]);
        let z = m.logits(&x).unwrap();
        assert_eq!(z.shape(), &[4, 3]);
        for r in 0..4 {
            assert_eq!(z.row(r), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let m = Mlp::new(spec()).unwrap();
        let x = Array::from_rows(&[[1.0, 2.0, 3.0]]);
        assert!(matches!(
            m.logits(&x),
            Err(Error::ShapeMismatch { op: "forward", .. })
        ));
    }

    #[test]
    fn mean_logit_gradient_matches_finite_differences() {
        let m = Mlp::new(spec()).unwrap();
        let x = Array::from_rows(&[[0.3, -1.2], [1.5, 0.7], [-0.4, 0.9]]);
        let mut f = m.forward(&x).unwrap();
        let root = f.tape.mean(f.logits);
        f.tape.backward(root).unwrap();
        let mut params = m.params.clone();
        params.accumulate_grads(&f.tape, &f.leaves);
        let analytic = params.grad_flat().unwrap();

        let w0 = m.params.flatten();
        let numeric = finite_diff_grad(
            |w| {
                let mut probe = m.clone();
                probe.params.unflatten(w).unwrap();
                let z = probe.logits(&x).unwrap();
                z.data().iter().sum::<f64>() / z.len() as f64
            },
            &w0,
            1e-5,
        )
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() / a.abs().max(1.0) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn grad_flat_concatenates_in_order() {
        let mut p = ParamVector::new();
        p.push("a", vec![2], vec![0.0, 0.0]);
        p.push("b", vec![1], vec![0.0]);
        p.set_grads(&[1.0, 2.0, 3.0]).unwrap();
        let g = p.grad_flat().unwrap();
        assert_eq!(g, vec![1.0, 2.0, 3.0]);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_eq!(norm, 14f64.sqrt());
        p.reset_grads();
        assert!(matches!(p.grad_flat(), Err(Error::MissingGrad(name)) if name == "a"));
    }

    #[test]
    fn offsets_and_restore() {
        let mut p = init_params(&spec()).unwrap();
        let before = p.clone();
        let eps: Vec<f64> = (0..p.count())
            .map(|i| (i as f64 * 0.37).sin() * 0.1)
            .collect();

        p.apply_offset(&vec![0.0; p.count()]).unwrap();
        assert_eq!(p, before);

        p.apply_offset(&eps).unwrap();
        p.apply_offset(&eps).unwrap();
        for ((a, b), e) in p.flatten().iter().zip(before.flatten()).zip(&eps) {
            assert_eq!(*a, b + e + e);
        }

        let snap = before.snapshot();
        p.restore(&snap);
        assert_eq!(p, before);

        assert!(matches!(
            p.apply_offset(&[1.0]),
            Err(Error::LengthMismatch {
                expected: 51,
                actual: 1
            })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params(&spec()).unwrap();
        let stem = dir.path().join("params");
        p.save(&stem).unwrap();
        let bytes = std::fs::read(dir.path().join("params.bin")).unwrap();
        assert_eq!(bytes.len(), 51 * 8);
        assert_eq!(&bytes[..8], &p.flatten()[0].to_le_bytes());
        let q = ParamVector::load(&stem).unwrap();
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn flatten_round_trips_bit_exactly(
            vals in prop::collection::vec(any::<f64>(), 51),
            offsets in prop::collection::vec(-1e3f64..1e3, 1..5),
        ) {
            let mut p = init_params(&spec()).unwrap();
            p.unflatten(&vals).unwrap();
            let flat = p.flatten();
            prop_assert!(flat.iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));

            let snap = p.snapshot();
            for o in offsets {
                p.apply_offset(&vec![o; 51]).unwrap();
            }
            p.restore(&snap);
            prop_assert!(p.flatten().iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
