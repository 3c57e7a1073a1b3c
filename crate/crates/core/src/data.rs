//! Synthetic classification data, CSV ingestion, stratified splits and
//! mini-batching. Everything here is a pure function of its seed.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
    tag: SplitTag,
}

/// Features and labels of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Array,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// `features` is row-major `n × dim`.
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        classes: usize,
        tag: SplitTag,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSplit("dataset has no samples".into()));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::LengthMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::ClassOutOfRange {
                index: bad,
                classes,
            });
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                what: "feature value (NaN)".into(),
            });
        }
        Ok(Self {
            features,
            dim,
            labels,
            classes,
            tag,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn tag(&self) -> SplitTag {
        self.tag
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset holding the given rows, in order.
    pub fn subset(&self, indices: &[usize], tag: SplitTag) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            tag,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Batch {
            features: Array::new(vec![indices.len(), self.dim], data).unwrap(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Batch {
        Batch {
            features: Array::new(vec![self.len(), self.dim], self.features.clone()).unwrap(),
            labels: self.labels.clone(),
        }
    }
}

fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::InvalidSpec(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    Ok(())
}

/// Class means at pairwise distance 1. With `classes ≤ dim` they are the
/// scaled basis vectors `e_k / √2` (a regular simplex); otherwise they sit
/// evenly on a circle in the first two coordinates with adjacent means one
/// unit apart.
pub fn blob_means(classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| {
            let mut m = vec![0.0; dim];
            if classes <= dim {
                m[k] = std::f64::consts::FRAC_1_SQRT_2;
            } else {
                let radius = 0.5 / (std::f64::consts::PI / classes as f64).sin();
                let angle = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
            }
            m
        })
        .collect()
}

/// Isotropic Gaussian clusters around [`blob_means`] with standard deviation `spread`.
pub fn gen_blobs(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    check_classes(classes)?;
    if dim < 2 {
        return Err(Error::InvalidSpec(format!("blobs need dim ≥ 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = blob_means(classes, dim);
    let mut features = Vec::with_capacity(n_per_class * classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(m + spread * z);
            }
            labels.push(k);
        }
    }
    Dataset::new(features, dim, labels, classes, SplitTag::Train)
}

/// Radius at the start of every spiral arm.
pub const SPIRAL_INNER_RADIUS: f64 = 0.2;
/// Turns each arm makes.
pub const SPIRAL_TURNS: f64 = 1.5;

/// Noise-free point `i` of `n` on arm `k` of `classes`: radius
/// `0.2 + 0.8·i/n` (so every point lies strictly inside the unit disc),
/// angle `2πk/K + 2π·turns·i/n`.
pub fn spiral_point(k: usize, classes: usize, i: usize, n: usize, angle_noise: f64) -> [f64; 2] {
    let t = i as f64 / n as f64;
    let r = SPIRAL_INNER_RADIUS + (1.0 - SPIRAL_INNER_RADIUS) * t;
    let theta =
        2.0 * std::f64::consts::PI * (k as f64 / classes as f64 + SPIRAL_TURNS * t) + angle_noise;
    [r * theta.cos(), r * theta.sin()]
}

/// `classes` interleaved 2-D spiral arms. `noise` is the standard deviation
/// of a Gaussian perturbation of each point's angle, in radians.
pub fn gen_spirals(seed: u64, n_per_class: usize, classes: usize, noise: f64) -> Result<Dataset> {
    check_classes(classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n_per_class * classes * 2);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for k in 0..classes {
        for i in 0..n_per_class {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.extend(spiral_point(k, classes, i, n_per_class, noise * z));
            labels.push(k);
        }
    }
    Dataset::new(features, 2, labels, classes, SplitTag::Train)
}

/// Split sizes for `n` items by largest remainder.
fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &s in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[s] += 1;
        left -= 1;
    }
    sizes
}

/// Stratified, shuffled train/val/test partition.
///
/// Each class contributes `⌊f·n_c⌋` or one more sample to every split, and
/// the split sizes follow the fractions of the whole dataset by largest
/// remainder.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if fractions.iter().any(|f| f.is_nan() || *f <= 0.0) {
        return Err(Error::InvalidSplit(format!(
            "fractions must all be positive, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplit(format!(
            "fractions sum to {total}, not 1"
        )));
    }
    let targets = apportion(ds.len(), &fractions);
    if let Some(s) = targets.iter().position(|&t| t == 0) {
        return Err(Error::InvalidSplit(format!(
            "{} samples leave split {s} empty",
            ds.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
    }

    // floor quotas per class, then hand out each class's leftovers to the
    // splits still short of their target, at most one extra per split
    let mut quota: Vec<[usize; 3]> = by_class
        .iter()
        .map(|idx| {
            let n = idx.len() as f64;
            [0, 1, 2].map(|s| (fractions[s] * n).floor() as usize)
        })
        .collect();
    let mut deficit: Vec<isize> = (0..3)
        .map(|s| targets[s] as isize - quota.iter().map(|q| q[s] as isize).sum::<isize>())
        .collect();
    for (c, idx) in by_class.iter().enumerate() {
        let mut left = idx.len() - quota[c].iter().sum::<usize>();
        let mut used = [false; 3];
        while left > 0 {
            let pick = (0..3)
                .filter(|&s| !used[s])
                .max_by_key(|&s| (deficit[s], std::cmp::Reverse(s)))
                .or_else(|| (0..3).max_by_key(|&s| (deficit[s], std::cmp::Reverse(s))))
                .unwrap();
            used[pick] = true;
            quota[c][pick] += 1;
            deficit[pick] -= 1;
            left -= 1;
        }
    }

    let mut parts: [Vec<usize>; 3] = Default::default();
    for (c, idx) in by_class.iter().enumerate() {
        let mut offset = 0;
        for s in 0..3 {
            parts[s].extend_from_slice(&idx[offset..offset + quota[c][s]]);
            offset += quota[c][s];
        }
    }
    for (s, part) in parts.iter_mut().enumerate() {
        if part.is_empty() {
            return Err(Error::InvalidSplit(format!(
                "split {s} received no samples"
            )));
        }
        part.shuffle(&mut rng);
    }
    Ok((
        ds.subset(&parts[0], SplitTag::Train),
        ds.subset(&parts[1], SplitTag::Val),
        ds.subset(&parts[2], SplitTag::Test),
    ))
}

/// Per-feature affine map to zero mean and unit variance, fitted on one
/// dataset (the training split) and applied to any other.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len() as f64;
        let mut mean = vec![0.0; ds.dim];
        for i in 0..ds.len() {
            for (m, v) in mean.iter_mut().zip(ds.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; ds.dim];
        for i in 0..ds.len() {
            for ((s, v), m) in var.iter_mut().zip(ds.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        for row in out.features.chunks_mut(ds.dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Shuffled index batches for one epoch, seeded by `run_seed + epoch`. The
/// last batch may be short.
pub fn batches(ds: &Dataset, batch_size: usize, run_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed.wrapping_add(epoch as u64));
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Reads `f0,…,f{d-1},label` CSV. The class count is the largest label plus one.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(0, format!("{other:?}")),
        })?;

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(parse_err(1, "no data rows".into())),
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
    };
    let width = header.len();
    if width < 2 || header.get(width - 1) != Some("label") {
        return Err(parse_err(1, "header must be `f0,...,f{d-1},label`".into()));
    }
    let dim = width - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for (j, cell) in rec.iter().take(dim).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column f{j}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column f{j}: non-finite value")));
            }
            features.push(v);
        }
        let cell = rec.get(dim).unwrap();
        let label: i64 = cell
            .parse()
            .map_err(|_| parse_err(line, format!("label `{cell}` is not an integer")))?;
        if label < 0 {
            return Err(parse_err(line, format!("negative label {label}")));
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let classes = labels.iter().max().unwrap() + 1;
    Dataset::new(features, dim, labels, classes, SplitTag::Train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn zero_spread_blobs_sit_on_their_means() {
        let ds = gen_blobs(1, 5, 4, 3, 0.0).unwrap();
        let means = blob_means(4, 3);
        for i in 0..ds.len() {
            assert_eq!(ds.row(i), means[ds.labels()[i]].as_slice());
        }
        // nearest-mean classification is perfect
        for i in 0..ds.len() {
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let d = |k: usize| -> f64 {
                        ds.row(i)
                            .iter()
                            .zip(&means[k])
                            .map(|(x, m)| (x - m).powi(2))
                            .sum()
                    };
                    d(a).partial_cmp(&d(b)).unwrap()
                })
                .unwrap();
            assert_eq!(nearest, ds.labels()[i]);
        }
    }

    #[test]
    fn blob_means_are_unit_separated() {
        for (k, d) in [(3, 3), (3, 5), (6, 2), (5, 3)] {
            let m = blob_means(k, d);
            let dist = |a: &[f64], b: &[f64]| -> f64 {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let min = (0..k)
                .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| dist(&m[i], &m[j]))
                .fold(f64::INFINITY, f64::min);
            assert!((min - 1.0).abs() < 1e-12, "K={k} d={d}: {min}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            gen_blobs(9, 10, 3, 2, 0.3).unwrap(),
            gen_blobs(9, 10, 3, 2, 0.3).unwrap()
        );
        assert_ne!(
            gen_blobs(9, 10, 3, 2, 0.3).unwrap(),
            gen_blobs(8, 10, 3, 2, 0.3).unwrap()
        );
        assert_eq!(
            gen_spirals(4, 50, 3, 0.2).unwrap(),
            gen_spirals(4, 50, 3, 0.2).unwrap()
        );
    }

    #[test]
    fn label_histogram() {
        assert_eq!(
            gen_blobs(0, 7, 4, 2, 1.0).unwrap().class_counts(),
            vec![7; 4]
        );
        assert_eq!(
            gen_spirals(0, 9, 3, 0.1).unwrap().class_counts(),
            vec![9; 3]
        );
    }

    #[test]
    fn generator_preconditions() {
        assert!(gen_blobs(0, 5, 1, 2, 0.1).is_err());
        assert!(gen_blobs(0, 5, 2, 1, 0.1).is_err());
        assert!(gen_spirals(0, 5, 1, 0.1).is_err());
    }

    #[test]
    fn noiseless_spiral_arms_are_disjoint() {
        let n = 200;
        let ds = gen_spirals(3, n, 2, 0.0).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..n {
            for j in n..2 * n {
                let d: f64 = ds
                    .row(i)
                    .iter()
                    .zip(ds.row(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                min = min.min(d.sqrt());
            }
        }
        assert!(min > 0.0);
        // every sample is on the parametric curve at its own radius
        for i in 0..n {
            let r = ds.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - (0.2 + 0.8 * i as f64 / n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn spiral_features_bounded_by_unit_radius() {
        let ds = gen_spirals(5, 300, 3, 0.5).unwrap();
        assert!(ds.features().iter().all(|v| v.abs() < 1.0));
    }

    fn mixed(n_per_class: &[usize]) -> Dataset {
        let mut labels = Vec::new();
        for (k, &n) in n_per_class.iter().enumerate() {
            labels.extend(std::iter::repeat_n(k, n));
        }
        let features = (0..labels.len()).map(|i| i as f64).collect();
        Dataset::new(features, 1, labels, n_per_class.len(), SplitTag::Train).unwrap()
    }

    #[test]
    fn split_sizes_and_coverage() {
        let ds = mixed(&[50, 50]);
        let (tr, va, te) = split(&ds, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));
        let mut all: Vec<i64> = [&tr, &va, &te]
            .iter()
            .flat_map(|d| d.features().iter().map(|&v| v as i64))
            .collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(tr.tag(), SplitTag::Train);
        assert_eq!(te.tag(), SplitTag::Test);
    }

    #[test]
    fn split_rejects_empty_parts() {
        let ds = mixed(&[50, 50]);
        assert!(split(&ds, [1.0, 0.0, 0.0], 0).is_err());
        assert!(split(&ds, [0.5, 0.2, 0.2], 0).is_err());
        let tiny = mixed(&[1, 1]);
        assert!(matches!(
            split(&tiny, [0.8, 0.1, 0.1], 0),
            Err(Error::InvalidSplit(_))
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = gen_blobs(2, 33, 3, 2, 0.5).unwrap();
        let a = split(&ds, [0.7, 0.2, 0.1], 5).unwrap();
        let b = split(&ds, [0.7, 0.2, 0.1], 5).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn split_is_stratified(
            counts in prop::collection::vec(3usize..60, 2..6),
            a in 0.2f64..0.8,
            b in 0.3f64..0.7,
            seed in any::<u64>(),
        ) {
            let val = (1.0 - a) * b;
            let fr = [a, val, 1.0 - a - val];
            let ds = mixed(&counts);
            let Ok((tr, va, te)) = split(&ds, fr, seed) else { return Ok(()); };
            prop_assert_eq!(tr.len() + va.len() + te.len(), ds.len());
            for (s, part) in [tr, va, te].iter().enumerate() {
                for (c, &n) in part.class_counts().iter().enumerate() {
                    let want = fr[s] * counts[c] as f64;
                    prop_assert!((n as f64 - want).abs() <= 1.0 + 1e-9,
                        "split {} class {}: {} vs {}", s, c, n, want);
                }
            }
        }
    }

    #[test]
    fn batch_shapes() {
        let ds = mixed(&[5, 5]);
        let b = batches(&ds, 4, 0, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(batches(&ds, 4, 7, 3), batches(&ds, 4, 7, 3));
        assert_ne!(batches(&ds, 10, 7, 3), batches(&ds, 10, 7, 4));
        let batch = ds.batch(&b[0]);
        assert_eq!(batch.features.shape(), &[4, 1]);
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_loads() {
        let f = write("f0,f1,label\n0.5,1.0,0\n-2,3e-1,1\n1.5,2.5,1\n");
        let ds = load_csv(f.path()).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.classes()), (3, 2, 2));
        assert_eq!(ds.row(1), &[-2.0, 0.3]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let f = write("f0,f1,label\n0.5,1.0,0\n0.1,abc,1\n");
        let err = load_csv(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let f = write("f0,f1,label\n0.5,1.0,0\n0.1,1\n");
        assert!(matches!(
            load_csv(f.path()),
            Err(Error::Parse { line: 3, .. })
        ));

        let f = write("f0,f1,label\n0.5,1.0,-1\n");
        assert!(matches!(
            load_csv(f.path()),
            Err(Error::Parse { line: 2, .. })
        ));

        let f = write("");
        let err = load_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");

        let f = write("f0,label\n");
        assert!(load_csv(f.path())
            .unwrap_err()
            .to_string()
            .contains("no data rows"));
    }

    #[test]
    fn standardizer_uses_fit_statistics() {
        let ds = Dataset::new(
            vec![1.0, 10.0, 3.0, 10.0],
            2,
            vec![0, 1],
            2,
            SplitTag::Train,
        )
        .unwrap();
        let s = Standardizer::fit(&ds);
        let out = s.apply(&ds);
        assert_eq!(out.features(), &[-1.0, 0.0, 1.0, 0.0]);
    }
}
