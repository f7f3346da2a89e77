//! One-vs-rest linear classification over encodings.
//!
//! Each binary problem is an L2-regularized hinge loss minimized by
//! epoch-wise stochastic subgradient descent with step `1 / (reg * t)`.
//! The bias is treated as the weight of a constant feature.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::io::{read_feature_map, DatasetManifest, ManifestEntry};
use crate::matrix::RowMatrix;
use crate::scalar::{all_finite, dot, Real};

pub const DEFAULT_REG: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 50;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LrSchedule {
    /// `eta_t = 1 / (reg * t)`, t counting every sample visit from 1.
    #[default]
    InverseRegT,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainHyper {
    pub reg: f64,
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            reg: DEFAULT_REG,
            epochs: DEFAULT_EPOCHS,
            schedule: LrSchedule::InverseRegT,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<T> {
    weights: RowMatrix<T>,
    biases: Vec<T>,
    /// Training hyperparameters; not persisted, so `None` after loading.
    pub hyper: Option<TrainHyper>,
}

impl<T: Real> LinearModel<T> {
    pub fn from_parts(weights: RowMatrix<T>, biases: Vec<T>) -> Result<Self> {
        if weights.rows() != biases.len() {
            return Err(Error::DimMismatch {
                expected: weights.rows(),
                got: biases.len(),
            });
        }
        if weights.rows() == 0 {
            return Err(Error::TooFewClasses(0));
        }
        if !all_finite(weights.as_slice()) || !all_finite(&biases) {
            return Err(Error::DegenerateInput("non-finite model parameters".into()));
        }
        Ok(Self {
            weights,
            biases,
            hyper: None,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &RowMatrix<T> {
        &self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn scores(&self, encoding: &[T]) -> Result<Vec<T>> {
        if encoding.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: encoding.len(),
            });
        }
        Ok(self
            .weights
            .iter_rows()
            .zip(&self.biases)
            .map(|(w, &b)| dot(w, encoding) + b)
            .collect())
    }
}

/// Label with the highest score (lowest index on ties) and all scores.
pub fn predict<T: Real>(model: &LinearModel<T>, encoding: &[T]) -> Result<(usize, Vec<T>)> {
    let scores = model.scores(encoding)?;
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    Ok((best, scores))
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn train_binary<T: Real>(
    encodings: &RowMatrix<T>,
    positive: impl Fn(usize) -> bool,
    hyper: &TrainHyper,
) -> (Vec<T>, T) {
    let dim = encodings.cols();
    let reg = T::lit(hyper.reg);
    // w = scale * v keeps the shrink step O(1)
    let mut v = vec![T::zero(); dim];
    let mut v_bias = T::zero();
    let mut scale = T::one();
    let mut t = 0usize;
    for epoch in 0..hyper.epochs {
        for i in epoch_order(encodings.rows(), hyper.seed, epoch) {
            t += 1;
            let x = encodings.row(i);
            let y = if positive(i) { T::one() } else { -T::one() };
            let eta = match hyper.schedule {
                LrSchedule::InverseRegT => T::one() / (reg * T::lit(t as f64)),
            };
            let margin = y * scale * (dot(&v, x) + v_bias);
            let shrink = T::one() - eta * reg;
            if shrink <= T::zero() {
                v.iter_mut().for_each(|w| *w = T::zero());
                v_bias = T::zero();
                scale = T::one();
            } else {
                scale *= shrink;
            }
            if margin < T::one() {
                let step = eta * y / scale;
                for (w, &xi) in v.iter_mut().zip(x) {
                    *w += step * xi;
                }
                v_bias += step;
            }
        }
    }
    (v.into_iter().map(|w| w * scale).collect(), v_bias * scale)
}

pub fn train_ovr<T: Real>(
    encodings: &RowMatrix<T>,
    labels: &[usize],
    hyper: &TrainHyper,
) -> Result<LinearModel<T>> {
    if labels.len() != encodings.rows() {
        return Err(Error::DimMismatch {
            expected: encodings.rows(),
            got: labels.len(),
        });
    }
    if !(hyper.reg > 0.0) {
        return Err(Error::InvalidArgument(
            "regularization must be positive".into(),
        ));
    }
    let classes = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::TooFewClasses(distinct));
    }
    let mut weights = Vec::with_capacity(classes * encodings.cols());
    let mut biases = Vec::with_capacity(classes);
    for c in 0..classes {
        let (w, b) = train_binary(encodings, |i| labels[i] == c, hyper);
        weights.extend(w);
        biases.push(b);
    }
    let mut model = LinearModel::from_parts(
        RowMatrix::from_vec(classes, encodings.cols(), weights)?,
        biases,
    )?;
    model.hyper = Some(*hyper);
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Recall per true class; 0 for classes absent from the test set.
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn from_predictions(num_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: u64 = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        Self {
            accuracy: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
            per_class_accuracy,
            confusion,
        }
    }

    /// Confusion matrix as CSV, rows are true classes.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in 0..self.confusion.len() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{c}");
            for n in row {
                let _ = write!(out, ",{n}");
            }
            out.push('\n');
        }
        out
    }
}

/// Encodes every manifest entry with `encoder` and tabulates predictions.
pub fn evaluate<T: Real>(
    model: &LinearModel<T>,
    manifest: &DatasetManifest,
    encoder: &Encoder<T>,
) -> Result<EvalReport> {
    if encoder.encoding_len() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            got: encoder.encoding_len(),
        });
    }
    let mut predicted = Vec::with_capacity(manifest.len());
    for entry in manifest.entries() {
        if entry.label >= model.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {} exceeds the model's {} classes",
                entry.label,
                model.num_classes()
            )));
        }
        let map = read_feature_map(&entry.path)?;
        predicted.push(predict(model, &encoder.encode(&map)?)?.0);
    }
    Ok(EvalReport::from_predictions(
        model.num_classes(),
        &manifest.labels(),
        &predicted,
    ))
}

/// Per class, `per_class` seeded-random entries go to the training split and
/// the rest to the test split; both keep manifest order.
pub fn split_per_class(
    manifest: &DatasetManifest,
    per_class: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; manifest.len()];
    for c in 0..manifest.num_classes() {
        let mut members: Vec<usize> = manifest
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == c)
            .map(|(i, _)| i)
            .collect();
        if members.len() < per_class {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} entries, fewer than {per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..per_class] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool| -> Vec<ManifestEntry> {
        manifest
            .entries()
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(e, _)| e.clone())
            .collect()
    };
    Ok((
        DatasetManifest::new(pick(true))?,
        DatasetManifest::new(pick(false))?,
    ))
}
