//! Residual aggregation with pluggable assignment weights, and the
//! normalization schemes applied to the aggregated vector.

use std::fmt;
use std::str::FromStr;

use crate::assignment::{assign, AssignConfig};
use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::io::FeatureMap;
use crate::matrix::RowMatrix;
use crate::preprocess::{l2_normalize_in_place, WhiteningTransform};
use crate::scalar::{all_finite, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum NormScheme {
    /// L2 per word block, then L2 over the whole vector.
    #[default]
    IntraThenGlobal,
    GlobalOnly,
    /// `sign(v) * sqrt(|v|)` elementwise, then global L2.
    SignedSqrtThenGlobal,
}

impl NormScheme {
    pub fn name(self) -> &'static str {
        match self {
            NormScheme::IntraThenGlobal => "intra",
            NormScheme::GlobalOnly => "global",
            NormScheme::SignedSqrtThenGlobal => "ssr",
        }
    }
}

impl fmt::Display for NormScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intra" | "intra-then-global" => Ok(NormScheme::IntraThenGlobal),
            "global" | "global-only" => Ok(NormScheme::GlobalOnly),
            "ssr" | "signed-sqrt-then-global" => Ok(NormScheme::SignedSqrtThenGlobal),
            other => Err(Error::InvalidArgument(format!(
                "unknown norm scheme {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EncoderConfig {
    pub assign: AssignConfig,
    pub norm_scheme: NormScheme,
}

/// M·D vector made of M consecutive D-blocks, block m for word m.
#[derive(Clone, Debug, PartialEq)]
pub struct VladVector<T> {
    num_words: usize,
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> VladVector<T> {
    pub fn zeros(num_words: usize, dim: usize) -> Self {
        Self {
            num_words,
            dim,
            values: vec![T::zero(); num_words * dim],
        }
    }

    pub fn from_values(num_words: usize, dim: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != num_words * dim {
            return Err(Error::DimMismatch {
                expected: num_words * dim,
                got: values.len(),
            });
        }
        Ok(Self {
            num_words,
            dim,
            values,
        })
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn block(&self, m: usize) -> &[T] {
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Raw aggregation: block m = Σ_i a_m(x_i) (x_i − d_m), descriptors visited
/// in row order.
pub fn vlad_aggregate<T: Real>(
    dict: &Dictionary<T>,
    descriptors: &RowMatrix<T>,
    assign_cfg: &AssignConfig,
) -> Result<VladVector<T>> {
    if descriptors.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    aggregate_rows(dict, descriptors.iter_rows(), assign_cfg)
}

fn aggregate_rows<'a, T: Real>(
    dict: &Dictionary<T>,
    rows: impl Iterator<Item = &'a [T]>,
    assign_cfg: &AssignConfig,
) -> Result<VladVector<T>> {
    let d = dict.dim();
    let mut out = VladVector::zeros(dict.num_words(), d);
    for x in rows {
        let w = assign(dict, x, assign_cfg)?;
        for &m in w.support() {
            let a = w.weights()[m];
            let center = dict.word(m);
            let block = &mut out.values[m * d..(m + 1) * d];
            for ((acc, &xi), &ci) in block.iter_mut().zip(x).zip(center) {
                *acc += a * (xi - ci);
            }
        }
    }
    Ok(out)
}

pub fn vlad_normalize<T: Real>(raw: &VladVector<T>, scheme: NormScheme) -> VladVector<T> {
    let mut out = raw.clone();
    normalize_in_place(&mut out.values, raw.dim, scheme);
    out
}

pub(crate) fn normalize_in_place<T: Real>(values: &mut [T], dim: usize, scheme: NormScheme) {
    match scheme {
        NormScheme::IntraThenGlobal => {
            if dim > 0 {
                for block in values.chunks_exact_mut(dim) {
                    l2_normalize_in_place(block);
                }
            }
        }
        NormScheme::GlobalOnly => {}
        NormScheme::SignedSqrtThenGlobal => {
            for v in values.iter_mut() {
                let r = v.abs().sqrt();
                *v = if *v < T::zero() { -r } else { r };
            }
        }
    }
    l2_normalize_in_place(values);
}

/// Whitening (optional) applied to every cell of `map`, one row per cell.
pub fn prepare_descriptors<T: Real>(
    map: &FeatureMap,
    transform: Option<&WhiteningTransform<T>>,
) -> Result<RowMatrix<T>> {
    let raw = map.to_matrix::<T>();
    match transform {
        None => Ok(raw),
        Some(t) => {
            if t.input_dim() != map.dim() {
                return Err(Error::DimMismatch {
                    expected: t.input_dim(),
                    got: map.dim(),
                });
            }
            t.apply_rows(&raw)
        }
    }
}

/// Aggregates the listed rows and applies the configured normalization.
/// An empty subset yields the zero vector.
pub(crate) fn encode_subset<T: Real>(
    dict: &Dictionary<T>,
    descriptors: &RowMatrix<T>,
    cells: &[usize],
    config: &EncoderConfig,
) -> Result<VladVector<T>> {
    let mut v = aggregate_rows(
        dict,
        cells.iter().map(|&i| descriptors.row(i)),
        &config.assign,
    )?;
    normalize_in_place(&mut v.values, v.dim, config.norm_scheme);
    Ok(v)
}

/// Full single-region encoding of one feature map: whiten, aggregate over all
/// cells in row-major order, normalize per scheme, then a final global L2
/// (which makes it bit-identical to a one-region pyramid).
pub fn encode<T: Real>(
    dict: &Dictionary<T>,
    map: &FeatureMap,
    transform: Option<&WhiteningTransform<T>>,
    config: &EncoderConfig,
) -> Result<VladVector<T>> {
    let descriptors = prepare_descriptors(map, transform)?;
    if descriptors.cols() != dict.dim() {
        return Err(Error::DimMismatch {
            expected: dict.dim(),
            got: descriptors.cols(),
        });
    }
    let cells: Vec<usize> = (0..descriptors.rows()).collect();
    let mut v = encode_subset(dict, &descriptors, &cells, config)?;
    l2_normalize_in_place(&mut v.values);
    debug_assert!(all_finite(&v.values));
    Ok(v)
}
