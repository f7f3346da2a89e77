//! Per-descriptor weights over the visual words.
//!
//! All modes produce a weight vector that sums to one. Hard, soft and
//! localized-soft weights are nonnegative; LLC coefficients may be negative.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::codebook::Dictionary;
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Normalized soft weights below this are flushed to exact zero.
pub const UNDERFLOW_FLUSH: f64 = 1e-30;
/// Relative ridge added to every LLC system: `RIDGE * trace(C) / size`.
pub const LLC_RIDGE: f64 = 1e-8;
/// Upper bound on a squared locality adaptor entry.
const MAX_ADAPTOR_SQ: f64 = 1e30;

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_KNN: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_SIGMA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AssignMode {
    Hard,
    Soft,
    LocalizedSoft,
    LlcExact,
    LlcApprox,
}

impl AssignMode {
    pub const ALL: [AssignMode; 5] = [
        AssignMode::Hard,
        AssignMode::Soft,
        AssignMode::LocalizedSoft,
        AssignMode::LlcExact,
        AssignMode::LlcApprox,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            AssignMode::Hard => "hard",
            AssignMode::Soft => "sa",
            AssignMode::LocalizedSoft => "lsa",
            AssignMode::LlcExact => "llc",
            AssignMode::LlcApprox => "llc-approx",
        }
    }

    pub fn is_nonnegative(self) -> bool {
        matches!(
            self,
            AssignMode::Hard | AssignMode::Soft | AssignMode::LocalizedSoft
        )
    }
}

impl fmt::Display for AssignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AssignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(AssignMode::Hard),
            "sa" | "soft" => Ok(AssignMode::Soft),
            "lsa" | "localized-soft" => Ok(AssignMode::LocalizedSoft),
            "llc" | "llc-exact" => Ok(AssignMode::LlcExact),
            "llc-approx" => Ok(AssignMode::LlcApprox),
            other => Err(Error::InvalidArgument(format!(
                "unknown assignment mode {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssignConfig {
    pub mode: AssignMode,
    /// Softness for `sa` and `lsa`.
    pub beta: f64,
    /// Neighborhood size for `lsa` and `llc-approx`.
    pub k_nn: usize,
    pub lambda: f64,
    pub sigma: f64,
    /// Subtract the smallest word distance before forming the LLC locality
    /// adaptor.
    pub center_dist: bool,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            mode: AssignMode::Hard,
            beta: DEFAULT_BETA,
            k_nn: DEFAULT_KNN,
            lambda: DEFAULT_LAMBDA,
            sigma: DEFAULT_SIGMA,
            center_dist: false,
        }
    }
}

impl AssignConfig {
    pub fn with_mode(mode: AssignMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentWeights<T> {
    weights: Vec<T>,
    support: Vec<usize>,
}

impl<T: Real> AssignmentWeights<T> {
    /// Builds weights, deriving the support from the nonzero pattern.
    pub fn from_dense(weights: Vec<T>) -> Self {
        let support = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(|(i, _)| i)
            .collect();
        Self { weights, support }
    }

    fn one_hot(len: usize, at: usize) -> Self {
        let mut weights = vec![T::zero(); len];
        weights[at] = T::one();
        Self {
            weights,
            support: vec![at],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Sorted indices of the nonzero weights.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sum(&self) -> T {
        self.weights.iter().fold(T::zero(), |acc, &w| acc + w)
    }
}

/// Dispatches on `config.mode`.
pub fn assign<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    config: &AssignConfig,
) -> Result<AssignmentWeights<T>> {
    match config.mode {
        AssignMode::Hard => assign_hard(dict, x),
        AssignMode::Soft => assign_soft(dict, x, T::lit(config.beta)),
        AssignMode::LocalizedSoft => {
            assign_localized_soft(dict, x, T::lit(config.beta), config.k_nn)
        }
        AssignMode::LlcExact => assign_llc_with(
            dict,
            x,
            T::lit(config.lambda),
            T::lit(config.sigma),
            config.center_dist,
        ),
        AssignMode::LlcApprox => assign_llc_approx(dict, x, config.k_nn),
    }
}

pub fn assign_hard<T: Real>(dict: &Dictionary<T>, x: &[T]) -> Result<AssignmentWeights<T>> {
    let m = dict.nearest(x)?;
    Ok(AssignmentWeights::one_hot(dict.num_words(), m))
}

pub fn assign_soft<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    beta: T,
) -> Result<AssignmentWeights<T>> {
    check_beta(beta)?;
    let sq = dict.squared_distances(x)?;
    let all: Vec<usize> = (0..sq.len()).collect();
    Ok(restricted_softmax(&sq, &all, beta))
}

pub fn assign_localized_soft<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    beta: T,
    k_nn: usize,
) -> Result<AssignmentWeights<T>> {
    check_beta(beta)?;
    check_k(k_nn, dict.num_words())?;
    let sq = dict.squared_distances(x)?;
    let mut nearest = k_nearest(&sq, k_nn);
    nearest.sort_unstable();
    Ok(restricted_softmax(&sq, &nearest, beta))
}

/// Softmax of `-beta * sq` over all entries; exposed for the shift-invariance
/// property.
pub fn softmax_weights<T: Real>(sq: &[T], beta: T) -> AssignmentWeights<T> {
    let all: Vec<usize> = (0..sq.len()).collect();
    restricted_softmax(sq, &all, beta)
}

/// Softmax over the words in `subset` (ascending), zeros elsewhere.
fn restricted_softmax<T: Real>(sq: &[T], subset: &[usize], beta: T) -> AssignmentWeights<T> {
    let min = subset
        .iter()
        .map(|&m| sq[m])
        .fold(T::max_value().expect("bounded"), |a, b| a.min(b));
    let mut weights = vec![T::zero(); sq.len()];
    let mut total = T::zero();
    for &m in subset {
        let e = (-(beta * (sq[m] - min))).exp();
        weights[m] = e;
        total += e;
    }
    let flush = T::lit(UNDERFLOW_FLUSH);
    for &m in subset {
        let w = weights[m] / total;
        weights[m] = if w < flush { T::zero() } else { w };
    }
    AssignmentWeights::from_dense(weights)
}

/// Indices of the `k` smallest entries ordered by (value, index).
fn k_nearest<T: Real>(sq: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|&a, &b| {
        sq[a]
            .partial_cmp(&sq[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta > T::zero() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveBeta(beta.as_f64()))
    }
}

fn check_k(k: usize, num_words: usize) -> Result<()> {
    if k == 0 || k > num_words {
        Err(Error::BadK { k, num_words })
    } else {
        Ok(())
    }
}

/// Exact LLC code: minimizes `||x - D a||^2 + lambda ||s .* a||^2` subject to
/// `sum(a) = 1`, with locality adaptor `s_m = exp(dist(x, d_m) / sigma)`.
pub fn assign_llc<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    lambda: T,
    sigma: T,
) -> Result<AssignmentWeights<T>> {
    assign_llc_with(dict, x, lambda, sigma, false)
}

/// [`assign_llc`] with the option of measuring distances relative to the
/// nearest word before exponentiation.
pub fn assign_llc_with<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    lambda: T,
    sigma: T,
    center_dist: bool,
) -> Result<AssignmentWeights<T>> {
    dict.check_dim(x)?;
    if !(sigma > T::zero()) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let m = dict.num_words();
    let mut dist: Vec<T> = dict
        .squared_distances(x)?
        .into_iter()
        .map(|d| d.sqrt())
        .collect();
    if center_dist {
        let min = dist.iter().fold(dist[0], |a, &b| a.min(b));
        for d in &mut dist {
            *d -= min;
        }
    }
    let cap = T::lit(MAX_ADAPTOR_SQ);
    let adaptor_sq: Vec<T> = dist
        .iter()
        .map(|&d| {
            let s2 = (T::lit(2.0) * d / sigma).exp();
            if s2.is_finite() && s2 < cap {
                s2
            } else {
                cap
            }
        })
        .collect();
    let atoms: Vec<usize> = (0..m).collect();
    let code = solve_affine_code(dict, x, &atoms, |i| lambda * adaptor_sq[i])?;
    Ok(AssignmentWeights::from_dense(code))
}

/// Approximated LLC: affine least squares over the `k_nn` nearest words only,
/// without the locality penalty; all other coefficients are zero.
pub fn assign_llc_approx<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    k_nn: usize,
) -> Result<AssignmentWeights<T>> {
    check_k(k_nn, dict.num_words())?;
    let sq = dict.squared_distances(x)?;
    let mut atoms = k_nearest(&sq, k_nn);
    atoms.sort_unstable();
    let code = solve_affine_code(dict, x, &atoms, |_| T::zero())?;
    Ok(AssignmentWeights::from_dense(code))
}

/// Solves `(C + W²) c = 1`, `a = c / sum(c)` where `C = G Gᵀ` with rows
/// `G_i = d_i - x` over the selected atoms and `W² = diag(penalty) + ridge I`,
/// then scatters `a` into a full-length vector.
///
/// The system is the normal equations of the stacked least-squares problem
/// `[Gᵀ; W] c ≈ [0; W⁻¹ 1]`, which is solved by QR so that rounding scales
/// with the condition number of `G` rather than of `C`. When `D < k` the
/// ridge alone makes `C` invertible and forming `C` would lose about half
/// the available digits.
fn solve_affine_code<T: Real>(
    dict: &Dictionary<T>,
    x: &[T],
    atoms: &[usize],
    penalty: impl Fn(usize) -> T,
) -> Result<Vec<T>> {
    let k = atoms.len();
    let mut full = vec![T::zero(); dict.num_words()];
    if k == 1 {
        full[atoms[0]] = T::one();
        return Ok(full);
    }
    let d = x.len();
    let shifted: Vec<Vec<T>> = atoms
        .iter()
        .map(|&a| dict.word(a).iter().zip(x).map(|(&w, &v)| w - v).collect())
        .collect();
    let trace = shifted.iter().fold(T::zero(), |acc, g| acc + dot(g, g));
    let ridge = T::lit(LLC_RIDGE) * trace / T::lit(k as f64);

    let mut stacked = DMatrix::<T>::zeros(d + k, k);
    let mut rhs = DVector::<T>::zeros(d + k);
    for (i, g) in shifted.iter().enumerate() {
        for (t, &v) in g.iter().enumerate() {
            stacked[(t, i)] = v;
        }
        let w = (penalty(atoms[i]) + ridge).sqrt();
        if !(w > T::zero() && w.is_finite()) {
            return Err(Error::SingularSystem);
        }
        stacked[(d + i, i)] = w;
        rhs[d + i] = T::one() / w;
    }
    let qr = stacked.qr();
    let projected = qr.q().transpose() * rhs;
    let raw = qr
        .r()
        .solve_upper_triangular(&projected)
        .ok_or(Error::SingularSystem)?;
    let total = raw.iter().fold(T::zero(), |acc, &v| acc + v);
    if !(total.is_finite() && total != T::zero()) || raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    for (i, &a) in atoms.iter().enumerate() {
        full[a] = raw[i] / total;
    }
    Ok(full)
}
