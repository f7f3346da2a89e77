//! PCA projection with whitening, followed by per-descriptor L2 normalization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::scalar::{all_finite, dot, Real};

/// Relative scale of the default variance regularizer, applied to the mean
/// eigenvalue (trace / D_in).
pub const DEFAULT_EPSILON_SCALE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct WhiteningTransform<T> {
    mean: Vec<T>,
    /// Rows are principal axes scaled by `1 / sqrt(eigenvalue + epsilon)`.
    projection: RowMatrix<T>,
    epsilon: T,
}

impl<T: Real> WhiteningTransform<T> {
    /// Rebuilds a transform from stored parts; `epsilon` is not persisted and
    /// is reported as zero.
    pub fn from_parts(mean: Vec<T>, projection: RowMatrix<T>) -> Result<Self> {
        if projection.cols() != mean.len() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                got: projection.cols(),
            });
        }
        if projection.rows() == 0 || projection.rows() > mean.len() {
            return Err(Error::DimTooLarge {
                requested: projection.rows(),
                limit: mean.len(),
            });
        }
        if !all_finite(&mean) || !all_finite(projection.as_slice()) {
            return Err(Error::DegenerateInput(
                "non-finite whitening parameters".into(),
            ));
        }
        Ok(Self {
            mean,
            projection,
            epsilon: T::zero(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = T::one();
        }
        Self {
            mean: vec![T::zero(); dim],
            projection: RowMatrix::from_vec(dim, dim, data).expect("square"),
            epsilon: T::zero(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn projection(&self) -> &RowMatrix<T> {
        &self.projection
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Projection only, without the trailing L2 normalization.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        Ok(self
            .projection
            .iter_rows()
            .map(|row| dot(row, &centered))
            .collect())
    }

    /// Whitens and L2-normalizes one descriptor.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = self.project(x)?;
        l2_normalize_in_place(&mut y);
        Ok(y)
    }

    /// [`apply`](Self::apply) on every row.
    pub fn apply_rows(&self, data: &RowMatrix<T>) -> Result<RowMatrix<T>> {
        let mut out = Vec::with_capacity(data.rows() * self.output_dim());
        for row in data.iter_rows() {
            out.extend(self.apply(row)?);
        }
        RowMatrix::from_vec(data.rows(), self.output_dim(), out)
    }
}

pub fn apply_whitening<T: Real>(t: &WhiteningTransform<T>, x: &[T]) -> Result<Vec<T>> {
    t.apply(x)
}

/// `epsilon` used when none is given: a millionth of the mean eigenvalue.
pub fn default_epsilon<T: Real>(descriptors: &RowMatrix<T>) -> Result<T> {
    let (_, cov) = mean_and_covariance(descriptors)?;
    let d = cov.nrows();
    let trace = (0..d).fold(T::zero(), |acc, i| acc + cov[(i, i)]);
    Ok(trace * T::lit(DEFAULT_EPSILON_SCALE) / T::lit(d as f64))
}

fn mean_and_covariance<T: Real>(data: &RowMatrix<T>) -> Result<(Vec<T>, DMatrix<T>)> {
    let n = data.rows();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "whitening needs at least 2 descriptors, got {n}"
        )));
    }
    let d = data.cols();
    let inv_n = T::one() / T::lit(n as f64);
    let mut mean = vec![T::zero(); d];
    for row in data.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m *= inv_n;
    }
    let mut cov = DMatrix::<T>::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for row in data.iter_rows() {
        for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let scale = T::one() / T::lit((n - 1) as f64);
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] * scale;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Fits mean-centering, PCA and whitening on an N×D_in descriptor matrix.
///
/// Covariance uses the unbiased `1/(N-1)` estimator. Eigenvectors are ordered
/// by descending eigenvalue (ties by eigensolver index) and sign-fixed so the
/// largest-magnitude entry is positive, lowest index winning ties.
pub fn fit_whitening<T: Real>(
    descriptors: &RowMatrix<T>,
    output_dim: usize,
    epsilon: T,
) -> Result<WhiteningTransform<T>> {
    let n = descriptors.rows();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "whitening needs at least 2 descriptors, got {n}"
        )));
    }
    let d = descriptors.cols();
    let limit = (n - 1).min(d);
    if output_dim == 0 || output_dim > limit {
        return Err(Error::DimTooLarge {
            requested: output_dim,
            limit,
        });
    }
    if !(epsilon >= T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be nonnegative".into()));
    }
    if !all_finite(descriptors.as_slice()) {
        return Err(Error::DegenerateInput("non-finite descriptor".into()));
    }
    let (mean, cov) = mean_and_covariance(descriptors)?;
    let eig = SymmetricEigen::try_new(cov, T::default_epsilon(), 0)
        .ok_or_else(|| Error::DegenerateInput("eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut projection = Vec::with_capacity(output_dim * d);
    for &k in order.iter().take(output_dim) {
        let lambda = eig.eigenvalues[k].max(T::zero());
        let denom = (lambda + epsilon).sqrt();
        if !(denom > T::zero()) {
            return Err(Error::DegenerateInput(format!(
                "principal component {k} has zero variance; use a positive epsilon"
            )));
        }
        let axis = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..d {
            if axis[i].abs() > axis[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if axis[pivot] < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        let scale = sign / denom;
        projection.extend(axis.iter().map(|&v| v * scale));
    }
    let projection = RowMatrix::from_vec(output_dim, d, projection)?;
    if !all_finite(projection.as_slice()) {
        return Err(Error::DegenerateInput("non-finite projection".into()));
    }
    Ok(WhiteningTransform {
        mean,
        projection,
        epsilon,
    })
}

pub fn l2_norm<T: Real>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// `v / ||v||`, or `v` unchanged when its norm is zero.
pub fn l2_normalize<T: Real>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out);
    out
}

pub fn l2_normalize_in_place<T: Real>(v: &mut [T]) {
    let norm = l2_norm(v);
    if norm > T::zero() && norm.is_finite() {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}
