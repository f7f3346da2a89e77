//! k-means dictionary learning (k-means++ seeding, Lloyd iterations).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::scalar::{all_finite, squared_distance, Real};

pub const DEFAULT_NUM_WORDS: usize = 64;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Training descriptors kept per visual word when subsampling.
pub const DEFAULT_SUBSAMPLE_PER_WORD: usize = 256;

/// M visual words of dimension D, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary<T> {
    centers: RowMatrix<T>,
}

impl<T: Real> Dictionary<T> {
    pub fn new(centers: RowMatrix<T>) -> Result<Self> {
        if centers.rows() == 0 || centers.cols() == 0 {
            return Err(Error::InvalidArgument(
                "dictionary needs at least one word of positive dimension".into(),
            ));
        }
        if !all_finite(centers.as_slice()) {
            return Err(Error::DegenerateInput("non-finite centroid".into()));
        }
        Ok(Self { centers })
    }

    pub fn num_words(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn centers(&self) -> &RowMatrix<T> {
        &self.centers
    }

    pub fn word(&self, m: usize) -> &[T] {
        self.centers.row(m)
    }

    pub(crate) fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Squared Euclidean distance from `x` to every word.
    pub fn squared_distances(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self
            .centers
            .iter_rows()
            .map(|c| squared_distance(x, c))
            .collect())
    }

    /// Index of the closest word; the lowest index wins ties.
    pub fn nearest(&self, x: &[T]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(nearest_row(&self.centers, x).0)
    }
}

pub fn nearest_center<T: Real>(dict: &Dictionary<T>, x: &[T]) -> Result<usize> {
    dict.nearest(x)
}

fn nearest_row<T: Real>(centers: &RowMatrix<T>, x: &[T]) -> (usize, T) {
    let mut best = 0;
    let mut best_d = squared_distance(x, centers.row(0));
    for (m, c) in centers.iter_rows().enumerate().skip(1) {
        let d = squared_distance(x, c);
        if d < best_d {
            best = m;
            best_d = d;
        }
    }
    (best, best_d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansReport {
    pub iterations: usize,
    /// Sum of squared distances to the assigned centers, one entry for the
    /// seeding and one per Lloyd iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl KmeansReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KmeansParams {
    pub num_words: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            num_words: DEFAULT_NUM_WORDS,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

/// k-means++ seeding: the first center uniformly at random, each further one
/// with probability proportional to its squared distance from the closest
/// center chosen so far. If every remaining distance is zero the lowest
/// unchosen index is taken.
pub fn kmeans_init_plusplus<T: Real>(
    data: &RowMatrix<T>,
    m: usize,
    seed: u64,
) -> Result<RowMatrix<T>> {
    let n = data.rows();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "number of words must be positive".into(),
        ));
    }
    if n < m {
        return Err(Error::TooFewPoints { needed: m, got: n });
    }
    if !all_finite(data.as_slice()) {
        return Err(Error::DegenerateInput(
            "non-finite training descriptor".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;

    let mut closest: Vec<f64> = data
        .iter_rows()
        .map(|r| squared_distance(r, data.row(first)).as_f64())
        .collect();
    while chosen.len() < m {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            taken.iter().position(|t| !t).expect("n >= m")
        };
        chosen.push(next);
        taken[next] = true;
        let c = data.row(next);
        for (w, r) in closest.iter_mut().zip(data.iter_rows()) {
            let d = squared_distance(r, c).as_f64();
            if d < *w {
                *w = d;
            }
        }
    }
    Ok(data.select_rows(&chosen))
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Stops once the relative objective decrease drops below `tol` or
/// `max_iters` updates have run. An empty cluster is moved onto the point
/// farthest from its assigned center (lowest index on ties), so the objective
/// never increases.
pub fn kmeans_train<T: Real>(
    data: &RowMatrix<T>,
    params: &KmeansParams,
) -> Result<(Dictionary<T>, KmeansReport)> {
    let n = data.rows();
    let d = data.cols();
    let m = params.num_words;
    let mut centers = kmeans_init_plusplus(data, m, params.seed)?;
    let mut assignment = vec![0usize; n];
    let mut sq = vec![T::zero(); n];

    let assign = |centers: &RowMatrix<T>, assignment: &mut [usize], sq: &mut [T]| -> f64 {
        let mut objective = T::zero();
        for (i, x) in data.iter_rows().enumerate() {
            let (best, dist) = nearest_row(centers, x);
            assignment[i] = best;
            sq[i] = dist;
            objective += dist;
        }
        objective.as_f64()
    };

    let mut trace = vec![assign(&centers, &mut assignment, &mut sq)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        iterations += 1;
        let mut sums = vec![T::zero(); m * d];
        let mut counts = vec![0usize; m];
        for (i, x) in data.iter_rows().enumerate() {
            let k = assignment[i];
            counts[k] += 1;
            for (s, &v) in sums[k * d..(k + 1) * d].iter_mut().zip(x) {
                *s += v;
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                let inv = T::one() / T::lit(counts[k] as f64);
                for (c, &s) in centers.row_mut(k).iter_mut().zip(&sums[k * d..(k + 1) * d]) {
                    *c = s * inv;
                }
            }
        }
        // distances to the updated centers drive reseeding
        for (i, x) in data.iter_rows().enumerate() {
            sq[i] = squared_distance(x, centers.row(assignment[i]));
        }
        for (k, &count) in counts.iter().enumerate().take(m) {
            if count > 0 {
                continue;
            }
            let mut far = 0;
            for i in 1..n {
                if sq[i] > sq[far] {
                    far = i;
                }
            }
            let point = data.row(far).to_vec();
            centers.row_mut(k).copy_from_slice(&point);
            sq[far] = T::zero();
            assignment[far] = k;
        }

        let previous = *trace.last().expect("seeded");
        let current = assign(&centers, &mut assignment, &mut sq);
        trace.push(current);
        let decrease = previous - current;
        if previous <= 0.0 || decrease <= params.tol * previous {
            converged = true;
            break;
        }
    }
    Ok((
        Dictionary::new(centers)?,
        KmeansReport {
            iterations,
            objective_trace: trace,
            converged,
        },
    ))
}

/// Uniform subsample without replacement, returned in original row order.
pub fn subsample_rows<T: Real>(data: &RowMatrix<T>, cap: usize, seed: u64) -> RowMatrix<T> {
    if data.rows() <= cap {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, data.rows(), cap).into_vec();
    picked.sort_unstable();
    data.select_rows(&picked)
}
