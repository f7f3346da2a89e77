//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric routines.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += (a[j] - b[j]) * (a[j] - b[j]);
    }
    s
}

pub fn argmin_scan(words: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    for m in 1..words.len() {
        if sq_dist(x, &words[m]) < sq_dist(x, &words[best]) {
            best = m;
        }
    }
    best
}

/// Indices of the k nearest words by repeated selection, lowest index on ties.
pub fn k_nearest_scan(words: &[Vec<f64>], x: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; words.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for m in 0..words.len() {
            if taken[m] {
                continue;
            }
            match best {
                None => best = Some(m),
                Some(b) if sq_dist(x, &words[m]) < sq_dist(x, &words[b]) => best = Some(m),
                _ => {}
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out.sort();
    out
}

pub fn soft_formula(words: &[Vec<f64>], x: &[f64], beta: f64, subset: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; words.len()];
    let denom: f64 = subset
        .iter()
        .map(|&n| (-beta * sq_dist(x, &words[n])).exp())
        .sum();
    for &m in subset {
        w[m] = (-beta * sq_dist(x, &words[m])).exp() / denom;
    }
    w
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// Constrained quadratic `min aᵀQa s.t. Σa = 1` through its bordered KKT
/// system `[2Q 1; 1ᵀ 0] [a; μ] = [0; 1]`.
pub fn kkt_affine_qp(q: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = q.len();
    let mut a = vec![vec![0.0; k + 1]; k + 1];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = 2.0 * q[i][j];
        }
        a[i][k] = 1.0;
        a[k][i] = 1.0;
    }
    let mut b = vec![0.0; k + 1];
    b[k] = 1.0;
    let sol = gauss_solve(a, b)?;
    Some(sol[..k].to_vec())
}

/// Double-double number `hi + lo` (about 106 significant bits).
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn renorm(s: f64, e: f64) -> Self {
        let hi = s + e;
        Dd {
            hi,
            lo: e - (hi - s),
        }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        let (t, f) = Self::two_sum(self.lo, o.lo);
        let r = Self::renorm(s, e + t);
        Self::renorm(r.hi, r.lo + f)
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Self::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::new(q2)));
        let q3 = r.hi / o.hi;
        Dd::new(q1).add(Dd::new(q2)).add(Dd::new(q3))
    }

    pub fn abs(self) -> f64 {
        self.to_f64().abs()
    }
}

/// Gaussian elimination with partial pivoting in double-double arithmetic.
pub fn gauss_solve_dd(mut a: Vec<Vec<Dd>>, mut b: Vec<Dd>) -> Option<Vec<Dd>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col].div(a[col][col]);
            for c in col..n {
                a[r][c] = a[r][c].sub(f.mul(a[col][c]));
            }
            b[r] = b[r].sub(f.mul(b[col]));
        }
    }
    let mut x = vec![Dd::default(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s = s.sub(a[r][c].mul(x[c]));
        }
        x[r] = s.div(a[r][r]);
    }
    Some(x)
}

/// Locality-penalized affine code over `atoms`, including the same relative
/// ridge the library adds (1e-8 · trace / size). `penalty_sq[m]` multiplies
/// the m-th diagonal entry (λ s_m² for exact LLC, 0 for the approximation).
///
/// The Gram matrix and the bordered KKT system `[2Q 1; 1ᵀ 0] [a; μ] = [0; 1]`
/// are formed and eliminated in double-double arithmetic, so the result is
/// accurate to working precision even when the ridge alone makes `Q`
/// invertible.
pub fn llc_oracle(words: &[Vec<f64>], x: &[f64], atoms: &[usize], penalty_sq: &[f64]) -> Vec<f64> {
    let k = atoms.len();
    let mut out = vec![0.0; words.len()];
    if k == 1 {
        out[atoms[0]] = 1.0;
        return out;
    }
    let diffs: Vec<Vec<Dd>> = atoms
        .iter()
        .map(|&m| {
            (0..x.len())
                .map(|t| Dd::new(x[t]).sub(Dd::new(words[m][t])))
                .collect()
        })
        .collect();
    let mut q = vec![vec![Dd::default(); k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut s = Dd::default();
            for t in 0..x.len() {
                s = s.add(diffs[i][t].mul(diffs[j][t]));
            }
            q[i][j] = s;
        }
    }
    let trace: f64 = (0..k).map(|i| sq_dist(x, &words[atoms[i]])).sum();
    let ridge = 1e-8 * trace / k as f64;
    for i in 0..k {
        q[i][i] = q[i][i]
            .add(Dd::new(penalty_sq[atoms[i]]))
            .add(Dd::new(ridge));
    }
    let mut a = vec![vec![Dd::default(); k + 1]; k + 1];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = q[i][j].add(q[i][j]);
        }
        a[i][k] = Dd::new(1.0);
        a[k][i] = Dd::new(1.0);
    }
    let mut b = vec![Dd::default(); k + 1];
    b[k] = Dd::new(1.0);
    let sol = gauss_solve_dd(a, b).expect("nonsingular oracle system");
    for (i, &m) in atoms.iter().enumerate() {
        out[m] = sol[i].to_f64();
    }
    out
}

pub fn llc_penalty(words: &[Vec<f64>], x: &[f64], lambda: f64, sigma: f64) -> Vec<f64> {
    words
        .iter()
        .map(|w| lambda * (sq_dist(x, w).sqrt() / sigma).exp().powi(2))
        .collect()
}

/// `‖x − Σ a_m d_m‖² + λ Σ (s_m a_m)²`.
pub fn llc_objective(words: &[Vec<f64>], x: &[f64], a: &[f64], penalty_sq: &[f64]) -> f64 {
    let mut r = x.to_vec();
    for (m, w) in words.iter().enumerate() {
        for j in 0..x.len() {
            r[j] -= a[m] * w[j];
        }
    }
    let recon: f64 = r.iter().map(|v| v * v).sum();
    let pen: f64 = (0..a.len()).map(|m| penalty_sq[m] * a[m] * a[m]).sum();
    recon + pen
}

#[derive(Clone, Copy, Debug)]
pub enum OracleMode {
    Hard,
    Soft { beta: f64 },
    Lsa { beta: f64, k: usize },
    LlcExact { lambda: f64, sigma: f64 },
    LlcApprox { k: usize },
}

pub fn oracle_weights(words: &[Vec<f64>], x: &[f64], mode: OracleMode) -> Vec<f64> {
    let m = words.len();
    match mode {
        OracleMode::Hard => {
            let mut w = vec![0.0; m];
            w[argmin_scan(words, x)] = 1.0;
            w
        }
        OracleMode::Soft { beta } => soft_formula(words, x, beta, &(0..m).collect::<Vec<_>>()),
        OracleMode::Lsa { beta, k } => soft_formula(words, x, beta, &k_nearest_scan(words, x, k)),
        OracleMode::LlcExact { lambda, sigma } => {
            let pen = llc_penalty(words, x, lambda, sigma);
            llc_oracle(words, x, &(0..m).collect::<Vec<_>>(), &pen)
        }
        OracleMode::LlcApprox { k } => {
            llc_oracle(words, x, &k_nearest_scan(words, x, k), &vec![0.0; m])
        }
    }
}

/// Naive VLAD: outer loop over dimensions and words, inner over descriptors.
pub fn naive_vlad(words: &[Vec<f64>], xs: &[Vec<f64>], mode: OracleMode) -> Vec<f64> {
    let m = words.len();
    let d = words[0].len();
    let weights: Vec<Vec<f64>> = xs.iter().map(|x| oracle_weights(words, x, mode)).collect();
    let mut v = vec![0.0; m * d];
    for word in 0..m {
        for j in 0..d {
            let mut s = 0.0;
            for (i, x) in xs.iter().enumerate() {
                s += weights[i][word] * (x[j] - words[word][j]);
            }
            v[word * d + j] = s;
        }
    }
    v
}

pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    cov
}

/// Prints one acceptance line and fails the test when `pass` is false.
pub fn criterion(id: &str, pass: bool, detail: &str) {
    println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} failed: {detail}");
}
