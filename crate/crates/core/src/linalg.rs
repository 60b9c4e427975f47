//! Banded complex matrices, their LU factorization with partial pivoting, and
//! the smallest singular value of a shifted band matrix.
//!
//! Every discretization in this crate is banded (Hermite–Galerkin matrices
//! have half-bandwidth `max(2, 2k)`, finite differences have 1), which makes
//! shifted solves `O(n·p²)` instead of `O(n³)`.

use faer::Mat;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Runs dense kernels (eigendecomposition, SVD) single-threaded, so that
/// parallelism lives only at the caller's level and results do not depend
/// on the size of the thread pool.
pub fn sequential_dense_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Square complex matrix with entries only within `p` of the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    p: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, p: usize) -> Self {
        BandMatrix { n, p, data: vec![ZERO; n * (2 * p + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.p
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || i.abs_diff(j) > self.p {
            None
        } else {
            Some(i * (2 * self.p + 1) + (j + self.p - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.slot(i, j).map_or(ZERO, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    /// Columns of row `i` that may hold nonzeros.
    pub fn row_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.p)..=(i + self.p).min(self.n - 1)
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> BandMatrix {
        BandMatrix { n: self.n, p: self.p, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    /// True when the matrix equals its plain (non-conjugated) transpose exactly.
    pub fn is_transpose_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row_range(i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Largest absolute row sum, an upper bound for the 2-norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting of `A - shift·I` for band `A`.
///
/// Stored as the sequence of row interchanges and unit lower eliminations
/// (LAPACK `gbtrf` layout); `U` has upper bandwidth `2p`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    p: usize,
    /// row i holds U[i, i..=i+2p]
    u: Vec<Complex64>,
    /// row i holds the multipliers for rows i+1..=i+p
    l: Vec<Complex64>,
    piv: Vec<usize>,
    singular: bool,
}

impl BandLu {
    pub fn factor(a: &BandMatrix, shift: Complex64) -> BandLu {
        let n = a.n;
        let p = a.p;
        let w = 3 * p + 1;
        // working row r covers columns r-p ..= r+2p
        let idx = |r: usize, j: usize| r * w + (j + p - r);
        let mut work = vec![ZERO; n * w];
        for i in 0..n {
            for j in a.row_range(i) {
                work[idx(i, j)] = a.get(i, j);
            }
            work[idx(i, i)] -= shift;
        }
        let mut l = vec![ZERO; n * p.max(1)];
        let mut piv = vec![0; n];
        let mut singular = false;
        for i in 0..n {
            let last_row = (i + p).min(n - 1);
            let last_col = (i + 2 * p).min(n - 1);
            let mut best = i;
            let mut best_mag = work[idx(i, i)].norm();
            for r in i + 1..=last_row {
                let m = work[idx(r, i)].norm();
                if m > best_mag {
                    best = r;
                    best_mag = m;
                }
            }
            piv[i] = best;
            if best != i {
                for j in i..=last_col {
                    work.swap(idx(i, j), idx(best, j));
                }
            }
            let pivot = work[idx(i, i)];
            if pivot == ZERO {
                singular = true;
                continue;
            }
            for r in i + 1..=last_row {
                let m = work[idx(r, i)] / pivot;
                l[i * p + (r - i - 1)] = m;
                if m != ZERO {
                    for j in i + 1..=last_col {
                        let uij = work[idx(i, j)];
                        work[idx(r, j)] -= m * uij;
                    }
                }
            }
        }
        let uw = 2 * p + 1;
        let mut u = vec![ZERO; n * uw];
        for i in 0..n {
            for j in i..=(i + 2 * p).min(n - 1) {
                u[i * uw + (j - i)] = work[idx(i, j)];
            }
        }
        BandLu { n, p, u, l, piv, singular }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    fn u_at(&self, i: usize, j: usize) -> Complex64 {
        self.u[i * (2 * self.p + 1) + (j - i)]
    }

    /// Solves `(A - shift) x = b` in place.
    pub fn solve(&self, b: &mut [Complex64]) {
        let (n, p) = (self.n, self.p);
        for i in 0..n {
            b.swap(i, self.piv[i]);
            let bi = b[i];
            for r in i + 1..=(i + p).min(n - 1) {
                b[r] -= self.l[i * p + (r - i - 1)] * bi;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + 2 * p).min(n - 1) {
                s -= self.u_at(i, j) * b[j];
            }
            b[i] = s / self.u_at(i, i);
        }
    }

    /// Solves `(A - shift)^H x = b` in place.
    pub fn solve_adjoint(&self, b: &mut [Complex64]) {
        let (n, p) = (self.n, self.p);
        // U^H y = b, forward
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(2 * p)..i {
                s -= self.u_at(j, i).conj() * b[j];
            }
            b[i] = s / self.u_at(i, i).conj();
        }
        // then the eliminations and interchanges in reverse, adjointed
        for i in (0..n).rev() {
            let mut s = b[i];
            for r in i + 1..=(i + p).min(n - 1) {
                s -= self.l[i * p + (r - i - 1)].conj() * b[r];
            }
            b[i] = s;
            b.swap(i, self.piv[i]);
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, by Sturm-sequence bisection.
fn tridiagonal_max_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < k { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = alpha[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..k {
            let qs = if q.abs() < f64::MIN_POSITIVE { f64::MIN_POSITIVE.copysign(q) } else { q };
            q = alpha[i] - x - beta[i - 1] * beta[i - 1] / qs;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            break;
        }
        if count_below(mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `σ_min(A - z·I)` by Lanczos on `(A - z)^{-H}(A - z)^{-1}` with full
/// reorthogonalization. Returns 0 when the shifted matrix is exactly singular.
pub fn sigma_min_shifted(a: &BandMatrix, z: Complex64) -> f64 {
    let lu = BandLu::factor(a, z);
    if lu.is_singular() {
        return 0.0;
    }
    let n = a.n;
    let kmax = n.min(60);
    // fixed start vector keeps results bit-reproducible
    let mut q: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(1.0 + 0.5 * ((j as f64) * 0.7548776662).fract(), 0.25 * ((j as f64) * 0.5698402910).fract()))
        .collect();
    let q_norm = norm2(&q);
    q.iter_mut().for_each(|x| *x /= q_norm);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(kmax);
    let mut alpha = Vec::with_capacity(kmax);
    let mut beta: Vec<f64> = Vec::with_capacity(kmax);
    let mut theta_prev = 0.0;
    let mut theta = 0.0;
    for k in 0..kmax {
        let mut w = q.clone();
        lu.solve(&mut w);
        lu.solve_adjoint(&mut w);
        let a_k = dot(&q, &w).re;
        alpha.push(a_k);
        for (x, qi) in w.iter_mut().zip(&q) {
            *x -= *qi * a_k;
        }
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            for (x, pi) in w.iter_mut().zip(prev) {
                *x -= *pi * b;
            }
        }
        basis.push(q);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (x, vi) in w.iter_mut().zip(v) {
                    *x -= *vi * c;
                }
            }
        }
        theta = tridiagonal_max_eigenvalue(&alpha, &beta);
        let b_k = norm2(&w);
        if k > 0 && (theta - theta_prev).abs() <= 1e-14 * theta {
            break;
        }
        if b_k <= 1e-15 * theta || !b_k.is_finite() {
            break;
        }
        theta_prev = theta;
        beta.push(b_k);
        q = w.iter().map(|x| x / b_k).collect();
    }
    if !theta.is_finite() || theta <= 0.0 {
        return 0.0;
    }
    1.0 / theta.sqrt()
}
