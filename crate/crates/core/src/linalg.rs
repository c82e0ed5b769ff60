//! Banded storage and the direct factorizations used by every solve in the crate.
//!
//! One-dimensional P1 assemblies are tridiagonal, so all Gram and step matrices are kept in
//! band form. Symmetric positive definite matrices are factored with a banded Cholesky; the
//! general (non-symmetric) step matrices that only occur in small matrix-mode problems fall
//! back to a dense LU with partial pivoting.

use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Square matrix stored by diagonals: `kl` sub-diagonals and `ku` super-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0, 0);
        m.data.copy_from_slice(diag);
        m
    }

    /// Converts a dense matrix, keeping only the band that actually carries non-zeros.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "band matrices are square");
        let n = a.nrows();
        let (mut kl, mut ku) = (0, 0);
        for j in 0..n {
            for i in 0..n {
                if a[(i, j)] != 0.0 {
                    if i > j {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            for j in m.row_range(i) {
                m.set(i, j, a[(i, j)]);
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.row_range(i) {
                a[(i, j)] = self.get(i, j);
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the stored band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.kl - i] += value;
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n);
        DVector::from_fn(self.n, |i, _| {
            self.row_range(i).map(|j| self.get(i, j) * x[j]).sum()
        })
    }

    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            for j in self.row_range(i) {
                y[j] += self.get(i, j) * x[i];
            }
        }
        y
    }

    /// Bilinear form `wᵀ·A·v`.
    pub fn bilinear(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (0..self.n)
            .map(|i| w[i] * self.row_range(i).map(|j| self.get(i, j) * v[j]).sum::<f64>())
            .sum()
    }

    /// `alpha·A + beta·B` on the union of both bands.
    pub fn lincomb(alpha: f64, a: &BandMatrix, beta: f64, b: &BandMatrix) -> BandMatrix {
        assert_eq!(a.n, b.n, "lincomb of matrices with different dimensions");
        let mut out = BandMatrix::zeros(a.n, a.kl.max(b.kl), a.ku.max(b.ku));
        for i in 0..a.n {
            for j in a.row_range(i) {
                out.add(i, j, alpha * a.get(i, j));
            }
            for j in b.row_range(i) {
                out.add(i, j, beta * b.get(i, j));
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> BandMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in self.row_range(i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.row_range(i).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.get(i, i))
    }
}

/// Cholesky factor `A = L·Lᵀ` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    p: usize,
    // row i holds L[i, i-p..=i]
    l: Vec<f64>,
}

impl BandCholesky {
    /// Returns `None` unless every pivot is strictly positive. Only the lower band is read.
    pub fn new(a: &BandMatrix) -> Option<Self> {
        let n = a.dim();
        let p = a.lower_bandwidth().max(a.upper_bandwidth());
        let w = p + 1;
        let mut l = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + j + p - i;
        for i in 0..n {
            let j0 = i.saturating_sub(p);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(p));
                let mut s = a.get(i, j);
                for k in k0..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !s.is_finite() || s <= 0.0 {
                        return None;
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Some(Self { n, p, l })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        let at = |i: usize, j: usize| i * w + j + p - i;
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l[at(i, k)] * y[k];
            }
            y[i] = s / self.l[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + p + 1).min(n) {
                s -= self.l[at(k, i)] * y[k];
            }
            y[i] = s / self.l[at(i, i)];
        }
        y
    }
}

/// Direct factorization of a step or Gram matrix.
#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(BandCholesky),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factorization {
    /// Banded Cholesky for symmetric positive definite input, dense pivoted LU otherwise.
    /// `None` if the matrix is numerically singular.
    pub fn new(a: &BandMatrix) -> Option<Self> {
        if a.asymmetry() <= 1e-14 {
            if let Some(c) = BandCholesky::new(a) {
                return Some(Self::Cholesky(c));
            }
        }
        let dense = a.to_dense();
        let scale = dense.amax();
        let lu = dense.lu();
        let u = lu.u();
        let tiny = scale * f64::EPSILON * a.dim() as f64;
        if scale == 0.0 || u.diagonal().iter().any(|d| d.abs() <= tiny || !d.is_finite()) {
            return None;
        }
        Some(Self::Lu(lu))
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Cholesky(c) => c.solve(b),
            Self::Lu(lu) => lu.solve(b).expect("factorization checked for singularity"),
        }
    }
}

/// Whitening transform for an SPD matrix `B = L·Lᵀ`: maps `A` to `L⁻¹·A·L⁻ᵀ`.
pub(crate) struct Whitening {
    l: DMatrix<f64>,
}

impl Whitening {
    pub fn new(b: &DMatrix<f64>) -> Option<Self> {
        let chol = nalgebra::Cholesky::new(b.clone())?;
        Some(Self { l: chol.l() })
    }

    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        // L⁻¹·A, then L⁻¹·(L⁻¹·A)ᵀ = L⁻¹·Aᵀ·L⁻ᵀ, whose transpose is the result
        let x = self
            .l
            .solve_lower_triangular(a)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .solve_lower_triangular(&x.transpose())
            .expect("cholesky factor has a positive diagonal")
            .transpose()
    }

    /// Eigenvalues of the symmetric pencil `(A, B)` in ascending order; `A` must be symmetric.
    pub fn pencil_eigenvalues(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let c = self.apply(a);
        let c = (&c + c.transpose()) * 0.5;
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|x, y| x.total_cmp(y));
        ev
    }

    /// Largest singular value of `L⁻¹·A·L⁻ᵀ`, i.e. the norm of `A` as a map `V → V′`.
    pub fn operator_norm(&self, a: &DMatrix<f64>) -> f64 {
        let c = self.apply(a);
        c.singular_values().iter().fold(0.0_f64, |m, s| m.max(*s))
    }
}

pub(crate) fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> BandMatrix {
        let mut m = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, d);
            if i > 0 {
                m.set(i, i - 1, lo);
            }
            if i + 1 < n {
                m.set(i, i + 1, up);
            }
        }
        m
    }

    #[test]
    fn dense_round_trip_detects_bandwidth() {
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 2.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 3.0, //
            5.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ]);
        let b = BandMatrix::from_dense(&a);
        assert_eq!(b.lower_bandwidth(), 2);
        assert_eq!(b.upper_bandwidth(), 2);
        assert_eq!(b.to_dense(), a);
        assert_eq!(b.get(3, 0), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = tridiag(6, -1.0, 3.0, 0.5);
        let x = DVector::from_fn(6, |i, _| (i as f64).sin() + 0.3);
        let dense = m.to_dense();
        assert_relative_eq!(m.mul_vec(&x), &dense * &x, epsilon = 1e-14);
        assert_relative_eq!(m.tr_mul_vec(&x), dense.transpose() * &x, epsilon = 1e-14);
        let w = DVector::from_fn(6, |i, _| 1.0 / (1.0 + i as f64));
        assert_relative_eq!(m.bilinear(&x, &w), w.dot(&(&dense * &x)), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_solves_spd_tridiagonal() {
        let m = tridiag(50, -1.0, 2.5, -1.0);
        let f = Factorization::new(&m).unwrap();
        assert!(matches!(f, Factorization::Cholesky(_)));
        let b = DVector::from_fn(50, |i, _| (i as f64 * 0.1).cos());
        let x = f.solve(&b);
        assert_relative_eq!(m.mul_vec(&x), b, epsilon = 1e-12);
    }

    #[test]
    fn nonsymmetric_falls_back_to_lu() {
        let m = tridiag(5, 0.3, 2.0, -1.2);
        let f = Factorization::new(&m).unwrap();
        assert!(matches!(f, Factorization::Lu(_)));
        let b = DVector::from_element(5, 1.0);
        assert_relative_eq!(m.mul_vec(&f.solve(&b)), b, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_symmetric_uses_lu_and_singular_is_rejected() {
        let m = BandMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(BandCholesky::new(&m).is_none());
        assert!(matches!(Factorization::new(&m), Some(Factorization::Lu(_))));
        let s = BandMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(Factorization::new(&s).is_none());
    }

    #[test]
    fn pencil_eigenvalues_of_scaled_identity() {
        let b = DMatrix::identity(3, 3) * 4.0;
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 8.0]));
        let w = Whitening::new(&b).unwrap();
        let ev = w.pencil_eigenvalues(&a);
        assert_relative_eq!(ev[0], 0.25, epsilon = 1e-14);
        assert_relative_eq!(ev[2], 2.0, epsilon = 1e-14);
        assert_relative_eq!(w.operator_norm(&a), 2.0, epsilon = 1e-14);
    }
}
