//! Dense symmetric factorizations used by the solver and the spectrum check.
//!
//! Matrices are stored column-major and only their lower triangle is read.
//! Factorizations overwrite their input so a single n×n buffer suffices.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::{lblt, llt};
use faer::{Mat, MatMut, MatRef, Par};

/// In-place `P A Pᵀ = L B Lᵀ` factorization with Bunch-Kaufman pivoting.
pub struct LbltFactor {
    factors: Mat<f64>,
    subdiag: faer::diag::Diag<f64>,
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
}

impl LbltFactor {
    /// Factors the lower triangle of `a`, consuming it.
    pub fn new(mut a: Mat<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut subdiag = faer::diag::Diag::<f64>::zeros(n);
        let mut perm = vec![0usize; n];
        let mut perm_inv = vec![0usize; n];
        let par = Par::Seq;
        let mut mem = MemBuffer::new(lblt::factor::cholesky_in_place_scratch::<usize, f64>(
            n,
            par,
            Default::default(),
        ));
        let stack = MemStack::new(&mut mem);
        lblt::factor::cholesky_in_place(
            a.as_mut(),
            subdiag.as_mut(),
            &mut perm,
            &mut perm_inv,
            par,
            stack,
            Default::default(),
        );
        Self {
            factors: a,
            subdiag,
            perm,
            perm_inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.factors.nrows()
    }

    /// Overwrites `rhs` with `A⁻¹ rhs`.
    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        let n = self.dim();
        let par = Par::Seq;
        let mut mem = MemBuffer::new(lblt::solve::solve_in_place_scratch::<usize, f64>(
            n,
            rhs.ncols(),
            par,
        ));
        let stack = MemStack::new(&mut mem);
        let perm = faer::perm::PermRef::new_checked(&self.perm, &self.perm_inv, n);
        lblt::solve::solve_in_place(
            self.factors.as_ref(),
            self.factors.diagonal(),
            self.subdiag.as_ref(),
            perm,
            rhs,
            par,
            stack,
        );
    }

    /// Inertia `(negative, zero, positive)` of the factored matrix.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let n = self.dim();
        let d = self.factors.diagonal();
        let (mut neg, mut zero, mut pos) = (0, 0, 0);
        let mut i = 0;
        while i < n {
            let s = self.subdiag[i];
            if s == 0.0 {
                let v = d[i];
                if v < 0.0 {
                    neg += 1;
                } else if v > 0.0 {
                    pos += 1;
                } else {
                    zero += 1;
                }
                i += 1;
            } else {
                let (a, b) = (d[i], d[i + 1]);
                let det = a * b - s * s;
                if det < 0.0 {
                    neg += 1;
                    pos += 1;
                } else if det > 0.0 {
                    if a + b > 0.0 {
                        pos += 2;
                    } else {
                        neg += 2;
                    }
                } else {
                    zero += 1;
                    if a + b > 0.0 {
                        pos += 1;
                    } else {
                        neg += 1;
                    }
                }
                i += 2;
            }
        }
        (neg, zero, pos)
    }
}

/// In-place Cholesky factor; `None` when the matrix is not positive definite.
pub struct CholeskyFactor {
    l: Mat<f64>,
}

impl CholeskyFactor {
    pub fn new(mut a: Mat<f64>) -> Option<Self> {
        let n = a.nrows();
        let par = Par::Seq;
        let mut mem = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(
            n,
            par,
            Default::default(),
        ));
        let stack = MemStack::new(&mut mem);
        llt::factor::cholesky_in_place(
            a.as_mut(),
            Default::default(),
            par,
            stack,
            Default::default(),
        )
        .ok()?;
        Some(Self { l: a })
    }

    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        let mut mem = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(
            self.l.nrows(),
            rhs.ncols(),
            Par::Seq,
        ));
        let stack = MemStack::new(&mut mem);
        llt::solve::solve_in_place(self.l.as_ref(), rhs, Par::Seq, stack);
    }
}

/// Eigenvalues of a small dense symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Option<Vec<f64>> {
    let evd = a.self_adjoint_eigen(faer::Side::Lower).ok()?;
    let s = evd.S().column_vector();
    let mut v: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lblt_solves_indefinite_system() {
        let n = 40;
        let a = Mat::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                i as f64 - 17.5
            } else {
                1.0 / (1.0 + (i as f64 - j as f64).abs())
            }
        });
        let b = Mat::<f64>::from_fn(n, 2, |i, j| (i * (j + 1)) as f64 * 0.1 - 1.0);
        let f = LbltFactor::new(a.clone());
        let mut x = b.clone();
        f.solve_in_place(x.as_mut());
        let r = &a * &x - &b;
        assert!(r.norm_l2() < 1e-11 * b.norm_l2());
        let ev = symmetric_eigenvalues(a.as_ref()).unwrap();
        let neg = ev.iter().filter(|&&e| e < 0.0).count();
        assert_eq!(f.inertia().0, neg);
        assert!(CholeskyFactor::new(a).is_none());
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let n = 10;
        let a = Mat::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                4.0
            } else {
                1.0 / (1.0 + (i + j) as f64)
            }
        });
        let f = CholeskyFactor::new(a.clone()).unwrap();
        let b = Mat::<f64>::from_fn(n, 1, |i, _| i as f64);
        let mut x = b.clone();
        f.solve_in_place(x.as_mut());
        assert!((&a * &x - &b).norm_l2() < 1e-12);
    }
}
