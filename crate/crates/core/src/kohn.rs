//! Complex Kohn system, S-matrix estimates and phase shifts.
//!
//! With `ℋ_E C + ω1 + S̄ ω2 = 0` and `ω2ᵀC + ⟨Ω2|H-E|Ω1⟩ + S̄⟨Ω2|H-E|Ω2⟩ = 0`,
//!
//! ```text
//! S̄ = -[M21 - ω2ᵀℋ⁻¹ω1] / [M22 - ω2ᵀℋ⁻¹ω2]
//! S  = S̄ + i (ω1ᵀC + M11 + S̄ M12)
//! ```
//!
//! where `M_ab = ⟨Ω_a|H-E|Ω_b⟩` and all products are bilinear. The second
//! line is `S̄ + i⟨Ψ|H-E|Ψ⟩` after the Kohn equations remove six of its
//! nine blocks.

use crate::asymptotics::{
    asymptotic_elements, hybrid_vectors, AsymptoticElements, AsymptoticsError, HybridVectors,
    QuadratureConfig,
};
use crate::basis::Basis;
use crate::hamiltonian::{HamiltonianParts, SparseSymmetric};
use crate::linalg::LbltFactor;
use crate::physics::{APolicy, ChannelState, PhysicsError, ThreeBodySystem};
use faer::prelude::Solve;
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Relative residual required of every linear solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Memory that concurrent dense factorizations may occupy together.
pub const DENSE_MEMORY_BUDGET: usize = 4 << 30;

/// Energies solved at once so that their dense factorizations fit the budget.
fn concurrent_solves(dim: usize) -> usize {
    // Matrix plus factor workspace, both dense.
    let per = 2 * dim * dim * std::mem::size_of::<f64>();
    (DENSE_MEMORY_BUDGET / per.max(1)).max(1)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KohnError {
    #[error("linear solve failed: relative residual {residual:.3e} after refinement and fallback")]
    Solve { residual: f64 },
    #[error("Kohn anomaly: denominator {denominator:.3e} against scale {scale:.3e}")]
    Anomaly { denominator: f64, scale: f64 },
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    Dimension { matrix: usize, vector: usize },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
}

/// Solutions of `A x = b` for several right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution<T> {
    pub x: Vec<Vec<T>>,
    /// Largest `‖b - A x‖ / ‖b‖` over the right-hand sides.
    pub residual: f64,
}

/// Solves real systems with a symmetric indefinite factorization, iterative
/// refinement against the sparse matrix, and a fully pivoted LU fallback.
pub fn solve_real(
    matrix: &SparseSymmetric,
    rhs: &[Vec<f64>],
) -> Result<LinearSolution<f64>, KohnError> {
    let n = matrix.dim();
    for b in rhs {
        if b.len() != n {
            return Err(KohnError::Dimension {
                matrix: n,
                vector: b.len(),
            });
        }
    }
    if n == 0 {
        return Ok(LinearSolution {
            x: rhs.to_vec(),
            residual: 0.0,
        });
    }
    let zeros = vec![0.0; n];
    let factor = LbltFactor::new(matrix.to_dense_lower(&zeros));
    let solve = |b: &[Vec<f64>]| {
        let mut m = Mat::<f64>::from_fn(n, b.len(), |i, j| b[j][i]);
        factor.solve_in_place(m.as_mut());
        columns(&m)
    };
    let (x, residual) = refine(matrix, rhs, solve);
    if residual < SOLVE_TOLERANCE {
        return Ok(LinearSolution { x, residual });
    }
    drop(factor);
    let mut full = matrix.to_dense_lower(&zeros);
    for j in 0..n {
        for i in 0..j {
            full[(i, j)] = full[(j, i)];
        }
    }
    let lu = full.full_piv_lu();
    drop(full);
    let solve = |b: &[Vec<f64>]| {
        let mut m = Mat::<f64>::from_fn(n, b.len(), |i, j| b[j][i]);
        lu.solve_in_place(m.as_mut());
        columns(&m)
    };
    let (x, residual) = refine(matrix, rhs, solve);
    if residual < SOLVE_TOLERANCE {
        Ok(LinearSolution { x, residual })
    } else {
        Err(KohnError::Solve { residual })
    }
}

/// Complex right-hand sides solved as real and imaginary parts.
pub fn linear_solve(
    matrix: &SparseSymmetric,
    rhs: &[Vec<Complex64>],
) -> Result<LinearSolution<Complex64>, KohnError> {
    let real: Vec<Vec<f64>> = rhs
        .iter()
        .flat_map(|b| {
            [
                b.iter().map(|z| z.re).collect(),
                b.iter().map(|z| z.im).collect(),
            ]
        })
        .collect();
    let sol = solve_real(matrix, &real)?;
    let x = sol
        .x
        .chunks(2)
        .map(|pair| {
            pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect()
        })
        .collect();
    Ok(LinearSolution {
        x,
        residual: sol.residual,
    })
}

fn columns(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)]).collect())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residuals(matrix: &SparseSymmetric, rhs: &[Vec<f64>], x: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let mut worst: f64 = 0.0;
    let r = rhs
        .iter()
        .zip(x)
        .map(|(b, xi)| {
            let r = matrix.residual(b, xi);
            let bn = norm(b);
            worst = worst.max(if bn > 0.0 { norm(&r) / bn } else { norm(&r) });
            r
        })
        .collect();
    (r, worst)
}

fn refine<F>(matrix: &SparseSymmetric, rhs: &[Vec<f64>], solve: F) -> (Vec<Vec<f64>>, f64)
where
    F: Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
{
    let mut x = solve(rhs);
    let (mut r, mut res) = residuals(matrix, rhs, &x);
    for _ in 0..5 {
        if res < 1e-3 * SOLVE_TOLERANCE {
            break;
        }
        let dx = solve(&r);
        let trial: Vec<Vec<f64>> = x
            .iter()
            .zip(&dx)
            .map(|(a, d)| a.iter().zip(d).map(|(a, d)| a + d).collect())
            .collect();
        let (r2, res2) = residuals(matrix, rhs, &trial);
        if res2 >= res {
            break;
        }
        x = trial;
        r = r2;
        res = res2;
    }
    (x, res)
}

fn bilinear(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First-order estimate `S̄` from the asymptotic elements and the solved
/// vectors `ℋ⁻¹ω1`, `ℋ⁻¹ω2`.
pub fn first_order_s(
    m21: Complex64,
    m22: Complex64,
    omega2: &[Complex64],
    h_inv_omega1: &[Complex64],
    h_inv_omega2: &[Complex64],
) -> Result<Complex64, KohnError> {
    let num = m21 - bilinear(omega2, h_inv_omega1);
    let q22 = bilinear(omega2, h_inv_omega2);
    let den = m22 - q22;
    let scale = m22.norm() + q22.norm();
    if !(den.norm() > 1e-10 * scale) {
        return Err(KohnError::Anomaly {
            denominator: den.norm(),
            scale,
        });
    }
    Ok(-num / den)
}

/// Second-order `S = S̄ + i⟨Ψ|H-E|Ψ⟩` with `Ψ = Σ C_l φ_l + Ω1 + S̄ Ω2` and
/// `C` solving the first Kohn equation.
pub fn second_order_s(
    s_bar: Complex64,
    m11: Complex64,
    m12: Complex64,
    omega1: &[Complex64],
    coefficients: &[Complex64],
) -> Complex64 {
    s_bar + Complex64::i() * (bilinear(omega1, coefficients) + m11 + s_bar * m12)
}

/// Principal phase shift `½ arg S` in `(-π/2, π/2]`; this is the real part
/// of the `δ` solving `tan δ = i(1 - S)/(1 + S)`.
pub fn phase_shift(s: Complex64) -> f64 {
    0.5 * s.im.atan2(s.re)
}

/// Distance between two phase shifts modulo π.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// S matrix at one energy with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SMatrixPoint {
    pub k: f64,
    pub energy: f64,
    pub a: f64,
    pub s: Complex64,
    pub s_bar: Complex64,
    /// Phase shift in radians, branch-continuous along a sweep.
    pub delta: f64,
    /// `|1 - |S|²|`.
    pub unitarity_defect: f64,
    pub solver_residual: f64,
    /// Coarse-quadrature change of the hybrid vectors.
    pub hybrid_error: f64,
    /// Coarse-quadrature change of the asymptotic elements.
    pub elements_error: f64,
    pub normalization_defect: f64,
    pub antisymmetry_defect: f64,
}

/// Everything that does not depend on the energy.
pub struct KohnProblem<'a> {
    pub basis: &'a Basis,
    pub system: ThreeBodySystem,
    pub parts: &'a HamiltonianParts,
    pub quadrature: QuadratureConfig,
}

impl KohnProblem<'_> {
    /// S matrix at one channel state.
    pub fn solve(&self, channel: &ChannelState) -> Result<SMatrixPoint, KohnError> {
        let hybrid = hybrid_vectors(self.basis, &self.system, channel, &self.quadrature)?;
        let elements = asymptotic_elements(&self.system, channel, &self.quadrature)?;
        self.solve_with(channel, &hybrid, &elements)
    }

    /// S matrix from precomputed hybrid vectors and asymptotic elements.
    pub fn solve_with(
        &self,
        channel: &ChannelState,
        hybrid: &HybridVectors,
        elements: &AsymptoticElements,
    ) -> Result<SMatrixPoint, KohnError> {
        let matrix = self.parts.h_e(channel.energy);
        // ω_λ = i sine + s_λ cosine, so two real solves suffice.
        let sol = solve_real(&matrix, &[hybrid.sine.clone(), hybrid.cosine.clone()])?;
        let combine = |sl: f64| -> Vec<Complex64> {
            sol.x[0]
                .iter()
                .zip(&sol.x[1])
                .map(|(&ys, &yc)| Complex64::new(sl * yc, ys))
                .collect()
        };
        let (w1, w2) = (hybrid.omega(1)?, hybrid.omega(2)?);
        let (y1, y2) = (combine(-1.0), combine(1.0));
        let s_bar = first_order_s(elements.get(2, 1), elements.get(2, 2), &w2, &y1, &y2)?;
        let c: Vec<Complex64> = y1.iter().zip(&y2).map(|(a, b)| -(a + s_bar * b)).collect();
        let s = second_order_s(s_bar, elements.get(1, 1), elements.get(1, 2), &w1, &c);
        Ok(SMatrixPoint {
            k: channel.k,
            energy: channel.energy,
            a: channel.a,
            s,
            s_bar,
            delta: phase_shift(s),
            unitarity_defect: (1.0 - s.norm_sqr()).abs(),
            solver_residual: sol.residual,
            hybrid_error: hybrid.error,
            elements_error: elements.error,
            normalization_defect: elements.normalization_defect,
            antisymmetry_defect: elements.antisymmetry_defect,
        })
    }

    /// S matrix at each channel state, in parallel.
    /// At most [`DENSE_MEMORY_BUDGET`] worth of factorizations are live at once.
    pub fn solve_all(&self, channels: &[ChannelState]) -> Vec<Result<SMatrixPoint, KohnError>> {
        channels
            .chunks(concurrent_solves(self.parts.dim()))
            .flat_map(|chunk| {
                chunk
                    .par_iter()
                    .with_max_len(1)
                    .map(|ch| self.solve(ch))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// S matrix at each energy. Failures are kept per point; successful
    /// points are sorted by `k` and their phase shifts unwrapped. When
    /// `bound_states` is given, the branch of the lowest point is the one
    /// closest to `bound_states·π`.
    pub fn sweep(
        &self,
        energies: &[f64],
        policy: APolicy,
        bound_states: Option<usize>,
    ) -> Vec<(f64, Result<SMatrixPoint, KohnError>)> {
        let symmetry = self.basis.spec().symmetry;
        let mut out: Vec<(f64, Result<SMatrixPoint, KohnError>)> = energies
            .chunks(concurrent_solves(self.parts.dim()))
            .flat_map(|chunk| {
                chunk
                    .par_iter()
                    .with_max_len(1)
                    .map(|&e| {
                        let r = ChannelState::from_energy(&self.system, e, symmetry, policy)
                            .map_err(KohnError::from)
                            .and_then(|ch| self.solve(&ch));
                        (e, r)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<&mut SMatrixPoint> = out
            .iter_mut()
            .filter_map(|(_, r)| r.as_mut().ok())
            .collect();
        unwrap_phases(&mut points, bound_states);
        out
    }
}

/// Shifts each phase by a multiple of π to minimize the jump from the
/// previous point.
pub fn unwrap_phases(points: &mut [&mut SMatrixPoint], bound_states: Option<usize>) {
    let mut previous: Option<f64> = bound_states.map(|n| n as f64 * PI);
    for p in points.iter_mut() {
        if let Some(prev) = previous {
            p.delta += PI * ((prev - p.delta) / PI).round();
        }
        previous = Some(p.delta);
    }
}
