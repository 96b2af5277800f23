//! Symmetrized Lagrange basis in perimetric coordinates.
//!
//! Raw functions are products `G_pqr = f_p(x/h_x) f_q(y/h) f_r(z/h) / 𝒩_pqr`.
//! The basis used by the solver is
//!
//! ```text
//! φ_l = c_l [G_pqr + (-1)^σ G_prq],   c_l = 1/√(2(1+δ_qr)),   r ≤ q − σ
//! ```
//!
//! which is orthonormal at the Gauss approximation. Indices are zero-based.

use crate::physics::{Symmetry, ThreeBodySystem};
use crate::quadrature::{LagrangeLaguerre, QuadratureError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("mesh sizes must satisfy N_x ≥ 1 and N ≥ 1 + σ (got N_x={nx}, N={n}, σ={sigma})")]
    InvalidSize { nx: usize, n: usize, sigma: u8 },
    #[error("scale parameters must be positive (got h_x={hx}, h={h})")]
    InvalidScale { hx: f64, h: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nx: usize,
    pub n: usize,
    pub hx: f64,
    pub h: f64,
    pub symmetry: Symmetry,
}

impl MeshSpec {
    pub fn new(nx: usize, n: usize, hx: f64, h: f64, symmetry: Symmetry) -> Self {
        Self {
            nx,
            n,
            hx,
            h,
            symmetry,
        }
    }

    pub fn validate(&self) -> Result<(), BasisError> {
        let sigma = self.symmetry.sigma();
        if self.nx == 0 || self.n < 1 + sigma as usize {
            return Err(BasisError::InvalidSize {
                nx: self.nx,
                n: self.n,
                sigma,
            });
        }
        if !(self.hx > 0.0 && self.h > 0.0 && self.hx.is_finite() && self.h.is_finite()) {
            return Err(BasisError::InvalidScale {
                hx: self.hx,
                h: self.h,
            });
        }
        Ok(())
    }

    /// `N_x N (N + (-1)^σ) / 2`.
    pub fn total_size(&self) -> usize {
        match self.symmetry {
            Symmetry::Singlet => self.nx * self.n * (self.n + 1) / 2,
            Symmetry::Triplet => self.nx * self.n * (self.n - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimetricPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PerimetricPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn r12(&self) -> f64 {
        0.5 * (self.x + self.y)
    }

    pub fn r13(&self) -> f64 {
        0.5 * (self.x + self.z)
    }

    pub fn r23(&self) -> f64 {
        0.5 * (self.y + self.z)
    }

    /// The exchange of particles 2 and 3.
    pub fn swap_yz(&self) -> Self {
        Self::new(self.x, self.z, self.y)
    }

    /// Angular-integrated volume element `(π²/4)(x+y)(x+z)(y+z)`.
    pub fn volume_element(&self) -> f64 {
        0.25 * PI * PI * (self.x + self.y) * (self.x + self.z) * (self.y + self.z)
    }
}

/// Radial Jacobi coordinates `(x1, x2)` of a perimetric point.
///
/// `x1 = r12` and `x2` is the distance of particle 3 from the centre of
/// mass of the pair (1,2).
pub fn jacobi_from_perimetric(alpha: f64, p: &PerimetricPoint) -> (f64, f64) {
    let x1 = p.r12();
    if alpha == 0.0 {
        return (x1, p.r13());
    }
    // Sum of non-negative terms, so no cancellation for physical points.
    let d = alpha * p.y - (1.0 - alpha) * p.x;
    let c = (1.0 - alpha) * p.x + alpha * p.y;
    let x2 = 0.5 * (d * d + 2.0 * c * p.z + p.z * p.z).sqrt();
    (x1, x2)
}

/// Jacobi coordinates after exchanging particles 2 and 3, given the cosine
/// `u` of the angle between the Jacobi vectors.
pub fn permuted_jacobi(alpha: f64, x1: f64, x2: f64, u: f64) -> (f64, f64) {
    let a2 = alpha * alpha;
    let p1 = (x2 * x2 + a2 * x1 * x1 + 2.0 * alpha * x1 * x2 * u)
        .max(0.0)
        .sqrt();
    let b = 1.0 - a2;
    let p2 = (a2 * x2 * x2 + b * b * x1 * x1 - 2.0 * alpha * b * x1 * x2 * u)
        .max(0.0)
        .sqrt();
    (p1, p2)
}

/// Convenience wrapper taking the system rather than `α`.
pub fn jacobi_for(system: &ThreeBodySystem, p: &PerimetricPoint) -> (f64, f64) {
    jacobi_from_perimetric(system.alpha(), p)
}

/// Enumerated basis with mesh data shared by assembly and quadrature.
#[derive(Debug, Clone)]
pub struct Basis {
    spec: MeshSpec,
    mesh_x: LagrangeLaguerre,
    mesh_yz: LagrangeLaguerre,
    triples: Vec<[u32; 3]>,
    lookup: Vec<u32>,
    coef: Vec<f64>,
    /// `1/𝒩_pqr` over the full (p, q, r) grid.
    inv_norm: Vec<f64>,
}

const NONE: u32 = u32::MAX;

impl Basis {
    pub fn new(spec: MeshSpec) -> Result<Self, BasisError> {
        spec.validate()?;
        let mesh_x = LagrangeLaguerre::new(spec.nx)?;
        let mesh_yz = LagrangeLaguerre::new(spec.n)?;
        let (nx, n) = (spec.nx, spec.n);
        let sigma = spec.symmetry.sigma() as usize;
        let mut triples = Vec::with_capacity(spec.total_size());
        let mut lookup = vec![NONE; nx * n * n];
        let mut coef = Vec::with_capacity(spec.total_size());
        for p in 0..nx {
            for q in 0..n {
                for r in 0..=q {
                    if r + sigma > q {
                        continue;
                    }
                    lookup[(p * n + q) * n + r] = triples.len() as u32;
                    triples.push([p as u32, q as u32, r as u32]);
                    coef.push(if q == r {
                        0.5
                    } else {
                        std::f64::consts::FRAC_1_SQRT_2
                    });
                }
            }
        }
        debug_assert_eq!(triples.len(), spec.total_size());
        let mut inv_norm = vec![0.0; nx * n * n];
        for p in 0..nx {
            for q in 0..n {
                for r in 0..n {
                    inv_norm[(p * n + q) * n + r] =
                        1.0 / normalization_with(&spec, &mesh_x, &mesh_yz, p, q, r);
                }
            }
        }
        Ok(Self {
            spec,
            mesh_x,
            mesh_yz,
            triples,
            lookup,
            coef,
            inv_norm,
        })
    }

    pub fn spec(&self) -> &MeshSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn mesh_x(&self) -> &LagrangeLaguerre {
        &self.mesh_x
    }

    pub fn mesh_yz(&self) -> &LagrangeLaguerre {
        &self.mesh_yz
    }

    pub fn triple(&self, l: usize) -> (usize, usize, usize) {
        let [p, q, r] = self.triples[l];
        (p as usize, q as usize, r as usize)
    }

    /// Flat index of the canonical triple `r ≤ q − σ`.
    pub fn index(&self, p: usize, q: usize, r: usize) -> Option<usize> {
        let n = self.spec.n;
        if p >= self.spec.nx || q >= n || r >= n {
            return None;
        }
        match self.lookup[(p * n + q) * n + r] {
            NONE => None,
            v => Some(v as usize),
        }
    }

    /// Symmetrization coefficient `c_l`.
    pub fn coefficient(&self, l: usize) -> f64 {
        self.coef[l]
    }

    /// Position of the raw function `(p, q, r)` in the full grid.
    pub fn raw_offset(&self, p: usize, q: usize, r: usize) -> usize {
        (p * self.spec.n + q) * self.spec.n + r
    }

    pub fn inv_normalization(&self, p: usize, q: usize, r: usize) -> f64 {
        self.inv_norm[self.raw_offset(p, q, r)]
    }

    pub fn normalization(&self, p: usize, q: usize, r: usize) -> f64 {
        1.0 / self.inv_normalization(p, q, r)
    }

    /// Scaled mesh point `(h_x ξ_p, h ξ_q, h ξ_r)`.
    pub fn point(&self, p: usize, q: usize, r: usize) -> PerimetricPoint {
        PerimetricPoint::new(
            self.spec.hx * self.mesh_x.nodes()[p],
            self.spec.h * self.mesh_yz.nodes()[q],
            self.spec.h * self.mesh_yz.nodes()[r],
        )
    }

    /// Product of the three Gauss weights (with scale Jacobian) at a mesh point.
    pub fn gauss_weight(&self, p: usize, q: usize, r: usize) -> f64 {
        let lx = self.mesh_x.lambdas();
        let ly = self.mesh_yz.lambdas();
        self.spec.hx * self.spec.h * self.spec.h * lx[p] * ly[q] * ly[r]
    }

    /// Raw `G_pqr` and its gradient at an arbitrary point.
    pub fn raw_gradient(&self, p: usize, q: usize, r: usize, pt: &PerimetricPoint) -> [f64; 4] {
        let (hx, h) = (self.spec.hx, self.spec.h);
        let fx = self.mesh_x.eval_all(p, pt.x / hx).expect("index in range");
        let fy = self.mesh_yz.eval_all(q, pt.y / h).expect("index in range");
        let fz = self.mesh_yz.eval_all(r, pt.z / h).expect("index in range");
        let inv = self.inv_normalization(p, q, r);
        [
            inv * fx[0] * fy[0] * fz[0],
            inv * fx[1] / hx * fy[0] * fz[0],
            inv * fx[0] * fy[1] / h * fz[0],
            inv * fx[0] * fy[0] * fz[1] / h,
        ]
    }

    pub fn raw_value(&self, p: usize, q: usize, r: usize, pt: &PerimetricPoint) -> f64 {
        self.raw_gradient(p, q, r, pt)[0]
    }

    /// Symmetrized `φ_l` and its gradient `(∂x, ∂y, ∂z)` at an arbitrary point.
    pub fn gradient(&self, l: usize, pt: &PerimetricPoint) -> [f64; 4] {
        let (p, q, r) = self.triple(l);
        let s = self.spec.symmetry.sign();
        let c = self.coef[l];
        let a = self.raw_gradient(p, q, r, pt);
        let b = self.raw_gradient(p, r, q, pt);
        [
            c * (a[0] + s * b[0]),
            c * (a[1] + s * b[1]),
            c * (a[2] + s * b[2]),
            c * (a[3] + s * b[3]),
        ]
    }

    pub fn eval(&self, l: usize, pt: &PerimetricPoint) -> f64 {
        self.gradient(l, pt)[0]
    }
}

fn normalization_with(
    spec: &MeshSpec,
    mx: &LagrangeLaguerre,
    my: &LagrangeLaguerre,
    p: usize,
    q: usize,
    r: usize,
) -> f64 {
    // Ordered so that 𝒩_pqr and 𝒩_prq are bitwise equal.
    let (q, r) = (q.max(r), q.min(r));
    let x = spec.hx * mx.nodes()[p];
    let y = spec.h * my.nodes()[q];
    let z = spec.h * my.nodes()[r];
    0.5 * PI * (spec.hx * spec.h * spec.h * (x + y) * (x + z) * (y + z)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(nx: usize, n: usize, sym: Symmetry) -> MeshSpec {
        MeshSpec::new(nx, n, 1.0, 1.3, sym)
    }

    #[test]
    fn counting() {
        assert_eq!(spec(10, 35, Symmetry::Singlet).total_size(), 6300);
        assert_eq!(spec(10, 35, Symmetry::Triplet).total_size(), 5950);
        let b = Basis::new(spec(1, 1, Symmetry::Singlet)).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.triple(0), (0, 0, 0));
        assert!(Basis::new(spec(1, 1, Symmetry::Triplet)).is_err());
        for nx in 1..4 {
            for n in 2..7 {
                for sym in [Symmetry::Singlet, Symmetry::Triplet] {
                    let b = Basis::new(spec(nx, n, sym)).unwrap();
                    assert_eq!(b.len(), b.spec().total_size());
                    for l in 0..b.len() {
                        let (p, q, r) = b.triple(l);
                        assert_eq!(b.index(p, q, r), Some(l));
                    }
                }
            }
        }
    }

    #[test]
    fn normalization_unit_nodes() {
        let s = MeshSpec::new(1, 1, 1.0, 1.0, Symmetry::Singlet);
        let m = LagrangeLaguerre::new(1).unwrap();
        // The single Laguerre node is exactly 1.
        let v = normalization_with(&s, &m, &m, 0, 0, 0);
        assert_relative_eq!(v, 0.5 * PI * 8f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn lagrange_property_of_raw_functions() {
        let b = Basis::new(spec(3, 4, Symmetry::Singlet)).unwrap();
        let lx = b.mesh_x().lambdas();
        let ly = b.mesh_yz().lambdas();
        for (p, q, r) in [(0, 1, 3), (2, 0, 0), (1, 3, 2)] {
            let pt = b.point(p, q, r);
            let v = b.raw_value(p, q, r, &pt);
            let expect = b.inv_normalization(p, q, r) / (lx[p] * ly[q] * ly[r]).sqrt();
            assert_relative_eq!(v, expect, max_relative = 1e-12);
            assert!(b.raw_value(p, (q + 1) % 4, r, &pt).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn symmetry_under_exchange() {
        let b0 = Basis::new(spec(2, 5, Symmetry::Singlet)).unwrap();
        let b1 = Basis::new(spec(2, 5, Symmetry::Triplet)).unwrap();
        let pt = PerimetricPoint::new(0.7, 2.1, 3.4);
        for l in 0..b0.len() {
            assert_relative_eq!(
                b0.eval(l, &pt),
                b0.eval(l, &pt.swap_yz()),
                max_relative = 1e-13
            );
        }
        for l in 0..b1.len() {
            assert_relative_eq!(
                b1.eval(l, &pt),
                -b1.eval(l, &pt.swap_yz()),
                max_relative = 1e-13
            );
        }
        let diag = PerimetricPoint::new(0.7, 2.2, 2.2);
        for l in 0..b1.len() {
            let scale = b0.eval(l.min(b0.len() - 1), &diag).abs().max(1e-3);
            assert!(b1.eval(l, &diag).abs() < 1e-13 * scale);
        }
    }

    #[test]
    fn gauss_orthonormality() {
        for (sym, hx, h) in [(Symmetry::Singlet, 1.0, 1.3), (Symmetry::Triplet, 1.2, 5.2)] {
            let b = Basis::new(MeshSpec::new(3, 5, hx, h, sym)).unwrap();
            let (nx, n) = (3, 5);
            let mut worst: f64 = 0.0;
            let mut vals = vec![vec![0.0; nx * n * n]; b.len()];
            for (l, row) in vals.iter_mut().enumerate() {
                for p in 0..nx {
                    for q in 0..n {
                        for r in 0..n {
                            row[(p * n + q) * n + r] = b.eval(l, &b.point(p, q, r));
                        }
                    }
                }
            }
            for i in 0..b.len() {
                for j in 0..b.len() {
                    let mut s = 0.0;
                    for p in 0..nx {
                        for q in 0..n {
                            for r in 0..n {
                                let o = (p * n + q) * n + r;
                                let w = b.gauss_weight(p, q, r) * b.point(p, q, r).volume_element();
                                s += w * vals[i][o] * vals[j][o];
                            }
                        }
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((s - expect).abs());
                }
            }
            assert!(worst < 1e-12, "defect {worst}");
        }
    }

    #[test]
    fn jacobi_limits() {
        let pt = PerimetricPoint::new(1.1, 2.3, 0.4);
        let (x1, x2) = jacobi_from_perimetric(0.0, &pt);
        assert_eq!(x1, pt.r12());
        assert_relative_eq!(x2, pt.r13(), max_relative = 1e-15);
        let (a, b) = jacobi_from_perimetric(0.3, &PerimetricPoint::new(0.0, 0.0, 0.0));
        assert_eq!((a, b), (0.0, 0.0));
        let (p1, p2) = permuted_jacobi(0.0, 1.5, 2.5, 0.3);
        assert_relative_eq!(p1, 2.5, max_relative = 1e-15);
        assert_relative_eq!(p2, 1.5, max_relative = 1e-15);
    }
}
