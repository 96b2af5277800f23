//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use faer::Mat;
use kohn_mesh::quadrature::laguerre_rule;
use kohn_mesh::{Basis, PerimetricPoint, ThreeBodySystem};

/// Particle positions realizing the interparticle distances of a perimetric
/// point: 1 at the origin, 2 on the x axis, 3 in the xy plane.
pub fn embed(pt: &PerimetricPoint) -> [[f64; 3]; 3] {
    let (r12, r13, r23) = (pt.r12(), pt.r13(), pt.r23());
    let u = (r12 * r12 + r13 * r13 - r23 * r23) / (2.0 * r12);
    let v = (r13 * r13 - u * u).max(0.0).sqrt();
    [[0.0; 3], [r12, 0.0, 0.0], [u, v, 0.0]]
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Perimetric coordinates from particle positions.
pub fn perimetric_of(pos: &[[f64; 3]; 3]) -> PerimetricPoint {
    let r12 = dist(&pos[0], &pos[1]);
    let r13 = dist(&pos[0], &pos[2]);
    let r23 = dist(&pos[1], &pos[2]);
    PerimetricPoint::new(r12 + r13 - r23, r12 - r13 + r23, -r12 + r13 + r23)
}

/// Cartesian gradients `∇_i φ_l` by central differences of particle positions.
fn cartesian_gradients(basis: &Basis, l: usize, pt: &PerimetricPoint) -> [[f64; 3]; 3] {
    let pos = embed(pt);
    let step = 1e-5;
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for c in 0..3 {
            let mut plus = pos;
            let mut minus = pos;
            plus[i][c] += step;
            minus[i][c] -= step;
            g[i][c] = (basis.eval(l, &perimetric_of(&plus))
                - basis.eval(l, &perimetric_of(&minus)))
                / (2.0 * step);
        }
    }
    g
}

/// Kinetic matrix `Σ_i ⟨∇_i φ_l|∇_i φ_m⟩/(2 m_i)` at the Gauss approximation of
/// the mesh, with gradients taken in Cartesian space.
pub fn cartesian_kinetic(basis: &Basis, system: &ThreeBodySystem) -> Vec<Vec<f64>> {
    let spec = *basis.spec();
    let inv_m = [system.inv_m1(), 1.0 / system.m2, 1.0 / system.m3];
    let dim = basis.len();
    let mut k = vec![vec![0.0; dim]; dim];
    for p in 0..spec.nx {
        for q in 0..spec.n {
            for r in 0..spec.n {
                let pt = basis.point(p, q, r);
                let w = basis.gauss_weight(p, q, r) * pt.volume_element();
                let grads: Vec<[[f64; 3]; 3]> = (0..dim)
                    .map(|l| cartesian_gradients(basis, l, &pt))
                    .collect();
                for a in 0..dim {
                    for b in 0..=a {
                        let mut s = 0.0;
                        for i in 0..3 {
                            let dot: f64 = (0..3).map(|c| grads[a][i][c] * grads[b][i][c]).sum();
                            s += 0.5 * inv_m[i] * dot;
                        }
                        k[a][b] += w * s;
                    }
                }
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            k[b][a] = k[a][b];
        }
    }
    k
}

/// One term `r1^i r2^j r12^k e^{-a r1 - b r2}` of an explicitly correlated
/// function for two electrons around a fixed unit charge.
#[derive(Clone, Copy)]
struct Term {
    i: i32,
    j: i32,
    k: i32,
    a: f64,
    b: f64,
}

impl Term {
    fn swapped(self) -> Self {
        Self {
            i: self.j,
            j: self.i,
            a: self.b,
            b: self.a,
            ..self
        }
    }

    /// Value and partial derivatives `(f, ∂r1, ∂r2, ∂r12)`.
    fn eval(&self, r1: f64, r2: f64, r12: f64) -> [f64; 4] {
        let f = r1.powi(self.i)
            * r2.powi(self.j)
            * r12.powi(self.k)
            * (-self.a * r1 - self.b * r2).exp();
        [
            f,
            f * (self.i as f64 / r1 - self.a),
            f * (self.j as f64 / r2 - self.b),
            f * self.k as f64 / r12,
        ]
    }
}

/// Lowest singlet energy of the two-electron ion with a fixed unit nucleus in
/// a symmetrized basis `r1^i r2^j r12^k e^{-a r1 - b r2} ± (1 ↔ 2)` with
/// `i + j + k ≤ omega`, for each exponent pair. Integrals use Gauss-Laguerre
/// quadrature in the variables `u = r1+r2-r12`, `v = r1-r2+r12`,
/// `w = -r1+r2+r12`, where every integrand is a polynomial times an
/// exponential. The result is a rigorous variational upper bound.
pub fn correlated_ground_state(exponents: &[(f64, f64)], omega: i32) -> f64 {
    let mut funcs: Vec<[Term; 2]> = Vec::new();
    for &(a, b) in exponents {
        for i in 0..=omega {
            for j in 0..=omega - i {
                for k in 0..=omega - i - j {
                    // With a == b only i ≥ j is independent.
                    if a == b && j > i {
                        continue;
                    }
                    let t = Term { i, j, k, a, b };
                    funcs.push([t, t.swapped()]);
                }
            }
        }
    }
    let n = funcs.len();
    let rule = laguerre_rule(28).unwrap();
    let (nodes, weights) = (rule.nodes().to_vec(), rule.weights().to_vec());
    let mut s = vec![vec![0.0; n]; n];
    let mut h = vec![vec![0.0; n]; n];
    for fa in 0..n {
        for fb in 0..=fa {
            let (mut so, mut ho) = (0.0, 0.0);
            for ta in &funcs[fa] {
                for tb in &funcs[fb] {
                    let (ea, eb) = (ta.a + tb.a, ta.b + tb.b);
                    // e^{-ea r1 - eb r2} = e^{-(ea+eb)u/2 - ea v/2 - eb w/2}.
                    let cu = 0.5 * (ea + eb);
                    let cv = 0.5 * ea;
                    let cw = 0.5 * eb;
                    for (iu, &tu) in nodes.iter().enumerate() {
                        let u = tu / cu;
                        for (iv, &tv) in nodes.iter().enumerate() {
                            let v = tv / cv;
                            for (iw, &tw) in nodes.iter().enumerate() {
                                let w = tw / cw;
                                let wt = weights[iu] * weights[iv] * weights[iw] / (cu * cv * cw)
                                    * 0.125;
                                let (r1, r2, r12) = (0.5 * (u + v), 0.5 * (u + w), 0.5 * (v + w));
                                // Polynomial part: exponentials are in the weight.
                                let strip = (ea * r1 + eb * r2).exp();
                                let fa_ = ta.eval(r1, r2, r12);
                                let fb_ = tb.eval(r1, r2, r12);
                                let dv = r1 * r2 * r12 * wt * strip;
                                let c1 = (r1 * r1 + r12 * r12 - r2 * r2) / (2.0 * r1 * r12);
                                let c2 = (r2 * r2 + r12 * r12 - r1 * r1) / (2.0 * r2 * r12);
                                let grad1 = fa_[1] * fb_[1]
                                    + fa_[3] * fb_[3]
                                    + (fa_[1] * fb_[3] + fa_[3] * fb_[1]) * c1;
                                let grad2 = fa_[2] * fb_[2]
                                    + fa_[3] * fb_[3]
                                    + (fa_[2] * fb_[3] + fa_[3] * fb_[2]) * c2;
                                let pot = -1.0 / r1 - 1.0 / r2 + 1.0 / r12;
                                so += dv * fa_[0] * fb_[0];
                                ho += dv * (0.5 * (grad1 + grad2) + pot * fa_[0] * fb_[0]);
                            }
                        }
                    }
                }
            }
            s[fa][fb] = so;
            s[fb][fa] = so;
            h[fa][fb] = ho;
            h[fb][fa] = ho;
        }
    }
    lowest_generalized(&h, &s)
}

/// Lowest eigenvalue of `H c = E S c` after canonical orthogonalization.
fn lowest_generalized(h: &[Vec<f64>], s: &[Vec<f64>]) -> f64 {
    let n = h.len();
    // Unit-diagonal scaling first.
    let d: Vec<f64> = (0..n).map(|i| 1.0 / s[i][i].sqrt()).collect();
    let sm = Mat::<f64>::from_fn(n, n, |i, j| s[i][j] * d[i] * d[j]);
    let hm = Mat::<f64>::from_fn(n, n, |i, j| h[i][j] * d[i] * d[j]);
    let evd = sm.self_adjoint_eigen(faer::Side::Lower).unwrap();
    let (u, ev) = (evd.U(), evd.S().column_vector());
    let keep: Vec<usize> = (0..n).filter(|&i| ev[i] > 1e-11).collect();
    let x = Mat::<f64>::from_fn(n, keep.len(), |i, j| u[(i, keep[j])] / ev[keep[j]].sqrt());
    let reduced = x.transpose() * &hm * &x;
    let e = reduced.self_adjoint_eigen(faer::Side::Lower).unwrap();
    let vals = e.S().column_vector();
    (0..vals.nrows())
        .map(|i| vals[i])
        .fold(f64::INFINITY, f64::min)
}
