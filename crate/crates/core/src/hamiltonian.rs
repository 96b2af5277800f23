//! Hamiltonian matrix on the symmetrized perimetric basis.
//!
//! The S-wave kinetic energy is written as the quadratic form
//! `Σ_i |∇_i ψ|²/(2m_i)` in the interparticle distances, which for a state
//! depending on `(r12, r13, r23)` reads `gᵀ C g` with `g = ∂ψ/∂r` and the
//! angle cosines of the triangle in the off-diagonal entries of `C`. The chain
//! rule to perimetric coordinates gives `∇_{xyz}ψᵀ (Mᵀ C M) ∇_{xyz}ψ`.
//! Matrix elements are evaluated with the Gauss quadrature of the mesh itself,
//! which makes the potential diagonal and the kinetic matrix exactly
//! symmetric and positive semi-definite.

use crate::basis::{Basis, PerimetricPoint};
use crate::linalg::{CholeskyFactor, LbltFactor};
use crate::physics::ThreeBodySystem;
use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("coordinate singularity at ({x}, {y}, {z}): a pairwise distance vanishes")]
    Singular { x: f64, y: f64, z: f64 },
    #[error("eigensolver did not converge: {0}")]
    Eigensolver(String),
    #[error("matrix file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("matrix file is not compatible: {0}")]
    Format(String),
}

/// Coulomb potential at a perimetric point.
pub fn potential_at(
    system: &ThreeBodySystem,
    pt: &PerimetricPoint,
) -> Result<f64, HamiltonianError> {
    let (r12, r13, r23) = (pt.r12(), pt.r13(), pt.r23());
    if !(r12 > 0.0 && r13 > 0.0 && r23 > 0.0) {
        return Err(HamiltonianError::Singular {
            x: pt.x,
            y: pt.y,
            z: pt.z,
        });
    }
    Ok(system.z1 * system.z2 / r12 + system.z1 * system.z3 / r13 + system.z2 * system.z3 / r23)
}

/// Kinetic metric `Mᵀ C M` in perimetric coordinates, entries
/// `[xx, yy, zz, xy, xz, yz]`, so that `T = ∇ψᵀ G ∇ψ`.
pub fn kinetic_metric(system: &ThreeBodySystem, pt: &PerimetricPoint) -> [f64; 6] {
    let (r12, r13, r23) = (pt.r12(), pt.r13(), pt.r23());
    let (a1, a2, a3) = (0.5 * system.inv_m1(), 0.5 / system.m2, 0.5 / system.m3);
    let c1 = (r12 * r12 + r13 * r13 - r23 * r23) / (2.0 * r12 * r13);
    let c2 = (r12 * r12 + r23 * r23 - r13 * r13) / (2.0 * r12 * r23);
    let c3 = (r13 * r13 + r23 * r23 - r12 * r12) / (2.0 * r13 * r23);
    // C in the order (r12, r13, r23).
    let c = [
        [a1 + a2, a1 * c1, a2 * c2],
        [a1 * c1, a1 + a3, a3 * c3],
        [a2 * c2, a3 * c3, a2 + a3],
    ];
    // Rows: ∂/∂r12, ∂/∂r13, ∂/∂r23 in terms of (∂x, ∂y, ∂z).
    let m = [[1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0]];
    let g = |a: usize, b: usize| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += m[i][a] * c[i][j] * m[j][b];
            }
        }
        s
    };
    [g(0, 0), g(1, 1), g(2, 2), g(0, 1), g(0, 2), g(1, 2)]
}

/// Real symmetric matrix holding its lower triangle in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from per-row `(col, value)` lists with `col ≤ row`, sorted.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let dim = rows.len();
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                assert!(c as usize <= i, "upper-triangle entry in row {i}");
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        Self::from_rows(
            diag.iter()
                .enumerate()
                .map(|(i, &d)| vec![(i as u32, d)])
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored entries (lower triangle including the diagonal).
    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    /// Fraction of non-zero entries of the full symmetric matrix.
    pub fn fill_fraction(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        let diag = (0..self.dim).filter(|&i| self.get(i, i) != 0.0).count();
        let full = 2 * self.stored() - diag;
        full as f64 / (self.dim as f64 * self.dim as f64)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.vals[range])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.vals[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Copy with `shift[i]` added to the diagonal.
    pub fn with_diagonal_shift(&self, shift: &[f64]) -> Self {
        assert_eq!(shift.len(), self.dim);
        let mut out = self.clone();
        for (i, &s) in shift.iter().enumerate() {
            let range = out.row_ptr[i]..out.row_ptr[i + 1];
            match out.cols[range.clone()].binary_search(&(i as u32)) {
                Ok(pos) => out.vals[range.start + pos] += s,
                Err(_) => panic!("structural zero on the diagonal of row {i}"),
            }
        }
        out
    }

    /// `y = A x` for a generic scalar supporting real scaling.
    pub fn matvec<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![T::default(); self.dim];
        for i in 0..self.dim {
            let mut acc = T::default();
            for (j, v) in self.row(i) {
                acc = acc + x[j] * v;
                if j != i {
                    y[j] = y[j] + x[i] * v;
                }
            }
            y[i] = y[i] + acc;
        }
        y
    }

    /// `b - A x` accumulated in double-double arithmetic, so that iterative
    /// refinement is not limited by cancellation when `‖A‖‖x‖ ≫ ‖b‖`.
    pub fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        assert_eq!(b.len(), self.dim);
        let mut acc: Vec<(f64, f64)> = b.iter().map(|&v| (v, 0.0)).collect();
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                add_product(&mut acc[i], -v, x[j]);
                if j != i {
                    add_product(&mut acc[j], -v, x[i]);
                }
            }
        }
        acc.into_iter().map(|(hi, lo)| hi + lo).collect()
    }

    /// Dense lower triangle with `diag_shift` added on the diagonal.
    pub fn to_dense_lower(&self, diag_shift: &[f64]) -> Mat<f64> {
        let n = self.dim;
        let mut m = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
            m[(i, i)] += diag_shift[i];
        }
        m
    }

    fn digest_into(&self, h: &mut Sha256) {
        h.update((self.dim as u64).to_le_bytes());
        for p in &self.row_ptr {
            h.update((*p as u64).to_le_bytes());
        }
        for c in &self.cols {
            h.update(c.to_le_bytes());
        }
        for v in &self.vals {
            h.update(v.to_le_bytes());
        }
    }
}

/// Energy-independent pieces of the Hamiltonian for one mesh and system.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub kinetic: SparseSymmetric,
    pub potential: Vec<f64>,
}

impl HamiltonianParts {
    pub fn assemble(basis: &Basis, system: &ThreeBodySystem) -> Result<Self, HamiltonianError> {
        let potential = (0..basis.len())
            .map(|l| {
                let (p, q, r) = basis.triple(l);
                potential_at(system, &basis.point(p, q, r))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let kinetic = assemble_kinetic(basis, system);
        Ok(Self { kinetic, potential })
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    /// `ℋ_E = T + V − E`.
    pub fn h_e(&self, energy: f64) -> SparseSymmetric {
        let shift: Vec<f64> = self.potential.iter().map(|v| v - energy).collect();
        self.kinetic.with_diagonal_shift(&shift)
    }

    /// Dense lower triangle of `T + V − E`.
    pub fn dense_h_e(&self, energy: f64) -> Mat<f64> {
        let shift: Vec<f64> = self.potential.iter().map(|v| v - energy).collect();
        self.kinetic.to_dense_lower(&shift)
    }

    /// `(T + V − E) x` without forming the shifted matrix.
    pub fn apply<T>(&self, energy: f64, x: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let mut y = self.kinetic.matvec(x);
        for ((yi, &xi), &v) in y.iter_mut().zip(x).zip(&self.potential) {
            *yi = *yi + xi * (v - energy);
        }
        y
    }

    /// Number of eigenvalues of `T + V` strictly below `e`.
    pub fn count_below(&self, e: f64) -> usize {
        LbltFactor::new(self.dense_h_e(e)).inertia().0
    }

    /// Lowest `count` eigenvalues of `T + V`.
    pub fn bound_spectrum(&self, count: usize) -> Result<Vec<f64>, HamiltonianError> {
        bound_spectrum(self, count)
    }

    /// Writes the parts to a versioned binary file.
    pub fn save(&self, path: &Path, key: &str) -> Result<(), HamiltonianError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MATRIX_MAGIC)?;
        f.write_all(&MATRIX_VERSION.to_le_bytes())?;
        write_bytes(&mut f, key.as_bytes())?;
        let k = &self.kinetic;
        f.write_all(&(k.dim as u64).to_le_bytes())?;
        f.write_all(&(k.vals.len() as u64).to_le_bytes())?;
        for p in &k.row_ptr {
            f.write_all(&(*p as u64).to_le_bytes())?;
        }
        for c in &k.cols {
            f.write_all(&c.to_le_bytes())?;
        }
        for v in k.vals.iter().chain(&self.potential) {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads a file written by [`Self::save`], checking version and key.
    pub fn load(path: &Path, key: &str) -> Result<Self, HamiltonianError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MATRIX_MAGIC {
            return Err(HamiltonianError::Format("bad magic".into()));
        }
        let version = read_u32(&mut f)?;
        if version != MATRIX_VERSION {
            return Err(HamiltonianError::Format(format!(
                "version {version}, expected {MATRIX_VERSION}"
            )));
        }
        let stored_key = read_bytes(&mut f)?;
        if stored_key != key.as_bytes() {
            return Err(HamiltonianError::Format("key mismatch".into()));
        }
        let dim = read_u64(&mut f)? as usize;
        let nnz = read_u64(&mut f)? as usize;
        let row_ptr = (0..=dim)
            .map(|_| read_u64(&mut f).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let cols = (0..nnz)
            .map(|_| read_u32(&mut f))
            .collect::<Result<Vec<_>, _>>()?;
        let vals = (0..nnz)
            .map(|_| read_f64(&mut f))
            .collect::<Result<Vec<_>, _>>()?;
        let potential = (0..dim)
            .map(|_| read_f64(&mut f))
            .collect::<Result<Vec<_>, _>>()?;
        if row_ptr.last() != Some(&nnz) {
            return Err(HamiltonianError::Format("inconsistent row pointers".into()));
        }
        Ok(Self {
            kinetic: SparseSymmetric {
                dim,
                row_ptr,
                cols,
                vals,
            },
            potential,
        })
    }

    /// Content digest of the assembled parts.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.kinetic.digest_into(&mut h);
        for v in &self.potential {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

const MATRIX_MAGIC: &[u8; 8] = b"KMHAMIL\0";
const MATRIX_VERSION: u32 = 1;

/// Cache key for a mesh and system: SHA-256 of their JSON form and the file version.
pub fn matrix_key<T: Serialize>(spec: &T, system: &ThreeBodySystem) -> String {
    let text =
        serde_json::to_string(&(spec, system, MATRIX_VERSION)).expect("plain data serializes");
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    hex(&h.finalize())
}

/// `acc += a b` on a (hi, lo) pair, with an exact product from `mul_add`.
fn add_product(acc: &mut (f64, f64), a: f64, b: f64) {
    let p = a * b;
    let p_err = a.mul_add(b, -p);
    let s = acc.0 + p;
    let t = s - acc.0;
    let s_err = (acc.0 - (s - t)) + (p - t);
    let lo = acc.1 + s_err + p_err;
    let hi = s + lo;
    *acc = (hi, lo - (hi - s));
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> std::io::Result<()> {
    w.write_all(&(b.len() as u64).to_le_bytes())?;
    w.write_all(b)
}

fn read_bytes<R: Read>(r: &mut R) -> std::io::Result<Vec<u8>> {
    let n = read_u64(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Per-point data shared by all kinetic elements.
struct KineticTables<'a> {
    basis: &'a Basis,
    nx: usize,
    n: usize,
    /// `W(P) G(P)` at every raw mesh point, entries as in [`kinetic_metric`].
    wg: Vec<[f64; 6]>,
    dx: Vec<f64>,
    dy: Vec<f64>,
    inv_sqrt_lx: Vec<f64>,
    inv_sqrt_ly: Vec<f64>,
    inv_hx: f64,
    inv_h: f64,
}

impl<'a> KineticTables<'a> {
    fn new(basis: &'a Basis, system: &ThreeBodySystem) -> Self {
        let spec = basis.spec();
        let (nx, n) = (spec.nx, spec.n);
        let mut wg = vec![[0.0; 6]; nx * n * n];
        for p in 0..nx {
            for q in 0..n {
                for r in 0..n {
                    let pt = basis.point(p, q, r);
                    let w = basis.gauss_weight(p, q, r) * pt.volume_element();
                    let g = kinetic_metric(system, &pt);
                    wg[(p * n + q) * n + r] = g.map(|v| v * w);
                }
            }
        }
        let mx = basis.mesh_x();
        let my = basis.mesh_yz();
        let dx = (0..nx * nx)
            .map(|i| mx.derivative_at_node(i / nx, i % nx))
            .collect();
        let dy = (0..n * n)
            .map(|i| my.derivative_at_node(i / n, i % n))
            .collect();
        Self {
            basis,
            nx,
            n,
            wg,
            dx,
            dy,
            inv_sqrt_lx: mx.lambdas().iter().map(|l| 1.0 / l.sqrt()).collect(),
            inv_sqrt_ly: my.lambdas().iter().map(|l| 1.0 / l.sqrt()).collect(),
            inv_hx: 1.0 / spec.hx,
            inv_h: 1.0 / spec.h,
        }
    }

    #[inline]
    fn wg(&self, p: usize, q: usize, r: usize) -> &[f64; 6] {
        &self.wg[(p * self.n + q) * self.n + r]
    }

    /// `∂x G_pqr` at mesh point `(k, q, r)`.
    #[inline]
    fn gx(&self, [p, q, r]: [usize; 3], k: usize) -> f64 {
        self.dx[p * self.nx + k]
            * self.inv_hx
            * self.inv_sqrt_ly[q]
            * self.inv_sqrt_ly[r]
            * self.basis.inv_normalization(p, q, r)
    }

    /// `∂y G_pqr` at mesh point `(p, m, r)`.
    #[inline]
    fn gy(&self, [p, q, r]: [usize; 3], m: usize) -> f64 {
        self.dy[q * self.n + m]
            * self.inv_h
            * self.inv_sqrt_lx[p]
            * self.inv_sqrt_ly[r]
            * self.basis.inv_normalization(p, q, r)
    }

    /// `∂z G_pqr` at mesh point `(p, q, m)`.
    #[inline]
    fn gz(&self, [p, q, r]: [usize; 3], m: usize) -> f64 {
        self.dy[r * self.n + m]
            * self.inv_h
            * self.inv_sqrt_lx[p]
            * self.inv_sqrt_ly[q]
            * self.basis.inv_normalization(p, q, r)
    }

    /// Kinetic element between raw functions.
    fn raw(&self, i: [usize; 3], j: [usize; 3]) -> f64 {
        let [p, q, r] = i;
        let [p2, q2, r2] = j;
        let mut t = 0.0;
        if q == q2 && r == r2 {
            for k in 0..self.nx {
                t += self.wg(k, q, r)[0] * self.gx(i, k) * self.gx(j, k);
            }
        }
        if p == p2 && r == r2 {
            for m in 0..self.n {
                t += self.wg(p, m, r)[1] * self.gy(i, m) * self.gy(j, m);
            }
        }
        if p == p2 && q == q2 {
            for m in 0..self.n {
                t += self.wg(p, q, m)[2] * self.gz(i, m) * self.gz(j, m);
            }
        }
        if r == r2 {
            t += self.wg(p2, q, r)[3] * self.gx(i, p2) * self.gy(j, q);
            t += self.wg(p, q2, r)[3] * self.gy(i, q2) * self.gx(j, p);
        }
        if q == q2 {
            t += self.wg(p2, q, r)[4] * self.gx(i, p2) * self.gz(j, r);
            t += self.wg(p, q, r2)[4] * self.gz(i, r2) * self.gx(j, p);
        }
        if p == p2 {
            t += self.wg(p, q2, r)[5] * self.gy(i, q2) * self.gz(j, r);
            t += self.wg(p, q, r2)[5] * self.gz(i, r2) * self.gy(j, q);
        }
        t
    }
}

/// Kinetic matrix on the symmetrized basis at the Gauss approximation.
pub fn assemble_kinetic(basis: &Basis, system: &ThreeBodySystem) -> SparseSymmetric {
    let tables = KineticTables::new(basis, system);
    let spec = basis.spec();
    let (nx, n) = (spec.nx, spec.n);
    let sigma = spec.symmetry.sigma() as usize;
    let s = spec.symmetry.sign();
    let rows: Vec<Vec<(u32, f64)>> = (0..basis.len())
        .into_par_iter()
        .map(|l| {
            let (p, q, r) = basis.triple(l);
            let mut cand: Vec<u32> = Vec::new();
            let mut push = |p2: usize, q2: usize, r2: usize| {
                let (a, b) = if q2 >= r2 { (q2, r2) } else { (r2, q2) };
                if let Some(m) = basis.index(p2, a, b) {
                    if m <= l {
                        cand.push(m as u32);
                    }
                }
            };
            for p2 in 0..nx {
                if p2 == p {
                    for q2 in 0..n {
                        for r2 in 0..=q2 {
                            if r2 + sigma <= q2 {
                                push(p2, q2, r2);
                            }
                        }
                    }
                } else {
                    for t in [q, r] {
                        for o in 0..n {
                            push(p2, t, o);
                        }
                    }
                }
            }
            cand.sort_unstable();
            cand.dedup();
            let ci = basis.coefficient(l);
            cand.into_iter()
                .filter_map(|m| {
                    let (p2, q2, r2) = basis.triple(m as usize);
                    let direct = tables.raw([p, q, r], [p2, q2, r2]);
                    let swapped = tables.raw([p, q, r], [p2, r2, q2]);
                    let v = 2.0 * ci * basis.coefficient(m as usize) * (direct + s * swapped);
                    (v != 0.0 || m as usize == l).then_some((m, v))
                })
                .collect()
        })
        .collect();
    SparseSymmetric::from_rows(rows)
}

/// Lowest eigenvalues by shift-invert Lanczos on `(A − σ)⁻¹`. A first pass
/// uses a shift below the whole spectrum; the shift is then moved just below
/// the estimate, where the wanted eigenvalues are well separated.
pub fn bound_spectrum(
    parts: &HamiltonianParts,
    count: usize,
) -> Result<Vec<f64>, HamiltonianError> {
    let dim = parts.dim();
    let count = count.min(dim);
    if count == 0 {
        return Ok(Vec::new());
    }
    let factor_at = |sigma: f64| {
        let shift: Vec<f64> = parts.potential.iter().map(|v| v - sigma).collect();
        CholeskyFactor::new(parts.kinetic.to_dense_lower(&shift))
    };
    let mut sigma = parts
        .potential
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .min(-1.0);
    let chol = loop {
        if let Some(c) = factor_at(sigma) {
            break c;
        }
        sigma *= 2.0;
        if sigma < -1e8 {
            return Err(HamiltonianError::Eigensolver("no admissible shift".into()));
        }
    };
    let (mut estimate, _) = lanczos(parts, &chol, sigma, count)?;
    drop(chol);
    for _ in 0..3 {
        let mut gap = 0.02 * (1.0 + estimate[0].abs());
        let (sigma, chol) = loop {
            let s = estimate[0] - gap;
            if s <= sigma {
                break (sigma, factor_at(sigma).expect("admissible above"));
            }
            if let Some(c) = factor_at(s) {
                break (s, c);
            }
            gap *= 2.0;
        };
        let (values, converged) = lanczos(parts, &chol, sigma, count)?;
        estimate = values;
        if converged {
            break;
        }
    }
    Ok(estimate)
}

fn lanczos(
    parts: &HamiltonianParts,
    chol: &CholeskyFactor,
    sigma: f64,
    count: usize,
) -> Result<(Vec<f64>, bool), HamiltonianError> {
    let dim = parts.dim();
    let steps = (4 * count + 80).min(dim);
    let mut basis_vecs: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut v: Vec<f64> = (0..dim)
        .map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0)
        .collect();
    normalize(&mut v);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut previous_ritz: Vec<f64> = Vec::new();
    for it in 0..steps {
        basis_vecs.push(v.clone());
        let mut w = Mat::<f64>::from_fn(dim, 1, |i, _| v[i]);
        chol.solve_in_place(w.as_mut());
        let mut w: Vec<f64> = (0..dim).map(|i| w[(i, 0)]).collect();
        let a = dot(&w, &v);
        alpha.push(a);
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            for b in &basis_vecs {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let bnorm = dot(&w, &w).sqrt();
        let ritz = tridiagonal_eigenvalues(&alpha, &beta);
        let current: Vec<f64> = ritz
            .iter()
            .rev()
            .take(count)
            .map(|t| sigma + 1.0 / t)
            .collect();
        if current.len() == count && previous_ritz.len() == count && it > count + 5 {
            let change = current
                .iter()
                .zip(&previous_ritz)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if change < 1e-13 {
                return Ok((current, true));
            }
        }
        previous_ritz = current;
        if bnorm < 1e-14 {
            return Ok((previous_ritz, true));
        }
        beta.push(bnorm);
        v = w.into_iter().map(|x| x / bnorm).collect();
    }
    if previous_ritz.len() == count {
        Ok((previous_ritz, false))
    } else {
        Err(HamiltonianError::Eigensolver(format!(
            "Lanczos produced {} of {count} eigenvalues",
            previous_ritz.len()
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn tridiagonal_eigenvalues(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let m = alpha.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    crate::linalg::symmetric_eigenvalues(t.as_ref()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_residual_survives_cancellation() {
        // [[1, 1], [1, 1]] x with x = (1, 1e-17): the first row of A x rounds
        // to 1 in plain arithmetic, but b - A x is exactly -1e-17.
        let a = SparseSymmetric::from_rows(vec![vec![(0, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let x = [1.0, 1e-17];
        let b = [1.0, 1.0];
        assert_eq!(b[0] - a.matvec(&x)[0], 0.0);
        assert_eq!(a.residual(&b, &x), vec![-1e-17, -1e-17]);
    }

    #[test]
    fn residual_matches_matvec_on_benign_input() {
        let a = SparseSymmetric::from_rows(vec![
            vec![(0, 2.0)],
            vec![(0, -1.0), (1, 2.0)],
            vec![(1, -1.0), (2, 2.0)],
        ]);
        let x = [0.3, -1.2, 0.7];
        let b = [1.0, 2.0, 3.0];
        let ax = a.matvec(&x);
        for (i, r) in a.residual(&b, &x).iter().enumerate() {
            assert!((r - (b[i] - ax[i])).abs() < 1e-15);
        }
    }
}
