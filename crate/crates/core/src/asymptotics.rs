//! Open-channel asymptotic functions and their couplings to the mesh basis.
//!
//! Before symmetrization the channel functions are
//!
//! ```text
//! ω_λ = R(x1) [i sin kx2 + s_λ f(x2) cos kx2] / (k x2),   s_1 = -1, s_2 = +1
//! ```
//!
//! with `f = 1 - e^{-a x2}` and `R` the target ground state. They split as
//! `ω_λ = i ω_S + s_λ ω_C`, and since `R` and `sin` solve their radial
//! equations, `(H - E) ω_λ = i ρ_S + s_λ ρ_C` with
//!
//! ```text
//! ρ_S = R V sin kx2 / (k x2)
//! ρ_C = R [e^{-a x2}(a² cos kx2 + 2ak sin kx2)/(2μ) + V f cos kx2] / (k x2)
//! ```
//!
//! where `V = Z1Z3/r13 + Z2Z3/r23` is the part of the potential not seen by
//! the target. The symmetrized functions are `Ω_λ = N0 (1 + s P23) ω_λ` with
//! `N0 = √(2kμ)/(8π)`, which fixes `⟨Ω1|H-E|Ω2⟩ - ⟨Ω2|H-E|Ω1⟩ = i`.
//! All inner products are bilinear.

use crate::basis::{jacobi_from_perimetric, Basis, PerimetricPoint};
use crate::physics::{ChannelState, ThreeBodySystem};
use crate::quadrature::{laguerre_rule, CompositeRule, QuadratureError};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("charged channels (η = {0}) are not supported; the target must be neutral")]
    Coulomb(f64),
    #[error("the target pair is not bound (Z1·Z2 = {0})")]
    Unbound(f64),
    #[error("channel index λ must be 1 or 2 (got {0})")]
    Channel(u8),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Quadrature sizes for hybrid vectors and asymptotic elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Fixed nucleus: Gauss-Laguerre points per dimension are
    /// `tensor_factor · (basis size) + tensor_extra`.
    pub tensor_factor: f64,
    pub tensor_extra: usize,
    /// Points per dimension for the exchange elements.
    pub exchange_points: usize,
    /// Finite mass: Gauss-Legendre order of each graded panel.
    pub panel_order: usize,
    /// Growth factor between adjacent graded panels.
    pub grading_ratio: f64,
    /// Smallest panel next to a coordinate boundary.
    pub floor: f64,
    /// Widest panel before the Laguerre tail takes over.
    pub max_panel: f64,
    /// Gauss-Legendre order of the panels of one-dimensional integrals.
    pub radial_order: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            tensor_factor: 2.0,
            tensor_extra: 10,
            exchange_points: 80,
            panel_order: 10,
            grading_ratio: 4.0,
            floor: 1e-9,
            max_panel: 0.5,
            radial_order: 20,
        }
    }
}

impl QuadratureConfig {
    /// Lower-resolution companion used for error estimates.
    pub fn coarse(&self) -> Self {
        Self {
            tensor_factor: 0.75 * self.tensor_factor,
            tensor_extra: self.tensor_extra / 2,
            exchange_points: (3 * self.exchange_points).div_ceil(4),
            panel_order: self.panel_order.saturating_sub(3).max(4),
            grading_ratio: self.grading_ratio,
            floor: (self.floor * 100.0).min(1e-3),
            max_panel: self.max_panel,
            radial_order: self.radial_order.saturating_sub(6).max(6),
        }
    }

    fn tensor_points(&self, basis_size: usize) -> usize {
        ((self.tensor_factor * basis_size as f64).round() as usize + self.tensor_extra)
            .clamp(1, crate::quadrature::MAX_LAGUERRE_ORDER)
    }
}

/// Channel functions at one energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFunctions {
    pub channel: ChannelState,
    /// `μ12,3`.
    pub mu: f64,
    /// Decay constant of the target state, `-Z1 Z2 μ12`.
    pub beta: f64,
    pub alpha: f64,
    z13: f64,
    z23: f64,
    /// `N0 = √(2kμ)/(8π)`.
    pub norm: f64,
    r_norm: f64,
}

/// Unsymmetrized values `[ω_S, ω_C, ρ_S, ρ_C]` at one point.
pub type ChannelParts = [f64; 4];

impl ChannelFunctions {
    pub fn new(system: &ThreeBodySystem, channel: ChannelState) -> Result<Self, AsymptoticsError> {
        if channel.eta != 0.0 {
            return Err(AsymptoticsError::Coulomb(channel.eta));
        }
        let z12 = system.z1 * system.z2;
        if !(z12 < 0.0) {
            return Err(AsymptoticsError::Unbound(z12));
        }
        let mu = system.mu12_3();
        let beta = -z12 * system.mu12();
        Ok(Self {
            channel,
            mu,
            beta,
            alpha: system.alpha(),
            z13: system.z1 * system.z3,
            z23: system.z2 * system.z3,
            norm: (2.0 * channel.k * mu).sqrt() / (8.0 * PI),
            r_norm: 2.0 * beta.powf(1.5),
        })
    }

    pub fn k(&self) -> f64 {
        self.channel.k
    }

    pub fn a(&self) -> f64 {
        self.channel.a
    }

    /// Target ground state `2β^{3/2} e^{-β x1}`.
    pub fn bound_radial(&self, x1: f64) -> f64 {
        self.r_norm * (-self.beta * x1).exp()
    }

    /// `[ω_S, ω_C, ρ_S, ρ_C]` at an interior point, without `N0`.
    pub fn parts_at(&self, pt: &PerimetricPoint) -> ChannelParts {
        let (k, a) = (self.k(), self.a());
        let (x1, x2) = jacobi_from_perimetric(self.alpha, pt);
        let r = self.bound_radial(x1);
        let kx = k * x2;
        let (sin, cos) = kx.sin_cos();
        let sinc = if kx.abs() < 1e-8 {
            1.0 - kx * kx / 6.0
        } else {
            sin / kx
        };
        // f(x2)/x2, finite at the origin.
        let f_over = if a * x2 < 1e-12 {
            a
        } else {
            -(-a * x2).exp_m1() / x2
        };
        let v = self.z13 / pt.r13() + self.z23 / pt.r23();
        let h = (-a * x2).exp() * (a * a * cos + 2.0 * a * k * sin) / (2.0 * self.mu);
        [
            r * sinc,
            r * f_over * cos / k,
            r * v * sinc,
            r * (h / kx + v * f_over * cos / k),
        ]
    }

    /// Value of the symmetrized `Ω_λ` (λ = 1, 2).
    pub fn omega_value(
        &self,
        lambda: u8,
        pt: &PerimetricPoint,
    ) -> Result<Complex64, AsymptoticsError> {
        self.symmetrized(lambda, pt, 0)
    }

    /// `(H - E) Ω_λ` in closed form.
    pub fn residual_on_omega(
        &self,
        lambda: u8,
        pt: &PerimetricPoint,
    ) -> Result<Complex64, AsymptoticsError> {
        self.symmetrized(lambda, pt, 2)
    }

    fn symmetrized(
        &self,
        lambda: u8,
        pt: &PerimetricPoint,
        offset: usize,
    ) -> Result<Complex64, AsymptoticsError> {
        let sl = lambda_sign(lambda)?;
        let s = self.channel.symmetry.sign();
        let d = self.parts_at(pt);
        let e = self.parts_at(&pt.swap_yz());
        let direct = Complex64::new(sl * d[offset + 1], d[offset]);
        let exchanged = Complex64::new(sl * e[offset + 1], e[offset]);
        Ok((direct + exchanged * s) * self.norm)
    }

    /// Angular and target average of `V` at fixed `x2`.
    pub fn averaged_potential(&self, x2: f64) -> f64 {
        let y = |c: f64| -> f64 {
            if c == 0.0 {
                return 1.0 / x2;
            }
            // ⟨1/max(x2, c x1)⟩ over the target density.
            let t = 2.0 * self.beta * x2 / c;
            let lead = if t < 1e-12 {
                2.0 * self.beta / c
            } else {
                -(-t).exp_m1() / x2
            };
            lead - self.beta / c * (-t).exp()
        };
        self.z13 * y(self.alpha) + self.z23 * y(1.0 - self.alpha)
    }

    /// One-dimensional integrals over `x2` entering the direct elements.
    pub fn direct_integrals(
        &self,
        config: &QuadratureConfig,
    ) -> Result<DirectIntegrals, AsymptoticsError> {
        let (k, a) = (self.k(), self.a());
        let decay = a.min(2.0 * self.beta / (1.0 - self.alpha).max(0.5));
        let split = 50.0 / decay;
        let rule = CompositeRule::new(
            config.radial_order,
            40,
            config.grading_ratio,
            config.max_panel,
        )?;
        let mut centres = vec![(0.0, config.floor)];
        if self.alpha > 0.0 {
            centres.push((0.0, (self.alpha / (2.0 * self.beta)).max(config.floor)));
        }
        let (mut xs, mut ws) = (Vec::new(), Vec::new());
        rule.build(&centres, split, 1.0 / decay, &mut xs, &mut ws);
        let mut out = DirectIntegrals::default();
        for (&x, &w) in xs.iter().zip(&ws) {
            let (sin, cos) = (k * x).sin_cos();
            let f = -(-a * x).exp_m1();
            let c = f * cos;
            let h = (-a * x).exp() * (a * a * cos + 2.0 * a * k * sin) / (2.0 * self.mu);
            let v = self.averaged_potential(x);
            out.ss += w * sin * sin * v;
            out.sc += w * sin * c * v;
            out.cc += w * c * c * v;
            out.sh += w * sin * h;
            out.ch += w * c * h;
        }
        Ok(out)
    }
}

fn lambda_sign(lambda: u8) -> Result<f64, AsymptoticsError> {
    match lambda {
        1 => Ok(-1.0),
        2 => Ok(1.0),
        _ => Err(AsymptoticsError::Channel(lambda)),
    }
}

/// `∫ dx2` of products of `S = sin kx2`, `C = f cos kx2`, the free residual
/// `h` and the averaged potential `V̄`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DirectIntegrals {
    /// `∫ S² V̄`
    pub ss: f64,
    /// `∫ S C V̄`
    pub sc: f64,
    /// `∫ C² V̄`
    pub cc: f64,
    /// `∫ S h`, equal to `k/(2μ)` exactly.
    pub sh: f64,
    /// `∫ C h`
    pub ch: f64,
}

impl DirectIntegrals {
    /// Reduced direct element for channel signs `(s_a, s_b)`.
    fn element(&self, sa: f64, sb: f64) -> Complex64 {
        let i = Complex64::i();
        -self.ss
            + i * sb * self.sh
            + sa * sb * self.ch
            + i * (sa + sb) * self.sc
            + sa * sb * self.cc
    }
}

/// Exchange integrals `X_UV = ∫ dV ω_U(P23 τ) ρ_V(τ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExchangeIntegrals {
    pub ss: f64,
    pub sc: f64,
    pub cs: f64,
    pub cc: f64,
}

impl ExchangeIntegrals {
    fn element(&self, sa: f64, sb: f64) -> Complex64 {
        let i = Complex64::i();
        -self.ss + i * sb * self.sc + i * sa * self.cs + sa * sb * self.cc
    }
}

/// `⟨Ω_a|H-E|Ω_b⟩` for `a, b ∈ {1, 2}` with the identity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticElements {
    /// `m[a-1][b-1] = ⟨Ω_a|H-E|Ω_b⟩`.
    pub m: [[Complex64; 2]; 2],
    pub direct: DirectIntegrals,
    pub exchange: ExchangeIntegrals,
    /// `|⟨Ω1|H-E|Ω2⟩ - ⟨Ω2|H-E|Ω1⟩ - i|`.
    pub normalization_defect: f64,
    /// `|⟨Ω̃1|H-E|Ω2⟩ - ⟨Ω̃2|H-E|Ω1⟩|` with `Ω̃ = P23 Ω` unsymmetrized.
    pub antisymmetry_defect: f64,
    /// Largest change of any element against the coarse quadrature.
    pub error: f64,
}

impl AsymptoticElements {
    pub fn get(&self, a: u8, b: u8) -> Complex64 {
        self.m[a as usize - 1][b as usize - 1]
    }
}

/// Asymptotic elements, with the coarse-quadrature error estimate.
pub fn asymptotic_elements(
    system: &ThreeBodySystem,
    channel: &ChannelState,
    config: &QuadratureConfig,
) -> Result<AsymptoticElements, AsymptoticsError> {
    let cf = ChannelFunctions::new(system, *channel)?;
    let fine = elements_with(&cf, config)?;
    let coarse = elements_with(&cf, &config.coarse())?;
    let mut error: f64 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            error = error.max((fine.m[a][b] - coarse.m[a][b]).norm());
        }
    }
    Ok(AsymptoticElements { error, ..fine })
}

fn elements_with(
    cf: &ChannelFunctions,
    config: &QuadratureConfig,
) -> Result<AsymptoticElements, AsymptoticsError> {
    let direct = cf.direct_integrals(config)?;
    let exchange = exchange_integrals(cf, config)?;
    let s = cf.channel.symmetry.sign();
    let two_n2 = 2.0 * cf.norm * cf.norm;
    let scale = cf.mu / cf.k();
    let signs = [-1.0, 1.0];
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (a, &sa) in signs.iter().enumerate() {
        for (b, &sb) in signs.iter().enumerate() {
            m[a][b] = direct.element(sa, sb) * scale + exchange.element(sa, sb) * (two_n2 * s);
        }
    }
    let normalization_defect = (m[0][1] - m[1][0] - Complex64::i()).norm();
    let antisymmetry_defect =
        two_n2 * (exchange.element(-1.0, 1.0) - exchange.element(1.0, -1.0)).norm();
    Ok(AsymptoticElements {
        m,
        direct,
        exchange,
        normalization_defect,
        antisymmetry_defect,
        error: 0.0,
    })
}

/// Nested three-dimensional rule: `y` outermost, then `z`, then `x`
/// (which may depend on `y` and `z`).
struct NestedRule {
    y: (Vec<f64>, Vec<f64>),
    z: (Vec<f64>, Vec<f64>),
    x: XRule,
}

enum XRule {
    Fixed(Vec<f64>, Vec<f64>),
    /// Graded around the curves where `x2` vanishes, for the unswapped
    /// point and optionally for the swapped one.
    Graded {
        rule: CompositeRule,
        alpha: f64,
        floor: f64,
        tail_scale: f64,
        swapped: bool,
    },
}

impl XRule {
    fn nodes(&self, y: f64, z: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        match self {
            XRule::Fixed(x, w) => {
                xs.clone_from(x);
                ws.clone_from(w);
            }
            XRule::Graded {
                rule,
                alpha,
                floor,
                tail_scale,
                swapped,
            } => {
                let mut centres = Vec::with_capacity(2);
                let mut push = |y: f64, z: f64| {
                    // 4 x2² = (1-α)² (x - x*)² + 4αyz.
                    let b = 1.0 - alpha;
                    let star = (alpha * y - z) / b;
                    if star > 0.0 {
                        centres.push((star, ((alpha * y * z).sqrt() / b).max(*floor)));
                    } else {
                        centres.push((0.0, ((alpha * y + z) / (2.0 * b)).max(*floor)));
                    }
                };
                push(y, z);
                if *swapped {
                    push(z, y);
                }
                let split = centres.iter().map(|c| c.0).fold(0.0, f64::max) + 1.0;
                rule.build(&centres, split, *tail_scale, xs, ws);
            }
        }
    }
}

fn laguerre_scaled(n: usize, scale: f64) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let r = laguerre_rule(n)?;
    Ok((
        r.nodes().iter().map(|t| t * scale).collect(),
        r.scaled_weights().iter().map(|w| w * scale).collect(),
    ))
}

fn graded_1d(
    config: &QuadratureConfig,
    tail_points: usize,
    tail_scale: f64,
) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let rule = CompositeRule::new(
        config.panel_order,
        tail_points,
        config.grading_ratio,
        config.max_panel,
    )?;
    let (mut xs, mut ws) = (Vec::new(), Vec::new());
    rule.build(
        &[(0.0, config.floor)],
        config.max_panel,
        tail_scale,
        &mut xs,
        &mut ws,
    );
    Ok((xs, ws))
}

/// Exponential decay rates of the integrand along `(x, y, z)` and the
/// matching Laguerre scales.
fn hybrid_rule(
    basis: &Basis,
    cf: &ChannelFunctions,
    config: &QuadratureConfig,
) -> Result<NestedRule, QuadratureError> {
    let spec = basis.spec();
    let sx = 1.0 / (0.5 / spec.hx + 0.5 * cf.beta);
    let sy = 1.0 / (0.5 / spec.h + 0.5 * cf.beta);
    let sz = 2.0 * spec.h;
    let (px, pyz) = (config.tensor_points(spec.nx), config.tensor_points(spec.n));
    if cf.alpha == 0.0 {
        let (x, wx) = laguerre_scaled(px, sx)?;
        Ok(NestedRule {
            y: laguerre_scaled(pyz, sy)?,
            z: laguerre_scaled(pyz, sz)?,
            x: XRule::Fixed(x, wx),
        })
    } else {
        Ok(NestedRule {
            y: graded_1d(config, pyz, sy)?,
            z: graded_1d(config, pyz, sz)?,
            x: XRule::Graded {
                rule: CompositeRule::new(
                    config.panel_order,
                    px,
                    config.grading_ratio,
                    config.max_panel,
                )?,
                alpha: cf.alpha,
                floor: config.floor,
                tail_scale: sx,
                swapped: false,
            },
        })
    }
}

fn exchange_rule(
    cf: &ChannelFunctions,
    config: &QuadratureConfig,
) -> Result<NestedRule, QuadratureError> {
    let n = config
        .exchange_points
        .clamp(1, crate::quadrature::MAX_LAGUERRE_ORDER);
    let (sx, syz) = (1.0 / cf.beta, 2.0 / cf.beta);
    if cf.alpha == 0.0 {
        let (x, wx) = laguerre_scaled(n, sx)?;
        Ok(NestedRule {
            y: laguerre_scaled(n, syz)?,
            z: laguerre_scaled(n, syz)?,
            x: XRule::Fixed(x, wx),
        })
    } else {
        Ok(NestedRule {
            y: graded_1d(config, n, syz)?,
            z: graded_1d(config, n, syz)?,
            x: XRule::Graded {
                rule: CompositeRule::new(
                    config.panel_order,
                    n,
                    config.grading_ratio,
                    config.max_panel,
                )?,
                alpha: cf.alpha,
                floor: config.floor,
                tail_scale: sx,
                swapped: true,
            },
        })
    }
}

fn exchange_integrals(
    cf: &ChannelFunctions,
    config: &QuadratureConfig,
) -> Result<ExchangeIntegrals, AsymptoticsError> {
    let rule = exchange_rule(cf, config)?;
    let (ys, wys) = &rule.y;
    let (zs, wzs) = &rule.z;
    let sums = ys
        .par_iter()
        .zip(wys.par_iter())
        .map(|(&y, &wy)| {
            let (mut xs, mut wxs) = (Vec::new(), Vec::new());
            let mut acc = [0.0; 4];
            for (&z, &wz) in zs.iter().zip(wzs) {
                rule.x.nodes(y, z, &mut xs, &mut wxs);
                let mut inner = [0.0; 4];
                for (&x, &wx) in xs.iter().zip(&wxs) {
                    let pt = PerimetricPoint::new(x, y, z);
                    let w = wx * pt.volume_element();
                    let [_, _, rs, rc] = cf.parts_at(&pt);
                    let [os, oc, _, _] = cf.parts_at(&pt.swap_yz());
                    inner[0] += w * os * rs;
                    inner[1] += w * os * rc;
                    inner[2] += w * oc * rs;
                    inner[3] += w * oc * rc;
                }
                for (a, i) in acc.iter_mut().zip(inner) {
                    *a += wz * i;
                }
            }
            acc.map(|a| a * wy)
        })
        .reduce(
            || [0.0; 4],
            |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]],
        );
    Ok(ExchangeIntegrals {
        ss: sums[0],
        sc: sums[1],
        cs: sums[2],
        cc: sums[3],
    })
}

/// Hybrid vectors `(ω_λ)_l = ⟨φ_l|H-E|Ω_λ⟩ = i sine_l + s_λ cosine_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridVectors {
    pub sine: Vec<f64>,
    pub cosine: Vec<f64>,
    /// Largest component change against the coarse quadrature.
    pub error: f64,
}

impl HybridVectors {
    pub fn omega(&self, lambda: u8) -> Result<Vec<Complex64>, AsymptoticsError> {
        let sl = lambda_sign(lambda)?;
        Ok(self
            .sine
            .iter()
            .zip(&self.cosine)
            .map(|(&s, &c)| Complex64::new(sl * c, s))
            .collect())
    }
}

/// Hybrid vectors with the coarse-quadrature error estimate.
pub fn hybrid_vectors(
    basis: &Basis,
    system: &ThreeBodySystem,
    channel: &ChannelState,
    config: &QuadratureConfig,
) -> Result<HybridVectors, AsymptoticsError> {
    let cf = ChannelFunctions::new(system, *channel)?;
    let (sine, cosine) = hybrid_with(basis, &cf, config)?;
    let (s2, c2) = hybrid_with(basis, &cf, &config.coarse())?;
    let error = sine
        .iter()
        .zip(&s2)
        .chain(cosine.iter().zip(&c2))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(HybridVectors {
        sine,
        cosine,
        error,
    })
}

/// Hybrid vectors at a single quadrature resolution.
pub fn hybrid_with(
    basis: &Basis,
    cf: &ChannelFunctions,
    config: &QuadratureConfig,
) -> Result<(Vec<f64>, Vec<f64>), AsymptoticsError> {
    let spec = basis.spec();
    assert_eq!(
        cf.channel.symmetry, spec.symmetry,
        "channel and basis symmetries differ"
    );
    let rule = hybrid_rule(basis, cf, config)?;
    let (nx, n) = (spec.nx, spec.n);
    let (mx, my) = (basis.mesh_x(), basis.mesh_yz());
    let (inv_hx, inv_h) = (1.0 / spec.hx, 1.0 / spec.h);
    let (ys, wys) = &rule.y;
    let (zs, wzs) = &rule.z;
    let fz: Vec<Vec<f64>> = zs.iter().map(|&z| my.values(z * inv_h)).collect();
    // raw[part][(p·n + q)·n + r] = ∫ dV G_pqr ρ_part, without 1/𝒩.
    let raw = ys
        .par_iter()
        .zip(wys.par_iter())
        .map(|(&y, &wy)| {
            let fy = my.values(y * inv_h);
            // t2[part][p·n + r]
            let mut t2 = vec![0.0; 2 * nx * n];
            let (mut xs, mut wxs) = (Vec::new(), Vec::new());
            let mut fx = vec![0.0; nx];
            for ((&z, &wz), fzm) in zs.iter().zip(wzs).zip(&fz) {
                rule.x.nodes(y, z, &mut xs, &mut wxs);
                let mut t1 = vec![0.0; 2 * nx];
                for (&x, &wx) in xs.iter().zip(&wxs) {
                    let pt = PerimetricPoint::new(x, y, z);
                    let w = wx * pt.volume_element();
                    let [_, _, rs, rc] = cf.parts_at(&pt);
                    let (rs, rc) = (w * rs, w * rc);
                    mx.values_into(x * inv_hx, &mut fx);
                    for (p, &f) in fx.iter().enumerate() {
                        t1[p] += f * rs;
                        t1[nx + p] += f * rc;
                    }
                }
                for part in 0..2 {
                    for p in 0..nx {
                        let v = wz * t1[part * nx + p];
                        let row = &mut t2[(part * nx + p) * n..(part * nx + p + 1) * n];
                        for (t, &f) in row.iter_mut().zip(fzm) {
                            *t += v * f;
                        }
                    }
                }
            }
            let mut out = vec![0.0; 2 * nx * n * n];
            for part in 0..2 {
                for p in 0..nx {
                    for (q, &f) in fy.iter().enumerate() {
                        let v = wy * f;
                        let dst = ((part * nx + p) * n + q) * n;
                        let src = (part * nx + p) * n;
                        for r in 0..n {
                            out[dst + r] += v * t2[src + r];
                        }
                    }
                }
            }
            out
        })
        .reduce(
            || vec![0.0; 2 * nx * n * n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let s = spec.symmetry.sign();
    let scale = 2.0 * cf.norm;
    let mut sine = vec![0.0; basis.len()];
    let mut cosine = vec![0.0; basis.len()];
    for l in 0..basis.len() {
        let (p, q, r) = basis.triple(l);
        let c = scale * basis.coefficient(l) * basis.inv_normalization(p, q, r);
        let direct = (p * n + q) * n + r;
        let swapped = (p * n + r) * n + q;
        let off = nx * n * n;
        sine[l] = c * (raw[direct] + s * raw[swapped]);
        cosine[l] = c * (raw[off + direct] + s * raw[off + swapped]);
    }
    Ok((sine, cosine))
}
