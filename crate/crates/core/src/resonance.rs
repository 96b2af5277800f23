//! Rational interpolation of `S(k)` and extraction of resonance poles.
//!
//! The model
//!
//! ```text
//!          1 + Σ a_n kⁿ
//! S(k) = ─────────────────
//!        1 + Σ (-1)ⁿ a_n kⁿ
//! ```
//!
//! satisfies `S(0) = 1` and `S(-k) S(k) = 1` by construction; its poles are
//! the roots of the denominator.

use crate::kohn::KohnError;
use crate::physics::{APolicy, ChannelState, PhysicsError, Symmetry, ThreeBodySystem};
use faer::prelude::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Fits whose scaled matrix has a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e30;
/// Fits above this condition number carry a warning.
pub const WARN_CONDITION: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResonanceError {
    #[error("no samples to fit")]
    Empty,
    #[error("sample wavevectors must be distinct, finite and positive")]
    InvalidSamples,
    #[error("ill-conditioned fit: condition number {0:.3e}")]
    IllConditioned(f64),
    #[error("fit reproduces the samples only to {0:.3e}")]
    FitResidual(f64),
    #[error("invalid search: {0}")]
    InvalidSearch(String),
    #[error("S-matrix evaluation failed at E = {energy}: {source}")]
    Evaluation { energy: f64, source: KohnError },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalModel {
    /// `a_1 ..= a_{N_P}`.
    pub coefficients: Vec<Complex64>,
    /// Condition number of the column-scaled fit matrix (1 for built models).
    pub condition: f64,
}

impl RationalModel {
    pub fn new(coefficients: Vec<Complex64>) -> Self {
        Self {
            coefficients,
            condition: 1.0,
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    fn series(&self, k: Complex64, alternate: bool) -> Complex64 {
        // Horner in k over 1 + Σ c_n kⁿ.
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &a) in self.coefficients.iter().enumerate().rev() {
            let n = i + 1;
            let c = if alternate && n % 2 == 1 { -a } else { a };
            acc = (acc + c) * k;
        }
        acc + 1.0
    }

    pub fn numerator(&self, k: Complex64) -> Complex64 {
        self.series(k, false)
    }

    pub fn denominator(&self, k: Complex64) -> Complex64 {
        self.series(k, true)
    }

    pub fn eval(&self, k: Complex64) -> Complex64 {
        self.numerator(k) / self.denominator(k)
    }

    fn denominator_derivative(&self, k: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &a) in self.coefficients.iter().enumerate().rev() {
            let n = i + 1;
            let c = if n % 2 == 1 { -a } else { a };
            acc = acc * k + c * n as f64;
        }
        acc
    }

    /// `Σ |c_n| |k|ⁿ` including the constant term.
    fn denominator_scale(&self, k: Complex64) -> f64 {
        let r = k.norm();
        let mut acc = 0.0;
        for a in self.coefficients.iter().rev() {
            acc = (acc + a.norm()) * r;
        }
        acc + 1.0
    }
}

/// Interpolates `(k_j, S_j)` with a model of order equal to the sample count.
pub fn fit_rational(samples: &[(f64, Complex64)]) -> Result<RationalModel, ResonanceError> {
    let np = samples.len();
    if np == 0 {
        return Err(ResonanceError::Empty);
    }
    let mut ks: Vec<f64> = samples.iter().map(|s| s.0).collect();
    if ks.iter().any(|k| !(k.is_finite() && *k > 0.0))
        || samples
            .iter()
            .any(|s| !(s.1.re.is_finite() && s.1.im.is_finite()))
    {
        return Err(ResonanceError::InvalidSamples);
    }
    ks.sort_by(f64::total_cmp);
    if ks.windows(2).any(|w| w[0] == w[1]) {
        return Err(ResonanceError::InvalidSamples);
    }
    let k_mid = 0.5 * (ks[0] + ks[np - 1]);
    // Σ b_n u_jⁿ ((-1)ⁿ S_j - 1) = 1 - S_j with u = k/k_mid, a_n = b_n / k_midⁿ.
    let a = Mat::<Complex64>::from_fn(np, np, |j, i| {
        let (k, s) = samples[j];
        let n = (i + 1) as i32;
        let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
        (s * sign - 1.0) * (k / k_mid).powi(n)
    });
    let rhs = Mat::<Complex64>::from_fn(np, 1, |j, _| Complex64::new(1.0, 0.0) - samples[j].1);
    let sv = a
        .singular_values()
        .map_err(|_| ResonanceError::IllConditioned(f64::INFINITY))?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition < MAX_CONDITION) {
        return Err(ResonanceError::IllConditioned(condition));
    }
    let lu = a.full_piv_lu();
    let mut b = rhs.clone();
    lu.solve_in_place(b.as_mut());
    for _ in 0..2 {
        let r = &rhs - &a * &b;
        let mut d = r;
        lu.solve_in_place(d.as_mut());
        b += &d;
    }
    let model = RationalModel {
        coefficients: (0..np)
            .map(|i| b[(i, 0)] / k_mid.powi(i as i32 + 1))
            .collect(),
        condition,
    };
    // Interpolation check in the linearized form, relative to its scale.
    let worst = samples
        .iter()
        .map(|&(k, s)| {
            let k = Complex64::new(k, 0.0);
            let (p, q) = (model.numerator(k), model.denominator(k));
            (s * q - p).norm()
                / (s.norm() * model.denominator_scale(k) + model.denominator_scale(k))
        })
        .fold(0.0, f64::max);
    if !(worst < 1e-12) {
        return Err(ResonanceError::FitResidual(worst));
    }
    Ok(model)
}

/// A denominator root after Newton polishing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub k: Complex64,
    /// `|denominator| / Σ|c_n||k|ⁿ` at the polished root.
    pub residual: f64,
    pub converged: bool,
}

/// All roots of the denominator, polished by Newton iteration.
pub fn find_poles(model: &RationalModel) -> Vec<Pole> {
    let mut coeffs = model.coefficients.clone();
    while coeffs.last().is_some_and(|c| c.norm() == 0.0) {
        coeffs.pop();
    }
    let deg = coeffs.len();
    if deg == 0 {
        return Vec::new();
    }
    let c: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(i, &a)| if (i + 1) % 2 == 1 { -a } else { a })
        .collect();
    // Work in u = k/s with s balancing the extreme coefficients.
    let s = (1.0 / c[deg - 1].norm()).powf(1.0 / deg as f64);
    let lead = c[deg - 1] * s.powi(deg as i32);
    let monic = |i: usize| -> Complex64 {
        if i == 0 {
            Complex64::new(1.0, 0.0) / lead
        } else {
            c[i - 1] * s.powi(i as i32) / lead
        }
    };
    let companion = Mat::<Complex64>::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -monic(deg - 1 - j)
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let roots = companion.eigenvalues().unwrap_or_default();
    roots.into_iter().map(|u| polish(model, u * s)).collect()
}

fn polish(model: &RationalModel, mut k: Complex64) -> Pole {
    let rel = |k: Complex64| model.denominator(k).norm() / model.denominator_scale(k);
    let mut residual = rel(k);
    for _ in 0..50 {
        if residual < 1e-15 {
            break;
        }
        let d = model.denominator_derivative(k);
        if d.norm() == 0.0 {
            break;
        }
        let step = model.denominator(k) / d;
        let next = k - step;
        let r = rel(next);
        if !(r < residual) && step.norm() <= 1e-15 * k.norm() {
            break;
        }
        if !r.is_finite() {
            break;
        }
        k = next;
        residual = r;
        if step.norm() <= 1e-16 * k.norm() {
            break;
        }
    }
    Pole {
        k,
        residual,
        converged: residual < 1e-13,
    }
}

/// Energies used for `n_p` points: `n0 = schedule[0]` equally spaced
/// points on `[lo, hi]`, then pairs at half-interval steps outside it.
pub fn sample_energies(
    interval: (f64, f64),
    n0: usize,
    n_p: usize,
) -> Result<Vec<f64>, ResonanceError> {
    let (lo, hi) = interval;
    if !(lo < hi) || n0 < 2 || n_p < n0 || (n_p - n0) % 2 != 0 {
        return Err(ResonanceError::InvalidSearch(format!(
            "cannot place {n_p} points from {n0} on [{lo}, {hi}]"
        )));
    }
    let w = hi - lo;
    let mut e: Vec<f64> = (0..n0)
        .map(|j| lo + w * j as f64 / (n0 - 1) as f64)
        .collect();
    for i in 1..=(n_p - n0) / 2 {
        e.push(lo - 0.5 * w * i as f64);
        e.push(hi + 0.5 * w * i as f64);
    }
    e.sort_by(f64::total_cmp);
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n_p: usize,
    pub energies: Vec<f64>,
    pub condition: f64,
    /// Selected pole, if a fourth-quadrant root exists.
    pub pole: Option<Complex64>,
    pub energy: Option<f64>,
    pub width: Option<f64>,
    /// Every other root of the denominator.
    pub rejected: Vec<Complex64>,
    /// Roots whose Newton polishing did not reach the tolerance.
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceResult {
    pub k_res: Complex64,
    pub energy: f64,
    pub width: f64,
    /// Pole spread between the last two schedule entries.
    pub spread: f64,
    pub energy_spread: f64,
    pub width_spread: f64,
    pub a: f64,
    pub table: Vec<StabilityRow>,
    /// Every computed `(E, k, S)`.
    pub samples: Vec<(f64, f64, Complex64)>,
}

/// Outcome of a search. A pole is found only when the last two schedule
/// entries agree within the tolerance; otherwise the table is still reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SearchOutcome {
    Found(ResonanceResult),
    NotFound { table: Vec<StabilityRow>, a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub interval: (f64, f64),
    pub schedule: Vec<usize>,
    /// Pole agreement, in `|Δk|`, required between the last two entries.
    pub tolerance: f64,
}

/// Runs the schedule, evaluating `S` only at energies not seen before.
/// `evaluate` receives channel states and returns `S` for each.
pub fn resonance_search<F>(
    system: &ThreeBodySystem,
    symmetry: Symmetry,
    spec: &SearchSpec,
    evaluate: F,
) -> Result<SearchOutcome, ResonanceError>
where
    F: Fn(&[ChannelState]) -> Vec<Result<Complex64, KohnError>>,
{
    let (lo, hi) = spec.interval;
    if spec.schedule.is_empty() || spec.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ResonanceError::InvalidSearch(
            "schedule must be non-empty and increasing".into(),
        ));
    }
    let n0 = spec.schedule[0];
    let k_of =
        |e: f64| ChannelState::from_energy(system, e, symmetry, APolicy::EqualsK).map(|c| c.k);
    let a = 0.5 * (k_of(lo)? + k_of(hi)?);
    let policy = APolicy::Fixed(a);
    let window = sample_energies(spec.interval, n0, *spec.schedule.last().unwrap())?;
    for &e in &window {
        ChannelState::from_energy(system, e, symmetry, policy)?;
    }

    let mut cache: HashMap<u64, (f64, Complex64)> = HashMap::new();
    let mut table = Vec::new();
    let mut previous: Option<Complex64> = None;
    let mut last_two: Vec<Complex64> = Vec::new();
    let (k_lo, k_hi) = (k_of(lo)?, k_of(hi)?);
    for &n_p in &spec.schedule {
        let energies = sample_energies(spec.interval, n0, n_p)?;
        let fresh: Vec<ChannelState> = energies
            .iter()
            .filter(|e| !cache.contains_key(&e.to_bits()))
            .map(|&e| ChannelState::from_energy(system, e, symmetry, policy))
            .collect::<Result<_, _>>()?;
        for (ch, s) in fresh.iter().zip(evaluate(&fresh)) {
            let s = s.map_err(|source| ResonanceError::Evaluation {
                energy: ch.energy,
                source,
            })?;
            cache.insert(ch.energy.to_bits(), (ch.k, s));
        }
        let samples: Vec<(f64, Complex64)> = energies.iter().map(|e| cache[&e.to_bits()]).collect();
        let model = fit_rational(&samples)?;
        let poles = find_poles(&model);
        let unconverged = poles.iter().filter(|p| !p.converged).count();
        // Nearest fourth-quadrant root to the previous pole, or to the
        // wavevector image of the interval on the first entry.
        let distance = |k: Complex64| match previous {
            Some(p) => (k - p).norm(),
            None => {
                let re = k.re.clamp(k_lo, k_hi);
                (k - re).norm()
            }
        };
        let chosen = poles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.k.re > 0.0 && p.k.im < 0.0)
            .min_by(|a, b| distance(a.1.k).total_cmp(&distance(b.1.k)))
            .map(|(i, _)| i);
        let rejected = poles
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != chosen)
            .map(|(_, p)| p.k)
            .collect();
        let pole = chosen.map(|i| poles[i].k);
        let (energy, width) = match pole.map(|k| system.resonance_from_pole(k)) {
            Some(Ok((e, g))) => (Some(e), Some(g)),
            _ => (None, None),
        };
        table.push(StabilityRow {
            n_p,
            energies,
            condition: model.condition,
            pole,
            energy,
            width,
            rejected,
            unconverged,
        });
        if let Some(p) = pole {
            previous = Some(p);
            last_two.push(p);
        } else {
            last_two.clear();
        }
    }
    let mut samples: Vec<(f64, f64, Complex64)> = cache
        .into_iter()
        .map(|(b, (k, s))| (f64::from_bits(b), k, s))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let last = table.last().unwrap();
    let (Some(k_res), Some(energy), Some(width)) = (last.pole, last.energy, last.width) else {
        return Ok(SearchOutcome::NotFound { table, a });
    };
    let (spread, energy_spread, width_spread) = if table.len() >= 2 {
        let prev = &table[table.len() - 2];
        match (prev.pole, prev.energy, prev.width) {
            (Some(p), Some(e), Some(g)) => {
                ((k_res - p).norm(), (energy - e).abs(), (width - g).abs())
            }
            _ => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        }
    } else {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    };
    if !(spread <= spec.tolerance) {
        return Ok(SearchOutcome::NotFound { table, a });
    }
    Ok(SearchOutcome::Found(ResonanceResult {
        k_res,
        energy,
        width,
        spread,
        energy_spread,
        width_spread,
        a,
        table,
        samples,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_sample_closed_form() {
        let (k0, s0) = (0.37, Complex64::from_polar(1.0, 0.9));
        let m = fit_rational(&[(k0, s0)]).unwrap();
        let expect = (s0 - 1.0) / (k0 * (s0 + 1.0));
        assert!((m.coefficients[0] - expect).norm() < 1e-14);
        let poles = find_poles(&m);
        assert_eq!(poles.len(), 1);
        assert!((poles[0].k - 1.0 / m.coefficients[0]).norm() < 1e-13);
        let m = fit_rational(&[(0.2, c(1.0, 0.0))]).unwrap();
        assert_eq!(m.coefficients[0], c(0.0, 0.0));
        assert!(find_poles(&m).is_empty());
    }

    #[test]
    fn model_structure() {
        let m = RationalModel::new(vec![c(0.3, -0.1), c(-0.7, 0.2), c(0.05, 0.4)]);
        assert_eq!(m.eval(c(0.0, 0.0)), c(1.0, 0.0));
        for k in [c(0.3, 0.0), c(0.8, -0.1), c(-0.2, 0.5)] {
            assert!((m.eval(k) * m.eval(-k) - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_samples() {
        assert_eq!(fit_rational(&[]), Err(ResonanceError::Empty));
        let s = c(1.0, 0.0);
        assert_eq!(
            fit_rational(&[(0.2, s), (0.2, s)]),
            Err(ResonanceError::InvalidSamples)
        );
        assert_eq!(
            fit_rational(&[(-0.2, s)]),
            Err(ResonanceError::InvalidSamples)
        );
    }

    #[test]
    fn sample_placement_nests() {
        let e5 = sample_energies((-0.153, -0.145), 5, 5).unwrap();
        assert_relative_eq!(e5[1] - e5[0], 0.002, max_relative = 1e-12);
        let e9 = sample_energies((-0.153, -0.145), 5, 9).unwrap();
        assert_eq!(e9.len(), 9);
        for e in &e5 {
            assert!(e9.iter().any(|x| x.to_bits() == e.to_bits()));
        }
        assert_relative_eq!(e9[0], -0.161, max_relative = 1e-12);
        assert!(sample_energies((-0.153, -0.145), 5, 6).is_err());
    }

    #[test]
    fn planted_pole_recovered() {
        // Unitary on the real axis: S = D(-k)/D(k) with a root of D at the
        // planted pole and its mirror -conj.
        let p = c(0.43, -0.002);
        let q = c(-0.43, -0.002);
        let roots = [p, q, c(0.9, -0.3), c(-1.2, -0.5), c(0.2, -1.1)];
        let d = |k: Complex64| roots.iter().map(|&r| 1.0 - k / r).product::<Complex64>();
        let samples: Vec<(f64, Complex64)> = (0..5)
            .map(|j| {
                let k = 0.41 + 0.01 * j as f64;
                let kc = c(k, 0.0);
                (k, d(-kc) / d(kc))
            })
            .collect();
        let m = fit_rational(&samples).unwrap();
        let poles = find_poles(&m);
        assert!(poles.iter().any(|r| (r.k - p).norm() < 1e-12), "{poles:?}");
        assert!(poles.iter().all(|r| r.converged));
        for (k, s) in samples {
            assert!((m.eval(c(k, 0.0)) - s).norm() < 1e-12);
        }
    }
}
