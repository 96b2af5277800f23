//! Three-body system, channel kinematics and the pole-to-resonance map.
//!
//! Particle 1 is the nucleus, particles 2 and 3 are the identical pair.
//! Atomic units throughout.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Proton mass in electron masses (2018 CODATA).
pub const PROTON_MASS: f64 = 1836.152_673_43;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("energy {energy} lies outside the elastic window ({lower}, {upper})")]
    OutsideElasticWindow { energy: f64, lower: f64, upper: f64 },
    #[error("wavevector must be positive and finite (got {0})")]
    InvalidWavevector(f64),
    #[error("threshold index must be at least 1")]
    InvalidThreshold,
    #[error("pole k = {re} + {im}i gives a non-positive width {width}")]
    NonResonant { re: f64, im: f64, width: f64 },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
}

/// Mass of the first particle; the infinite case is a distinct mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NucleusMass {
    Infinite,
    Finite(f64),
}

/// Spin symmetry of the spatial wavefunction under exchange of 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Singlet,
    Triplet,
}

impl Symmetry {
    pub fn from_sigma(sigma: u8) -> Option<Self> {
        match sigma {
            0 => Some(Self::Singlet),
            1 => Some(Self::Triplet),
            _ => None,
        }
    }

    pub fn sigma(self) -> u8 {
        match self {
            Self::Singlet => 0,
            Self::Triplet => 1,
        }
    }

    /// `(-1)^σ`.
    pub fn sign(self) -> f64 {
        match self {
            Self::Singlet => 1.0,
            Self::Triplet => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeBodySystem {
    pub m1: NucleusMass,
    pub m2: f64,
    pub m3: f64,
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl ThreeBodySystem {
    /// Hydrogen ion with a fixed nucleus.
    pub fn hydrogen_infinite() -> Self {
        Self {
            m1: NucleusMass::Infinite,
            m2: 1.0,
            m3: 1.0,
            z1: 1.0,
            z2: -1.0,
            z3: -1.0,
        }
    }

    /// Hydrogen ion with a finite proton mass.
    pub fn hydrogen(proton_mass: f64) -> Self {
        Self {
            m1: NucleusMass::Finite(proton_mass),
            ..Self::hydrogen_infinite()
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if let NucleusMass::Finite(m) = self.m1 {
            if !(m.is_finite() && m > 0.0) {
                return Err(PhysicsError::InvalidSystem(format!(
                    "m1 must be positive (got {m})"
                )));
            }
        }
        if !(self.m2.is_finite() && self.m2 > 0.0) {
            return Err(PhysicsError::InvalidSystem("m2 must be positive".into()));
        }
        if self.m2 != self.m3 || self.z2 != self.z3 {
            return Err(PhysicsError::InvalidSystem(
                "particles 2 and 3 must be identical".into(),
            ));
        }
        if !(self.z1.is_finite() && self.z2.is_finite()) {
            return Err(PhysicsError::InvalidSystem("charges must be finite".into()));
        }
        Ok(())
    }

    pub fn is_infinite_mass(&self) -> bool {
        matches!(self.m1, NucleusMass::Infinite)
    }

    /// `1/m1`, exactly zero for a fixed nucleus.
    pub fn inv_m1(&self) -> f64 {
        match self.m1 {
            NucleusMass::Infinite => 0.0,
            NucleusMass::Finite(m) => 1.0 / m,
        }
    }

    /// `α = m2/(m1+m2)`.
    pub fn alpha(&self) -> f64 {
        match self.m1 {
            NucleusMass::Infinite => 0.0,
            NucleusMass::Finite(m1) => self.m2 / (m1 + self.m2),
        }
    }

    /// Reduced mass of the target pair (1,2).
    pub fn mu12(&self) -> f64 {
        match self.m1 {
            NucleusMass::Infinite => self.m2,
            NucleusMass::Finite(m1) => m1 * self.m2 / (m1 + self.m2),
        }
    }

    /// Reduced mass of particle 3 relative to the pair (1,2).
    pub fn mu12_3(&self) -> f64 {
        match self.m1 {
            NucleusMass::Infinite => self.m3,
            NucleusMass::Finite(m1) => {
                let m12 = m1 + self.m2;
                m12 * self.m3 / (m12 + self.m3)
            }
        }
    }

    /// Bound-state energy `-Z1²μ12/(2n²)` of the target.
    pub fn threshold_energy(&self, n1: u32) -> Result<f64, PhysicsError> {
        if n1 == 0 {
            return Err(PhysicsError::InvalidThreshold);
        }
        let n = n1 as f64;
        Ok(-self.z1 * self.z1 * self.mu12() / (2.0 * n * n))
    }

    fn elastic_window(&self) -> (f64, f64) {
        let e1 = -self.z1 * self.z1 * self.mu12() / 2.0;
        (e1, e1 / 4.0)
    }

    /// Sommerfeld parameter of the open channel at wavevector `k`.
    pub fn sommerfeld(&self, k: f64) -> f64 {
        (self.z1 + self.z2) * self.z3 * self.mu12_3() / k
    }

    /// Total energy for a channel wavevector.
    pub fn energy_from_k(&self, k: f64) -> f64 {
        k * k / (2.0 * self.mu12_3()) + self.elastic_window().0
    }

    /// Complex pole wavevector to `(E_r, Γ)`.
    pub fn resonance_from_pole(&self, k_res: Complex64) -> Result<(f64, f64), PhysicsError> {
        let e = k_res * k_res / (2.0 * self.mu12_3()) + self.elastic_window().0;
        let width = -2.0 * e.im;
        if !(width > 0.0) {
            return Err(PhysicsError::NonResonant {
                re: k_res.re,
                im: k_res.im,
                width,
            });
        }
        Ok((e.re, width))
    }

    /// Inverse of [`Self::resonance_from_pole`], choosing the fourth-quadrant root.
    pub fn pole_from_resonance(&self, energy: f64, width: f64) -> Complex64 {
        let e = Complex64::new(energy - self.elastic_window().0, -0.5 * width);
        let k = (e * 2.0 * self.mu12_3()).sqrt();
        if k.re < 0.0 {
            -k
        } else {
            k
        }
    }
}

/// How the regularization coefficient `a` of the irregular function is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum APolicy {
    /// `a = k` at every energy.
    EqualsK,
    /// A fixed value shared by all energies.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub energy: f64,
    pub k: f64,
    pub eta: f64,
    pub a: f64,
    pub symmetry: Symmetry,
}

impl ChannelState {
    pub fn from_energy(
        system: &ThreeBodySystem,
        energy: f64,
        symmetry: Symmetry,
        policy: APolicy,
    ) -> Result<Self, PhysicsError> {
        let (lower, upper) = system.elastic_window();
        if !(energy > lower && energy < upper) {
            return Err(PhysicsError::OutsideElasticWindow {
                energy,
                lower,
                upper,
            });
        }
        let k = (2.0 * system.mu12_3() * (energy - lower)).sqrt();
        Ok(Self::build(system, energy, k, symmetry, policy))
    }

    pub fn from_k(
        system: &ThreeBodySystem,
        k: f64,
        symmetry: Symmetry,
        policy: APolicy,
    ) -> Result<Self, PhysicsError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(PhysicsError::InvalidWavevector(k));
        }
        let energy = system.energy_from_k(k);
        let (lower, upper) = system.elastic_window();
        if energy >= upper {
            return Err(PhysicsError::OutsideElasticWindow {
                energy,
                lower,
                upper,
            });
        }
        Ok(Self::build(system, energy, k, symmetry, policy))
    }

    fn build(
        system: &ThreeBodySystem,
        energy: f64,
        k: f64,
        symmetry: Symmetry,
        policy: APolicy,
    ) -> Self {
        let a = match policy {
            APolicy::EqualsK => k,
            APolicy::Fixed(a) => a,
        };
        Self {
            energy,
            k,
            eta: system.sommerfeld(k),
            a,
            symmetry,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thresholds() {
        let inf = ThreeBodySystem::hydrogen_infinite();
        assert_eq!(inf.threshold_energy(1).unwrap(), -0.5);
        assert_eq!(inf.threshold_energy(2).unwrap(), -0.125);
        assert!(inf.threshold_energy(0).is_err());
        let fin = ThreeBodySystem::hydrogen(PROTON_MASS);
        assert_relative_eq!(
            fin.threshold_energy(1).unwrap(),
            -0.5 * (1836.15267343 / 1837.15267343),
            max_relative = 1e-15
        );
        let mut prev = f64::NEG_INFINITY;
        for n in 1..20 {
            let e = fin.threshold_energy(n).unwrap();
            assert!(e > prev && e < 0.0);
            prev = e;
        }
    }

    #[test]
    fn infinite_mode_is_exact() {
        let inf = ThreeBodySystem::hydrogen_infinite();
        assert_eq!(inf.alpha(), 0.0);
        assert_eq!(inf.mu12_3(), 1.0);
        assert_eq!(inf.inv_m1(), 0.0);
    }

    #[test]
    fn channel_kinematics() {
        let inf = ThreeBodySystem::hydrogen_infinite();
        let c =
            ChannelState::from_energy(&inf, -0.48, Symmetry::Singlet, APolicy::EqualsK).unwrap();
        assert_relative_eq!(c.k, 0.2, max_relative = 1e-14);
        assert_eq!(c.eta, 0.0);
        assert_eq!(c.a, c.k);
        let c = ChannelState::from_energy(&inf, -0.495, Symmetry::Triplet, APolicy::Fixed(0.3))
            .unwrap();
        assert_relative_eq!(c.k, 0.1, max_relative = 1e-13);
        assert_eq!(c.a, 0.3);
        assert!(matches!(
            ChannelState::from_energy(&inf, -0.1, Symmetry::Singlet, APolicy::EqualsK),
            Err(PhysicsError::OutsideElasticWindow { .. })
        ));
        assert!(
            ChannelState::from_energy(&inf, -0.6, Symmetry::Singlet, APolicy::EqualsK).is_err()
        );
        let fin = ThreeBodySystem::hydrogen(PROTON_MASS);
        for k in [0.05, 0.2, 0.8325] {
            let e = fin.energy_from_k(k);
            let c =
                ChannelState::from_energy(&fin, e, Symmetry::Singlet, APolicy::EqualsK).unwrap();
            assert_relative_eq!(c.k, k, max_relative = 1e-13);
        }
    }

    #[test]
    fn pole_conversion() {
        let inf = ThreeBodySystem::hydrogen_infinite();
        let k = 0.7;
        assert!(matches!(
            inf.resonance_from_pole(Complex64::new(k, 0.0)),
            Err(PhysicsError::NonResonant { .. })
        ));
        let pole = inf.pole_from_resonance(-0.148776254, 1.733237e-3);
        assert!(pole.re > 0.0 && pole.im < 0.0);
        let (er, g) = inf.resonance_from_pole(pole).unwrap();
        assert_relative_eq!(er, -0.148776254, max_relative = 1e-14);
        assert_relative_eq!(g, 1.733237e-3, max_relative = 1e-11);
        let fin = ThreeBodySystem::hydrogen(PROTON_MASS);
        let k = Complex64::new(0.8123, -0.00123);
        let (er, g) = fin.resonance_from_pole(k).unwrap();
        let back = fin.pole_from_resonance(er, g);
        assert!((back - k).norm() < 1e-14);
    }

    #[test]
    fn validation() {
        let mut s = ThreeBodySystem::hydrogen(PROTON_MASS);
        assert!(s.validate().is_ok());
        s.m3 = 2.0;
        assert!(s.validate().is_err());
        let s = ThreeBodySystem::hydrogen(-1.0);
        assert!(s.validate().is_err());
    }
}
