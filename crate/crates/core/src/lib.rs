//! S-wave elastic scattering of a particle on a two-body Coulomb target with
//! the complex Kohn variational principle on a perimetric Lagrange-Laguerre
//! mesh: S-matrix, phase shifts and resonance poles.

pub mod asymptotics;
pub mod basis;
pub mod hamiltonian;
pub mod kohn;
pub mod linalg;
pub mod physics;
pub mod quadrature;
pub mod resonance;

pub use asymptotics::{AsymptoticElements, ChannelFunctions, HybridVectors, QuadratureConfig};
pub use basis::{Basis, MeshSpec, PerimetricPoint};
pub use hamiltonian::{HamiltonianParts, SparseSymmetric};
pub use kohn::{KohnProblem, SMatrixPoint};
pub use physics::{APolicy, ChannelState, NucleusMass, Symmetry, ThreeBodySystem};
pub use quadrature::{GaussRule, LagrangeLaguerre};
