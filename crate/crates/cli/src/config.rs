//! Run configuration: TOML file, presets and command-line overrides.

use kohn_mesh::physics::PROTON_MASS;
use kohn_mesh::{APolicy, NucleusMass, QuadratureConfig, Symmetry, ThreeBodySystem};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field {
        field: &'static str,
        message: String,
    },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Phaseshift,
    Sweep,
    Converge,
    Resonance,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "infH-")]
    InfiniteHydrogen,
    #[serde(rename = "H-")]
    Hydrogen,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "infH-" => Ok(Self::InfiniteHydrogen),
            "H-" => Ok(Self::Hydrogen),
            _ => Err(field(
                "system.preset",
                format!("unknown preset {s:?} (expected \"infH-\" or \"H-\")"),
            )),
        }
    }

    pub fn system(self) -> ThreeBodySystem {
        match self {
            Self::InfiniteHydrogen => ThreeBodySystem::hydrogen_infinite(),
            Self::Hydrogen => ThreeBodySystem::hydrogen(PROTON_MASS),
        }
    }
}

/// Scale parameters `(h_x, h)` tabulated for the hydrogen presets; the
/// same values serve both nucleus masses.
pub fn preset_scales(symmetry: Symmetry, k: f64) -> (f64, f64) {
    match (symmetry, k) {
        (Symmetry::Singlet, k) if k < 0.35 => (1.0, 1.3),
        (Symmetry::Singlet, k) if k < 0.65 => (1.0, 1.4),
        (Symmetry::Singlet, _) => (1.2, 1.4),
        (Symmetry::Triplet, k) if k < 0.35 => (1.2, 1.5),
        (Symmetry::Triplet, k) if k < 0.65 => (1.2, 1.6),
        (Symmetry::Triplet, _) => (1.4, 1.7),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub preset: Option<Preset>,
    /// Nucleus mass; absent means infinite.
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub m3: Option<f64>,
    pub z1: Option<f64>,
    pub z2: Option<f64>,
    pub z3: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: Option<usize>,
    pub n: Option<usize>,
    pub hx: Option<f64>,
    pub h: Option<f64>,
    pub sigma: Option<u8>,
}

/// `a = "k"` or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ASetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: Option<Task>,
    #[serde(default)]
    pub k: Vec<f64>,
    #[serde(default)]
    pub energies: Vec<f64>,
    pub a: Option<ASetting>,
    #[serde(default)]
    pub meshes: Vec<[usize; 2]>,
    pub interval: Option<[f64; 2]>,
    #[serde(default)]
    pub schedule: Vec<usize>,
    pub tolerance: Option<f64>,
    /// Number of bound states below the channel threshold, used to anchor
    /// the phase-shift branch of a sweep.
    pub bound_states: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub json: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }
}

pub const DEFAULT_SCHEDULE: [usize; 4] = [5, 7, 9, 11];
pub const DEFAULT_POLE_TOLERANCE: f64 = 1e-8;

/// A configuration with every default filled in and checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub task: Task,
    pub preset: Option<Preset>,
    pub system: ThreeBodySystem,
    pub symmetry: Symmetry,
    pub nx: usize,
    pub n: usize,
    /// `None` when the preset chooses scales per wavevector.
    pub scales: Option<(f64, f64)>,
    pub k: Vec<f64>,
    pub energies: Vec<f64>,
    pub a: APolicy,
    pub meshes: Vec<(usize, usize)>,
    pub interval: Option<(f64, f64)>,
    pub schedule: Vec<usize>,
    pub tolerance: f64,
    pub bound_states: Option<usize>,
    pub quadrature: QuadratureConfig,
    pub json: bool,
}

impl Resolved {
    pub fn scales_for(&self, k: f64) -> (f64, f64) {
        self.scales
            .unwrap_or_else(|| preset_scales(self.symmetry, k))
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(field(
            name,
            format!("must be positive and finite (got {v})"),
        ))
    }
}

pub fn resolve(config: &RunConfig, task: Task) -> Result<Resolved, ConfigError> {
    if let Some(kind) = config.task.kind {
        if kind != task {
            return Err(field(
                "task.kind",
                format!("config is for {kind:?} but {task:?} was requested"),
            ));
        }
    }
    let s = &config.system;
    let explicit = [s.m1, s.m2, s.m3, s.z1, s.z2, s.z3]
        .iter()
        .any(Option::is_some);
    let system = match s.preset {
        Some(p) if explicit => {
            return Err(field(
                "system",
                format!("preset {p:?} cannot be combined with explicit masses or charges"),
            ))
        }
        Some(p) => p.system(),
        None => {
            let m1 = match s.m1 {
                Some(m) => NucleusMass::Finite(positive("system.m1", m)?),
                None => NucleusMass::Infinite,
            };
            ThreeBodySystem {
                m1,
                m2: s.m2.unwrap_or(1.0),
                m3: s.m3.unwrap_or(1.0),
                z1: s.z1.unwrap_or(1.0),
                z2: s.z2.unwrap_or(-1.0),
                z3: s.z3.unwrap_or(-1.0),
            }
        }
    };
    system
        .validate()
        .map_err(|e| field("system", e.to_string()))?;
    if system.z1 * system.z2 >= 0.0 {
        return Err(field(
            "system",
            "particles 1 and 2 must attract to form a bound target",
        ));
    }
    if (system.z1 + system.z2) * system.z3 != 0.0 {
        return Err(field("system", "the target must be neutral (z1 + z2 = 0)"));
    }

    let m = &config.mesh;
    let sigma = m
        .sigma
        .ok_or_else(|| field("mesh.sigma", "required (0 singlet, 1 triplet)"))?;
    let symmetry = Symmetry::from_sigma(sigma)
        .ok_or_else(|| field("mesh.sigma", format!("must be 0 or 1 (got {sigma})")))?;
    let (nx, n) = match (m.nx, m.n, s.preset) {
        (Some(nx), Some(n), _) => (nx, n),
        (None, None, Some(_)) => (10, 35),
        _ => return Err(field("mesh", "nx and n are required without a preset")),
    };
    if nx == 0 || n == 0 {
        return Err(field("mesh", "nx and n must be positive"));
    }
    let scales = match (m.hx, m.h) {
        (Some(hx), Some(h)) => Some((positive("mesh.hx", hx)?, positive("mesh.h", h)?)),
        (None, None) if s.preset.is_some() => None,
        _ => return Err(field("mesh", "hx and h are required without a preset")),
    };

    let t = &config.task;
    for &k in &t.k {
        positive("task.k", k)?;
    }
    if !t.k.is_empty() && !t.energies.is_empty() {
        return Err(field("task", "give either k or energies, not both"));
    }
    let a = match &t.a {
        None => APolicy::EqualsK,
        Some(ASetting::Keyword(w)) if w == "k" => APolicy::EqualsK,
        Some(ASetting::Keyword(w)) => {
            return Err(field(
                "task.a",
                format!("expected \"k\" or a number (got {w:?})"),
            ))
        }
        Some(ASetting::Value(v)) => APolicy::Fixed(positive("task.a", *v)?),
    };
    let meshes: Vec<(usize, usize)> = t.meshes.iter().map(|m| (m[0], m[1])).collect();
    if meshes.iter().any(|&(a, b)| a == 0 || b == 0) {
        return Err(field("task.meshes", "mesh sizes must be positive"));
    }
    let interval = match t.interval {
        Some([lo, hi]) if lo < hi => Some((lo, hi)),
        Some([lo, hi]) => {
            return Err(field(
                "task.interval",
                format!("lower bound {lo} must be below {hi}"),
            ))
        }
        None => None,
    };
    let schedule = if t.schedule.is_empty() {
        DEFAULT_SCHEDULE.to_vec()
    } else {
        t.schedule.clone()
    };
    if schedule
        .windows(2)
        .any(|w| w[1] <= w[0] || (w[1] - w[0]) % 2 != 0)
        || schedule[0] < 2
    {
        return Err(field(
            "task.schedule",
            "must start at 2 or more and grow in even steps",
        ));
    }
    let tolerance = positive(
        "task.tolerance",
        t.tolerance.unwrap_or(DEFAULT_POLE_TOLERANCE),
    )?;

    let needs_points = matches!(
        task,
        Task::Phaseshift | Task::Sweep | Task::Converge | Task::Check
    );
    if needs_points && t.k.is_empty() && t.energies.is_empty() {
        return Err(field(
            "task.k",
            "at least one wavevector or energy is required",
        ));
    }
    if task == Task::Resonance {
        if interval.is_none() {
            return Err(field("task.interval", "required for a resonance search"));
        }
        if scales.is_none() {
            return Err(field("mesh", "a resonance search needs explicit hx and h"));
        }
    }
    if task == Task::Sweep && scales.is_none() {
        return Err(field("mesh", "a sweep uses one basis; give hx and h"));
    }
    if task == Task::Converge && meshes.is_empty() {
        return Err(field(
            "task.meshes",
            "at least one (nx, n) pair is required",
        ));
    }

    Ok(Resolved {
        task,
        preset: s.preset,
        system,
        symmetry,
        nx,
        n,
        scales,
        k: t.k.clone(),
        energies: t.energies.clone(),
        a,
        meshes,
        interval,
        schedule,
        tolerance,
        bound_states: t.bound_states,
        quadrature: config.quadrature,
        json: config.output.json,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> RunConfig {
        toml::from_str(s).unwrap()
    }

    #[test]
    fn preset_fills_mesh_and_scales() {
        let c = parse("[system]\npreset = \"infH-\"\n[mesh]\nsigma = 1\n[task]\nk = [0.2, 0.8]\n");
        let r = resolve(&c, Task::Phaseshift).unwrap();
        assert_eq!((r.nx, r.n), (10, 35));
        assert_eq!(r.scales_for(0.2), (1.2, 1.5));
        assert_eq!(r.scales_for(0.8), (1.4, 1.7));
        assert_eq!(r.a, APolicy::EqualsK);
    }

    #[test]
    fn field_errors_name_the_field() {
        let c = parse("[mesh]\nsigma = 3\n");
        let e = resolve(&c, Task::Phaseshift).unwrap_err().to_string();
        assert!(e.starts_with("mesh.sigma"), "{e}");
        let c = parse("[system]\npreset = \"H-\"\nm1 = 5.0\n[mesh]\nsigma = 0\n");
        assert!(resolve(&c, Task::Phaseshift).is_err());
        assert!(toml::from_str::<RunConfig>("[mesh]\nbogus = 1\n").is_err());
        let c = parse("[system]\npreset = \"H-\"\n[mesh]\nsigma = 0\n[task]\na = \"x\"\nk=[0.1]\n");
        assert!(resolve(&c, Task::Phaseshift)
            .unwrap_err()
            .to_string()
            .starts_with("task.a"));
    }

    #[test]
    fn fixed_a_and_schedule() {
        let c = parse(
            "[system]\npreset = \"infH-\"\n[mesh]\nsigma = 0\nhx = 1.2\nh = 1.4\n[task]\na = 0.3\ninterval = [-0.153, -0.145]\nschedule = [5, 7, 9]\n",
        );
        let r = resolve(&c, Task::Resonance).unwrap();
        assert_eq!(r.a, APolicy::Fixed(0.3));
        assert_eq!(r.schedule, vec![5, 7, 9]);
        let c = parse("[system]\npreset = \"infH-\"\n[mesh]\nsigma = 0\nhx = 1.2\nh = 1.4\n[task]\ninterval = [-0.1, -0.2]\n");
        assert!(resolve(&c, Task::Resonance).is_err());
    }
}
