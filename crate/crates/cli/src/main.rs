use clap::{Args, Parser, Subcommand};
use kohn_mesh_cli::config::{resolve, ConfigError, Preset, RunConfig, Task};
use kohn_mesh_cli::output::write_report;
use kohn_mesh_cli::tasks::{run, Status, TaskError};
use std::path::PathBuf;
use std::process::ExitCode;

/// S-wave S-matrix, phase shifts and resonances for three-body Coulomb
/// scattering on a perimetric Lagrange mesh.
#[derive(Parser)]
#[command(name = "kohn-mesh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase shifts at a list of wavevectors or energies.
    Phaseshift(Common),
    /// Branch-continuous phase shifts on one basis.
    Sweep(Common),
    /// Phase shift against a list of mesh sizes.
    Converge(Common),
    /// Resonance pole search over an energy interval.
    Resonance(Common),
    /// Channel identities and quadrature self-convergence.
    Check(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// `infH-` or `H-`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    energies: Vec<f64>,
    /// `NX,N`.
    #[arg(long, value_delimiter = ',')]
    mesh: Option<Vec<usize>>,
    /// `HX,H`.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<u8>,
    /// `k` or a number.
    #[arg(long)]
    a: Option<String>,
    /// Mesh list `NX:N,NX:N,...`.
    #[arg(long, value_delimiter = ',')]
    meshes: Vec<String>,
    /// `LO,HI`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    interval: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    schedule: Vec<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    json: bool,
}

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(1)
}

fn build_config(c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &c.preset {
        cfg.system.preset = Some(Preset::parse(p)?);
    }
    if !c.k.is_empty() {
        cfg.task.k = c.k.clone();
        cfg.task.energies.clear();
    }
    if !c.energies.is_empty() {
        cfg.task.energies = c.energies.clone();
        cfg.task.k.clear();
    }
    let pair = |field: &'static str, n: usize| -> Result<(), ConfigError> {
        if n == 2 {
            Ok(())
        } else {
            Err(ConfigError::Field {
                field,
                message: format!("expected two comma-separated values (got {n})"),
            })
        }
    };
    if let Some(m) = &c.mesh {
        pair("--mesh", m.len())?;
        cfg.mesh.nx = Some(m[0]);
        cfg.mesh.n = Some(m[1]);
    }
    if let Some(s) = &c.scales {
        pair("--scales", s.len())?;
        cfg.mesh.hx = Some(s[0]);
        cfg.mesh.h = Some(s[1]);
    }
    if c.sigma.is_some() {
        cfg.mesh.sigma = c.sigma;
    }
    if let Some(a) = &c.a {
        use kohn_mesh_cli::config::ASetting;
        cfg.task.a = Some(match a.parse::<f64>() {
            Ok(v) => ASetting::Value(v),
            Err(_) => ASetting::Keyword(a.clone()),
        });
    }
    if !c.meshes.is_empty() {
        cfg.task.meshes = c
            .meshes
            .iter()
            .map(|m| {
                let parts: Vec<&str> = m.split(':').collect();
                match parts.as_slice() {
                    [a, b] => match (a.parse(), b.parse()) {
                        (Ok(a), Ok(b)) => Ok([a, b]),
                        _ => Err(()),
                    },
                    _ => Err(()),
                }
                .map_err(|_| ConfigError::Field {
                    field: "task.meshes",
                    message: format!("expected NX:N (got {m:?})"),
                })
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(i) = &c.interval {
        pair("--interval", i.len())?;
        cfg.task.interval = Some([i[0], i[1]]);
    }
    if !c.schedule.is_empty() {
        cfg.task.schedule = c.schedule.clone();
    }
    if c.tolerance.is_some() {
        cfg.task.tolerance = c.tolerance;
    }
    if c.json {
        cfg.output.json = true;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = Some(o.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let (task, common) = match &cli.command {
        Command::Phaseshift(c) => (Task::Phaseshift, c),
        Command::Sweep(c) => (Task::Sweep, c),
        Command::Converge(c) => (Task::Converge, c),
        Command::Resonance(c) => (Task::Resonance, c),
        Command::Check(c) => (Task::Check, c),
    };
    let cfg = match build_config(common) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let resolved = match resolve(&cfg, task) {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    if let Some(j) = common.jobs {
        if j == 0 {
            return config_error("--jobs must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
        {
            eprintln!("warning: {e}");
        }
    }
    let report = match run(&resolved) {
        Ok(r) => r,
        Err(TaskError::Input(e)) => return config_error(e),
        Err(TaskError::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            return ExitCode::from(2);
        }
    };
    for line in &report.summary {
        println!("{line}");
    }
    if let Some(dir) = &cfg.output.dir {
        match write_report(dir, &resolved, &report) {
            Ok(paths) => {
                for p in paths {
                    println!("wrote {}", p.display());
                }
            }
            Err(e) => {
                eprintln!("cannot write output: {e}");
                return ExitCode::from(2);
            }
        }
    }
    match report.status {
        Status::Ok => ExitCode::SUCCESS,
        Status::NumericalFailure => ExitCode::from(2),
        Status::IdentityFailure => ExitCode::from(3),
    }
}
