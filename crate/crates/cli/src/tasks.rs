//! Command runners. Each returns a [`Report`]; nothing here touches files.

use crate::config::{Resolved, Task};
use kohn_mesh::asymptotics::{asymptotic_elements, hybrid_vectors};
use kohn_mesh::kohn::{phase_distance, KohnError};
use kohn_mesh::resonance::{resonance_search, SearchOutcome, SearchSpec};
use kohn_mesh::{Basis, ChannelState, HamiltonianParts, KohnProblem, MeshSpec, SMatrixPoint};
use serde_json::{json, Value};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    /// Inputs rejected before any assembly.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NumericalFailure,
    IdentityFailure,
}

/// One CSV table plus the text shown on the terminal.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    pub json: Value,
    pub status: Status,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn basis_for(r: &Resolved, nx: usize, n: usize, scales: (f64, f64)) -> Result<Basis, TaskError> {
    Basis::new(MeshSpec::new(nx, n, scales.0, scales.1, r.symmetry))
        .map_err(|e| TaskError::Input(e.to_string()))
}

fn assemble(basis: &Basis, r: &Resolved) -> Result<HamiltonianParts, TaskError> {
    HamiltonianParts::assemble(basis, &r.system).map_err(|e| TaskError::Numerical(e.to_string()))
}

/// Channel states for the requested k or energies, all validated up front.
fn channels(r: &Resolved) -> Result<Vec<ChannelState>, TaskError> {
    let out: Result<Vec<_>, _> = if r.k.is_empty() {
        r.energies
            .iter()
            .map(|&e| ChannelState::from_energy(&r.system, e, r.symmetry, r.a))
            .collect()
    } else {
        r.k.iter()
            .map(|&k| ChannelState::from_k(&r.system, k, r.symmetry, r.a))
            .collect()
    };
    out.map_err(|e| TaskError::Input(e.to_string()))
}

const POINT_COLUMNS: [&str; 18] = [
    "nx",
    "n",
    "hx",
    "h",
    "k",
    "energy",
    "a",
    "delta",
    "s_re",
    "s_im",
    "sbar_re",
    "sbar_im",
    "unitarity_defect",
    "solver_residual",
    "hybrid_error",
    "elements_error",
    "normalization_defect",
    "antisymmetry_defect",
];

fn point_row(spec: &MeshSpec, p: &SMatrixPoint) -> Vec<String> {
    vec![
        spec.nx.to_string(),
        spec.n.to_string(),
        num(spec.hx),
        num(spec.h),
        num(p.k),
        num(p.energy),
        num(p.a),
        num(p.delta),
        num(p.s.re),
        num(p.s.im),
        num(p.s_bar.re),
        num(p.s_bar.im),
        num(p.unitarity_defect),
        num(p.solver_residual),
        num(p.hybrid_error),
        num(p.elements_error),
        num(p.normalization_defect),
        num(p.antisymmetry_defect),
    ]
}

fn failure_row(spec: &MeshSpec, ch: &ChannelState, e: &KohnError) -> Vec<String> {
    let mut row = vec![
        spec.nx.to_string(),
        spec.n.to_string(),
        num(spec.hx),
        num(spec.h),
        num(ch.k),
        num(ch.energy),
        num(ch.a),
    ];
    row.resize(POINT_COLUMNS.len(), String::new());
    row[7] = format!("error: {e}");
    row
}

fn describe(p: &SMatrixPoint) -> String {
    format!(
        "k = {:.6}  E = {:.9}  delta = {:.8}  |1-|S|^2| = {:.1e}  residual = {:.1e}",
        p.k, p.energy, p.delta, p.unitarity_defect, p.solver_residual
    )
}

pub fn run(r: &Resolved) -> Result<Report, TaskError> {
    match r.task {
        Task::Phaseshift => phaseshift(r),
        Task::Sweep => sweep(r),
        Task::Converge => converge(r),
        Task::Resonance => resonance(r),
        Task::Check => check(r),
    }
}

/// Phase shifts at each k; bases are shared between points with equal scales.
fn phaseshift(r: &Resolved) -> Result<Report, TaskError> {
    let chans = channels(r)?;
    let mut groups: Vec<((f64, f64), Vec<ChannelState>)> = Vec::new();
    for ch in chans {
        let s = r.scales_for(ch.k);
        match groups.iter_mut().find(|g| g.0 == s) {
            Some(g) => g.1.push(ch),
            None => groups.push((s, vec![ch])),
        }
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut points = Vec::new();
    let mut failed = false;
    for (scales, chs) in groups {
        let basis = basis_for(r, r.nx, r.n, scales)?;
        let t = Instant::now();
        let parts = assemble(&basis, r)?;
        summary.push(format!(
            "mesh ({}, {}) scales ({}, {}): dimension {}, assembled in {:.2?}",
            r.nx,
            r.n,
            scales.0,
            scales.1,
            parts.dim(),
            t.elapsed()
        ));
        let problem = KohnProblem {
            basis: &basis,
            system: r.system,
            parts: &parts,
            quadrature: r.quadrature,
        };
        for ch in chs {
            let t = Instant::now();
            match problem.solve(&ch) {
                Ok(p) => {
                    summary.push(format!("{}  ({:.2?})", describe(&p), t.elapsed()));
                    rows.push((p.k, point_row(basis.spec(), &p)));
                    points.push(p);
                }
                Err(e) => {
                    failed = true;
                    summary.push(format!("k = {:.6}: {e}", ch.k));
                    rows.push((ch.k, failure_row(basis.spec(), &ch, &e)));
                }
            }
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.sort_by(|a, b| a.k.total_cmp(&b.k));
    Ok(Report {
        tables: vec![Table {
            name: "phaseshift".into(),
            columns: POINT_COLUMNS.to_vec(),
            rows: rows.into_iter().map(|r| r.1).collect(),
        }],
        summary,
        json: json!({ "points": points }),
        status: if failed {
            Status::NumericalFailure
        } else {
            Status::Ok
        },
    })
}

/// One basis, many energies, branch-continuous phase shifts.
fn sweep(r: &Resolved) -> Result<Report, TaskError> {
    let chans = channels(r)?;
    let scales = r.scales.expect("checked at resolution");
    let basis = basis_for(r, r.nx, r.n, scales)?;
    let parts = assemble(&basis, r)?;
    let problem = KohnProblem {
        basis: &basis,
        system: r.system,
        parts: &parts,
        quadrature: r.quadrature,
    };
    let energies: Vec<f64> = chans.iter().map(|c| c.energy).collect();
    let t = Instant::now();
    let results = problem.sweep(&energies, r.a, r.bound_states);
    let mut summary = vec![format!(
        "mesh ({}, {}) scales ({}, {}): {} energies in {:.2?}",
        r.nx,
        r.n,
        scales.0,
        scales.1,
        energies.len(),
        t.elapsed()
    )];
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut failed = false;
    for (e, res) in &results {
        match res {
            Ok(p) => {
                summary.push(describe(p));
                rows.push(point_row(basis.spec(), p));
                points.push(*p);
            }
            Err(err) => {
                failed = true;
                let ch = chans
                    .iter()
                    .find(|c| c.energy == *e)
                    .expect("energy from the input list");
                summary.push(format!("E = {e}: {err}"));
                rows.push(failure_row(basis.spec(), ch, err));
            }
        }
    }
    Ok(Report {
        tables: vec![Table {
            name: "sweep".into(),
            columns: POINT_COLUMNS.to_vec(),
            rows,
        }],
        summary,
        json: json!({ "points": points }),
        status: if failed {
            Status::NumericalFailure
        } else {
            Status::Ok
        },
    })
}

/// Phase shift and unitarity defect along a list of meshes.
fn converge(r: &Resolved) -> Result<Report, TaskError> {
    let chans = channels(r)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut failed = false;
    let mut json_rows = Vec::new();
    for ch in &chans {
        let scales = r.scales_for(ch.k);
        let mut series: Vec<SMatrixPoint> = Vec::new();
        for &(nx, n) in &r.meshes {
            let basis = basis_for(r, nx, n, scales)?;
            let parts = assemble(&basis, r)?;
            let problem = KohnProblem {
                basis: &basis,
                system: r.system,
                parts: &parts,
                quadrature: r.quadrature,
            };
            let t = Instant::now();
            match problem.solve(ch) {
                Ok(mut p) => {
                    // Same branch along the series.
                    if let Some(prev) = series.last() {
                        p.delta += std::f64::consts::PI
                            * ((prev.delta - p.delta) / std::f64::consts::PI).round();
                    }
                    summary.push(format!(
                        "({nx}, {n}) dim {}: {}  ({:.2?})",
                        basis.len(),
                        describe(&p),
                        t.elapsed()
                    ));
                    rows.push(point_row(basis.spec(), &p));
                    json_rows.push(json!({ "nx": nx, "n": n, "point": p }));
                    series.push(p);
                }
                Err(e) => {
                    failed = true;
                    summary.push(format!("({nx}, {n}): {e}"));
                    rows.push(failure_row(basis.spec(), ch, &e));
                }
            }
        }
        if series.len() >= 2 {
            let steps: Vec<f64> = series
                .windows(2)
                .map(|w| phase_distance(w[1].delta, w[0].delta))
                .collect();
            let defects_fall = series
                .windows(2)
                .all(|w| w[1].unitarity_defect <= w[0].unitarity_defect);
            summary.push(format!(
                "k = {}: successive |Δδ| = {}; unitarity defect {}",
                ch.k,
                steps
                    .iter()
                    .map(|s| format!("{s:.1e}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                if defects_fall {
                    "non-increasing"
                } else {
                    "not monotone"
                }
            ));
        }
    }
    Ok(Report {
        tables: vec![Table {
            name: "converge".into(),
            columns: POINT_COLUMNS.to_vec(),
            rows,
        }],
        summary,
        json: json!({ "rows": json_rows }),
        status: if failed {
            Status::NumericalFailure
        } else {
            Status::Ok
        },
    })
}

const STABILITY_COLUMNS: [&str; 10] = [
    "nx",
    "n",
    "n_p",
    "energy",
    "width",
    "k_re",
    "k_im",
    "condition",
    "rejected_roots",
    "unconverged_roots",
];
const SAMPLE_COLUMNS: [&str; 7] = ["nx", "n", "energy", "k", "s_re", "s_im", "delta"];

/// Pole search on each mesh; the quoted precision combines the N_P spread
/// with the change between the last two meshes.
fn resonance(r: &Resolved) -> Result<Report, TaskError> {
    let scales = r.scales.expect("checked at resolution");
    let spec = SearchSpec {
        interval: r.interval.expect("checked at resolution"),
        schedule: r.schedule.clone(),
        tolerance: r.tolerance,
    };
    let meshes = if r.meshes.is_empty() {
        vec![(r.nx, r.n)]
    } else {
        r.meshes.clone()
    };
    // Reject bad intervals before any assembly.
    for e in [spec.interval.0, spec.interval.1] {
        ChannelState::from_energy(&r.system, e, r.symmetry, r.a)
            .map_err(|e| TaskError::Input(e.to_string()))?;
    }
    let mut stability = Vec::new();
    let mut samples = Vec::new();
    let mut summary = Vec::new();
    let mut finals: Vec<(usize, usize, f64, f64, f64, f64)> = Vec::new();
    let mut json_rows = Vec::new();
    for &(nx, n) in &meshes {
        let basis = basis_for(r, nx, n, scales)?;
        let parts = assemble(&basis, r)?;
        let problem = KohnProblem {
            basis: &basis,
            system: r.system,
            parts: &parts,
            quadrature: r.quadrature,
        };
        let t = Instant::now();
        let outcome = resonance_search(&r.system, r.symmetry, &spec, |chs| {
            problem
                .solve_all(chs)
                .into_iter()
                .map(|p| p.map(|p| p.s))
                .collect()
        })
        .map_err(|e| TaskError::Numerical(e.to_string()))?;
        let table = match &outcome {
            SearchOutcome::Found(res) => &res.table,
            SearchOutcome::NotFound { table, .. } => table,
        };
        for row in table {
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            stability.push(vec![
                nx.to_string(),
                n.to_string(),
                row.n_p.to_string(),
                opt(row.energy),
                opt(row.width),
                opt(row.pole.map(|k| k.re)),
                opt(row.pole.map(|k| k.im)),
                num(row.condition),
                row.rejected.len().to_string(),
                row.unconverged.to_string(),
            ]);
        }
        match &outcome {
            SearchOutcome::Found(res) => {
                for &(e, k, s) in &res.samples {
                    samples.push(vec![
                        nx.to_string(),
                        n.to_string(),
                        num(e),
                        num(k),
                        num(s.re),
                        num(s.im),
                        num(kohn_mesh::kohn::phase_shift(s)),
                    ]);
                }
                summary.push(format!(
                    "({nx}, {n}): E_r = {:.11}  Γ = {:.7e}  N_P spread |Δk| = {:.1e}  ({:.2?}, a = {})",
                    res.energy,
                    res.width,
                    res.spread,
                    t.elapsed(),
                    res.a
                ));
                finals.push((
                    nx,
                    n,
                    res.energy,
                    res.width,
                    res.energy_spread,
                    res.width_spread,
                ));
            }
            SearchOutcome::NotFound { .. } => {
                summary.push(format!(
                    "({nx}, {n}): no resonance found in interval (pole not stable under N_P)"
                ));
            }
        }
        json_rows.push(json!({ "nx": nx, "n": n, "outcome": outcome }));
    }
    let mut result = Value::Null;
    if let Some(&(_, _, e, g, de, dg)) = finals.last() {
        let (mut pe, mut pg) = (de, dg);
        if finals.len() >= 2 {
            let prev = finals[finals.len() - 2];
            pe = pe.max((e - prev.2).abs());
            pg = pg.max((g - prev.3).abs());
        }
        summary.push(format!(
            "result: E_r = {e:.11} ± {pe:.1e}  Γ = {g:.7e} ± {pg:.1e}"
        ));
        result = json!({ "energy": e, "width": g, "energy_precision": pe, "width_precision": pg });
    } else {
        summary.push("result: no resonance found in interval".into());
    }
    Ok(Report {
        tables: vec![
            Table {
                name: "resonance".into(),
                columns: STABILITY_COLUMNS.to_vec(),
                rows: stability,
            },
            Table {
                name: "resonance_points".into(),
                columns: SAMPLE_COLUMNS.to_vec(),
                rows: samples,
            },
        ],
        summary,
        json: json!({ "meshes": json_rows, "result": result }),
        status: Status::Ok,
    })
}

/// Identity tolerances: `(normalization, antisymmetry)`.
pub fn identity_tolerances(r: &Resolved) -> (f64, f64) {
    if r.system.is_infinite_mass() {
        (1e-9, 1e-10)
    } else {
        (1e-6, 1e-6)
    }
}

const CHECK_COLUMNS: [&str; 7] = [
    "k",
    "energy",
    "a",
    "normalization_defect",
    "antisymmetry_defect",
    "elements_error",
    "hybrid_error",
];

/// Channel identities and quadrature self-convergence at each k.
fn check(r: &Resolved) -> Result<Report, TaskError> {
    let chans = channels(r)?;
    let (tol_norm, tol_anti) = identity_tolerances(r);
    let mut rows = Vec::new();
    let mut summary = vec![format!(
        "tolerances: normalization {tol_norm:.0e}, antisymmetry {tol_anti:.0e}"
    )];
    let mut pass = true;
    let mut json_rows = Vec::new();
    for ch in &chans {
        let el = asymptotic_elements(&r.system, ch, &r.quadrature)
            .map_err(|e| TaskError::Numerical(e.to_string()))?;
        let basis = basis_for(r, r.nx, r.n, r.scales_for(ch.k))?;
        let hy = hybrid_vectors(&basis, &r.system, ch, &r.quadrature)
            .map_err(|e| TaskError::Numerical(e.to_string()))?;
        let ok = el.normalization_defect < tol_norm && el.antisymmetry_defect < tol_anti;
        pass &= ok;
        summary.push(format!(
            "k = {}: normalization {:.1e}, antisymmetry {:.1e}, element quadrature {:.1e}, hybrid quadrature {:.1e}  {}",
            ch.k,
            el.normalization_defect,
            el.antisymmetry_defect,
            el.error,
            hy.error,
            if ok { "pass" } else { "FAIL" }
        ));
        rows.push(vec![
            num(ch.k),
            num(ch.energy),
            num(ch.a),
            num(el.normalization_defect),
            num(el.antisymmetry_defect),
            num(el.error),
            num(hy.error),
        ]);
        json_rows.push(json!({
            "k": ch.k,
            "energy": ch.energy,
            "a": ch.a,
            "normalization_defect": el.normalization_defect,
            "antisymmetry_defect": el.antisymmetry_defect,
            "elements_error": el.error,
            "hybrid_error": hy.error,
            "pass": ok,
        }));
    }
    Ok(Report {
        tables: vec![Table {
            name: "check".into(),
            columns: CHECK_COLUMNS.to_vec(),
            rows,
        }],
        summary,
        json: json!({ "tolerances": { "normalization": tol_norm, "antisymmetry": tol_anti }, "rows": json_rows }),
        status: if pass {
            Status::Ok
        } else {
            Status::IdentityFailure
        },
    })
}
