//! CSV and JSON files with a header echoing the resolved configuration.

use crate::config::Resolved;
use crate::tasks::Report;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn header(r: &Resolved) -> String {
    let mut out = format!("# kohn-mesh {}\n", env!("CARGO_PKG_VERSION"));
    let cfg = serde_json::to_string_pretty(r).expect("configuration serializes");
    for line in cfg.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Writes one CSV per table (and a JSON mirror when asked); returns the paths.
pub fn write_report(dir: &Path, r: &Resolved, report: &Report) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let head = header(r);
    let mut written = Vec::new();
    for table in &report.tables {
        let path = dir.join(format!("{}.csv", table.name));
        let mut file = std::fs::File::create(&path)?;
        file.write_all(head.as_bytes())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        written.push(path);
    }
    if r.json {
        let path = dir.join(format!("{}.json", report.tables[0].name));
        let doc = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": r,
            "data": report.json,
        });
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        written.push(path);
    }
    Ok(written)
}
