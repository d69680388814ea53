use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::pde::{EnergyReport, RunDiagnostics};

use super::pipeline::CertificationReport;

pub const DIAGNOSTIC_HEADER: &str = "t,min_u,max_u,min_v,max_v,min_w,max_w,mass_u,mass_v";

pub fn diagnostics_csv(d: &RunDiagnostics) -> String {
    let mut out = String::from(DIAGNOSTIC_HEADER);
    out.push('\n');
    for r in &d.rows {
        let cols = [
            r.t, r.min_u, r.max_u, r.min_v, r.max_v, r.min_w, r.max_w, r.mass_u, r.mass_v,
        ];
        let line: Vec<String> = cols.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn energy_csv(e: &EnergyReport) -> String {
    let mut out = String::from("t,energy\n");
    for (t, v) in e.t.iter().zip(&e.energy) {
        writeln!(out, "{t:.16e},{v:.16e}").expect("writing to a string");
    }
    out
}

/// Writes `report.json`, one CSV per configured run and one per energy pair.
/// Returns the paths written, report first.
pub fn export(report: &CertificationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    fs::write(&path, json + "\n")?;
    written.push(path);
    for (name, d) in &report.exports.runs {
        let path = out_dir.join(format!("{name}.csv"));
        fs::write(&path, diagnostics_csv(d))?;
        written.push(path);
    }
    for (a, b, e) in &report.exports.energy {
        let path = out_dir.join(format!("energy_{a}_{b}.csv"));
        fs::write(&path, energy_csv(e))?;
        written.push(path);
    }
    Ok(written)
}
