//! CSV and JSON reports of sweeps.
//!
//! Every CSV is a pure function of the configuration. Wall times go to
//! `timing.json` only.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::io::{fmt_f64, write_field_dump};
use crate::sweep::{CellOutput, CertificateRow, MpcReport, SweepReport, SweepRow};

/// `sweep.csv` columns.
pub const SWEEP_HEADER: [&str; 12] = [
    "env",
    "H",
    "cost_kind",
    "gamma",
    "sweeps",
    "bellman_residual",
    "C_constant",
    "delta_rank2",
    "margin",
    "predicted_stable",
    "rollout_success_fraction",
    "status",
];

/// `certificates.csv` columns.
pub const CERTIFICATE_HEADER: [&str; 17] = [
    "env",
    "H",
    "cost_kind",
    "gamma",
    "rank",
    "C_constant",
    "delta",
    "margin",
    "predicted_stable",
    "n_success",
    "n_trials",
    "rollout_success_fraction",
    "composite_positivity_min",
    "composite_positivity_holds",
    "composite_decrease_max",
    "composite_decrease_holds",
    "status",
];

/// `summary.csv` columns.
pub const SUMMARY_HEADER: [&str; 4] = ["env", "H", "cost_kind", "min_stabilizing_gamma"];

/// `domination.csv` columns.
pub const DOMINATION_HEADER: [&str; 7] = [
    "env",
    "H",
    "gamma",
    "holds_on_grid",
    "worst_violation",
    "violating_nodes",
    "gamma_bar",
];

/// `mpc.csv` columns.
pub const MPC_HEADER: [&str; 9] = [
    "env",
    "H",
    "terminal",
    "horizon",
    "degenerate",
    "n_success",
    "n_trials",
    "rollout_success_fraction",
    "status",
];

/// `mpc_summary.csv` columns.
pub const MPC_SUMMARY_HEADER: [&str; 4] = ["env", "H", "terminal", "min_stabilizing_horizon"];

const SWEEP_FILES: [&str; 6] = [
    "sweep.csv",
    "certificates.csv",
    "summary.csv",
    "domination.csv",
    "timing.json",
    "fields",
];
const MPC_FILES: [&str; 2] = ["mpc.csv", "mpc_summary.csv"];

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn kind_str(k: crate::config::KindName) -> &'static str {
    clfshape_core::costs::CostKind::from(k).as_str()
}

fn sweep_record(r: &SweepRow) -> Vec<String> {
    vec![
        r.env.into(),
        fmt_f64(r.h),
        kind_str(r.cost_kind).into(),
        fmt_f64(r.gamma),
        opt(r.sweeps),
        opt_f64(r.bellman_residual),
        opt_f64(r.c_constant),
        opt_f64(r.delta_rank2),
        opt_f64(r.margin),
        opt(r.predicted_stable),
        opt_f64(r.rollout_success_fraction),
        r.status.clone(),
    ]
}

fn certificate_record(c: &CertificateRow) -> Vec<String> {
    let cert = c.certificate.as_ref();
    let comp = c.composite();
    vec![
        c.env.into(),
        fmt_f64(c.h),
        kind_str(c.cost_kind).into(),
        fmt_f64(c.gamma),
        c.rank.to_string(),
        opt_f64(cert.map(|c| c.c_constant)),
        opt_f64(cert.map(|c| c.delta)),
        opt_f64(cert.map(|c| c.condition_margin)),
        opt(cert.map(|c| c.predicted_stable)),
        opt(cert.map(|c| c.empirical.n_success)),
        opt(cert.map(|c| c.empirical.n_trials)),
        opt_f64(cert.map(|c| c.empirical.success_fraction())),
        opt_f64(comp.map(|c| c.positivity_min)),
        opt(comp.map(|c| c.positivity_holds)),
        opt_f64(comp.map(|c| c.decrease_max)),
        opt(comp.map(|c| c.decrease_holds)),
        c.status.clone(),
    ]
}

fn claim(dir: &Path, names: &[&str], force: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for name in names {
        let path = dir.join(name);
        if path.exists() {
            if !force {
                return Err(CliError::Exists(path));
            }
            if path.is_dir() {
                fs::remove_dir_all(&path)?;
            } else {
                fs::remove_file(&path)?;
            }
        }
    }
    Ok(())
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

#[derive(Serialize)]
struct TimingEntry {
    env: &'static str,
    h: f64,
    cost_kind: &'static str,
    gamma: f64,
    wall_time_s: f64,
}

/// Streams a discount sweep to disk as cells finish.
pub struct ReportWriter {
    dir: PathBuf,
    sweep: csv::Writer<File>,
    certificates: csv::Writer<File>,
    timing: Vec<TimingEntry>,
    dump: bool,
}

impl ReportWriter {
    /// Opens the report files in `dir`, refusing to replace existing ones
    /// unless `force` is set.
    pub fn create(dir: &Path, force: bool, dump: bool) -> Result<Self> {
        claim(dir, &SWEEP_FILES, force)?;
        if dump {
            fs::create_dir_all(dir.join("fields"))?;
        }
        Ok(ReportWriter {
            dir: dir.to_path_buf(),
            sweep: csv_writer(&dir.join("sweep.csv"), &SWEEP_HEADER)?,
            certificates: csv_writer(&dir.join("certificates.csv"), &CERTIFICATE_HEADER)?,
            timing: Vec::new(),
            dump,
        })
    }

    /// Appends one finished cell.
    pub fn write_cell(&mut self, cell: &CellOutput) -> Result<()> {
        let r = &cell.row;
        self.sweep.write_record(sweep_record(r))?;
        self.sweep.flush()?;
        for c in &cell.certificates {
            self.certificates.write_record(certificate_record(c))?;
        }
        self.certificates.flush()?;
        self.timing.push(TimingEntry {
            env: r.env,
            h: r.h,
            cost_kind: kind_str(r.cost_kind),
            gamma: r.gamma,
            wall_time_s: cell.wall_time_s,
        });
        if let (true, Some(f)) = (self.dump, &cell.fields) {
            let stem = format!("{}_H{}_{}_g{}", r.env, r.h, kind_str(r.cost_kind), r.gamma);
            write_field_dump(
                &self.dir.join("fields"),
                &stem,
                &f.grid,
                &f.inputs,
                &f.value,
                &f.policy,
            )?;
        }
        Ok(())
    }

    /// Writes the summary, domination and timing files.
    pub fn finish(mut self, report: &SweepReport) -> Result<()> {
        self.sweep.flush()?;
        self.certificates.flush()?;
        let mut w = csv_writer(&self.dir.join("summary.csv"), &SUMMARY_HEADER)?;
        for s in &report.summary {
            w.write_record([
                s.env.into(),
                fmt_f64(s.h),
                kind_str(s.cost_kind).into(),
                opt_f64(s.min_stabilizing_gamma),
            ])?;
        }
        w.flush()?;
        let mut w = csv_writer(&self.dir.join("domination.csv"), &DOMINATION_HEADER)?;
        for d in &report.domination {
            let bar = report
                .gamma_bar
                .iter()
                .find(|(h, _)| *h == d.h)
                .and_then(|(_, g)| *g);
            let v = &d.verdict;
            w.write_record([
                d.env.into(),
                fmt_f64(d.h),
                fmt_f64(v.gamma),
                v.holds_on_grid.to_string(),
                fmt_f64(v.worst_violation),
                v.violating_nodes.to_string(),
                opt_f64(bar),
            ])?;
        }
        w.flush()?;
        let file = BufWriter::new(File::create(self.dir.join("timing.json"))?);
        serde_json::to_writer_pretty(file, &self.timing)?;
        Ok(())
    }
}

/// Writes a finished sweep report to `dir`.
pub fn emit_report(report: &SweepReport, dir: &Path, force: bool) -> Result<()> {
    let dump = report.cells.iter().any(|c| c.fields.is_some());
    let mut w = ReportWriter::create(dir, force, dump)?;
    for cell in &report.cells {
        w.write_cell(cell)?;
    }
    w.finish(report)
}

/// Writes an MPC horizon report to `dir`.
pub fn emit_mpc_report(report: &MpcReport, dir: &Path, force: bool) -> Result<()> {
    claim(dir, &MPC_FILES, force)?;
    let mut w = csv_writer(&dir.join("mpc.csv"), &MPC_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.env.into(),
            fmt_f64(r.h),
            r.terminal.as_str().into(),
            r.horizon.to_string(),
            r.degenerate.to_string(),
            opt(r.n_success),
            r.n_trials.to_string(),
            opt_f64(r.success_fraction()),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    let mut w = csv_writer(&dir.join("mpc_summary.csv"), &MPC_SUMMARY_HEADER)?;
    for s in &report.summary {
        w.write_record([
            s.env.into(),
            fmt_f64(s.h),
            s.terminal.as_str().into(),
            opt(s.min_stabilizing_horizon),
        ])?;
    }
    w.flush()?;
    Ok(())
}
