//! Matrix and field file formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clfshape_core::gridsolve::{GridSpec, InputSet, TabularPolicy, ValueField};
use clfshape_core::quadratics::QuadraticForm;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Float formatting shared by every CSV: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a square matrix from a headerless CSV, one row per line.
pub fn read_quadratic_csv(path: &Path) -> Result<QuadraticForm> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| CliError::Config(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!(
            "{} is not a square matrix",
            path.display()
        )));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let asym = (&m - m.transpose()).amax();
    if asym > 1e-9 * m.amax().max(1.0) {
        return Err(CliError::Config(format!(
            "{} is not symmetric",
            path.display()
        )));
    }
    Ok(QuadraticForm::new(m)?)
}

/// Writes a matrix as a headerless CSV, one row per line.
pub fn write_quadratic_csv(path: &Path, w: &QuadraticForm) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let p = w.matrix();
    for i in 0..p.nrows() {
        let row: Vec<String> = (0..p.ncols()).map(|j| fmt_f64(p[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FieldDump<'a> {
    cost_kind: &'static str,
    gamma: f64,
    bellman_residual: f64,
    sweep_count: usize,
    counts: &'a [usize],
    bounds: &'a [(f64, f64)],
    values: &'a [f64],
    policy: &'a [u32],
}

/// Writes a value field and its policy as `<stem>.csv` and `<stem>.json`.
///
/// The CSV has one row per node: coordinates, value, policy index and the
/// input vector.
pub fn write_field_dump(
    dir: &Path,
    stem: &str,
    grid: &GridSpec,
    inputs: &InputSet,
    field: &ValueField,
    policy: &TabularPolicy,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    let mut header: Vec<String> = (0..grid.dim()).map(|d| format!("x{d}")).collect();
    header.push("value".into());
    header.push("policy_index".into());
    header.extend((0..inputs.dim()).map(|d| format!("u{d}")));
    w.write_record(&header)?;
    let mut x = vec![0.0; grid.dim()];
    for node in 0..grid.node_count() {
        grid.node_coords_into(node, &mut x);
        let j = policy.at(node);
        let mut rec: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(fmt_f64(field.values[node]));
        rec.push(j.to_string());
        rec.extend(inputs.input(j).iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let dump = FieldDump {
        cost_kind: field.meta.cost_kind.as_str(),
        gamma: field.meta.gamma,
        bellman_residual: field.meta.bellman_residual,
        sweep_count: field.meta.sweep_count,
        counts: grid.counts(),
        bounds: grid.bounds(),
        values: &field.values,
        policy: &policy.indices,
    };
    let file = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
    serde_json::to_writer(file, &dump)?;
    Ok(())
}
