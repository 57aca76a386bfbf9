//! Writes a report and its artifacts as plain text files.

use crate::scenarios::{Artifact, Axis, Report};
use serde::Serialize;
use sqz_core::qprop::TraceRecord;
use sqz_core::CMat;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct MatrixSidecar<'a> {
    name: &'a str,
    shape: [usize; 2],
    delta_kappa: f64,
    unit: &'a str,
    rows: &'a Axis,
    cols: &'a Axis,
    re: String,
    im: String,
}

/// Writes `summary.json` and every artifact into `dir`, returning the
/// written paths in order.
pub fn export(report: &Report, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    fs::write(&summary, text + "\n")?;
    written.push(summary);
    for artifact in &report.artifacts {
        written.extend(write_artifact(artifact, dir)?);
    }
    Ok(written)
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_artifact(artifact: &Artifact, dir: &Path) -> io::Result<Vec<PathBuf>> {
    match artifact {
        Artifact::Series { name, columns, x, y } => {
            let path = dir.join(format!("{name}.csv"));
            let mut w = create(&path)?;
            writeln!(w, "{},{}", columns[0], columns[1])?;
            for (a, b) in x.iter().zip(y) {
                writeln!(w, "{a:e},{b:e}")?;
            }
            w.flush()?;
            Ok(vec![path])
        }
        Artifact::Matrix { name, values, rows, cols, unit } => {
            let re = dir.join(format!("{name}_re.csv"));
            let im = dir.join(format!("{name}_im.csv"));
            write_matrix(&re, values, |c| c.re)?;
            write_matrix(&im, values, |c| c.im)?;
            let sidecar = MatrixSidecar {
                name,
                shape: [values.nrows(), values.ncols()],
                delta_kappa: rows.step,
                unit,
                rows,
                cols,
                re: file_name(&re),
                im: file_name(&im),
            };
            let json = dir.join(format!("{name}.json"));
            fs::write(&json, serde_json::to_string_pretty(&sidecar).map_err(io::Error::other)? + "\n")?;
            Ok(vec![re, im, json])
        }
        Artifact::Table { name, header, rows } => {
            let path = dir.join(format!("{name}.csv"));
            let mut w = create(&path)?;
            writeln!(w, "{}", header.join(","))?;
            for row in rows {
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
            Ok(vec![path])
        }
        Artifact::Trace { name, records } => {
            let path = dir.join(format!("{name}.tsv"));
            let mut w = create(&path)?;
            writeln!(w, "{}", TraceRecord::HEADER)?;
            for r in records {
                writeln!(w, "{}", r.to_line())?;
            }
            w.flush()?;
            Ok(vec![path])
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_matrix(path: &Path, m: &CMat, part: impl Fn(sqz_core::Complex64) -> f64) -> io::Result<()> {
    let mut w = create(path)?;
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:e}", part(m[(i, j)])));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}
