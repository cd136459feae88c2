//! Run directories, JSON reports and CSV tables.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::cell::EffectiveTensor;
use crate::error::{Error, Result};
use crate::fields::TwoScaleField;
use crate::geometry::{CellGeometry, Epsilon};
use crate::micro::StepDiagnostics;
use crate::study::{ConvergenceReport, StudyOutput};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

/// Creates `<root>/<unix-secs>-<hash8>`, appending `-1`, `-2`, ... when taken.
/// Existing directories are never reused.
pub fn create_run_dir(root: &Path, config_hash: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let stem = format!("{secs}-{}", &config_hash[..config_hash.len().min(8)]);
    for k in 0.. {
        let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&dir, e)),
        }
    }
    unreachable!()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct ErrorRow {
    block: String,
    sign: i8,
    epsilon: f64,
    e1: f64,
    e2: f64,
    e3: f64,
    e4: f64,
    total: f64,
}

/// `(block, sign, epsilon, e1..e4, total)` for every block and sign.
pub fn write_errors_csv(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let blocks = std::iter::once(&report.study).chain(report.baseline.as_ref());
    let rows = blocks.flat_map(|b| {
        b.signs.iter().flat_map(move |s| {
            s.points.iter().map(move |p| ErrorRow {
                block: b.label.clone(),
                sign: s.sign,
                epsilon: p.epsilon.value(),
                e1: p.errors.e1,
                e2: p.errors.e2,
                e3: p.errors.e3,
                e4: p.errors.e4,
                total: p.errors.total,
            })
        })
    });
    write_csv(path, rows)
}

#[derive(Serialize)]
struct LemmaCsvRow {
    epsilon: f64,
    lemma1_fold: f64,
    lemma1_unfold: f64,
    lemma2: f64,
    lemma2_boundary_jump: f64,
    theorem3: f64,
}

/// `(epsilon, lemma1, lemma2, theorem3)`; no-op without a lemma suite.
pub fn write_lemmas_csv(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let Some(l) = &report.lemmas else {
        return Ok(());
    };
    write_csv(
        path,
        l.rows.iter().map(|r| LemmaCsvRow {
            epsilon: r.epsilon,
            lemma1_fold: r.fold_error,
            lemma1_unfold: r.unfold_error,
            lemma2: r.mollifier_sup,
            lemma2_boundary_jump: r.mollifier_sup_jump,
            theorem3: r.mismatch,
        }),
    )
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = io::BufWriter::new(f);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct TwoScaleRow {
    macro_i: usize,
    macro_j: usize,
    micro_i: usize,
    micro_j: usize,
    value: f64,
}

/// Long format `(macro_i, macro_j, micro_i, micro_j, value)`.
pub fn write_two_scale_csv(path: &Path, cell: &CellGeometry, field: &TwoScaleField) -> Result<()> {
    let nx = field.cells[0];
    let rows = (0..field.cells[0] * field.cells[1]).flat_map(|c| {
        field
            .slice(c)
            .iter()
            .zip(&cell.node_lattice)
            .map(move |(&value, &[a, b])| TwoScaleRow {
                macro_i: c % nx,
                macro_j: c / nx,
                micro_i: a,
                micro_j: b,
                value,
            })
    });
    write_csv(path, rows)
}

#[derive(Serialize)]
struct NodalRow {
    x: f64,
    y: f64,
    value: f64,
}

/// Nodal field `(x, y, value)`.
pub fn write_nodal_csv(path: &Path, coords: &[[f64; 2]], values: &[f64]) -> Result<()> {
    write_csv(
        path,
        coords
            .iter()
            .zip(values)
            .map(|(&[x, y], &value)| NodalRow { x, y, value }),
    )
}

#[derive(Serialize)]
struct TensorRow {
    i: usize,
    j: usize,
    d_eff: f64,
}

pub fn write_tensor_csv(path: &Path, t: &EffectiveTensor) -> Result<()> {
    write_csv(
        path,
        (0..4).map(|k| TensorRow {
            i: k / 2,
            j: k % 2,
            d_eff: t.d_eff[k / 2][k % 2],
        }),
    )
}

fn diagnostics_name(eps: Epsilon) -> String {
    format!("diagnostics_eps{}.jsonl", eps.n())
}

/// Writes `report.json`, `errors.csv`, `lemmas.csv` and per-ε diagnostics into `dir`.
pub fn write_study(dir: &Path, out: &StudyOutput) -> Result<()> {
    write_json(&dir.join("report.json"), &out.report)?;
    write_errors_csv(&dir.join("errors.csv"), &out.report)?;
    write_lemmas_csv(&dir.join("lemmas.csv"), &out.report)?;
    for (eps, d) in &out.diagnostics {
        write_jsonl::<StepDiagnostics>(&dir.join(diagnostics_name(*eps)), d)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_are_never_reused() {
        let root = tempfile::tempdir().unwrap();
        let a = create_run_dir(root.path(), "0123456789abcdef").unwrap();
        let b = create_run_dir(root.path(), "0123456789abcdef").unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().ends_with("-01234567"));
    }

    #[test]
    fn nodal_csv_has_header_and_rows() {
        let root = tempfile::tempdir().unwrap();
        let p = root.path().join("f.csv");
        write_nodal_csv(&p, &[[0.0, 0.5], [1.0, 0.25]], &[1.5, -2.0]).unwrap();
        let s = fs::read_to_string(p).unwrap();
        assert_eq!(s, "x,y,value\n0.0,0.5,1.5\n1.0,0.25,-2.0\n");
    }
}
