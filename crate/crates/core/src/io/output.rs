use std::fmt::Write as _;
use std::path::Path;

use crate::correlation::LowRankFactorization;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::optimizer::{IterationRecord, OptimizationHistory};

pub const HISTORY_HEADER: &str = "iter,objective,volume,lambda,penalty,dt,rank";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `f64` with 17 significant digits, which round-trips exactly.
fn full(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn history_csv(history: &OptimizationHistory) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in &history.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iteration,
            full(r.objective),
            full(r.volume),
            full(r.lambda),
            full(r.penalty),
            full(r.dt),
            r.rank
        );
    }
    s
}

pub fn write_history(history: &OptimizationHistory, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &history_csv(history))
}

/// Parses a file written by [`write_history`].
pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::InvalidArgument(format!(
            "{}: not a history file",
            path.display()
        )));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad =
                || Error::InvalidArgument(format!("{}: malformed row {}", path.display(), k + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(IterationRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                objective: num(1)?,
                volume: num(2)?,
                lambda: num(3)?,
                penalty: num(4)?,
                dt: num(5)?,
                rank: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Legacy ASCII VTK (4.2) unstructured grid with point data `phi`, cell data
/// `density` and optionally `grad_density`.
pub fn vtk_string(
    mesh: &Mesh,
    phi: &[f64],
    density: &[f64],
    grad_density: Option<&[f64]>,
) -> Result<String> {
    let n = mesh.node_count();
    let t = mesh.triangle_count();
    if phi.len() != n {
        return Err(Error::DimensionMismatch {
            what: "phi",
            expected: n,
            actual: phi.len(),
        });
    }
    for (what, v) in [("density", Some(density)), ("grad_density", grad_density)] {
        if let Some(v) = v.filter(|v| v.len() != t) {
            return Err(Error::DimensionMismatch {
                what,
                expected: t,
                actual: v.len(),
            });
        }
    }
    let mut s = String::with_capacity(64 * (n + t));
    s.push_str(
        "# vtk DataFile Version 4.2\ncorshape level set\nASCII\nDATASET UNSTRUCTURED_GRID\n",
    );
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", full(p[0]), full(p[1]));
    }
    let _ = writeln!(s, "CELLS {t} {}", 4 * t);
    for tri in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {t}");
    for _ in 0..t {
        s.push_str("5\n");
    }
    let _ = writeln!(
        s,
        "POINT_DATA {n}\nSCALARS phi double 1\nLOOKUP_TABLE default"
    );
    for v in phi {
        let _ = writeln!(s, "{}", full(*v));
    }
    let _ = writeln!(
        s,
        "CELL_DATA {t}\nSCALARS density double 1\nLOOKUP_TABLE default"
    );
    for v in density {
        let _ = writeln!(s, "{}", full(*v));
    }
    if let Some(g) = grad_density {
        s.push_str("SCALARS grad_density double 1\nLOOKUP_TABLE default\n");
        for v in g {
            let _ = writeln!(s, "{}", full(*v));
        }
    }
    Ok(s)
}

pub fn write_vtk(
    mesh: &Mesh,
    phi: &[f64],
    density: &[f64],
    grad_density: Option<&[f64]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(
        path.as_ref(),
        &vtk_string(mesh, phi, density, grad_density)?,
    )
}

/// One row per region dof: `node,x,y,factor_1,…,factor_m`.
pub fn factors_csv(mesh: &Mesh, nodes: &[usize], fac: &LowRankFactorization) -> Result<String> {
    if nodes.len() != fac.dim() {
        return Err(Error::DimensionMismatch {
            what: "factor rows",
            expected: fac.dim(),
            actual: nodes.len(),
        });
    }
    let mut s = String::from("node,x,y");
    for k in 1..=fac.rank() {
        let _ = write!(s, ",factor_{k}");
    }
    s.push('\n');
    for (i, &node) in nodes.iter().enumerate() {
        let p = mesh.vertices()[node];
        let _ = write!(s, "{node},{},{}", full(p[0]), full(p[1]));
        for f in &fac.factors {
            let _ = write!(s, ",{}", full(f[i]));
        }
        s.push('\n');
    }
    Ok(s)
}

/// Relative trace error after `k` factors, `k = 0..=m`.
pub fn trace_csv(fac: &LowRankFactorization) -> String {
    let mut s = String::from("k,trace_error\n");
    for (k, e) in fac.history.iter().enumerate() {
        let _ = writeln!(s, "{k},{}", full(*e));
    }
    s
}

pub fn write_factors(
    mesh: &Mesh,
    nodes: &[usize],
    fac: &LowRankFactorization,
    factors_path: impl AsRef<Path>,
    trace_path: impl AsRef<Path>,
) -> Result<()> {
    write_file(factors_path.as_ref(), &factors_csv(mesh, nodes, fac)?)?;
    write_file(trace_path.as_ref(), &trace_csv(fac))
}

pub fn write_text(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    write_file(path.as_ref(), contents)
}
