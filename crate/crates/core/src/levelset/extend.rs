use crate::error::{Error, Result};
use crate::fem::{assemble_poisson, solve_spd, SolverOptions};
use crate::levelset::LevelSet;
use crate::objectives::GradientDensity;
use crate::sparse::CsrMatrix;

/// Nodal extension of an interface density.
///
/// Vertices of sampled triangles take the length-weighted average of the
/// samples around them; every other node takes the mean of its already
/// assigned grid neighbours, layer by layer. With `smoothing > 0` the result
/// is then regularized by `(M + μK) V = M V₀` (lumped mass `M`).
pub fn extend_velocity(gd: &GradientDensity, ls: &LevelSet, smoothing: f64) -> Result<Vec<f64>> {
    let mesh = ls.mesh();
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be non-negative, got {smoothing}"
        )));
    }
    if gd.samples().is_empty() {
        return Err(Error::NoInterface);
    }
    let n = mesh.node_count();
    let mut acc = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for s in gd.samples() {
        for &v in &mesh.triangles()[s.triangle] {
            acc[v] += s.value * s.length;
            weight[v] += s.length;
        }
    }
    let mut vel = vec![0.0; n];
    let mut assigned = vec![false; n];
    let mut front = Vec::new();
    for v in 0..n {
        if weight[v] > 0.0 {
            vel[v] = acc[v] / weight[v];
            assigned[v] = true;
            front.push(v);
        }
    }
    let (nx, ny) = mesh.grid_shape();
    let neighbours = |v: usize| {
        let (i, j) = mesh.node_grid_index(v);
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push(v - 1);
        }
        if i < nx {
            out.push(v + 1);
        }
        if j > 0 {
            out.push(v - (nx + 1));
        }
        if j < ny {
            out.push(v + nx + 1);
        }
        out
    };
    while !front.is_empty() {
        let mut next: Vec<usize> = front
            .iter()
            .flat_map(|&v| neighbours(v))
            .filter(|&w| !assigned[w])
            .collect();
        next.sort_unstable();
        next.dedup();
        let values: Vec<f64> = next
            .iter()
            .map(|&w| {
                let nb: Vec<usize> = neighbours(w).into_iter().filter(|&u| assigned[u]).collect();
                nb.iter().map(|&u| vel[u]).sum::<f64>() / nb.len() as f64
            })
            .collect();
        for (&w, v) in next.iter().zip(values) {
            vel[w] = v;
            assigned[w] = true;
        }
        front = next;
    }
    if smoothing == 0.0 {
        return Ok(vel);
    }
    let lumped = mesh.lumped_mass();
    let k = assemble_poisson(mesh, &vec![smoothing; mesh.triangle_count()])?;
    let system = k.add(&CsrMatrix::from_diagonal(&lumped));
    let rhs: Vec<f64> = lumped.iter().zip(&vel).map(|(m, v)| m * v).collect();
    solve_spd(
        &system,
        &rhs,
        SolverOptions {
            tol: 1e-10,
            max_iter: 10_000,
        },
    )
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::{generate_structured_mesh, Rect};
    use crate::objectives::{DensitySample, FunctionalKind};

    fn setup() -> (LevelSet, GradientDensity) {
        let m = Arc::new(generate_structured_mesh(20, 20, Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap());
        let ls = LevelSet::from_fn(m, |p| {
            ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() - 0.3
        })
        .unwrap();
        let cut = ls.interface().unwrap();
        let samples = cut
            .segments()
            .iter()
            .map(|s| DensitySample {
                triangle: s.triangle,
                value: -1.0,
                length: s.length,
                midpoint: s.midpoint(),
                normal: s.normal,
            })
            .collect();
        (
            ls,
            GradientDensity::new(FunctionalKind::Compliance, samples),
        )
    }

    #[test]
    fn constant_density_extends_to_constant() {
        let (ls, gd) = setup();
        let cut = ls.interface().unwrap();
        let v = extend_velocity(&gd, &ls, 0.0).unwrap();
        for s in cut.segments() {
            for &n in &ls.mesh().triangles()[s.triangle] {
                assert!((v[n] + 1.0).abs() < 1e-14);
            }
        }
        assert!(v.iter().all(|x| (x + 1.0).abs() < 1e-14));
        let smooth = extend_velocity(&gd, &ls, 0.01).unwrap();
        assert!(smooth.iter().all(|x| (x + 1.0).abs() < 1e-8));
    }

    #[test]
    fn zero_and_linearity() {
        let (ls, gd) = setup();
        let zero = gd.scaled(0.0);
        assert!(extend_velocity(&zero, &ls, 0.0)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        let varied = GradientDensity::new(
            FunctionalKind::Compliance,
            gd.samples()
                .iter()
                .map(|s| DensitySample {
                    value: s.midpoint[0] * s.midpoint[1],
                    ..*s
                })
                .collect(),
        );
        for mu in [0.0, 0.05] {
            let a = extend_velocity(&varied, &ls, mu).unwrap();
            let b = extend_velocity(&varied.scaled(-2.5), &ls, mu).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((y + 2.5 * x).abs() < 1e-8);
            }
        }
    }
}
