use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Field, FieldKind};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual `‖Kx − b‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

/// Dof mask of the nodes on edges carrying `tag` (all components).
pub fn constrained_dofs(mesh: &Mesh, tag: BoundaryTag, kind: FieldKind) -> Result<Vec<bool>> {
    if !mesh.has_tag(tag) {
        return Err(Error::MissingTag(tag));
    }
    let c = kind.components();
    let mut mask = vec![false; c * mesh.node_count()];
    for n in mesh.nodes_with_tag(tag) {
        for k in 0..c {
            mask[c * n + k] = true;
        }
    }
    Ok(mask)
}

/// Symmetric elimination of homogeneous Dirichlet dofs: constrained rows and
/// columns are dropped, their diagonal set to one and their rhs entry to zero.
pub fn apply_dirichlet(
    matrix: &CsrMatrix,
    rhs: &Field,
    mesh: &Mesh,
    tag: BoundaryTag,
) -> Result<(CsrMatrix, Field)> {
    let mask = constrained_dofs(mesh, tag, rhs.kind())?;
    if mask.len() != matrix.dim() {
        return Err(Error::DimensionMismatch {
            what: "system matrix",
            expected: mask.len(),
            actual: matrix.dim(),
        });
    }
    let mut b = rhs.clone();
    for (v, &c) in b.values_mut().iter_mut().zip(&mask) {
        if c {
            *v = 0.0;
        }
    }
    Ok((matrix.eliminate(&mask), b))
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Convergence is declared on the true residual; when the recurrence drifts
/// below the tolerance before the true residual does, the iteration restarts
/// from the current iterate.
pub fn solve_spd(matrix: &CsrMatrix, rhs: &[f64], opts: SolverOptions) -> Result<Vec<f64>> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            what: "right-hand side",
            expected: n,
            actual: rhs.len(),
        });
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance {} not in (0,1)",
            opts.tol
        )));
    }
    let diag = matrix.diagonal();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "matrix has non-positive diagonal entry at {i}; not SPD"
        )));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let b_norm = norm2(rhs);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let target = opts.tol * b_norm;
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    loop {
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            if norm2(&r) <= target {
                break;
            }
            if iterations >= opts.max_iter {
                let mut kx = vec![0.0; n];
                matrix.mul_vec_into(&x, &mut kx);
                let res = kx
                    .iter()
                    .zip(rhs)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                return Err(Error::NotConverged {
                    iterations,
                    residual: res / b_norm,
                });
            }
            matrix.mul_vec_into(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::InvalidArgument(
                    "matrix is not positive definite".into(),
                ));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
        matrix.mul_vec_into(&x, &mut q);
        for i in 0..n {
            r[i] = rhs[i] - q[i];
        }
        if norm2(&r) <= target {
            return Ok(x);
        }
    }
}
