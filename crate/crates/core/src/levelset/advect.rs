use crate::error::{Error, Result};
use crate::levelset::LevelSet;

/// Default Courant number for `dt · max|V| ≤ c · h_min`.
pub const CFL_DEFAULT: f64 = 0.5;

impl LevelSet {
    /// Largest admissible step for the velocity `v` at Courant number `cfl`.
    pub fn cfl_bound(&self, v: &[f64], cfl: f64) -> f64 {
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if vmax == 0.0 {
            f64::INFINITY
        } else {
            cfl * self.mesh.h_min() / vmax
        }
    }

    /// Solves `∂φ/∂t + V|∇φ| = 0` over time `dt` with `substeps` explicit
    /// Rouy-Tourin upwind steps on the structured grid. `V > 0` moves the
    /// front into the void, i.e. the material grows.
    pub fn advect(&self, v: &[f64], dt: f64, substeps: usize) -> Result<LevelSet> {
        self.advect_with_cfl(v, dt, substeps, CFL_DEFAULT)
    }

    pub fn advect_with_cfl(
        &self,
        v: &[f64],
        dt: f64,
        substeps: usize,
        cfl: f64,
    ) -> Result<LevelSet> {
        let mesh = &self.mesh;
        if v.len() != mesh.node_count() {
            return Err(Error::DimensionMismatch {
                what: "normal velocity",
                expected: mesh.node_count(),
                actual: v.len(),
            });
        }
        if substeps == 0 || !(dt >= 0.0) || !(cfl > 0.0 && cfl <= 0.9) {
            return Err(Error::InvalidArgument(format!(
                "advect needs substeps ≥ 1, dt ≥ 0 and cfl in (0, 0.9] (got {substeps}, {dt}, {cfl})"
            )));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite velocity at node {i}"
            )));
        }
        let step = dt / substeps as f64;
        let admissible = self.cfl_bound(v, cfl);
        if step > admissible {
            return Err(Error::Cfl {
                dt,
                admissible: admissible * substeps as f64,
            });
        }
        let (nx, ny) = mesh.grid_shape();
        let (hx, hy) = mesh.spacing();
        let mut phi = self.phi.clone();
        let mut next = phi.clone();
        for _ in 0..substeps {
            for j in 0..=ny {
                for i in 0..=nx {
                    let id = mesh.node_id(i, j);
                    let vi = v[id];
                    if vi == 0.0 {
                        continue;
                    }
                    let c = phi[id];
                    let w = if i > 0 { phi[id - 1] } else { c };
                    let e = if i < nx { phi[id + 1] } else { c };
                    let s = if j > 0 {
                        phi[mesh.node_id(i, j - 1)]
                    } else {
                        c
                    };
                    let n = if j < ny {
                        phi[mesh.node_id(i, j + 1)]
                    } else {
                        c
                    };
                    let dxm = (c - w) / hx;
                    let dxp = (e - c) / hx;
                    let dym = (c - s) / hy;
                    let dyp = (n - c) / hy;
                    let g2 = if vi > 0.0 {
                        dxm.max(0.0).powi(2).max(dxp.min(0.0).powi(2))
                            + dym.max(0.0).powi(2).max(dyp.min(0.0).powi(2))
                    } else {
                        dxm.min(0.0).powi(2).max(dxp.max(0.0).powi(2))
                            + dym.min(0.0).powi(2).max(dyp.max(0.0).powi(2))
                    };
                    next[id] = c - step * vi * g2.sqrt();
                }
            }
            phi.copy_from_slice(&next);
        }
        Ok(LevelSet {
            mesh: self.mesh.clone(),
            phi,
            time: self.time + dt,
        })
    }
}
