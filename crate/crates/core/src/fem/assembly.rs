//! Element loops for the P1 stiffness operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::InterfaceCut;
use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Isotropic Hooke's law `Ae = 2μe + λ tr(e) I` in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HookeLaw {
    pub lambda: f64,
    pub mu: f64,
}

impl HookeLaw {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && lambda + mu > 0.0) || !lambda.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidLameCoefficients { lambda, mu });
        }
        Ok(Self { lambda, mu })
    }

    /// Plane-strain coefficients from Young's modulus and Poisson's ratio.
    pub fn from_young_poisson(young: f64, poisson: f64) -> Result<Self> {
        let mu = young / (2.0 * (1.0 + poisson));
        let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        Self::new(lambda, mu)
    }

    /// `Ae : e` for a symmetric strain given as `[e11, e22, e12]`.
    pub fn energy_density(&self, e: [f64; 3]) -> f64 {
        let tr = e[0] + e[1];
        2.0 * self.mu * (e[0] * e[0] + e[1] * e[1] + 2.0 * e[2] * e[2]) + self.lambda * tr * tr
    }

    /// `Ae : e'`
    pub fn energy_product(&self, e: [f64; 3], f: [f64; 3]) -> f64 {
        2.0 * self.mu * (e[0] * f[0] + e[1] * f[1] + 2.0 * e[2] * f[2])
            + self.lambda * (e[0] + e[1]) * (f[0] + f[1])
    }

    fn voigt(&self) -> [[f64; 3]; 3] {
        let (l, m) = (self.lambda, self.mu);
        [[l + 2.0 * m, l, 0.0], [l, l + 2.0 * m, 0.0], [0.0, 0.0, m]]
    }
}

fn check_density(mesh: &Mesh, density: &[f64]) -> Result<()> {
    if density.len() != mesh.triangle_count() {
        return Err(Error::DimensionMismatch {
            what: "element density",
            expected: mesh.triangle_count(),
            actual: density.len(),
        });
    }
    if let Some((triangle, &value)) = density.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::NonPositiveDensity { triangle, value });
    }
    Ok(())
}

/// `Σ_T density(T) ∫_T ∇φ_i · ∇φ_j`
pub fn assemble_poisson(mesh: &Mesh, density: &[f64]) -> Result<CsrMatrix> {
    check_density(mesh, density)?;
    let mut b = TripletBuilder::with_capacity(mesh.node_count(), 9 * mesh.triangle_count());
    for (k, t) in mesh.triangles().iter().enumerate() {
        let g = mesh.basis_gradients(k);
        let w = density[k] * mesh.area(k);
        let mut ke = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in p..3 {
                ke[p][q] = w * (g[p][0] * g[q][0] + g[p][1] * g[q][1]);
                ke[q][p] = ke[p][q];
            }
        }
        for p in 0..3 {
            for q in 0..3 {
                b.push(t[p], t[q], ke[p][q]);
            }
        }
    }
    Ok(b.build(true))
}

/// Strain-displacement matrix in Voigt form `[e11, e22, 2 e12]` for the
/// local dof order `(u0x, u0y, u1x, u1y, u2x, u2y)`.
fn strain_matrix(g: &[[f64; 2]; 3]) -> [[f64; 6]; 3] {
    let mut bm = [[0.0; 6]; 3];
    for k in 0..3 {
        bm[0][2 * k] = g[k][0];
        bm[1][2 * k + 1] = g[k][1];
        bm[2][2 * k] = g[k][1];
        bm[2][2 * k + 1] = g[k][0];
    }
    bm
}

/// `∫ density · Ae(u) : e(v)` for vector P1 fields with interleaved dofs.
pub fn assemble_elasticity(mesh: &Mesh, law: &HookeLaw, density: &[f64]) -> Result<CsrMatrix> {
    HookeLaw::new(law.lambda, law.mu)?;
    check_density(mesh, density)?;
    let d = law.voigt();
    let mut b = TripletBuilder::with_capacity(2 * mesh.node_count(), 36 * mesh.triangle_count());
    for (k, t) in mesh.triangles().iter().enumerate() {
        let bm = strain_matrix(mesh.basis_gradients(k));
        let w = density[k] * mesh.area(k);
        let mut db = [[0.0; 6]; 3];
        for r in 0..3 {
            for c in 0..6 {
                db[r][c] = (0..3).map(|s| d[r][s] * bm[s][c]).sum();
            }
        }
        let mut ke = [[0.0; 6]; 6];
        for p in 0..6 {
            for q in p..6 {
                let v: f64 = (0..3).map(|r| bm[r][p] * db[r][q]).sum();
                ke[p][q] = w * v;
                ke[q][p] = ke[p][q];
            }
        }
        let dofs = [
            2 * t[0],
            2 * t[0] + 1,
            2 * t[1],
            2 * t[1] + 1,
            2 * t[2],
            2 * t[2] + 1,
        ];
        for p in 0..6 {
            for q in 0..6 {
                b.push(dofs[p], dofs[q], ke[p][q]);
            }
        }
    }
    Ok(b.build(true))
}

/// Symmetric Nitsche terms imposing `u = 0` weakly on the zero level set:
/// `-∫_Γ (∂u/∂n v + u ∂v/∂n) ds + (γ/h) ∫_Γ u v ds`.
pub fn assemble_interface_dirichlet(
    mesh: &Mesh,
    cut: &InterfaceCut,
    rho: &[f64],
    penalty: f64,
) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(mesh.node_count(), 9 * cut.segments().len());
    for seg in cut.segments() {
        let k = seg.triangle;
        let t = mesh.triangles()[k];
        let g = mesh.basis_gradients(k);
        let n = seg.normal;
        let beta = nitsche_weight(mesh, k, seg.length, rho[k], penalty);
        let [w0, w1] = seg.barycentric;
        let len = seg.length;
        let dn: [f64; 3] = std::array::from_fn(|a| g[a][0] * n[0] + g[a][1] * n[1]);
        let ml: [f64; 3] = std::array::from_fn(|a| 0.5 * len * (w0[a] + w1[a]));
        let mut ke = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in p..3 {
                let mass = len / 6.0
                    * (2.0 * w0[p] * w0[q] + w0[p] * w1[q] + w1[p] * w0[q] + 2.0 * w1[p] * w1[q]);
                ke[p][q] = -(ml[p] * dn[q] + dn[p] * ml[q]) + beta * mass;
                ke[q][p] = ke[p][q];
            }
        }
        for p in 0..3 {
            for q in 0..3 {
                b.push(t[p], t[q], ke[p][q]);
            }
        }
    }
    b.build(true)
}

/// Interface penalty `γ_k / h` of one cut triangle. The base `penalty` is
/// raised on cut cells with little material so each element block stays
/// positive definite.
pub fn nitsche_weight(mesh: &Mesh, triangle: usize, length: f64, rho: f64, penalty: f64) -> f64 {
    let area = mesh.area(triangle);
    let h = (2.0 * area).sqrt();
    penalty.max(2.0 * h * length / (rho * area)) / h
}

/// Constant strain `[e11, e22, e12]` of a vector P1 field on one triangle.
pub fn strain(mesh: &Mesh, triangle: usize, u: &[f64]) -> [f64; 3] {
    let t = mesh.triangles()[triangle];
    let g = mesh.basis_gradients(triangle);
    let mut e = [0.0; 3];
    for k in 0..3 {
        let ux = u[2 * t[k]];
        let uy = u[2 * t[k] + 1];
        e[0] += g[k][0] * ux;
        e[1] += g[k][1] * uy;
        e[2] += 0.5 * (g[k][1] * ux + g[k][0] * uy);
    }
    e
}
