use serde::{Deserialize, Serialize};

use crate::correlation::{
    pivoted_cholesky, ClosedFormKernel, CorrelationKernel, LowRankFactorization, MatrixAccessor,
};
use crate::error::{Error, Result};
use crate::fem::{solve_spd, Field, FieldKind, SolverOptions};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Where a correlation kernel lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationRegion {
    Boundary(BoundaryTag),
    Domain,
}

/// `Σ_t w_t/2 ((G a_t)(G b_t)ᵀ + (G b_t)(G a_t)ᵀ)` from the projected terms.
struct TermAccessor {
    dim: usize,
    terms: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl MatrixAccessor for TermAccessor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.entry(i, i)).collect()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.entry(i, j)).collect()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.terms
            .iter()
            .map(|(ga, gb, w)| 0.5 * w * (ga[i] * gb[j] + gb[i] * ga[j]))
            .sum()
    }
}

/// Midpoint quadrature of a closed-form kernel: cells are boundary edges
/// (weight `|e|/2` per node) or triangles (weight `A/3` per node).
struct QuadratureAccessor {
    kernel: ClosedFormKernel,
    points: Vec<Point>,
    /// `(cell, weight)` pairs per region node.
    node_cells: Vec<Vec<(usize, f64)>>,
}

impl MatrixAccessor for QuadratureAccessor {
    fn dim(&self) -> usize {
        self.node_cells.len()
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, j)).collect()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        // fixed summation order so that C_ij and C_ji agree bitwise
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let mut s = 0.0;
        for &(c, wc) in &self.node_cells[a] {
            for &(d, wd) in &self.node_cells[b] {
                s += wc * wd * self.kernel.eval(self.points[c], self.points[d]);
            }
        }
        s
    }
}

/// Discrete correlation matrix `C_ij = ∬ Cor(x, y) φ_i(x) φ_j(y)` on the dofs
/// of a region, with the matching Gram (mass) matrix.
pub struct DiscreteCorrelation {
    accessor: Box<dyn MatrixAccessor + Send>,
    /// Global dof of each region dof.
    dofs: Vec<usize>,
    gram: CsrMatrix,
    kind: FieldKind,
    /// Component of the load for scalar kernels driving vector problems.
    component: Option<usize>,
    node_count: usize,
    /// Exact loads, when the kernel is a sum of pure nonnegative terms.
    direct: Option<Vec<Field>>,
}

impl std::fmt::Debug for DiscreteCorrelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteCorrelation")
            .field("dim", &self.accessor.dim())
            .field("kind", &self.kind)
            .field("component", &self.component)
            .finish()
    }
}

fn region_nodes(mesh: &Mesh, region: CorrelationRegion) -> Result<(Vec<usize>, CsrMatrix)> {
    match region {
        CorrelationRegion::Boundary(tag) => {
            let nodes = mesh.nodes_with_tag(tag);
            if nodes.is_empty() {
                return Err(Error::MissingTag(tag));
            }
            let g = mesh.boundary_mass_matrix(tag)?.submatrix(&nodes);
            Ok((nodes, g))
        }
        CorrelationRegion::Domain => Ok(((0..mesh.node_count()).collect(), mesh.mass_matrix(None))),
    }
}

/// `G ⊗ I_c` for interleaved components.
fn blow_up(g: &CsrMatrix, c: usize) -> CsrMatrix {
    if c == 1 {
        return g.clone();
    }
    let mut b = TripletBuilder::with_capacity(c * g.dim(), c * g.nnz());
    for i in 0..g.dim() {
        for (j, v) in g.row(i) {
            for k in 0..c {
                b.push(c * i + k, c * j + k, v);
            }
        }
    }
    b.build(true)
}

/// Builds the lazily evaluated correlation matrix of `kernel` on `region`.
pub fn assemble_correlation_matrix(
    kernel: &CorrelationKernel,
    mesh: &Mesh,
    region: CorrelationRegion,
) -> Result<DiscreteCorrelation> {
    let (nodes, g) = region_nodes(mesh, region)?;
    match kernel {
        CorrelationKernel::FiniteRank { terms } => {
            let Some(first) = terms.first() else {
                return Err(Error::InvalidArgument(
                    "finite-rank kernel without terms".into(),
                ));
            };
            let kind = first.a.kind();
            let c = kind.components();
            for t in terms {
                for f in [&t.a, &t.b] {
                    if f.kind() != kind || f.node_count() != mesh.node_count() {
                        return Err(Error::InvalidArgument(
                            "kernel terms must share one field kind on the mesh nodes".into(),
                        ));
                    }
                }
                if !t.weight.is_finite() {
                    return Err(Error::InvalidArgument("non-finite kernel weight".into()));
                }
            }
            let dofs: Vec<usize> = nodes
                .iter()
                .flat_map(|&n| (0..c).map(move |k| c * n + k))
                .collect();
            let gram = blow_up(&g, c);
            let project = |f: &Field| {
                let local: Vec<f64> = dofs.iter().map(|&d| f.values()[d]).collect();
                gram.mul_vec(&local)
            };
            let projected = terms
                .iter()
                .map(|t| (project(&t.a), project(&t.b), t.weight))
                .collect();
            let direct = terms
                .iter()
                .all(|t| t.is_pure() && t.weight >= 0.0)
                .then(|| terms.iter().map(|t| t.a.scaled(t.weight.sqrt())).collect());
            Ok(DiscreteCorrelation {
                accessor: Box::new(TermAccessor {
                    dim: dofs.len(),
                    terms: projected,
                }),
                dofs,
                gram,
                kind,
                component: None,
                node_count: mesh.node_count(),
                direct,
            })
        }
        CorrelationKernel::ClosedForm(k) => {
            k.validate()?;
            let mut local = vec![usize::MAX; mesh.node_count()];
            for (i, &n) in nodes.iter().enumerate() {
                local[n] = i;
            }
            let mut points = Vec::new();
            let mut node_cells = vec![Vec::new(); nodes.len()];
            match region {
                CorrelationRegion::Boundary(tag) => {
                    for e in mesh.edges_with_tag(tag) {
                        let c = points.len();
                        points.push(mesh.edge_midpoint(e));
                        let w = 0.5 * mesh.edge_length(e);
                        for &v in &e.nodes {
                            node_cells[local[v]].push((c, w));
                        }
                    }
                }
                CorrelationRegion::Domain => {
                    for (t, tri) in mesh.triangles().iter().enumerate() {
                        points.push(mesh.centroid(t));
                        let w = mesh.area(t) / 3.0;
                        for &v in tri {
                            node_cells[local[v]].push((t, w));
                        }
                    }
                }
            }
            let (kind, component) = match k.component {
                None => (FieldKind::Scalar, None),
                Some(c) => (FieldKind::Vector2, Some(c)),
            };
            Ok(DiscreteCorrelation {
                accessor: Box::new(QuadratureAccessor {
                    kernel: *k,
                    points,
                    node_cells,
                }),
                dofs: nodes,
                gram: g,
                kind,
                component,
                node_count: mesh.node_count(),
                direct: None,
            })
        }
    }
}

impl DiscreteCorrelation {
    pub fn accessor(&self) -> &dyn MatrixAccessor {
        self.accessor.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.accessor.dim()
    }

    /// Gram matrix `G` restricted to the region dofs.
    pub fn gram(&self) -> &CsrMatrix {
        &self.gram
    }

    pub fn region_dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn field_kind(&self) -> FieldKind {
        self.kind
    }

    /// Loads known exactly without factorization.
    pub fn direct_loads(&self) -> Option<&[Field]> {
        self.direct.as_deref()
    }

    pub fn factorize(&self, epsilon: f64, max_rank: usize) -> Result<LowRankFactorization> {
        pivoted_cholesky(self.accessor(), epsilon, max_rank)
    }

    /// Nodal fields `ℓ_k = G⁻¹ ℓ̃_k` scattered back to the whole mesh.
    pub fn loads(&self, fac: &LowRankFactorization) -> Result<Vec<Field>> {
        let local = factors_to_loads(fac, &self.gram)?;
        Ok(local.into_iter().map(|l| self.scatter(&l)).collect())
    }

    /// Region-dof vector as a mesh field.
    pub fn scatter(&self, local: &[f64]) -> Field {
        match (self.kind, self.component) {
            (FieldKind::Vector2, Some(c)) => {
                let mut v = vec![0.0; 2 * self.node_count];
                for (&n, &x) in self.dofs.iter().zip(local) {
                    v[2 * n + c] = x;
                }
                Field::vector2(v)
            }
            (kind, _) => {
                let mut v = vec![0.0; kind.components() * self.node_count];
                for (&d, &x) in self.dofs.iter().zip(local) {
                    v[d] = x;
                }
                Field::new(kind, v).expect("finite factors")
            }
        }
    }
}

/// Solves `G ℓ_k = ℓ̃_k` for every factor at relative tolerance 1e-12.
pub fn factors_to_loads(fac: &LowRankFactorization, gram: &CsrMatrix) -> Result<Vec<Vec<f64>>> {
    if gram.dim() == 0 {
        return Err(Error::Singular);
    }
    let opts = SolverOptions {
        tol: 1e-12,
        max_iter: 10 * gram.dim() + 1000,
    };
    fac.factors
        .iter()
        .map(|f| {
            if f.len() != gram.dim() {
                return Err(Error::DimensionMismatch {
                    what: "factor",
                    expected: gram.dim(),
                    actual: f.len(),
                });
            }
            solve_spd(gram, f, opts).map_err(|e| match e {
                Error::InvalidArgument(_) => Error::Singular,
                e => e,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, SymmetricEigen};

    use super::*;
    use crate::correlation::{
        finite_rank_correlated_pair, Axis, DenseAccessor, KernelTerm, Profile,
    };
    use crate::mesh::{generate_structured_mesh, Rect, Region};

    fn strip(n: usize) -> Mesh {
        let m = generate_structured_mesh(n, 2, Rect::new(0.0, 0.0, 1.0, 0.1)).unwrap();
        let top = Region::Rect {
            rect: Rect::new(0.0, 0.1, 1.0, 0.1),
            tol: 1e-9,
        };
        m.tag_boundary(&top, BoundaryTag::Neumann).unwrap()
    }

    fn flat_kernel(l: f64) -> ClosedFormKernel {
        ClosedFormKernel {
            component: None,
            amplitude: 4.0,
            profile: Profile::Unit,
            correlation_length: l,
            profile_axis: Axis::X,
            profile_range: [0.0, 1.0],
            decay_axis: Axis::X,
        }
    }

    #[test]
    fn single_pure_term_is_rank_one() {
        let m = strip(10);
        let g = Field::scalar(m.vertices().iter().map(|p| 1.0 + p[0]).collect());
        let k = CorrelationKernel::FiniteRank {
            terms: vec![KernelTerm::pure(g.clone(), 1.0)],
        };
        let dc =
            assemble_correlation_matrix(&k, &m, CorrelationRegion::Boundary(BoundaryTag::Neumann))
                .unwrap();
        let fac = dc.factorize(1e-12, 10).unwrap();
        assert_eq!(fac.rank(), 1);
        let loads = dc.loads(&fac).unwrap();
        let sign = loads[0].values()[dc.region_dofs()[0]].signum();
        for &n in dc.region_dofs() {
            assert!((sign * loads[0].values()[n] - g.values()[n]).abs() < 1e-8);
        }
        let gl: Vec<f64> = dc.region_dofs().iter().map(|&n| g.values()[n]).collect();
        let ga = dc.gram().mul_vec(&gl);
        for i in 0..dc.dim() {
            for j in 0..dc.dim() {
                assert!((dc.accessor().entry(i, j) - ga[i] * ga[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn accessors_are_exactly_symmetric() {
        let m = strip(12);
        let a = Field::scalar(m.vertices().iter().map(|p| p[0].sin()).collect());
        let b = Field::scalar(m.vertices().iter().map(|p| p[0] * p[0] - 0.3).collect());
        let fr = finite_rank_correlated_pair(&a, &b, 0.37).unwrap();
        let cf = CorrelationKernel::ClosedForm(ClosedFormKernel {
            profile: Profile::H1,
            ..flat_kernel(0.1)
        });
        for k in [fr, cf] {
            for region in [
                CorrelationRegion::Boundary(BoundaryTag::Neumann),
                CorrelationRegion::Domain,
            ] {
                let dc = assemble_correlation_matrix(&k, &m, region).unwrap();
                let acc = dc.accessor();
                for i in 0..acc.dim() {
                    for (j, v) in acc.column(i).into_iter().enumerate() {
                        assert_eq!(v, acc.entry(j, i));
                        assert_eq!(acc.entry(i, j), acc.entry(j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn infinite_length_flat_kernel_is_rank_one() {
        let m = strip(16);
        let k = CorrelationKernel::ClosedForm(flat_kernel(f64::INFINITY));
        let dc =
            assemble_correlation_matrix(&k, &m, CorrelationRegion::Boundary(BoundaryTag::Neumann))
                .unwrap();
        let dense = DenseAccessor::from_accessor(dc.accessor());
        let n = dc.dim();
        let mat = DMatrix::from_row_slice(n, n, dense.data());
        let eig = SymmetricEigen::new(mat.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!(ev[1].abs() <= 1e-10 * ev[0]);
        let g1 = dc.gram().mul_vec(&vec![2.0; n]);
        for i in 0..n {
            for j in 0..n {
                assert!((mat[(i, j)] - g1[i] * g1[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn loads_reproduce_captured_trace() {
        let m = strip(40);
        let k = CorrelationKernel::ClosedForm(flat_kernel(0.2));
        let dc =
            assemble_correlation_matrix(&k, &m, CorrelationRegion::Boundary(BoundaryTag::Neumann))
                .unwrap();
        let fac = dc.factorize(1e-4, 100).unwrap();
        let local = factors_to_loads(&fac, dc.gram()).unwrap();
        // Σ (Gℓ_k)ᵀ(Gℓ_k) = Σ ℓ̃_kᵀℓ̃_k = trace(C_m)
        let captured: f64 = local
            .iter()
            .map(|l| dc.gram().mul_vec(l).iter().map(|x| x * x).sum::<f64>())
            .sum();
        let trace_cm = fac.trace - fac.residual_trace();
        assert!((captured - trace_cm).abs() <= 1e-8 * trace_cm);
    }

    #[test]
    fn identity_gram_returns_factors() {
        let fac = LowRankFactorization {
            factors: vec![vec![1.0, 2.0, -3.0]],
            pivots: vec![2],
            trace: 14.0,
            trace_error: 0.0,
            tolerance: 1e-6,
            history: vec![1.0, 0.0],
        };
        let out = factors_to_loads(&fac, &CsrMatrix::identity(3)).unwrap();
        assert_eq!(out[0], fac.factors[0]);
    }

    #[test]
    fn vector_component_scatter() {
        let m = strip(6);
        let k = CorrelationKernel::ClosedForm(ClosedFormKernel {
            component: Some(1),
            ..flat_kernel(0.1)
        });
        let dc =
            assemble_correlation_matrix(&k, &m, CorrelationRegion::Boundary(BoundaryTag::Neumann))
                .unwrap();
        let fac = dc.factorize(1e-3, 50).unwrap();
        let loads = dc.loads(&fac).unwrap();
        for l in &loads {
            assert_eq!(l.kind(), FieldKind::Vector2);
            assert!(l.component(0).iter().all(|&x| x == 0.0));
        }
    }
}
