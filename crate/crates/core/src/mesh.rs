//! Structured triangulations of the computational box, boundary tagging and
//! the geometric quantities the finite element layer needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, TripletBuilder};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// Clamped part, homogeneous Dirichlet data.
    Dirichlet,
    /// Loaded part.
    Neumann,
    /// Everything else.
    Free,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.x0 - tol
            && p[0] <= self.x1 + tol
            && p[1] >= self.y0 - tol
            && p[1] <= self.y1 + tol
    }
}

/// Geometric predicate applied to boundary edge midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Rect { rect: Rect, tol: f64 },
    Segment { a: Point, b: Point, tol: f64 },
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Region::Rect { rect, tol } => rect.contains(p, tol),
            Region::Segment { a, b, tol } => point_segment_distance(p, a, b) <= tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Counter-clockwise along the box boundary, so the outward normal is
    /// the edge direction rotated by -90°.
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    nx: usize,
    ny: usize,
    bbox: Rect,
    areas: Vec<f64>,
    /// Gradients of the three barycentric basis functions per triangle.
    basis_gradients: Vec<[Point; 3]>,
}

/// Structured mesh of `nx × ny` cells, each split along its lower-left to
/// upper-right diagonal. Vertices are numbered row by row, `j * (nx + 1) + i`.
pub fn generate_structured_mesh(nx: usize, ny: usize, bbox: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "subdivision counts must be positive (nx={nx}, ny={ny})"
        )));
    }
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "box must have positive width and height ({bbox:?})"
        )));
    }
    let hx = bbox.width() / nx as f64;
    let hy = bbox.height() / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny {
            bbox.y1
        } else {
            bbox.y0 + j as f64 * hy
        };
        for i in 0..=nx {
            let x = if i == nx {
                bbox.x1
            } else {
                bbox.x0 + i as f64 * hx
            };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    let free = BoundaryTag::Free;
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(i, 0), id(i + 1, 0)],
            tag: free,
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(nx, j), id(nx, j + 1)],
            tag: free,
        });
    }
    for i in (0..nx).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(i + 1, ny), id(i, ny)],
            tag: free,
        });
    }
    for j in (0..ny).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(0, j + 1), id(0, j)],
            tag: free,
        });
    }
    let (areas, basis_gradients) = triangles
        .iter()
        .map(|t| {
            let p = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            triangle_geometry(p)
        })
        .unzip();
    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        nx,
        ny,
        bbox,
        areas,
        basis_gradients,
    })
}

/// Signed area and basis-function gradients of a P1 triangle.
pub fn triangle_geometry(p: [Point; 3]) -> (f64, [Point; 3]) {
    let area = 0.5
        * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut g = [[0.0; 2]; 3];
    for (k, gk) in g.iter_mut().enumerate() {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        *gk = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (area, g)
}

impl Mesh {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Grid spacings `(hx, hy)`.
    pub fn spacing(&self) -> (f64, f64) {
        (
            self.bbox.width() / self.nx as f64,
            self.bbox.height() / self.ny as f64,
        )
    }

    pub fn h_min(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx.min(hy)
    }

    pub fn h_max(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx.max(hy)
    }

    /// Vertex index of grid node `(i, j)`.
    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_grid_index(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn area(&self, triangle: usize) -> f64 {
        self.areas[triangle]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn basis_gradients(&self, triangle: usize) -> &[Point; 3] {
        &self.basis_gradients[triangle]
    }

    pub fn centroid(&self, triangle: usize) -> Point {
        let t = self.triangles[triangle];
        let mut c = [0.0; 2];
        for &v in &t {
            c[0] += self.vertices[v][0] / 3.0;
            c[1] += self.vertices[v][1] / 3.0;
        }
        c
    }

    /// Gradient of a nodal P1 field on one triangle.
    pub fn gradient(&self, triangle: usize, nodal: &[f64]) -> Point {
        let t = self.triangles[triangle];
        let g = &self.basis_gradients[triangle];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += g[k][0] * nodal[t[k]];
            out[1] += g[k][1] * nodal[t[k]];
        }
        out
    }

    pub fn edge_length(&self, edge: &BoundaryEdge) -> f64 {
        let a = self.vertices[edge.nodes[0]];
        let b = self.vertices[edge.nodes[1]];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn edge_midpoint(&self, edge: &BoundaryEdge) -> Point {
        let a = self.vertices[edge.nodes[0]];
        let b = self.vertices[edge.nodes[1]];
        [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
    }

    /// Unit outward normal of a boundary edge of the box.
    pub fn edge_normal(&self, edge: &BoundaryEdge) -> Point {
        let a = self.vertices[edge.nodes[0]];
        let b = self.vertices[edge.nodes[1]];
        let len = self.edge_length(edge);
        [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
    }

    /// Tags every boundary edge whose midpoint satisfies `region`.
    pub fn tag_boundary(mut self, region: &Region, tag: BoundaryTag) -> Result<Self> {
        let mut hits = 0;
        for k in 0..self.boundary_edges.len() {
            let mid = self.edge_midpoint(&self.boundary_edges[k]);
            if region.contains(mid) {
                self.boundary_edges[k].tag = tag;
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(Error::EmptyRegion { tag });
        }
        Ok(self)
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.edges_with_tag(tag).next().is_some()
    }

    /// Sorted list of nodes touched by edges carrying `tag`.
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.edges_with_tag(tag).flat_map(|e| e.nodes).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Nodal mask of the tagged boundary part.
    pub fn tag_mask(&self, tag: BoundaryTag) -> Vec<bool> {
        let mut mask = vec![false; self.node_count()];
        for n in self.nodes_with_tag(tag) {
            mask[n] = true;
        }
        mask
    }

    /// P1 edge mass matrix `∫ φ_i φ_j ds` over the edges carrying `tag`,
    /// sized to the full node set.
    pub fn boundary_mass_matrix(&self, tag: BoundaryTag) -> Result<CsrMatrix> {
        if !self.has_tag(tag) {
            return Err(Error::MissingTag(tag));
        }
        let mut b = TripletBuilder::new(self.node_count());
        for e in self.edges_with_tag(tag) {
            let h = self.edge_length(e);
            let [i, j] = e.nodes;
            b.push(i, i, h / 3.0);
            b.push(i, j, h / 6.0);
            b.push(j, i, h / 6.0);
            b.push(j, j, h / 3.0);
        }
        Ok(b.build(true))
    }

    /// Consistent P1 mass matrix over the triangles, each weighted by `weight[t]`.
    pub fn mass_matrix(&self, weight: Option<&[f64]>) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.node_count(), 9 * self.triangle_count());
        for (k, t) in self.triangles.iter().enumerate() {
            let w = weight.map_or(1.0, |w| w[k]);
            if w == 0.0 {
                continue;
            }
            let a = self.areas[k] * w;
            for p in 0..3 {
                for q in 0..3 {
                    let m = if p == q { a / 6.0 } else { a / 12.0 };
                    b.push(t[p], t[q], m);
                }
            }
        }
        b.build(true)
    }

    /// Lumped (row-sum) P1 mass.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.node_count()];
        for (k, t) in self.triangles.iter().enumerate() {
            for &v in t {
                m[v] += self.areas[k] / 3.0;
            }
        }
        m
    }

    /// `Σ_T density(T) · area(T)`.
    pub fn volume(&self, density: &[f64]) -> Result<f64> {
        if density.len() != self.triangle_count() {
            return Err(Error::DimensionMismatch {
                what: "element density",
                expected: self.triangle_count(),
                actual: density.len(),
            });
        }
        Ok(density.iter().zip(&self.areas).map(|(d, a)| d * a).sum())
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {k} has an out-of-range vertex"
                )));
            }
            if self.areas[k] <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {k} has non-positive area"
                )));
            }
        }
        for e in &self.boundary_edges {
            if e.nodes.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(
                    "boundary edge has an out-of-range vertex".into(),
                ));
            }
            let owners = self
                .triangles
                .iter()
                .filter(|t| t.contains(&e.nodes[0]) && t.contains(&e.nodes[1]))
                .count();
            if owners != 1 {
                return Err(Error::InvalidArgument(format!(
                    "boundary edge {:?} belongs to {owners} triangles",
                    e.nodes
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - s * ab[0], ap[1] - s * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> Rect {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    #[test]
    fn counts_follow_construction() {
        let m = generate_structured_mesh(2, 1, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        assert_eq!(m.node_count(), 6);
        assert_eq!(m.triangle_count(), 4);
        let m = generate_structured_mesh(1, 1, unit()).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.triangle_count(), 2);
        assert_eq!(m.boundary_edges().len(), 4);
        m.validate().unwrap();
    }

    #[test]
    fn triangles_partition_the_box() {
        let m = generate_structured_mesh(100, 50, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        assert!((m.total_area() - 2.0).abs() < 1e-12);
        assert!(m.areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn perimeter_and_normals() {
        let m = generate_structured_mesh(7, 3, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        let perim: f64 = m.boundary_edges().iter().map(|e| m.edge_length(e)).sum();
        assert!((perim - 6.0).abs() < 1e-12);
        for e in m.boundary_edges() {
            let n = m.edge_normal(e);
            let mid = m.edge_midpoint(e);
            let c = [1.0, 0.5];
            assert!(n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) > 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(generate_structured_mesh(0, 3, unit()).is_err());
        assert!(generate_structured_mesh(3, 3, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn tagging_bottom_and_top_segment() {
        let m = generate_structured_mesh(10, 10, unit()).unwrap();
        let bottom = Region::Rect {
            rect: Rect::new(0.0, 0.0, 1.0, 0.0),
            tol: 1e-9,
        };
        let m = m.tag_boundary(&bottom, BoundaryTag::Dirichlet).unwrap();
        assert_eq!(m.edges_with_tag(BoundaryTag::Dirichlet).count(), 10);
        let top = Region::Rect {
            rect: Rect::new(0.4, 1.0, 0.6, 1.0),
            tol: 1e-9,
        };
        let m = m.tag_boundary(&top, BoundaryTag::Neumann).unwrap();
        assert_eq!(m.edges_with_tag(BoundaryTag::Neumann).count(), 2);
        let nowhere = Region::Rect {
            rect: Rect::new(0.3, 0.3, 0.6, 0.6),
            tol: 1e-9,
        };
        assert!(matches!(
            m.tag_boundary(&nowhere, BoundaryTag::Neumann),
            Err(Error::EmptyRegion { .. })
        ));
    }

    #[test]
    fn segment_region() {
        let m = generate_structured_mesh(4, 4, unit()).unwrap();
        let left = Region::Segment {
            a: [0.0, 0.0],
            b: [0.0, 1.0],
            tol: 1e-9,
        };
        let m = m.tag_boundary(&left, BoundaryTag::Dirichlet).unwrap();
        assert_eq!(m.nodes_with_tag(BoundaryTag::Dirichlet).len(), 5);
    }

    #[test]
    fn single_edge_mass_block() {
        let m = generate_structured_mesh(1, 1, Rect::new(0.0, 0.0, 0.5, 1.0)).unwrap();
        let bottom = Region::Rect {
            rect: Rect::new(0.0, 0.0, 0.5, 0.0),
            tol: 1e-9,
        };
        let m = m.tag_boundary(&bottom, BoundaryTag::Neumann).unwrap();
        let g = m.boundary_mass_matrix(BoundaryTag::Neumann).unwrap();
        let h = 0.5;
        assert_relative_eq!(g.get(0, 0), h / 3.0);
        assert_relative_eq!(g.get(0, 1), h / 6.0);
        assert_relative_eq!(g.get(1, 1), h / 3.0);
        assert_eq!(g.get(2, 2), 0.0);
        assert!(m.boundary_mass_matrix(BoundaryTag::Dirichlet).is_err());
    }

    #[test]
    fn collinear_edges_and_row_sums() {
        let m = generate_structured_mesh(8, 2, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        let bottom = Region::Rect {
            rect: Rect::new(0.0, 0.0, 2.0, 0.0),
            tol: 1e-9,
        };
        let m = m.tag_boundary(&bottom, BoundaryTag::Neumann).unwrap();
        let g = m.boundary_mass_matrix(BoundaryTag::Neumann).unwrap();
        let h = 0.25;
        assert!((g.get(1, 1) - 2.0 * h / 3.0).abs() < 1e-15);
        let total: f64 = g.mul_vec(&vec![1.0; m.node_count()]).iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn volume_is_linear_in_density() {
        let m = generate_structured_mesh(5, 5, unit()).unwrap();
        let n = m.triangle_count();
        assert!((m.volume(&vec![1.0; n]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.volume(&vec![0.0; n]).unwrap(), 0.0);
        assert!((m.volume(&vec![0.35; n]).unwrap() - 0.35).abs() < 1e-12);
        assert!(m.volume(&[1.0]).is_err());
        let m2 = generate_structured_mesh(100, 50, Rect::new(0.0, 0.0, 2.0, 1.0)).unwrap();
        assert!((m2.volume(&vec![1.0; m2.triangle_count()]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_structured_mesh(13, 7, Rect::new(-1.0, 0.0, 1.3, 0.7)).unwrap();
        let b = generate_structured_mesh(13, 7, Rect::new(-1.0, 0.0, 1.3, 0.7)).unwrap();
        assert_eq!(a, b);
    }
}
