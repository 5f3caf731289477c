use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Piece of the zero level set inside one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSegment {
    pub triangle: usize,
    pub points: [Point; 2],
    /// Barycentric coordinates of both end points w.r.t. the triangle's
    /// local vertex order.
    pub barycentric: [[f64; 3]; 2],
    pub length: f64,
    /// `∇φ / |∇φ|`, pointing out of the material.
    pub normal: Point,
}

impl InterfaceSegment {
    pub fn midpoint(&self) -> Point {
        [
            0.5 * (self.points[0][0] + self.points[1][0]),
            0.5 * (self.points[0][1] + self.points[1][1]),
        ]
    }

    pub fn midpoint_barycentric(&self) -> [f64; 3] {
        let [a, b] = self.barycentric;
        [
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
        ]
    }

    /// Value of a nodal P1 field at the segment midpoint.
    pub fn interpolate_midpoint(&self, mesh: &Mesh, nodal: &[f64]) -> f64 {
        let t = mesh.triangles()[self.triangle];
        let w = self.midpoint_barycentric();
        w[0] * nodal[t[0]] + w[1] * nodal[t[1]] + w[2] * nodal[t[2]]
    }
}

/// The piecewise-linear zero level set of a nodal field, one segment per cut
/// triangle. A vertex with `φ = 0` counts as void.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterfaceCut {
    segments: Vec<InterfaceSegment>,
}

impl InterfaceCut {
    pub fn from_phi(mesh: &Mesh, phi: &[f64]) -> Result<Self> {
        if phi.len() != mesh.node_count() {
            return Err(Error::DimensionMismatch {
                what: "level set",
                expected: mesh.node_count(),
                actual: phi.len(),
            });
        }
        let mut segments = Vec::new();
        for (k, t) in mesh.triangles().iter().enumerate() {
            let f = [phi[t[0]], phi[t[1]], phi[t[2]]];
            let Some((points, barycentric)) = triangle_crossings(mesh, t, f) else {
                continue;
            };
            let length = dist(points[0], points[1]);
            if length == 0.0 {
                continue;
            }
            let g = mesh.gradient(k, phi);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if gn < 1e-10 {
                return Err(Error::DegenerateInterface { triangle: k });
            }
            segments.push(InterfaceSegment {
                triangle: k,
                points,
                barycentric,
                length,
                normal: [g[0] / gn, g[1] / gn],
            });
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[InterfaceSegment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn triangle_crossings(
    mesh: &Mesh,
    t: &[usize; 3],
    f: [f64; 3],
) -> Option<([Point; 2], [[f64; 3]; 2])> {
    let v = mesh.vertices();
    let mut pts = Vec::with_capacity(2);
    let mut bary = Vec::with_capacity(2);
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        if (f[a] < 0.0) != (f[b] < 0.0) {
            let s = f[a] / (f[a] - f[b]);
            let pa = v[t[a]];
            let pb = v[t[b]];
            pts.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
            let mut w = [0.0; 3];
            w[a] = 1.0 - s;
            w[b] = s;
            bary.push(w);
        }
    }
    if pts.len() != 2 {
        return None;
    }
    Some(([pts[0], pts[1]], [bary[0], bary[1]]))
}

/// Area fraction of `{φ < 0}` inside one triangle for the linear interpolant.
pub fn triangle_fraction(f: [f64; 3]) -> f64 {
    let neg: Vec<usize> = (0..3).filter(|&k| f[k] < 0.0).collect();
    let corner = |a: usize| {
        let mut p = 1.0;
        for b in (0..3).filter(|&b| b != a) {
            p *= f[a] / (f[a] - f[b]);
        }
        p
    };
    match neg.len() {
        0 => 0.0,
        3 => 1.0,
        1 => corner(neg[0]),
        _ => {
            let pos = (0..3).find(|k| !neg.contains(k)).unwrap_or(0);
            1.0 - corner(pos)
        }
    }
}
