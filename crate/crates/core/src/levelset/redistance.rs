use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::levelset::{InterfaceCut, LevelSet};
use crate::mesh::point_segment_distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    Full,
    /// Distances beyond the width are clamped to it.
    Width(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Trial {
    dist: f64,
    node: usize,
}

impl Eq for Trial {}

impl Ord for Trial {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl LevelSet {
    /// Replaces `φ` by the signed distance to its zero level set.
    ///
    /// Vertices of cut triangles are initialized with their exact distance to
    /// the piecewise-linear interface; the rest is filled by fast marching on
    /// the grid. Signs are never changed.
    pub fn redistance(&self, band: Band) -> Result<LevelSet> {
        let mesh = &self.mesh;
        let cut = InterfaceCut::from_phi(mesh, &self.phi)?;
        if cut.is_empty() {
            return Err(Error::NoInterface);
        }
        let n = mesh.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut frozen = vec![false; n];
        let tiny = 1e-12 * mesh.h_min();
        for seg in cut.segments() {
            for &v in &mesh.triangles()[seg.triangle] {
                let d = point_segment_distance(mesh.vertices()[v], seg.points[0], seg.points[1]);
                dist[v] = dist[v].min(d);
            }
        }
        let mut heap = BinaryHeap::new();
        for v in 0..n {
            if dist[v].is_finite() {
                frozen[v] = true;
                if self.phi[v] != 0.0 {
                    dist[v] = dist[v].max(tiny);
                }
            }
        }
        let (nx, ny) = mesh.grid_shape();
        let (hx, hy) = mesh.spacing();
        let limit = match band {
            Band::Full => f64::INFINITY,
            Band::Width(w) => w,
        };
        let neighbours = |v: usize| {
            let (i, j) = mesh.node_grid_index(v);
            let mut out = [usize::MAX; 4];
            if i > 0 {
                out[0] = v - 1;
            }
            if i < nx {
                out[1] = v + 1;
            }
            if j > 0 {
                out[2] = v - (nx + 1);
            }
            if j < ny {
                out[3] = v + nx + 1;
            }
            out
        };
        let update = |v: usize, dist: &[f64], frozen: &[bool]| {
            let nb = neighbours(v);
            let pick = |a: usize, b: usize| {
                let da = if a != usize::MAX && frozen[a] {
                    dist[a]
                } else {
                    f64::INFINITY
                };
                let db = if b != usize::MAX && frozen[b] {
                    dist[b]
                } else {
                    f64::INFINITY
                };
                da.min(db)
            };
            let a = pick(nb[0], nb[1]);
            let b = pick(nb[2], nb[3]);
            let one_sided = (a + hx).min(b + hy);
            if a.is_finite() && b.is_finite() {
                // ((T − a)/hx)² + ((T − b)/hy)² = 1
                let (ia, ib) = (1.0 / (hx * hx), 1.0 / (hy * hy));
                let qa = ia + ib;
                let qb = -2.0 * (a * ia + b * ib);
                let qc = a * a * ia + b * b * ib - 1.0;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let t = (-qb + disc.sqrt()) / (2.0 * qa);
                    if t >= a.max(b) {
                        return t.min(one_sided);
                    }
                }
            }
            one_sided
        };
        for v in 0..n {
            if frozen[v] {
                for w in neighbours(v) {
                    if w != usize::MAX && !frozen[w] {
                        let d = update(w, &dist, &frozen);
                        if d < dist[w] {
                            dist[w] = d;
                            heap.push(Trial { dist: d, node: w });
                        }
                    }
                }
            }
        }
        while let Some(Trial { dist: d, node }) = heap.pop() {
            if frozen[node] || d > dist[node] {
                continue;
            }
            frozen[node] = true;
            if d > limit {
                break;
            }
            for w in neighbours(node) {
                if w != usize::MAX && !frozen[w] {
                    let dn = update(w, &dist, &frozen);
                    if dn < dist[w] {
                        dist[w] = dn;
                        heap.push(Trial { dist: dn, node: w });
                    }
                }
            }
        }
        let phi = self
            .phi
            .iter()
            .zip(&dist)
            .map(|(&p, &d)| {
                let d = d.min(limit);
                if p < 0.0 {
                    -d
                } else if p > 0.0 {
                    d
                } else {
                    0.0
                }
            })
            .collect();
        Ok(LevelSet {
            mesh: self.mesh.clone(),
            phi,
            time: self.time,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::{generate_structured_mesh, Rect};

    fn exact(p: [f64; 2]) -> f64 {
        ((p[0] - 0.45).powi(2) + (p[1] - 0.55).powi(2)).sqrt() - 0.23
    }

    fn mesh(n: usize) -> Arc<crate::mesh::Mesh> {
        Arc::new(generate_structured_mesh(n, n, Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap())
    }

    #[test]
    fn removes_scaling() {
        let m = mesh(50);
        let h = 0.02;
        let ls = LevelSet::from_fn(m.clone(), |p| 3.0 * exact(p)).unwrap();
        let r = ls.redistance(Band::Full).unwrap();
        for (p, v) in m.vertices().iter().zip(r.phi()) {
            assert!(
                (v - exact(*p)).abs() <= 2.0 * h,
                "{p:?}: {v} vs {}",
                exact(*p)
            );
        }
        assert!(r.gradient_norm_share(0.8, 1.2) >= 0.95);
    }

    #[test]
    fn idempotent_within_one_cell() {
        let m = mesh(40);
        let ls = LevelSet::from_fn(m, |p| (exact(p) * 5.0).powi(3)).unwrap();
        let once = ls.redistance(Band::Full).unwrap();
        let twice = once.redistance(Band::Full).unwrap();
        let dev = once
            .phi()
            .iter()
            .zip(twice.phi())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(dev <= 1.0 / 40.0, "{dev}");
    }

    #[test]
    fn sign_pattern_preserved() {
        let m = mesh(30);
        let ls =
            LevelSet::from_fn(m, |p| (p[0] - 0.3).sin() * 2.0 + (p[1] * 7.0).cos() * 0.3).unwrap();
        let r = ls.redistance(Band::Full).unwrap();
        for (a, b) in ls.phi().iter().zip(r.phi()) {
            assert_eq!(a.signum(), b.signum());
            assert_eq!(*a < 0.0, *b < 0.0);
        }
        assert_eq!(
            ls.material_fraction()
                .iter()
                .map(|f| *f == 1.0)
                .collect::<Vec<_>>(),
            r.material_fraction()
                .iter()
                .map(|f| *f == 1.0)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn band_clamps() {
        let m = mesh(30);
        let ls = LevelSet::from_fn(m, exact).unwrap();
        let r = ls.redistance(Band::Width(0.1)).unwrap();
        assert!(r.phi().iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn uniform_sign_is_an_error() {
        let m = mesh(5);
        let ls = LevelSet::new(m.clone(), vec![-1.0; m.node_count()]).unwrap();
        assert!(matches!(ls.redistance(Band::Full), Err(Error::NoInterface)));
    }
}
