//! Boundary-conforming meshes: a uniform partition in 1D, a structured grid
//! clipped against the facets in 2D.
//!
//! The 2D grid splits every cell along its anti-diagonal, so lines of the
//! form `x = const`, `y = const` and `x + y = const` through grid nodes are
//! unions of mesh edges.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::polytope::{clip_polygon, cross2, sub, Polytope};

pub const DEFAULT_VERTEX_CAP: usize = 200_000;

/// Interior edge `(a, b)` shared by triangles with apexes `c` and `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorEdge {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub facet: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    polytope: Polytope,
    h: f64,
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    interior_edges: Vec<InteriorEdge>,
    boundary_edges: Vec<BoundaryEdge>,
    vertex_facets: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    lumped_mass: Vec<f64>,
    locator: Locator,
}

#[derive(Debug, Clone)]
struct Locator {
    origin: [f64; 2],
    step: [f64; 2],
    shape: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell(&self, t: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[t * k..(t + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.dim + 1)
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Facets the vertex lies on; empty for interior vertices.
    pub fn vertex_facets(&self, i: usize) -> &[usize] {
        &self.vertex_facets[i]
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        !self.vertex_facets[i].is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `int phi_i dmu` for the hat function at vertex `i`.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn cell_measure(&self, t: usize) -> f64 {
        let c = self.cell(t);
        if self.dim == 1 {
            self.vertex(c[1])[0] - self.vertex(c[0])[0]
        } else {
            0.5 * cross2(sub(self.pt(c[1]), self.pt(c[0])), sub(self.pt(c[2]), self.pt(c[0])))
        }
    }

    pub(crate) fn pt(&self, i: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coords[i], 0.0]
        } else {
            [self.coords[2 * i], self.coords[2 * i + 1]]
        }
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut m: f64 = 0.0;
        for c in self.cells() {
            for i in 0..c.len() {
                for j in (i + 1)..c.len() {
                    let (p, q) = (self.pt(c[i]), self.pt(c[j]));
                    m = m.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
                }
            }
        }
        m
    }

    /// Vertex closest to `x` (lowest index on ties).
    pub fn nearest_vertex(&self, x: &[f64]) -> usize {
        (0..self.num_vertices())
            .map(|i| {
                let d: f64 = self
                    .vertex(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, i)
            })
            .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
            .1
    }

    /// Cell containing `x` and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, [f64; 3])> {
        if self.dim == 1 {
            let n = self.num_cells();
            let t = self.cells().position(|c| {
                let (a, b) = (self.coords[c[0]], self.coords[c[1]]);
                x[0] >= a - 1e-14 && x[0] <= b + 1e-14
            });
            return t.filter(|&t| t < n).map(|t| {
                let c = self.cell(t);
                let (a, b) = (self.coords[c[0]], self.coords[c[1]]);
                let s = ((x[0] - a) / (b - a)).clamp(0.0, 1.0);
                (t, [1.0 - s, s, 0.0])
            });
        }
        let l = &self.locator;
        let bx = ((x[0] - l.origin[0]) / l.step[0]).floor();
        let by = ((x[1] - l.origin[1]) / l.step[1]).floor();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                let (ix, iy) = (bx as i64 + dx, by as i64 + dy);
                if ix < 0 || iy < 0 || ix >= l.shape[0] as i64 || iy >= l.shape[1] as i64 {
                    continue;
                }
                for &t in &l.buckets[iy as usize * l.shape[0] + ix as usize] {
                    let bary = self.barycentric(t, [x[0], x[1]]);
                    let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
                    if best.as_ref().is_none_or(|b| worst > b.2) {
                        best = Some((t, bary, worst));
                    }
                }
            }
        }
        best.filter(|b| b.2 >= -1e-10).map(|(t, b, _)| (t, b))
    }

    pub(crate) fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let c = self.cell(t);
        let (a, b, d) = (self.pt(c[0]), self.pt(c[1]), self.pt(c[2]));
        let det = cross2(sub(b, a), sub(d, a));
        let l1 = cross2(sub(x, a), sub(d, a)) / det;
        let l2 = cross2(sub(b, a), sub(x, a)) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Gradient of the piecewise-linear interpolant of `values` on cell `t`.
    pub fn cell_gradient(&self, t: usize, values: &[f64]) -> [f64; 2] {
        let c = self.cell(t);
        if self.dim == 1 {
            let (a, b) = (self.coords[c[0]], self.coords[c[1]]);
            return [(values[c[1]] - values[c[0]]) / (b - a), 0.0];
        }
        let (p0, p1, p2) = (self.pt(c[0]), self.pt(c[1]), self.pt(c[2]));
        let (e1, e2) = (sub(p1, p0), sub(p2, p0));
        let det = cross2(e1, e2);
        let (d1, d2) = (values[c[1]] - values[c[0]], values[c[2]] - values[c[0]]);
        [(d1 * e2[1] - d2 * e1[1]) / det, (e1[0] * d2 - e2[0] * d1) / det]
    }

    /// Convexity of the interpolant as linear inequalities `sum c_j u_j >= 0`:
    /// one per interior edge (2D) or interior vertex (1D).
    pub fn convexity_constraints(&self) -> Vec<Vec<(usize, f64)>> {
        if self.dim == 1 {
            return (1..self.num_vertices() - 1)
                .map(|i| {
                    let (hl, hr) = (
                        self.coords[i] - self.coords[i - 1],
                        self.coords[i + 1] - self.coords[i],
                    );
                    vec![
                        (i - 1, 1.0 / hl),
                        (i, -(1.0 / hl + 1.0 / hr)),
                        (i + 1, 1.0 / hr),
                    ]
                })
                .collect();
        }
        self.interior_edges
            .iter()
            .map(|e| {
                let (pa, pb, pc, pd) = (self.pt(e.a), self.pt(e.b), self.pt(e.c), self.pt(e.d));
                let det = cross2(sub(pb, pa), sub(pc, pa));
                let lb = cross2(sub(pd, pa), sub(pc, pa)) / det;
                let lc = cross2(sub(pb, pa), sub(pd, pa)) / det;
                let la = 1.0 - lb - lc;
                // u_d minus the extension of the (a,b,c) plane to d; scaled by
                // -lc > 0 so the coefficients stay O(1).
                let s = 1.0 / (-lc);
                vec![(e.d, s), (e.a, -la * s), (e.b, -lb * s), (e.c, -lc * s)]
            })
            .collect()
    }

    /// Boundary-norm weights: `||u||_b = sum_i w_i u_i` for the interpolant.
    pub fn boundary_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.num_vertices()];
        let sigma = self.polytope.boundary_weights();
        if self.dim == 1 {
            for (wi, facets) in w.iter_mut().zip(&self.vertex_facets) {
                for &k in facets {
                    *wi += sigma[k];
                }
            }
            return w;
        }
        for e in &self.boundary_edges {
            let (p, q) = (self.pt(e.a), self.pt(e.b));
            let len = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            w[e.a] += 0.5 * len * sigma[e.facet];
            w[e.b] += 0.5 * len * sigma[e.facet];
        }
        w
    }

    /// Midpoint (centroid) rule on the mesh cells.
    pub fn integrate_midpoint(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.num_cells())
            .map(|t| {
                let c = self.cell(t);
                let k = c.len() as f64;
                let mid: Vec<f64> = (0..self.dim)
                    .map(|d| c.iter().map(|&v| self.vertex(v)[d]).sum::<f64>() / k)
                    .collect();
                self.cell_measure(t) * f(&mid)
            })
            .sum()
    }

    /// Vertices within graph distance `depth` of `i` (including `i`), in BFS order.
    pub fn ring(&self, i: usize, depth: usize) -> Vec<usize> {
        let mut seen = vec![i];
        let mut frontier = vec![i];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &v in &frontier {
                for &w in &self.neighbors[v] {
                    if !seen.contains(&w) {
                        seen.push(w);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        seen
    }
}

/// Builds the mesh with the default vertex cap.
pub fn make_mesh(p: &Polytope, h: f64) -> Result<Mesh> {
    make_mesh_with_cap(p, h, DEFAULT_VERTEX_CAP)
}

pub fn make_mesh_with_cap(p: &Polytope, h: f64, cap: usize) -> Result<Mesh> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidMeshParameter(h));
    }
    match p.dim() {
        1 => mesh_1d(p, h, cap),
        _ => mesh_2d(p, h, cap),
    }
}

fn steps(extent: f64, h: f64) -> usize {
    ((extent / h) - 1e-9).ceil().max(1.0) as usize
}

fn mesh_1d(p: &Polytope, h: f64, cap: usize) -> Result<Mesh> {
    let (a, b) = (p.vertices()[0][0], p.vertices()[1][0]);
    let n = steps(b - a, h);
    if n + 1 > cap {
        return Err(Error::MeshTooFine {
            vertices: n + 1,
            cap,
        });
    }
    let coords: Vec<f64> = (0..=n)
        .map(|i| {
            if i == n {
                b
            } else {
                a + (b - a) * i as f64 / n as f64
            }
        })
        .collect();
    let cells: Vec<usize> = (0..n).flat_map(|i| [i, i + 1]).collect();
    let mut vertex_facets = vec![Vec::new(); n + 1];
    for k in 0..p.facets().len() {
        let v = p.facet_vertices(k)[0];
        vertex_facets[if v == 0 { 0 } else { n }].push(k);
    }
    let neighbors = (0..=n)
        .map(|i| {
            let mut v = Vec::new();
            if i > 0 {
                v.push(i - 1);
            }
            if i < n {
                v.push(i + 1);
            }
            v
        })
        .collect();
    let mut lumped_mass = vec![0.0; n + 1];
    for i in 0..n {
        let len = coords[i + 1] - coords[i];
        lumped_mass[i] += 0.5 * len;
        lumped_mass[i + 1] += 0.5 * len;
    }
    Ok(Mesh {
        polytope: p.clone(),
        h,
        dim: 1,
        coords,
        cells,
        interior_edges: Vec::new(),
        boundary_edges: Vec::new(),
        vertex_facets,
        neighbors,
        lumped_mass,
        locator: Locator {
            origin: [a, 0.0],
            step: [b - a, 1.0],
            shape: [1, 1],
            buckets: vec![(0..n).collect()],
        },
    })
}

struct VertexPool {
    quantum: f64,
    map: HashMap<(i64, i64), usize>,
    coords: Vec<[f64; 2]>,
}

impl VertexPool {
    fn id(&mut self, p: [f64; 2]) -> usize {
        let key = (
            (p[0] / self.quantum).round() as i64,
            (p[1] / self.quantum).round() as i64,
        );
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(&id) = self.map.get(&(key.0 + dx, key.1 + dy)) {
                    let q = self.coords[id];
                    if (q[0] - p[0]).abs() <= self.quantum && (q[1] - p[1]).abs() <= self.quantum {
                        return id;
                    }
                }
            }
        }
        let id = self.coords.len();
        self.coords.push(p);
        self.map.insert(key, id);
        id
    }
}

fn mesh_2d(p: &Polytope, h: f64, cap: usize) -> Result<Mesh> {
    let verts = p.vertices();
    let lo = [
        verts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min),
        verts.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min),
    ];
    let hi = [
        verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max),
        verts.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max),
    ];
    let (nx, ny) = (steps(hi[0] - lo[0], h), steps(hi[1] - lo[1], h));
    if (nx + 1) * (ny + 1) > cap {
        return Err(Error::MeshTooFine {
            vertices: (nx + 1) * (ny + 1),
            cap,
        });
    }
    let grid = |i: usize, j: usize| {
        [
            if i == nx { hi[0] } else { lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64 },
            if j == ny { hi[1] } else { lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64 },
        ]
    };
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let mut pool = VertexPool {
        quantum: 1e-10 * scale,
        map: HashMap::new(),
        coords: Vec::new(),
    };
    let min_area = 1e-12 * h * h;
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p01, p11) = (grid(i, j), grid(i + 1, j), grid(i, j + 1), grid(i + 1, j + 1));
            for tri in [[p00, p10, p01], [p10, p11, p01]] {
                let mut poly = tri.to_vec();
                for f in p.facets() {
                    poly = clip_polygon(&poly, [f.normal[0], f.normal[1]], f.offset);
                    if poly.len() < 3 {
                        break;
                    }
                }
                if poly.len() < 3 {
                    continue;
                }
                let mut ids: Vec<usize> = poly.iter().map(|&q| pool.id(q)).collect();
                ids.dedup();
                while ids.len() > 1 && ids.first() == ids.last() {
                    ids.pop();
                }
                if ids.len() < 3 {
                    continue;
                }
                for w in ids[1..].windows(2) {
                    let t = [ids[0], w[0], w[1]];
                    let (a, b, c) = (pool.coords[t[0]], pool.coords[t[1]], pool.coords[t[2]]);
                    let area = 0.5 * cross2(sub(b, a), sub(c, a));
                    if area > min_area {
                        tris.push(t);
                    } else if area < -min_area {
                        tris.push([t[0], t[2], t[1]]);
                    }
                }
            }
        }
    }
    let coords = pool.coords;
    let nv = coords.len();
    if nv > cap {
        return Err(Error::MeshTooFine { vertices: nv, cap });
    }

    // Edge -> incident (triangle, apex).
    let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in &tris {
        for k in 0..3 {
            let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(c);
        }
    }
    let facet_tol = 1e-9 * scale;
    let vertex_facets: Vec<Vec<usize>> = coords
        .iter()
        .map(|q| {
            (0..p.facets().len())
                .filter(|&k| {
                    let f = &p.facets()[k];
                    (f.delta(q) / f.norm()).abs() <= facet_tol
                })
                .collect()
        })
        .collect();
    let mut interior_edges = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut neighbors = vec![Vec::new(); nv];
    for (&(a, b), apexes) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
        match apexes.as_slice() {
            [c, d] => interior_edges.push(InteriorEdge { a, b, c: *c, d: *d }),
            [_] => {
                let facet = vertex_facets[a]
                    .iter()
                    .copied()
                    .find(|k| vertex_facets[b].contains(k))
                    .ok_or_else(|| {
                        Error::InvalidPolytope(format!(
                            "mesh edge {:?}-{:?} is exposed but not on a facet",
                            coords[a], coords[b]
                        ))
                    })?;
                boundary_edges.push(BoundaryEdge { a, b, facet });
            }
            _ => {
                return Err(Error::InvalidPolytope(
                    "non-manifold mesh edge".to_string(),
                ))
            }
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    let mut lumped_mass = vec![0.0; nv];
    for t in &tris {
        let (a, b, c) = (coords[t[0]], coords[t[1]], coords[t[2]]);
        let area = 0.5 * cross2(sub(b, a), sub(c, a));
        for &v in t {
            lumped_mass[v] += area / 3.0;
        }
    }

    let step = [(hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64];
    let mut buckets = vec![Vec::new(); nx * ny];
    for (ti, t) in tris.iter().enumerate() {
        let xs = t.map(|v| coords[v][0]);
        let ys = t.map(|v| coords[v][1]);
        let bx0 = (((xs.iter().copied().fold(f64::INFINITY, f64::min) - lo[0]) / step[0]).floor() as i64)
            .clamp(0, nx as i64 - 1) as usize;
        let bx1 = (((xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo[0]) / step[0]).floor() as i64)
            .clamp(0, nx as i64 - 1) as usize;
        let by0 = (((ys.iter().copied().fold(f64::INFINITY, f64::min) - lo[1]) / step[1]).floor() as i64)
            .clamp(0, ny as i64 - 1) as usize;
        let by1 = (((ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo[1]) / step[1]).floor() as i64)
            .clamp(0, ny as i64 - 1) as usize;
        for by in by0..=by1 {
            for bx in bx0..=bx1 {
                buckets[by * nx + bx].push(ti);
            }
        }
    }

    Ok(Mesh {
        polytope: p.clone(),
        h,
        dim: 2,
        coords: coords.iter().flat_map(|q| [q[0], q[1]]).collect(),
        cells: tris.iter().flat_map(|t| *t).collect(),
        interior_edges,
        boundary_edges,
        vertex_facets,
        neighbors,
        lumped_mass,
        locator: Locator {
            origin: lo,
            step,
            shape: [nx, ny],
            buckets,
        },
    })
}
