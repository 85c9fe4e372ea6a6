//! Bounded convex polytopes in facet form, `{x : h_k(x) - c_k > 0}`, for
//! dimensions 1 and 2.
//!
//! Each facet carries the boundary-measure weight `1/|h_k|`: on the facet
//! `{h_k = c_k}` the boundary measure is Euclidean surface measure divided by
//! the norm of the stored normal. Normals are kept exactly as given.

use crate::error::{Error, Result};

/// Feasibility slack used when filtering vertices and redundant facets.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// One defining inequality `normal . x - offset > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Facet {
    pub fn new(normal: impl Into<Vec<f64>>, offset: f64) -> Self {
        Self {
            normal: normal.into(),
            offset,
        }
    }

    /// The affine defining function `delta(x) = h(x) - c`.
    #[inline]
    pub fn delta(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    pub fn norm(&self) -> f64 {
        self.normal.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Polytope {
    dim: usize,
    name: Option<String>,
    facets: Vec<Facet>,
    /// 1D: `[lo, hi]`. 2D: counter-clockwise.
    vertices: Vec<Vec<f64>>,
    /// Indices into `vertices`; 2D edges run counter-clockwise from `[0]` to `[1]`.
    facet_vertices: Vec<[usize; 2]>,
    weights: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

impl Polytope {
    /// Builds a polytope from its defining inequalities, computing vertices
    /// and dropping redundant facets.
    pub fn new(facets: Vec<Facet>) -> Result<Self> {
        let first = facets
            .first()
            .ok_or_else(|| Error::InvalidPolytope("facet list is empty".into()))?;
        let dim = first.normal.len();
        for f in &facets {
            if f.normal.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.normal.len(),
                });
            }
            if !f.offset.is_finite() || f.normal.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPolytope("non-finite facet data".into()));
            }
        }
        match dim {
            1 => Self::build_1d(facets),
            2 => Self::build_2d(facets),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    fn build_1d(facets: Vec<Facet>) -> Result<Self> {
        let mut lo: Option<(f64, usize)> = None;
        let mut hi: Option<(f64, usize)> = None;
        for (k, f) in facets.iter().enumerate() {
            let a = f.normal[0];
            if a == 0.0 {
                if f.offset >= 0.0 {
                    return Err(Error::EmptyInterior);
                }
                continue;
            }
            let b = f.offset / a;
            if a > 0.0 {
                if lo.is_none_or(|(v, _)| b > v + FEASIBILITY_TOL * (1.0 + v.abs())) {
                    lo = Some((b, k));
                }
            } else if hi.is_none_or(|(v, _)| b < v - FEASIBILITY_TOL * (1.0 + v.abs())) {
                hi = Some((b, k));
            }
        }
        let (lo, klo) = lo.ok_or(Error::UnboundedDomain(vec![-1.0]))?;
        let (hi, khi) = hi.ok_or(Error::UnboundedDomain(vec![1.0]))?;
        if hi - lo <= FEASIBILITY_TOL * (1.0 + lo.abs().max(hi.abs())) {
            return Err(Error::EmptyInterior);
        }
        let mut kept = Vec::new();
        let mut facet_vertices = Vec::new();
        for (k, f) in facets.into_iter().enumerate() {
            if k == klo {
                kept.push(f);
                facet_vertices.push([0, 0]);
            } else if k == khi {
                kept.push(f);
                facet_vertices.push([1, 1]);
            }
        }
        let weights = kept.iter().map(|f| 1.0 / f.norm()).collect();
        Ok(Self {
            dim: 1,
            name: None,
            facets: kept,
            vertices: vec![vec![lo], vec![hi]],
            facet_vertices,
            weights,
        })
    }

    fn build_2d(facets: Vec<Facet>) -> Result<Self> {
        for f in &facets {
            if f.norm() == 0.0 && f.offset >= 0.0 {
                return Err(Error::EmptyInterior);
            }
        }
        let facets: Vec<Facet> = facets.into_iter().filter(|f| f.norm() > 0.0).collect();
        if let Some(d) = recession_direction(&facets) {
            return Err(Error::UnboundedDomain(d.to_vec()));
        }
        let scale = facets
            .iter()
            .map(|f| (f.offset / f.norm()).abs())
            .fold(1.0, f64::max);
        let tol = FEASIBILITY_TOL * scale;
        let feasible = |x: &[f64]| facets.iter().all(|f| f.delta(x) / f.norm() >= -tol);

        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..facets.len() {
            for j in (i + 1)..facets.len() {
                let (a, b) = (&facets[i], &facets[j]);
                let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
                if det.abs() <= 1e-14 * a.norm() * b.norm() {
                    continue;
                }
                let x = (a.offset * b.normal[1] - a.normal[1] * b.offset) / det;
                let y = (a.normal[0] * b.offset - a.offset * b.normal[0]) / det;
                let p = [x, y];
                if feasible(&p) && !pts.iter().any(|q| dist2(*q, p) <= 1e-9 * scale) {
                    pts.push(p);
                }
            }
        }
        if pts.len() < 3 {
            return Err(Error::EmptyInterior);
        }
        let n = pts.len() as f64;
        let mean = [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        pts.sort_by(|p, q| {
            let ap = (p[1] - mean[1]).atan2(p[0] - mean[0]);
            let aq = (q[1] - mean[1]).atan2(q[0] - mean[0]);
            ap.total_cmp(&aq)
        });
        if polygon_area(&pts) <= 1e-14 * scale * scale {
            return Err(Error::EmptyInterior);
        }

        // Keep facets that carry an edge; identical hyperplanes keep the first.
        let mut kept: Vec<Facet> = Vec::new();
        let mut facet_vertices = Vec::new();
        for f in facets {
            let on: Vec<usize> = (0..pts.len())
                .filter(|&v| (f.delta(&pts[v]) / f.norm()).abs() <= tol.max(1e-9 * scale))
                .collect();
            if on.len() < 2 {
                continue;
            }
            let m = pts.len();
            let edge = on.iter().find_map(|&v| {
                let w = (v + 1) % m;
                on.contains(&w).then_some([v, w])
            });
            let Some(edge) = edge else { continue };
            if facet_vertices.contains(&edge) {
                continue;
            }
            kept.push(f);
            facet_vertices.push(edge);
        }
        let weights = kept.iter().map(|f| 1.0 / f.norm()).collect();
        Ok(Self {
            dim: 2,
            name: None,
            facets: kept,
            vertices: pts.into_iter().map(|p| p.to_vec()).collect(),
            facet_vertices,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// Boundary-measure density of each facet relative to Euclidean measure.
    pub fn boundary_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Replaces the boundary weights, e.g. to audit sensitivity to the
    /// boundary-measure convention.
    pub fn with_boundary_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.facets.len() {
            return Err(Error::DimensionMismatch {
                expected: self.facets.len(),
                got: weights.len(),
            });
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn facet_vertices(&self, k: usize) -> [usize; 2] {
        self.facet_vertices[k]
    }

    /// Endpoints of facet `k` (a single point in 1D).
    pub fn facet_segment(&self, k: usize) -> (&[f64], &[f64]) {
        let [a, b] = self.facet_vertices[k];
        (&self.vertices[a], &self.vertices[b])
    }

    /// The 2D vertices as fixed-size points, counter-clockwise.
    pub(crate) fn polygon(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(|v| [v[0], v[1]]).collect()
    }

    pub fn deltas(&self, x: &[f64]) -> Vec<f64> {
        self.facets.iter().map(|f| f.delta(x)).collect()
    }

    /// Whether `x` is in the open polytope.
    pub fn contains_open(&self, x: &[f64]) -> bool {
        self.facets.iter().all(|f| f.delta(x) > 0.0)
    }

    /// Euclidean distance from `x` to the boundary (negative outside).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.facets
            .iter()
            .map(|f| f.delta(x) / f.norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        match self.dim {
            1 => self.vertices[1][0] - self.vertices[0][0],
            _ => polygon_area(&self.polygon()),
        }
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                d = d.max(s.sqrt());
            }
        }
        d
    }

    /// Vertex average; a strictly interior point.
    pub fn vertex_mean(&self) -> Vec<f64> {
        let n = self.vertices.len() as f64;
        (0..self.dim)
            .map(|i| self.vertices.iter().map(|v| v[i]).sum::<f64>() / n)
            .collect()
    }

    /// `(int x dmu) / Vol`.
    pub fn center_of_mass(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![0.5 * (self.vertices[0][0] + self.vertices[1][0])],
            _ => {
                let poly = self.polygon();
                let o = poly[0];
                let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
                for w in poly[1..].windows(2) {
                    let a = 0.5 * cross2(sub(w[0], o), sub(w[1], o));
                    area += a;
                    cx += a * (o[0] + w[0][0] + w[1][0]) / 3.0;
                    cy += a * (o[1] + w[0][1] + w[1][1]) / 3.0;
                }
                vec![cx / area, cy / area]
            }
        }
    }

    /// Facets meeting at vertex `v` (within the feasibility tolerance).
    pub fn incident_facets(&self, v: usize) -> Vec<usize> {
        let x = &self.vertices[v];
        let scale = 1.0 + x.iter().map(|c| c.abs()).fold(0.0, f64::max);
        (0..self.facets.len())
            .filter(|&k| {
                (self.facets[k].delta(x) / self.facets[k].norm()).abs() <= 1e-9 * scale
            })
            .collect()
    }

    /// Lattice smoothness test: at every vertex exactly `n` facets meet and
    /// their normals form a basis of `Z^n`.
    pub fn is_delzant(&self) -> Result<bool> {
        for (k, f) in self.facets.iter().enumerate() {
            if f.normal.iter().any(|v| (v - v.round()).abs() > 1e-12) {
                return Err(Error::NonIntegerNormals(k));
            }
        }
        for v in 0..self.vertices.len() {
            let inc = self.incident_facets(v);
            if inc.len() != self.dim {
                return Ok(false);
            }
            let det = match self.dim {
                1 => self.facets[inc[0]].normal[0],
                _ => {
                    let (a, b) = (&self.facets[inc[0]].normal, &self.facets[inc[1]].normal);
                    a[0] * b[1] - a[1] * b[0]
                }
            };
            if det.round().abs() != 1.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Preimage of the polytope under `x = T y + t` (`matrix` row-major).
    pub fn pullback(&self, matrix: &[f64], shift: &[f64]) -> Result<Polytope> {
        let n = self.dim;
        if matrix.len() != n * n || shift.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: matrix.len(),
            });
        }
        let facets = self
            .facets
            .iter()
            .map(|f| {
                let normal: Vec<f64> = (0..n)
                    .map(|j| (0..n).map(|i| f.normal[i] * matrix[i * n + j]).sum())
                    .collect();
                Facet::new(normal, f.offset - dot(&f.normal, shift))
            })
            .collect();
        Polytope::new(facets)
    }

    /// Whole polytope as a convex region.
    pub fn region(&self) -> Region {
        match self.dim {
            1 => Region::Interval(self.vertices[0][0], self.vertices[1][0]),
            _ => Region::Polygon(self.polygon()),
        }
    }

    /// Facets as boundary pieces, in facet order.
    pub fn boundary_pieces(&self) -> Vec<BoundaryPiece> {
        (0..self.facets.len())
            .map(|k| {
                let (a, b) = self.facet_segment(k);
                BoundaryPiece {
                    facet: k,
                    start: a.to_vec(),
                    end: b.to_vec(),
                }
            })
            .collect()
    }
}

fn recession_direction(facets: &[Facet]) -> Option<[f64; 2]> {
    if facets.is_empty() {
        return Some([1.0, 0.0]);
    }
    for f in facets {
        let perp = [-f.normal[1], f.normal[0]];
        for d in [perp, [-perp[0], -perp[1]]] {
            let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if facets
                .iter()
                .all(|g| dot(&g.normal, &d) / (g.norm() * dn) >= -1e-12)
            {
                return Some([d[0] / dn, d[1] / dn]);
            }
        }
    }
    None
}

#[inline]
pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| cross2(p[i], p[(i + 1) % n])).sum::<f64>()
}

/// A convex integration region: an interval or a convex polygon (CCW).
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Interval(f64, f64),
    Polygon(Vec<[f64; 2]>),
}

impl Region {
    pub fn measure(&self) -> f64 {
        match self {
            Region::Interval(a, b) => b - a,
            Region::Polygon(p) => polygon_area(p),
        }
    }

    /// Intersection with `{x : normal . x - offset >= 0}`; `None` when empty
    /// or of zero measure.
    pub fn clip(&self, normal: &[f64], offset: f64) -> Option<Region> {
        match self {
            Region::Interval(a, b) => {
                let s = normal[0];
                let (mut a, mut b) = (*a, *b);
                if s > 0.0 {
                    a = a.max(offset / s);
                } else if s < 0.0 {
                    b = b.min(offset / s);
                } else if offset > 0.0 {
                    return None;
                }
                (b - a > 1e-14 * (1.0 + a.abs().max(b.abs()))).then_some(Region::Interval(a, b))
            }
            Region::Polygon(p) => {
                let out = clip_polygon(p, [normal[0], normal[1]], offset);
                let scale = p
                    .iter()
                    .flat_map(|q| q.iter())
                    .fold(1.0f64, |m, v| m.max(v.abs()));
                (out.len() >= 3 && polygon_area(&out) > 1e-14 * scale * scale)
                    .then_some(Region::Polygon(out))
            }
        }
    }
}

/// Sutherland-Hodgman clip of a convex polygon by one half-plane.
pub(crate) fn clip_polygon(p: &[[f64; 2]], normal: [f64; 2], offset: f64) -> Vec<[f64; 2]> {
    let f = |q: [f64; 2]| normal[0] * q[0] + normal[1] * q[1] - offset;
    let n = p.len();
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n + 1);
    let push = |q: [f64; 2], out: &mut Vec<[f64; 2]>| {
        if out.last().is_none_or(|l| dist2(*l, q) > 1e-15) {
            out.push(q);
        }
    };
    for i in 0..n {
        let (a, b) = (p[i], p[(i + 1) % n]);
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            push(a, &mut out);
        }
        if (fa > 0.0 && fb < 0.0) || (fa < 0.0 && fb > 0.0) {
            let t = fa / (fa - fb);
            push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], &mut out);
        }
    }
    if out.len() > 1 && dist2(out[0], *out.last().unwrap()) <= 1e-15 {
        out.pop();
    }
    out
}

/// A portion of facet `facet`: a segment in 2D, a point (`start == end`) in 1D.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPiece {
    pub facet: usize,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl BoundaryPiece {
    pub fn length(&self) -> f64 {
        self.start
            .iter()
            .zip(&self.end)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Part of the piece where `normal . x - offset >= 0`.
    pub fn clip(&self, normal: &[f64], offset: f64) -> Option<BoundaryPiece> {
        let fa = dot(normal, &self.start) - offset;
        let fb = dot(normal, &self.end) - offset;
        if self.start.len() == 1 {
            return (fa >= 0.0).then(|| self.clone());
        }
        if fa >= 0.0 && fb >= 0.0 {
            return Some(self.clone());
        }
        if fa < 0.0 && fb < 0.0 {
            return None;
        }
        let t = fa / (fa - fb);
        let mid: Vec<f64> = self
            .start
            .iter()
            .zip(&self.end)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        let piece = if fa >= 0.0 {
            BoundaryPiece {
                facet: self.facet,
                start: self.start.clone(),
                end: mid,
            }
        } else {
            BoundaryPiece {
                facet: self.facet,
                start: mid,
                end: self.end.clone(),
            }
        };
        (piece.length() > 1e-14).then_some(piece)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn interval() -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap()
    }

    fn simplex() -> Polytope {
        Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, -1.0], -1.0),
        ])
        .unwrap()
    }

    fn square() -> Polytope {
        Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, 0.0], -1.0),
            Facet::new([0.0, -1.0], -1.0),
        ])
        .unwrap()
    }

    #[test]
    fn interval_vertices() {
        let p = interval();
        assert_eq!(p.vertices(), &[vec![0.0], vec![1.0]]);
        assert_eq!(p.boundary_weights(), &[1.0, 1.0]);
    }

    #[test]
    fn simplex_and_square_vertices() {
        let s = simplex();
        assert_eq!(s.vertices().len(), 3);
        assert!((s.volume() - 0.5).abs() < 1e-15);
        let q = square();
        assert_eq!(q.vertices().len(), 4);
        assert!((q.volume() - 1.0).abs() < 1e-15);
        let w = s.boundary_weights();
        assert!((w[2] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn redundant_facets_removed() {
        let p = Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, 0.0], -1.0),
            Facet::new([0.0, -1.0], -1.0),
            Facet::new([-1.0, -1.0], -3.0),
            Facet::new([2.0, 0.0], 0.0),
            // touches only the corner (1,1)
            Facet::new([-1.0, -1.0], -2.0),
        ])
        .unwrap();
        assert_eq!(p.facets().len(), 4);
        let q = Polytope::new(vec![
            Facet::new([1.0], 0.0),
            Facet::new([1.0], -3.0),
            Facet::new([-1.0], -1.0),
            Facet::new([-2.0], -5.0),
        ])
        .unwrap();
        assert_eq!(q.facets().len(), 2);
    }

    #[test]
    fn unbounded_and_empty() {
        let e = Polytope::new(vec![Facet::new([1.0, 0.0], 0.0), Facet::new([0.0, 1.0], 0.0)]);
        assert!(matches!(e, Err(Error::UnboundedDomain(_))));
        let e = Polytope::new(vec![Facet::new([1.0], 0.0)]);
        assert!(matches!(e, Err(Error::UnboundedDomain(_))));
        let e = Polytope::new(vec![Facet::new([1.0], 1.0), Facet::new([-1.0], -1.0)]);
        assert_eq!(e.unwrap_err(), Error::EmptyInterior);
        let e = Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, -1.0], 0.0),
        ]);
        assert_eq!(e.unwrap_err(), Error::EmptyInterior);
        assert!(matches!(
            Polytope::new(vec![Facet::new([1.0, 0.0, 0.0], 0.0)]),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(Polytope::new(vec![]).is_err());
    }

    #[test]
    fn delzant() {
        assert!(square().is_delzant().unwrap());
        assert!(simplex().is_delzant().unwrap());
        assert!(interval().is_delzant().unwrap());
        let t = Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, -2.0], -2.0),
        ])
        .unwrap();
        assert!(!t.is_delzant().unwrap());
        let h = Polytope::new(vec![Facet::new([0.5], 0.0), Facet::new([-1.0], -1.0)]).unwrap();
        assert_eq!(h.is_delzant().unwrap_err(), Error::NonIntegerNormals(0));
    }

    #[test]
    fn centers_of_mass() {
        assert_eq!(interval().center_of_mass(), vec![0.5]);
        let c = square().center_of_mass();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15);
        let c = simplex().center_of_mass();
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-15 && (c[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn centroid_strictly_inside() {
        for p in [interval(), square(), simplex()] {
            let c = p.center_of_mass();
            assert!(p.deltas(&c).iter().all(|d| *d > 0.0));
        }
    }

    #[test]
    fn region_clipping() {
        let r = square().region();
        let half = r.clip(&[-1.0, -1.0], -1.0).unwrap();
        assert!((half.measure() - 0.5).abs() < 1e-15);
        assert!(r.clip(&[1.0, 0.0], 2.0).is_none());
        let i = interval().region().clip(&[1.0], 0.25).unwrap();
        assert_eq!(i, Region::Interval(0.25, 1.0));
    }
}
