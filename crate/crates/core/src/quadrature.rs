//! Quadrature on polytopes: polynomial-exact simplex rules for smooth
//! integrands and geometrically graded rules for integrands with logarithmic
//! singularities along the boundary.
//!
//! Simplex rules use the collapsed (Duffy) map of a tensor Gauss-Legendre
//! rule. Point order is fixed by the polytope's vertex and facet order, so
//! sums are bit-reproducible.

use crate::polytope::{cross2, sub, BoundaryPiece, Polytope, Region};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Number of Gauss points per direction making a rule exact to `degree`.
pub(crate) fn points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// Polynomial exactness and uniform refinement of the simplicial rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureScheme {
    pub degree: usize,
    /// Each simplex is split into `subdivisions^n` congruent pieces.
    pub subdivisions: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self {
            degree: 6,
            subdivisions: 1,
        }
    }
}

impl QuadratureScheme {
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            subdivisions: 1,
        }
    }

    pub fn with_subdivisions(mut self, s: usize) -> Self {
        self.subdivisions = s.max(1);
        self
    }
}

/// Geometric refinement toward every facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedScheme {
    pub layers: usize,
    pub degree: usize,
}

impl Default for GradedScheme {
    fn default() -> Self {
        Self {
            layers: 40,
            degree: 6,
        }
    }
}

/// Interior rule: flat points with stride `dim`.
#[derive(Debug, Clone, Default)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Like [`integrate`](Self::integrate) but stops at the first error.
    pub fn try_integrate<E>(
        &self,
        mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    ) -> Result<f64, E> {
        let mut acc = 0.0;
        for (x, w) in self.iter() {
            acc += w * f(x)?;
        }
        Ok(acc)
    }

    fn push(&mut self, x: &[f64], w: f64) {
        self.points.extend_from_slice(x);
        self.weights.push(w);
    }

    pub fn append(&mut self, other: &QuadratureRule) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend_from_slice(&other.weights);
    }

    /// Rule on a convex region (fan triangulation from the first vertex).
    pub fn for_region(region: &Region, scheme: QuadratureScheme) -> Self {
        let mut rule;
        match region {
            Region::Interval(a, b) => {
                rule = Self::empty(1);
                push_interval(&mut rule, *a, *b, scheme);
            }
            Region::Polygon(p) => {
                rule = Self::empty(2);
                for w in p[1..].windows(2) {
                    push_triangle(&mut rule, p[0], w[0], w[1], scheme);
                }
            }
        }
        rule
    }

    pub fn for_triangle(a: [f64; 2], b: [f64; 2], c: [f64; 2], scheme: QuadratureScheme) -> Self {
        let mut rule = Self::empty(2);
        push_triangle(&mut rule, a, b, c, scheme);
        rule
    }

    pub fn for_polytope(p: &Polytope, scheme: QuadratureScheme) -> Self {
        Self::for_region(&p.region(), scheme)
    }

    /// Rule refined geometrically toward every facet.
    pub fn graded(p: &Polytope, scheme: GradedScheme) -> Self {
        let m = points_for(scheme.degree);
        let (gx, gw) = gauss_legendre(m);
        match p.dim() {
            1 => {
                let mut rule = Self::empty(1);
                let (a, b) = (p.vertices()[0][0], p.vertices()[1][0]);
                for (lo, hi) in two_sided_cells(scheme.layers) {
                    for (x, w) in gx.iter().zip(&gw) {
                        let t = lo + (hi - lo) * x;
                        rule.push(&[a + (b - a) * t], (b - a) * (hi - lo) * w);
                    }
                }
                rule
            }
            _ => {
                let mut rule = Self::empty(2);
                let c = p.center_of_mass();
                let c = [c[0], c[1]];
                let s_cells = one_sided_cells(scheme.layers);
                let t_cells = two_sided_cells(scheme.layers);
                for k in 0..p.facets().len() {
                    let (va, vb) = p.facet_segment(k);
                    let (va, vb) = ([va[0], va[1]], [vb[0], vb[1]]);
                    let jac = cross2(sub(va, c), sub(vb, c)).abs();
                    for &(s0, s1) in &s_cells {
                        for (xs, ws) in gx.iter().zip(&gw) {
                            let s = s0 + (s1 - s0) * xs;
                            for &(t0, t1) in &t_cells {
                                for (xt, wt) in gx.iter().zip(&gw) {
                                    let t = t0 + (t1 - t0) * xt;
                                    let e = [
                                        (1.0 - t) * va[0] + t * vb[0],
                                        (1.0 - t) * va[1] + t * vb[1],
                                    ];
                                    let x = [c[0] + s * (e[0] - c[0]), c[1] + s * (e[1] - c[1])];
                                    rule.push(&x, jac * s * (s1 - s0) * ws * (t1 - t0) * wt);
                                }
                            }
                        }
                    }
                }
                rule
            }
        }
    }
}

fn push_interval(rule: &mut QuadratureRule, a: f64, b: f64, scheme: QuadratureScheme) {
    let (gx, gw) = gauss_legendre(points_for(scheme.degree));
    let s = scheme.subdivisions.max(1);
    let h = (b - a) / s as f64;
    for i in 0..s {
        let lo = a + h * i as f64;
        for (x, w) in gx.iter().zip(&gw) {
            rule.push(&[lo + h * x], h * w);
        }
    }
}

fn push_triangle(
    rule: &mut QuadratureRule,
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    scheme: QuadratureScheme,
) {
    let s = scheme.subdivisions.max(1);
    if s == 1 {
        push_duffy(rule, a, b, c, scheme.degree);
        return;
    }
    let node = |i: usize, j: usize| {
        let (u, v) = (i as f64 / s as f64, j as f64 / s as f64);
        [
            a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
            a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
        ]
    };
    for j in 0..s {
        for i in 0..(s - j) {
            push_duffy(rule, node(i, j), node(i + 1, j), node(i, j + 1), scheme.degree);
            if i + j + 1 < s {
                push_duffy(
                    rule,
                    node(i + 1, j),
                    node(i + 1, j + 1),
                    node(i, j + 1),
                    scheme.degree,
                );
            }
        }
    }
}

/// Collapsed tensor rule exact for polynomials of total degree `degree`.
fn push_duffy(rule: &mut QuadratureRule, a: [f64; 2], b: [f64; 2], c: [f64; 2], degree: usize) {
    let (gu, wu) = gauss_legendre(points_for(degree + 1));
    let (gv, wv) = gauss_legendre(points_for(degree));
    let area2 = cross2(sub(b, a), sub(c, a)).abs();
    for (u, w1) in gu.iter().zip(&wu) {
        for (v, w2) in gv.iter().zip(&wv) {
            let (xi, eta) = (u * (1.0 - v), u * v);
            let x = [
                a[0] + xi * (b[0] - a[0]) + eta * (c[0] - a[0]),
                a[1] + xi * (b[1] - a[1]) + eta * (c[1] - a[1]),
            ];
            rule.push(&x, area2 * u * w1 * w2);
        }
    }
}

/// `[0,1]` split geometrically toward both endpoints.
fn two_sided_cells(layers: usize) -> Vec<(f64, f64)> {
    let mut left: Vec<(f64, f64)> = one_sided_cells(layers)
        .into_iter()
        .map(|(a, b)| (0.5 * (1.0 - b), 0.5 * (1.0 - a)))
        .collect();
    left.reverse();
    let right = one_sided_cells(layers)
        .into_iter()
        .map(|(a, b)| (0.5 + 0.5 * a, 0.5 + 0.5 * b));
    left.extend(right);
    left
}

/// `[0,1]` split with ratio 1/2 toward 1: `[0,1/2], [1/2,3/4], ...`.
fn one_sided_cells(layers: usize) -> Vec<(f64, f64)> {
    let mut cells = Vec::with_capacity(layers + 1);
    let mut lo = 0.0;
    let mut gap = 1.0;
    for _ in 0..layers {
        gap *= 0.5;
        let hi = 1.0 - gap;
        cells.push((lo, hi));
        lo = hi;
    }
    cells.push((lo, 1.0));
    cells
}

/// Boundary rule; weights include the boundary-measure density of each facet.
#[derive(Debug, Clone, Default)]
pub struct BoundaryRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    facets: Vec<usize>,
}

impl BoundaryRule {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64], f64)> {
        self.facets
            .iter()
            .copied()
            .zip(self.points.chunks_exact(self.dim))
            .zip(self.weights.iter().copied())
            .map(|((k, x), w)| (k, x, w))
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(_, x, w)| w * f(x)).sum()
    }

    pub fn try_integrate<E>(
        &self,
        mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    ) -> Result<f64, E> {
        let mut acc = 0.0;
        for (_, x, w) in self.iter() {
            acc += w * f(x)?;
        }
        Ok(acc)
    }

    /// Integrand that may depend on the facet the point lies on.
    pub fn integrate_by_facet(&self, mut f: impl FnMut(usize, &[f64]) -> f64) -> f64 {
        self.iter().map(|(k, x, w)| w * f(k, x)).sum()
    }

    fn push(&mut self, k: usize, x: &[f64], w: f64) {
        self.facets.push(k);
        self.points.extend_from_slice(x);
        self.weights.push(w);
    }

    /// Rule over the given pieces; `facet_weights[k]` scales facet `k`.
    pub fn for_pieces(
        dim: usize,
        pieces: &[BoundaryPiece],
        facet_weights: &[f64],
        scheme: QuadratureScheme,
    ) -> Self {
        let mut rule = Self::empty(dim);
        let (gx, gw) = gauss_legendre(points_for(scheme.degree));
        let s = scheme.subdivisions.max(1);
        for piece in pieces {
            let sw = facet_weights[piece.facet];
            if dim == 1 {
                rule.push(piece.facet, &piece.start, sw);
                continue;
            }
            let len = piece.length();
            for i in 0..s {
                for (x, w) in gx.iter().zip(&gw) {
                    let t = (i as f64 + x) / s as f64;
                    let p: Vec<f64> = piece
                        .start
                        .iter()
                        .zip(&piece.end)
                        .map(|(a, b)| a + t * (b - a))
                        .collect();
                    rule.push(piece.facet, &p, sw * len * w / s as f64);
                }
            }
        }
        rule
    }

    pub fn for_polytope(p: &Polytope, scheme: QuadratureScheme) -> Self {
        Self::for_pieces(p.dim(), &p.boundary_pieces(), p.boundary_weights(), scheme)
    }

    /// Boundary rule refined geometrically toward facet endpoints.
    pub fn graded(p: &Polytope, scheme: GradedScheme) -> Self {
        if p.dim() == 1 {
            return Self::for_polytope(p, QuadratureScheme::new(1));
        }
        let mut rule = Self::empty(2);
        let (gx, gw) = gauss_legendre(points_for(scheme.degree));
        for piece in p.boundary_pieces() {
            let sw = p.boundary_weights()[piece.facet];
            let len = piece.length();
            for (t0, t1) in two_sided_cells(scheme.layers) {
                for (x, w) in gx.iter().zip(&gw) {
                    let t = t0 + (t1 - t0) * x;
                    let q = [
                        piece.start[0] + t * (piece.end[0] - piece.start[0]),
                        piece.start[1] + t * (piece.end[1] - piece.start[1]),
                    ];
                    rule.push(piece.facet, &q, sw * len * (t1 - t0) * w);
                }
            }
        }
        rule
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::Facet;

    fn simplex() -> Polytope {
        Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, -1.0], -1.0),
        ])
        .unwrap()
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn gauss_weights_sum_to_one() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn simplex_moments_exact_to_degree() {
        let s = simplex();
        for degree in [2usize, 4, 6, 9] {
            let rule = QuadratureRule::for_polytope(&s, QuadratureScheme::new(degree));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    // int_T x^a y^b = a! b! / (a + b + 2)!
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let got = rule.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
                    assert!(
                        ((got - exact) / exact).abs() <= 1e-12,
                        "degree {degree} monomial ({a},{b}): {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn subdivided_rule_is_still_exact() {
        let s = simplex();
        let rule =
            QuadratureRule::for_polytope(&s, QuadratureScheme::new(4).with_subdivisions(3));
        let got = rule.integrate(|x| x[0] * x[0] * x[1] * x[1]);
        assert!((got - 4.0 / 720.0).abs() < 1e-15);
    }

    #[test]
    fn graded_rule_integrates_log_singularity() {
        let interval =
            Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap();
        let rule = QuadratureRule::graded(&interval, GradedScheme::default());
        let got = rule.integrate(|x| {
            let t = x[0];
            t * t.ln() + (1.0 - t) * (1.0 - t).ln()
        });
        assert!((got + 0.5).abs() < 1e-8, "{got}");
        let got = rule.integrate(|x| x[0].ln());
        assert!((got + 1.0).abs() < 1e-7, "{got}");
    }

    #[test]
    fn graded_rule_area_and_boundary() {
        let s = simplex();
        let rule = QuadratureRule::graded(&s, GradedScheme::default());
        assert!((rule.integrate(|_| 1.0) - 0.5).abs() < 1e-13);
        let b = BoundaryRule::graded(&s, GradedScheme::default());
        assert!((b.integrate(|_| 1.0) - 3.0).abs() < 1e-13);
    }
}
