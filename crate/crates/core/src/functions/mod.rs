//! Convex functions on a polytope: affine, piecewise-linear (max of affine
//! pieces), smooth with analytic derivatives, and piecewise-linear
//! interpolants on a mesh.

mod mollify;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Polynomial, ScalarField, Sym};
use crate::mesh::Mesh;
use crate::polytope::{dot, BoundaryPiece, Polytope, Region};

pub use mollify::{dilate_mollify_approx, MollifiedApprox};

/// Minimum distance from a segment to the boundary accepted by
/// [`segment_ma_measure`].
pub const SEGMENT_BOUNDARY_TOL: f64 = 1e-9;

/// Relative slack in the mesh convexity test.
pub const CONVEXITY_SLACK: f64 = 1e-12;

/// `constant + gradient . x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFunc {
    pub constant: f64,
    pub gradient: Vec<f64>,
}

impl AffineFunc {
    pub fn new(constant: f64, gradient: impl Into<Vec<f64>>) -> Self {
        Self {
            constant,
            gradient: gradient.into(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(0.0, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + dot(&self.gradient, x)
    }

    pub fn sub(&self, o: &AffineFunc) -> AffineFunc {
        AffineFunc {
            constant: self.constant - o.constant,
            gradient: self
                .gradient
                .iter()
                .zip(&o.gradient)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, o: &AffineFunc) -> AffineFunc {
        self.sub(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AffineFunc {
        AffineFunc {
            constant: self.constant * s,
            gradient: self.gradient.iter().map(|g| g * s).collect(),
        }
    }

    /// Tangent plane form: the affine function with gradient `g` through `(x, v)`.
    pub fn through(x: &[f64], v: f64, g: Vec<f64>) -> AffineFunc {
        AffineFunc {
            constant: v - dot(&g, x),
            gradient: g,
        }
    }

    pub fn to_polynomial(&self) -> Polynomial {
        Polynomial::affine(self.constant, &self.gradient)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.gradient.iter().all(|g| *g == 0.0)
    }
}

impl ScalarField for AffineFunc {
    fn value(&self, x: &[f64]) -> f64 {
        AffineFunc::value(self, x)
    }

    fn polynomial_degree(&self) -> Option<usize> {
        Some(if self.gradient.iter().all(|g| *g == 0.0) { 0 } else { 1 })
    }
}

impl fmt::Display for AffineFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_polynomial())
    }
}

/// Maximum of finitely many affine pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlConvexFunc {
    pieces: Vec<AffineFunc>,
}

impl PlConvexFunc {
    pub fn new(pieces: Vec<AffineFunc>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::Parse("piecewise-linear function needs a piece".into()))?;
        let dim = first.dim();
        if let Some(bad) = pieces.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(Self { pieces })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn pieces(&self) -> &[AffineFunc] {
        &self.pieces
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of pieces attaining the maximum at `x` up to rounding.
    pub fn active(&self, x: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.pieces.iter().map(|p| p.value(x)).collect();
        let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = 1.0 + m.abs() + x.iter().map(|v| v.abs()).sum::<f64>();
        let tol = 1e-12 * scale;
        (0..vals.len()).filter(|&i| vals[i] >= m - tol).collect()
    }

    /// Regions where each piece is the (lowest-index) maximizer.
    fn cells(&self, p: &Polytope) -> Vec<(Region, AffineFunc)> {
        let mut out = Vec::new();
        'pieces: for (k, pk) in self.pieces.iter().enumerate() {
            let mut region = p.region();
            for (j, pj) in self.pieces.iter().enumerate() {
                if j == k {
                    continue;
                }
                let d = pk.sub(pj);
                if d.gradient.iter().all(|g| *g == 0.0) {
                    let tol = 1e-14 * (1.0 + pk.constant.abs());
                    if d.constant < -tol || (d.constant.abs() <= tol && j < k) {
                        continue 'pieces;
                    }
                    continue;
                }
                match region.clip(&d.gradient, -d.constant) {
                    Some(r) => region = r,
                    None => continue 'pieces,
                }
            }
            out.push((region, pk.clone()));
        }
        out
    }

    fn boundary(&self, p: &Polytope) -> Vec<(BoundaryPiece, AffineFunc)> {
        let mut out = Vec::new();
        for piece in p.boundary_pieces() {
            if p.dim() == 1 {
                let v = self.value(&piece.start);
                out.push((piece, AffineFunc::new(v, vec![0.0])));
                continue;
            }
            'pieces: for (k, pk) in self.pieces.iter().enumerate() {
                let mut seg = piece.clone();
                for (j, pj) in self.pieces.iter().enumerate() {
                    if j == k {
                        continue;
                    }
                    let d = pk.sub(pj);
                    let (fa, fb) = (d.value(&seg.start), d.value(&seg.end));
                    let tol = 1e-13 * (1.0 + pk.value(&seg.start).abs());
                    if fa.abs() <= tol && fb.abs() <= tol {
                        if j < k {
                            continue 'pieces;
                        }
                        continue;
                    }
                    match seg.clip(&d.gradient, -d.constant) {
                        Some(s) => seg = s,
                        None => continue 'pieces,
                    }
                }
                out.push((seg, pk.clone()));
            }
        }
        out
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
type HessianFn = Arc<dyn Fn(&[f64]) -> Result<Sym> + Send + Sync>;

/// Smooth convex function given by value, gradient and Hessian evaluators.
///
/// `boundary_singular` marks Guillemin-type behavior: the function differs
/// from the Guillemin potential by a smooth function, so its Hessian blows up
/// like `1/dist` at the boundary and integrals of `log det` need graded rules.
#[derive(Clone)]
pub struct SmoothConvexFunc {
    dim: usize,
    value: ValueFn,
    gradient: GradientFn,
    hessian: HessianFn,
    boundary_singular: bool,
}

impl fmt::Debug for SmoothConvexFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothConvexFunc")
            .field("dim", &self.dim)
            .field("boundary_singular", &self.boundary_singular)
            .finish()
    }
}

impl SmoothConvexFunc {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> Result<Sym> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            boundary_singular: false,
        }
    }

    pub fn with_boundary_singular(mut self, flag: bool) -> Self {
        self.boundary_singular = flag;
        self
    }

    pub fn from_polynomial(p: Polynomial) -> Self {
        let dim = p.dim;
        let grads: Vec<Polynomial> = (0..dim).map(|i| p.derivative(i)).collect();
        let hess: Vec<Polynomial> = if dim == 1 {
            vec![grads[0].derivative(0)]
        } else {
            vec![
                grads[0].derivative(0),
                grads[0].derivative(1),
                grads[1].derivative(1),
            ]
        };
        let p = Arc::new(p);
        let g = Arc::new(grads);
        let h = Arc::new(hess);
        Self::new(
            dim,
            move |x| Ok(p.eval(x)),
            move |x| Ok(g.iter().map(|q| q.eval(x)).collect()),
            move |x| {
                Ok(if h.len() == 1 {
                    Sym::one_d(h[0].eval(x))
                } else {
                    Sym::two_d(h[0].eval(x), h[1].eval(x), h[2].eval(x))
                })
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_boundary_singular(&self) -> bool {
        self.boundary_singular
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Sym> {
        (self.hessian)(x)
    }

    /// `self + l`.
    pub fn add_affine(&self, l: &AffineFunc) -> Self {
        let (v, g) = (self.value.clone(), self.gradient.clone());
        let (l1, l2) = (l.clone(), l.clone());
        Self {
            dim: self.dim,
            value: Arc::new(move |x| Ok(v(x)? + l1.value(x))),
            gradient: Arc::new(move |x| {
                Ok(g(x)?.iter().zip(&l2.gradient).map(|(a, b)| a + b).collect())
            }),
            hessian: self.hessian.clone(),
            boundary_singular: self.boundary_singular,
        }
    }

    /// `r * self`.
    pub fn scaled(&self, r: f64) -> Self {
        let (v, g, h) = (self.value.clone(), self.gradient.clone(), self.hessian.clone());
        Self {
            dim: self.dim,
            value: Arc::new(move |x| Ok(r * v(x)?)),
            gradient: Arc::new(move |x| Ok(g(x)?.iter().map(|a| r * a).collect())),
            hessian: Arc::new(move |x| Ok(h(x)?.scale(r))),
            boundary_singular: self.boundary_singular,
        }
    }

    /// `self + other`; singular if either summand is.
    pub fn plus(&self, other: &SmoothConvexFunc) -> Self {
        let (v1, g1, h1) = (self.value.clone(), self.gradient.clone(), self.hessian.clone());
        let (v2, g2, h2) = (other.value.clone(), other.gradient.clone(), other.hessian.clone());
        Self {
            dim: self.dim,
            value: Arc::new(move |x| Ok(v1(x)? + v2(x)?)),
            gradient: Arc::new(move |x| {
                Ok(g1(x)?.iter().zip(g2(x)?).map(|(a, b)| a + b).collect())
            }),
            hessian: Arc::new(move |x| Ok(h1(x)?.add(&h2(x)?))),
            boundary_singular: self.boundary_singular || other.boundary_singular,
        }
    }
}

/// Piecewise-linear interpolant of vertex values on a mesh.
#[derive(Debug, Clone)]
pub struct MeshConvexFunc {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    base_vertex: Option<usize>,
}

impl MeshConvexFunc {
    /// Checks discrete convexity across every interior edge.
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_vertices(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::EvaluationOutsideDomain(mesh.vertex(bad).to_vec()));
        }
        let f = Self {
            mesh,
            values,
            base_vertex: None,
        };
        if let Some((index, violation)) = f.worst_convexity_violation() {
            return Err(Error::NotConvex { index, violation });
        }
        Ok(f)
    }

    /// Wraps values already known to be normalized at `base` (for instance an
    /// LP optimum); convexity holds only up to the solver tolerance.
    pub(crate) fn from_normalized(mesh: Arc<Mesh>, values: Vec<f64>, base: usize) -> Self {
        Self {
            mesh,
            values,
            base_vertex: Some(base),
        }
    }

    /// Marks `base` as the normalization vertex; the values must vanish there
    /// and be nonnegative elsewhere.
    pub fn with_base_vertex(mut self, base: usize) -> Result<Self> {
        let ok = base < self.values.len()
            && !self.mesh.is_boundary_vertex(base)
            && self.values[base] == 0.0
            && self.values.iter().all(|v| *v >= 0.0);
        if !ok {
            let at = self.mesh.vertex(base.min(self.values.len() - 1)).to_vec();
            return Err(Error::InvalidBasePoint(at));
        }
        self.base_vertex = Some(base);
        Ok(self)
    }

    /// Samples `f` at the mesh vertices.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..mesh.num_vertices()).map(|i| f(mesh.vertex(i))).collect();
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Vertex at which the function was normalized, if any.
    pub fn base_vertex(&self) -> Option<usize> {
        self.base_vertex
    }

    pub fn is_normalized(&self) -> bool {
        self.base_vertex.is_some()
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// First convexity constraint violated beyond the slack, with its amount.
    pub fn worst_convexity_violation(&self) -> Option<(usize, f64)> {
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst: Option<(usize, f64)> = None;
        for (i, row) in self.mesh.convexity_constraints().iter().enumerate() {
            let s: f64 = row.iter().map(|(j, c)| c * self.values[*j]).sum();
            let mag: f64 = row.iter().map(|(_, c)| c.abs()).sum::<f64>() * scale;
            if s < -CONVEXITY_SLACK * mag && worst.is_none_or(|w| s < w.1) {
                worst = Some((i, s));
            }
        }
        worst
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let (t, bary) = self
            .mesh
            .locate(x)
            .ok_or_else(|| Error::EvaluationOutsideDomain(x.to_vec()))?;
        Ok(self
            .mesh
            .cell(t)
            .iter()
            .zip(bary)
            .map(|(&v, b)| b * self.values[v])
            .sum())
    }

    /// The affine function agreeing with the interpolant on cell `t`.
    pub fn cell_affine(&self, t: usize) -> AffineFunc {
        let g = self.mesh.cell_gradient(t, &self.values);
        let g = g[..self.mesh.dim()].to_vec();
        let v0 = self.mesh.cell(t)[0];
        AffineFunc::through(self.mesh.vertex(v0), self.values[v0], g)
    }

    fn cells(&self) -> Vec<(Region, AffineFunc)> {
        (0..self.mesh.num_cells())
            .map(|t| {
                let c = self.mesh.cell(t);
                let region = if self.mesh.dim() == 1 {
                    Region::Interval(self.mesh.vertex(c[0])[0], self.mesh.vertex(c[1])[0])
                } else {
                    Region::Polygon(c.iter().map(|&v| self.mesh.pt(v)).collect())
                };
                (region, self.cell_affine(t))
            })
            .collect()
    }

    fn boundary(&self) -> Vec<(BoundaryPiece, AffineFunc)> {
        let m = &self.mesh;
        if m.dim() == 1 {
            let mut out = Vec::new();
            for i in 0..m.num_vertices() {
                for &k in m.vertex_facets(i) {
                    let x = m.vertex(i).to_vec();
                    out.push((
                        BoundaryPiece {
                            facet: k,
                            start: x.clone(),
                            end: x,
                        },
                        AffineFunc::new(self.values[i], vec![0.0]),
                    ));
                }
            }
            return out;
        }
        m.boundary_edges()
            .iter()
            .map(|e| {
                let (pa, pb) = (m.vertex(e.a), m.vertex(e.b));
                let d = [pb[0] - pa[0], pb[1] - pa[1]];
                let l2 = d[0] * d[0] + d[1] * d[1];
                let slope = (self.values[e.b] - self.values[e.a]) / l2;
                let g = vec![slope * d[0], slope * d[1]];
                (
                    BoundaryPiece {
                        facet: e.facet,
                        start: pa.to_vec(),
                        end: pb.to_vec(),
                    },
                    AffineFunc::through(pa, self.values[e.a], g),
                )
            })
            .collect()
    }

    /// Cells containing vertex `v`.
    fn incident_cells(&self, v: usize) -> Vec<usize> {
        (0..self.mesh.num_cells())
            .filter(|&t| self.mesh.cell(t).contains(&v))
            .collect()
    }
}

/// How a function should be integrated.
#[derive(Debug, Clone)]
pub enum Layout {
    Affine(AffineFunc),
    /// Affine on each region; boundary pieces carry the trace.
    Pieces {
        cells: Vec<(Region, AffineFunc)>,
        boundary: Vec<(BoundaryPiece, AffineFunc)>,
    },
    Smooth { boundary_singular: bool },
}

/// Any of the supported convex function classes.
#[derive(Debug, Clone)]
pub enum ConvexFunc {
    Affine(AffineFunc),
    Pl(PlConvexFunc),
    Smooth(SmoothConvexFunc),
    Mesh(MeshConvexFunc),
}

impl From<AffineFunc> for ConvexFunc {
    fn from(f: AffineFunc) -> Self {
        ConvexFunc::Affine(f)
    }
}

impl From<PlConvexFunc> for ConvexFunc {
    fn from(f: PlConvexFunc) -> Self {
        ConvexFunc::Pl(f)
    }
}

impl From<SmoothConvexFunc> for ConvexFunc {
    fn from(f: SmoothConvexFunc) -> Self {
        ConvexFunc::Smooth(f)
    }
}

impl From<MeshConvexFunc> for ConvexFunc {
    fn from(f: MeshConvexFunc) -> Self {
        ConvexFunc::Mesh(f)
    }
}

impl ConvexFunc {
    pub fn dim(&self) -> usize {
        match self {
            ConvexFunc::Affine(f) => f.dim(),
            ConvexFunc::Pl(f) => f.dim(),
            ConvexFunc::Smooth(f) => f.dim(),
            ConvexFunc::Mesh(f) => f.dim(),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            ConvexFunc::Affine(f) => Ok(f.value(x)),
            ConvexFunc::Pl(f) => Ok(f.value(x)),
            ConvexFunc::Smooth(f) => f.value(x),
            ConvexFunc::Mesh(f) => f.value(x),
        }
    }

    /// Decomposition used for integration over `p`.
    pub fn layout(&self, p: &Polytope) -> Layout {
        match self {
            ConvexFunc::Affine(f) => Layout::Affine(f.clone()),
            ConvexFunc::Pl(f) => Layout::Pieces {
                cells: f.cells(p),
                boundary: f.boundary(p),
            },
            ConvexFunc::Smooth(f) => Layout::Smooth {
                boundary_singular: f.boundary_singular,
            },
            ConvexFunc::Mesh(f) => Layout::Pieces {
                cells: f.cells(),
                boundary: f.boundary(),
            },
        }
    }

    /// Unit-speed one-sided derivatives `w'(a+)`, `w'(b-)` of `w = u` on `[a, b]`.
    pub fn one_sided_slopes(&self, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
        let len = a
            .iter()
            .zip(b)
            .map(|(p, q)| (q - p) * (q - p))
            .sum::<f64>()
            .sqrt();
        let dir: Vec<f64> = a.iter().zip(b).map(|(p, q)| (q - p) / len).collect();
        let at = |s: f64| -> Vec<f64> { a.iter().zip(&dir).map(|(p, d)| p + s * d).collect() };
        match self {
            ConvexFunc::Affine(f) => {
                let s = dot(&f.gradient, &dir);
                Ok((s, s))
            }
            ConvexFunc::Pl(f) => {
                let slope = |i: usize| dot(&f.pieces[i].gradient, &dir);
                let right = f
                    .active(a)
                    .into_iter()
                    .map(slope)
                    .fold(f64::NEG_INFINITY, f64::max);
                let left = f
                    .active(b)
                    .into_iter()
                    .map(slope)
                    .fold(f64::INFINITY, f64::min);
                Ok((right, left))
            }
            ConvexFunc::Smooth(f) => {
                let h = (1e-4f64).min(len / 4.0);
                let w = |s: f64| f.value(&at(s));
                let (w0, w1) = (w(0.0)?, w(len)?);
                let fwd = |h: f64| -> Result<f64> { Ok((w(h)? - w0) / h) };
                let bwd = |h: f64| -> Result<f64> { Ok((w1 - w(len - h)?) / h) };
                let right = 2.0 * fwd(h / 2.0)? - fwd(h)?;
                let left = 2.0 * bwd(h / 2.0)? - bwd(h)?;
                Ok((right, left))
            }
            ConvexFunc::Mesh(f) => {
                let eta = 1e-7 * len;
                let slope_at = |x: Vec<f64>| -> Result<f64> {
                    let (t, _) = f
                        .mesh
                        .locate(&x)
                        .ok_or(Error::EvaluationOutsideDomain(x))?;
                    let g = f.cell_affine(t).gradient;
                    Ok(dot(&g, &dir))
                };
                Ok((slope_at(at(eta))?, slope_at(at(len - eta))?))
            }
        }
    }
}

/// The Guillemin potential `sum_k d_k log d_k` with `d_k = h_k . x - c_k`.
pub fn guillemin_potential(p: &Polytope) -> SmoothConvexFunc {
    let facets = Arc::new(p.facets().to_vec());
    let dim = p.dim();
    let (f1, f2, f3) = (facets.clone(), facets.clone(), facets);
    let value = move |x: &[f64]| -> Result<f64> {
        let mut s = 0.0;
        for f in f1.iter() {
            let d = f.delta(x);
            if d < 0.0 {
                return Err(Error::EvaluationOutsideDomain(x.to_vec()));
            }
            if d > 0.0 {
                s += d * d.ln();
            }
        }
        Ok(s)
    };
    let gradient = move |x: &[f64]| -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        for f in f2.iter() {
            let d = f.delta(x);
            if d <= 0.0 {
                return Err(Error::EvaluationOutsideDomain(x.to_vec()));
            }
            let s = d.ln() + 1.0;
            for (gi, hi) in g.iter_mut().zip(&f.normal) {
                *gi += s * hi;
            }
        }
        Ok(g)
    };
    let hessian = move |x: &[f64]| -> Result<Sym> {
        let mut h = Sym::zero(dim);
        for f in f3.iter() {
            let d = f.delta(x);
            if d <= 0.0 {
                return Err(Error::EvaluationOutsideDomain(x.to_vec()));
            }
            let n = &f.normal;
            h = if dim == 1 {
                h.add(&Sym::one_d(n[0] * n[0] / d))
            } else {
                h.add(&Sym::two_d(n[0] * n[0] / d, n[0] * n[1] / d, n[1] * n[1] / d))
            };
        }
        Ok(h)
    };
    SmoothConvexFunc::new(dim, value, gradient, hessian).with_boundary_singular(true)
}

/// `max(0, l)`.
pub fn crease(l: &AffineFunc) -> PlConvexFunc {
    PlConvexFunc {
        pieces: vec![AffineFunc::zero(l.dim()), l.clone()],
    }
}

fn lex_min<'a>(grads: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    grads
        .min_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one subgradient")
        .to_vec()
}

/// Supporting affine function of `u` at `p_o`; at kinks the
/// lexicographically smallest extreme subgradient is used.
pub fn support_at(u: &ConvexFunc, p_o: &[f64]) -> Result<AffineFunc> {
    match u {
        ConvexFunc::Affine(f) => Ok(f.clone()),
        ConvexFunc::Pl(f) => {
            let active = f.active(p_o);
            let g = lex_min(active.iter().map(|&i| f.pieces[i].gradient.as_slice()));
            Ok(AffineFunc::through(p_o, f.value(p_o), g))
        }
        ConvexFunc::Smooth(f) => Ok(AffineFunc::through(p_o, f.value(p_o)?, f.gradient(p_o)?)),
        ConvexFunc::Mesh(f) => {
            let v = mesh_base_vertex(f, p_o)?;
            let grads: Vec<AffineFunc> = f
                .incident_cells(v)
                .into_iter()
                .map(|t| f.cell_affine(t))
                .collect();
            let g = lex_min(grads.iter().map(|a| a.gradient.as_slice()));
            Ok(AffineFunc::through(f.mesh.vertex(v), f.values[v], g))
        }
    }
}

fn mesh_base_vertex(f: &MeshConvexFunc, p_o: &[f64]) -> Result<usize> {
    let v = f.mesh.nearest_vertex(p_o);
    let d: f64 = f
        .mesh
        .vertex(v)
        .iter()
        .zip(p_o)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = f.mesh.polytope().diameter();
    if d > 1e-12 * scale || f.mesh.is_boundary_vertex(v) {
        return Err(Error::InvalidBasePoint(p_o.to_vec()));
    }
    Ok(v)
}

/// `u - l` where `l` supports `u` at `p_o`: nonnegative, zero at `p_o`.
pub fn normalize(u: &ConvexFunc, p_o: &[f64]) -> Result<ConvexFunc> {
    let l = support_at(u, p_o)?;
    Ok(match u {
        ConvexFunc::Affine(f) => ConvexFunc::Affine(AffineFunc::zero(f.dim())),
        ConvexFunc::Pl(f) => ConvexFunc::Pl(PlConvexFunc {
            pieces: f.pieces.iter().map(|q| q.sub(&l)).collect(),
        }),
        ConvexFunc::Smooth(f) => ConvexFunc::Smooth(f.add_affine(&l.scale(-1.0))),
        ConvexFunc::Mesh(f) => {
            let v = mesh_base_vertex(f, p_o)?;
            let values: Vec<f64> = (0..f.mesh.num_vertices())
                .map(|i| f.values[i] - l.value(f.mesh.vertex(i)))
                .collect();
            let mut values = values;
            values[v] = 0.0;
            ConvexFunc::Mesh(MeshConvexFunc {
                mesh: f.mesh.clone(),
                values,
                base_vertex: Some(v),
            })
        }
    })
}

/// Mass `w'(b-) - w'(a+)` of the second-derivative measure of `u` on `[a, b]`.
pub fn segment_ma_measure(u: &ConvexFunc, a: &[f64], b: &[f64], p: &Polytope) -> Result<f64> {
    let dist = p.boundary_distance(a).min(p.boundary_distance(b));
    if dist <= SEGMENT_BOUNDARY_TOL {
        return Err(Error::SegmentTouchesBoundary(dist));
    }
    let (right, left) = u.one_sided_slopes(a, b)?;
    Ok(left - right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;
    use crate::polytope::Facet;

    fn interval() -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap()
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
    fn guillemin_values() {
        let u = guillemin_potential(&interval());
        assert!((u.value(&[0.5]).unwrap() + 2f64.ln()).abs() < 1e-15);
        let x = 0.3;
        assert!((u.hessian(&[x]).unwrap().a - 1.0 / (x * (1.0 - x))).abs() < 1e-12);
        assert_eq!(u.value(&[0.0]).unwrap(), 0.0);
        assert!(u.gradient(&[0.0]).is_err());
        assert!(u.value(&[1.5]).is_err());
        let v = guillemin_potential(&square());
        assert!((v.value(&[0.5, 0.5]).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        let p = interval();
        let u = ConvexFunc::Affine(AffineFunc::new(0.0, [1.0]));
        match normalize(&u, &[0.5]).unwrap() {
            ConvexFunc::Affine(a) => assert!(a.is_zero()),
            _ => panic!("affine stays affine"),
        }
        let c = ConvexFunc::Pl(crease(&AffineFunc::new(-0.25, [1.0])));
        let n = normalize(&c, &[0.5]).unwrap();
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let want = (0.25 - x).max(0.0);
            assert!((n.value(&[x]).unwrap() - want).abs() < 1e-15);
        }
        assert!(matches!(n, ConvexFunc::Pl(_)));
        let q = ConvexFunc::Smooth(SmoothConvexFunc::from_polynomial(
            Polynomial::parse("(x - 0.5)^2", 1).unwrap(),
        ));
        let nq = normalize(&q, &[0.5]).unwrap();
        for x in [0.0, 0.2, 0.9] {
            assert!((nq.value(&[x]).unwrap() - (x - 0.5f64).powi(2)).abs() < 1e-15);
        }
        let _ = p;
    }

    #[test]
    fn crease_examples() {
        let c = crease(&AffineFunc::new(-0.5, [1.0]));
        assert_eq!(c.value(&[0.0]), 0.0);
        assert_eq!(c.value(&[1.0]), 0.5);
        let z = crease(&AffineFunc::new(-1.0, [0.0]));
        assert_eq!(z.value(&[0.7]), 0.0);
        let d = crease(&AffineFunc::new(-1.0, [1.0, 1.0]));
        assert_eq!(d.value(&[0.2, 0.3]), 0.0);
        assert!((d.value(&[0.9, 0.6]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn segment_measure_examples() {
        let p = interval();
        let l = ConvexFunc::Affine(AffineFunc::new(0.3, [2.0]));
        assert_eq!(segment_ma_measure(&l, &[0.2], &[0.7], &p).unwrap(), 0.0);
        let abs = ConvexFunc::Pl(
            PlConvexFunc::new(vec![
                AffineFunc::new(-0.5, [1.0]),
                AffineFunc::new(0.5, [-1.0]),
            ])
            .unwrap(),
        );
        assert_eq!(segment_ma_measure(&abs, &[0.25], &[0.75], &p).unwrap(), 2.0);
        let sq = ConvexFunc::Smooth(SmoothConvexFunc::from_polynomial(
            Polynomial::parse("x^2", 1).unwrap(),
        ));
        let n = segment_ma_measure(&sq, &[0.2], &[0.8], &p).unwrap();
        assert!((n - 1.2).abs() < 1e-8, "{n}");
        assert!(matches!(
            segment_ma_measure(&sq, &[0.0], &[0.8], &p),
            Err(Error::SegmentTouchesBoundary(_))
        ));
    }

    #[test]
    fn mesh_function_basics() {
        let mesh = Arc::new(make_mesh(&square(), 0.25).unwrap());
        let f = MeshConvexFunc::interpolate(mesh.clone(), |x| {
            (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)
        })
        .unwrap();
        assert!((f.value(&[0.5, 0.5]).unwrap()).abs() < 1e-15);
        let bad = MeshConvexFunc::interpolate(mesh.clone(), |x| -(x[0] - 0.5).powi(2));
        assert!(matches!(bad, Err(Error::NotConvex { .. })));
        let u = ConvexFunc::Mesh(f);
        let n = normalize(&u, &[0.5, 0.5]).unwrap();
        if let ConvexFunc::Mesh(m) = &n {
            assert!(m.is_normalized());
            assert!(m.values().iter().all(|v| *v >= -1e-15));
        }
        assert!(normalize(&u, &[0.51, 0.5]).is_err());
        assert!(normalize(&u, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn pl_cells_partition_the_polytope() {
        let p = square();
        let u = PlConvexFunc::new(vec![
            AffineFunc::new(0.0, [0.0, 0.0]),
            AffineFunc::new(0.0, [0.0, 0.0]),
            AffineFunc::new(-1.0, [1.0, 1.0]),
        ])
        .unwrap();
        let area: f64 = u.cells(&p).iter().map(|(r, _)| r.measure()).sum();
        assert!((area - 1.0).abs() < 1e-14);
        let len: f64 = u.boundary(&p).iter().map(|(s, _)| s.length()).sum();
        assert!((len - 4.0).abs() < 1e-14);
    }
}
