//! The boundary norm, the linear functional `L_A`, the Mabuchi functional
//! `F_A`, the Abreu operator and the extremal affine weight.

mod surrogate;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym};
use crate::functions::{AffineFunc, ConvexFunc, Layout, MeshConvexFunc, SmoothConvexFunc};
use crate::polytope::Polytope;
use crate::quadrature::{BoundaryRule, GradedScheme, QuadratureRule, QuadratureScheme};

pub use surrogate::HessianSurrogate;

/// Layer count of the coarse graded rule used for the truncation estimate.
pub const COARSE_LAYERS: usize = 30;

/// Determinant below which the Abreu operator refuses a stencil point.
pub const SINGULAR_DET: f64 = 1e-12;

/// Value of `F_A` with the pieces it is made of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MabuchiValue {
    pub value: f64,
    /// `-integral log det Hess u`.
    pub log_det_term: f64,
    pub linear_term: f64,
    /// Difference between the fine and coarse graded rules (0 when not graded).
    pub truncation_error: f64,
}

/// Both sides of the integration-by-parts identity
/// `L_A(u) = integral W_v : Hess u` for a solution `v` of the Abreu equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbpCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// The extremal affine weight with the residuals `L_A(1)`, `L_A(x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalAffine {
    pub func: AffineFunc,
    pub residuals: Vec<f64>,
}

/// Quadrature-backed evaluation of functionals on a fixed polytope and weight.
#[derive(Clone)]
pub struct FunctionalEvaluator {
    polytope: Polytope,
    field: Arc<dyn ScalarField>,
    scheme: QuadratureScheme,
    graded: GradedScheme,
    smooth_interior: QuadratureRule,
    smooth_boundary: BoundaryRule,
    graded_rules: OnceLock<(QuadratureRule, QuadratureRule, BoundaryRule)>,
}

impl std::fmt::Debug for FunctionalEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionalEvaluator")
            .field("polytope", &self.polytope)
            .field("scheme", &self.scheme)
            .finish()
    }
}

fn smooth_subdivisions(dim: usize) -> usize {
    if dim == 1 {
        64
    } else {
        16
    }
}

impl FunctionalEvaluator {
    pub fn new(polytope: Polytope, field: Arc<dyn ScalarField>) -> Result<Self> {
        Self::with_scheme(polytope, field, QuadratureScheme::default())
    }

    pub fn with_scheme(
        polytope: Polytope,
        field: Arc<dyn ScalarField>,
        scheme: QuadratureScheme,
    ) -> Result<Self> {
        let degree = match field.polynomial_degree() {
            Some(d) => scheme.degree.max(d + 2),
            None => scheme.degree,
        };
        let smooth = QuadratureScheme::new(degree)
            .with_subdivisions(scheme.subdivisions.max(smooth_subdivisions(polytope.dim())));
        let smooth_interior = QuadratureRule::for_polytope(&polytope, smooth);
        let smooth_boundary = BoundaryRule::for_polytope(&polytope, smooth);
        let mut sup = 0.0f64;
        for (x, _) in smooth_interior.iter() {
            sup = sup.max(field.value(x).abs());
        }
        for v in polytope.vertices() {
            sup = sup.max(field.value(v).abs());
        }
        if !sup.is_finite() {
            return Err(Error::InvalidField("A is not bounded on the polytope".into()));
        }
        Ok(Self {
            polytope,
            field,
            scheme: QuadratureScheme { degree, ..scheme },
            graded: GradedScheme::default(),
            smooth_interior,
            smooth_boundary,
            graded_rules: OnceLock::new(),
        })
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn field(&self) -> &Arc<dyn ScalarField> {
        &self.field
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    pub fn graded_scheme(&self) -> GradedScheme {
        self.graded
    }

    /// Same polytope and quadrature, different weight.
    pub fn with_field(&self, field: Arc<dyn ScalarField>) -> Result<Self> {
        Self::with_scheme(self.polytope.clone(), field, self.scheme)
    }

    /// Fine interior, coarse interior and boundary graded rules.
    fn graded(&self) -> &(QuadratureRule, QuadratureRule, BoundaryRule) {
        self.graded_rules.get_or_init(|| {
            (
                QuadratureRule::graded(&self.polytope, self.graded),
                QuadratureRule::graded(
                    &self.polytope,
                    GradedScheme {
                        layers: COARSE_LAYERS,
                        ..self.graded
                    },
                ),
                BoundaryRule::graded(&self.polytope, self.graded),
            )
        })
    }

    /// Rule used on the affine cells of piecewise-linear functions.
    fn piece_scheme(&self) -> QuadratureScheme {
        match self.field.polynomial_degree() {
            Some(d) => QuadratureScheme::new(d + 1),
            None => QuadratureScheme::new(self.scheme.degree).with_subdivisions(4),
        }
    }

    /// `integral_Delta f dmu` with the smooth rule.
    pub fn integrate_interior(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.smooth_interior.integrate(f)
    }

    /// `integral_{boundary} f dsigma` with the smooth rule.
    pub fn integrate_boundary(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.smooth_boundary.integrate(f)
    }

    /// `||u||_b`.
    pub fn boundary_norm(&self, u: &ConvexFunc) -> Result<f64> {
        match u.layout(&self.polytope) {
            Layout::Affine(l) => Ok(self.smooth_boundary.integrate(|x| l.value(x))),
            Layout::Pieces { boundary, .. } => {
                let w = self.polytope.boundary_weights();
                Ok(boundary
                    .iter()
                    .map(|(piece, l)| {
                        let mid: Vec<f64> = piece
                            .start
                            .iter()
                            .zip(&piece.end)
                            .map(|(a, b)| 0.5 * (a + b))
                            .collect();
                        let len = if self.polytope.dim() == 1 {
                            1.0
                        } else {
                            piece.length()
                        };
                        w[piece.facet] * len * l.value(&mid)
                    })
                    .sum())
            }
            Layout::Smooth { boundary_singular } => {
                let rule = if boundary_singular {
                    &self.graded().2
                } else {
                    &self.smooth_boundary
                };
                rule.try_integrate(|x| u.value(x))
            }
        }
    }

    /// `integral_Delta A u dmu`.
    pub fn weighted_integral(&self, u: &ConvexFunc) -> Result<f64> {
        let a = &self.field;
        match u.layout(&self.polytope) {
            Layout::Affine(l) => Ok(self.smooth_interior.integrate(|x| a.value(x) * l.value(x))),
            Layout::Pieces { cells, .. } => {
                let scheme = self.piece_scheme();
                Ok(cells
                    .iter()
                    .map(|(region, l)| {
                        QuadratureRule::for_region(region, scheme)
                            .integrate(|x| a.value(x) * l.value(x))
                    })
                    .sum())
            }
            Layout::Smooth { boundary_singular } => {
                let rule = if boundary_singular {
                    &self.graded().0
                } else {
                    &self.smooth_interior
                };
                rule.try_integrate(|x| Ok(a.value(x) * u.value(x)?))
            }
        }
    }

    /// `L_A(u) = ||u||_b - integral A u`.
    pub fn linear_functional(&self, u: &ConvexFunc) -> Result<f64> {
        Ok(self.boundary_norm(u)? - self.weighted_integral(u)?)
    }

    /// `F_A(u) = -integral log det Hess u + L_A(u)`.
    pub fn mabuchi(&self, u: &ConvexFunc) -> Result<MabuchiValue> {
        match u {
            ConvexFunc::Smooth(s) => self.mabuchi_smooth(s),
            ConvexFunc::Mesh(m) => self.mabuchi_mesh(m, &HessianSurrogate::new(m.mesh().clone())),
            _ => Err(Error::NonConvexAtQuadraturePoint {
                point: self.polytope.center_of_mass(),
                det: 0.0,
            }),
        }
    }

    /// `-integral log det Hess u` over `rule`.
    fn log_det_integral(&self, u: &SmoothConvexFunc, rule: &QuadratureRule) -> Result<f64> {
        rule.try_integrate(|x| {
            let det = u.hessian(x)?.det();
            if det > 0.0 && det.is_finite() {
                Ok(-det.ln())
            } else {
                Err(Error::NonConvexAtQuadraturePoint {
                    point: x.to_vec(),
                    det,
                })
            }
        })
    }

    pub fn mabuchi_smooth(&self, u: &SmoothConvexFunc) -> Result<MabuchiValue> {
        let (log_det_term, truncation_error) = if u.is_boundary_singular() {
            let (fine, coarse, _) = self.graded();
            let f = self.log_det_integral(u, fine)?;
            let c = self.log_det_integral(u, coarse)?;
            (f, (f - c).abs())
        } else {
            (self.log_det_integral(u, &self.smooth_interior)?, 0.0)
        };
        let linear_term = self.linear_functional(&ConvexFunc::Smooth(u.clone()))?;
        Ok(MabuchiValue {
            value: log_det_term + linear_term,
            log_det_term,
            linear_term,
            truncation_error,
        })
    }

    /// Mesh version: the `log det` term uses the local-quadric Hessian.
    pub fn mabuchi_mesh(&self, u: &MeshConvexFunc, s: &HessianSurrogate) -> Result<MabuchiValue> {
        let log_det_term = s.log_det_integral(u.values())?;
        let linear_term = self.linear_functional(&ConvexFunc::Mesh(u.clone()))?;
        Ok(MabuchiValue {
            value: log_det_term + linear_term,
            log_det_term,
            linear_term,
            truncation_error: 0.0,
        })
    }

    /// Abreu operator `S(u) = -sum_ij d_i d_j u^{ij}` at each point, by
    /// central differences of the inverse Hessian. `h_fd` defaults to
    /// `min(1e-3, dist(x, boundary)/4)`.
    pub fn abreu_operator(
        &self,
        u: &SmoothConvexFunc,
        points: &[Vec<f64>],
        h_fd: Option<f64>,
    ) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|x| {
                let h = h_fd.unwrap_or_else(|| (1e-3f64).min(self.polytope.boundary_distance(x) / 4.0));
                abreu_at(u, x, h)
            })
            .collect()
    }

    /// Both sides of `L_A(u) = integral W_v : Hess u` with `W_v` the inverse
    /// Hessian of `v`.
    pub fn ibp_identity_check(&self, v: &SmoothConvexFunc, u: &ConvexFunc) -> Result<IbpCheck> {
        let lhs = self.linear_functional(u)?;
        let rhs = match u {
            ConvexFunc::Affine(_) => 0.0,
            ConvexFunc::Smooth(s) => {
                let rule = &self.graded().0;
                rule.try_integrate(|x| {
                    let w = v.hessian(x)?.inverse().ok_or_else(|| Error::SingularHessian {
                        point: x.to_vec(),
                        det: 0.0,
                    })?;
                    Ok::<f64, Error>(w.dot(&s.hessian(x)?))
                })?
            }
            _ => {
                return Err(Error::NonConvexAtQuadraturePoint {
                    point: self.polytope.center_of_mass(),
                    det: 0.0,
                })
            }
        };
        Ok(IbpCheck {
            lhs,
            rhs,
            gap: (lhs - rhs).abs(),
        })
    }
}

fn inverse_hessian(u: &SmoothConvexFunc, x: &[f64]) -> Result<Sym> {
    let h = u.hessian(x)?;
    let det = h.det();
    if !(det >= SINGULAR_DET) || !det.is_finite() {
        return Err(Error::SingularHessian {
            point: x.to_vec(),
            det,
        });
    }
    Ok(h.inverse().expect("nonsingular"))
}

fn abreu_at(u: &SmoothConvexFunc, x: &[f64], h: f64) -> Result<f64> {
    let w = |dx: f64, dy: f64| -> Result<Sym> {
        let p: Vec<f64> = if x.len() == 1 {
            vec![x[0] + dx]
        } else {
            vec![x[0] + dx, x[1] + dy]
        };
        inverse_hessian(u, &p)
    };
    let h2 = h * h;
    if x.len() == 1 {
        let (l, c, r) = (w(-h, 0.0)?.a, w(0.0, 0.0)?.a, w(h, 0.0)?.a);
        return Ok(-(l - 2.0 * c + r) / h2);
    }
    let c = w(0.0, 0.0)?;
    let (xl, xr) = (w(-h, 0.0)?, w(h, 0.0)?);
    let (yl, yr) = (w(0.0, -h)?, w(0.0, h)?);
    let d_xx = (xl.a - 2.0 * c.a + xr.a) / h2;
    let d_yy = (yl.c - 2.0 * c.c + yr.c) / h2;
    let d_xy = (w(h, h)?.b - w(h, -h)?.b - w(-h, h)?.b + w(-h, -h)?.b) / (4.0 * h2);
    Ok(-(d_xx + 2.0 * d_xy + d_yy))
}

/// The affine `A` with `L_A(l) = 0` for every affine `l`.
pub fn extremal_affine(p: &Polytope) -> Result<ExtremalAffine> {
    let n = p.dim();
    let scheme = QuadratureScheme::new(2);
    let interior = QuadratureRule::for_polytope(p, scheme);
    let boundary = BoundaryRule::for_polytope(p, scheme);
    let basis = |i: usize, x: &[f64]| if i == 0 { 1.0 } else { x[i - 1] };
    let gram = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        interior.integrate(|x| basis(i, x) * basis(j, x))
    });
    let rhs = DVector::from_fn(n + 1, |i, _| boundary.integrate(|x| basis(i, x)));
    let sol = gram.cholesky().ok_or(Error::SingularMoments)?.solve(&rhs);
    let func = AffineFunc::new(sol[0], sol.iter().skip(1).copied().collect::<Vec<_>>());
    let residuals = (0..=n)
        .map(|i| {
            boundary.integrate(|x| basis(i, x))
                - interior.integrate(|x| func.value(x) * basis(i, x))
        })
        .collect();
    Ok(ExtremalAffine { func, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Polynomial;
    use crate::functions::{crease, guillemin_potential};
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

    fn simplex() -> Polytope {
        Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, -1.0], -1.0),
        ])
        .unwrap()
    }

    fn eval(p: Polytope, a: f64) -> FunctionalEvaluator {
        FunctionalEvaluator::new(p, Arc::new(a)).unwrap()
    }

    #[test]
    fn extremal_affine_fixtures() {
        for (p, want) in [(interval(), 2.0), (square(), 4.0), (simplex(), 6.0)] {
            let e = extremal_affine(&p).unwrap();
            assert!((e.func.constant - want).abs() < 1e-12, "{:?}", e.func);
            assert!(e.func.gradient.iter().all(|g| g.abs() < 1e-12));
            assert!(e.residuals.iter().all(|r| r.abs() < 1e-12));
        }
    }

    #[test]
    fn boundary_norm_examples() {
        let e = eval(interval(), 2.0);
        let c = ConvexFunc::Pl(crease(&AffineFunc::new(-0.5, [1.0])));
        assert!((e.boundary_norm(&c).unwrap() - 0.5).abs() < 1e-15);
        let uo = ConvexFunc::Smooth(guillemin_potential(&interval()));
        assert_eq!(e.boundary_norm(&uo).unwrap(), 0.0);
        let s = eval(square(), 4.0);
        let l = ConvexFunc::Affine(AffineFunc::new(0.0, [1.0, 1.0]));
        assert!((s.boundary_norm(&l).unwrap() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn linear_functional_examples() {
        let e = eval(interval(), 2.0);
        let c = ConvexFunc::Pl(crease(&AffineFunc::new(-0.5, [1.0])));
        assert!((e.linear_functional(&c).unwrap() - 0.25).abs() < 1e-15);
        let uo = ConvexFunc::Smooth(guillemin_potential(&interval()));
        assert!((e.linear_functional(&uo).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mabuchi_of_guillemin() {
        let e = eval(interval(), 2.0);
        let f = e.mabuchi_smooth(&guillemin_potential(&interval())).unwrap();
        assert!((f.value + 1.0).abs() < 1e-6, "{f:?}");
        assert!(f.truncation_error <= 1e-4);
        let s = eval(square(), 4.0);
        let g = s.mabuchi_smooth(&guillemin_potential(&square())).unwrap();
        assert!((g.value + 2.0).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn abreu_operator_fixtures() {
        let e = eval(interval(), 2.0);
        let uo = guillemin_potential(&interval());
        let pts: Vec<Vec<f64>> = (1..10).map(|i| vec![i as f64 / 10.0]).collect();
        for s in e.abreu_operator(&uo, &pts, None).unwrap() {
            assert!((s - 2.0).abs() < 1e-6, "{s}");
        }
        let t = eval(simplex(), 6.0);
        let us = guillemin_potential(&simplex());
        let pts = vec![vec![0.2, 0.2], vec![0.5, 0.3], vec![0.1, 0.6]];
        for s in t.abreu_operator(&us, &pts, None).unwrap() {
            assert!((s - 6.0).abs() < 1e-3, "{s}");
        }
        let q = SmoothConvexFunc::from_polynomial(Polynomial::parse("x^2 + x*y + y^2", 2).unwrap());
        for s in t.abreu_operator(&q, &pts, None).unwrap() {
            assert!(s.abs() < 1e-9);
        }
        assert!(matches!(
            t.abreu_operator(&SmoothConvexFunc::from_polynomial(Polynomial::parse("x^2", 2).unwrap()), &pts, None),
            Err(Error::SingularHessian { .. })
        ));
    }

    #[test]
    fn ibp_identity_examples() {
        let e = eval(interval(), 2.0);
        let v = guillemin_potential(&interval());
        let sq = ConvexFunc::Smooth(SmoothConvexFunc::from_polynomial(
            Polynomial::parse("x^2", 1).unwrap(),
        ));
        let c = e.ibp_identity_check(&v, &sq).unwrap();
        assert!((c.lhs - 1.0 / 3.0).abs() < 1e-12 && c.gap < 1e-8, "{c:?}");
        let a = e
            .ibp_identity_check(&v, &ConvexFunc::Affine(AffineFunc::new(1.0, [3.0])))
            .unwrap();
        assert!(a.lhs.abs() < 1e-12 && a.rhs == 0.0);
        let g = e.ibp_identity_check(&v, &ConvexFunc::Smooth(v.clone())).unwrap();
        assert!((g.rhs - 1.0).abs() < 1e-8 && g.gap < 1e-7, "{g:?}");
    }
}
