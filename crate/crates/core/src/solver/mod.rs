//! The Abreu equation `S(u) = A`: closed form on an interval, descent on the
//! discretized Mabuchi functional in the plane, and residual checks.
//!
//! On `[p, q]` write `w = 1/u''`. The equation becomes `w'' = -A` with the
//! boundary behaviour `w(p) = w(q) = 0`, `w'(p) = sigma_p`, `w'(q) = -sigma_q`
//! that makes `u - u_o` smooth. Two conditions fix `w`; the other two
//! are compatibility conditions on `A`.

mod descent;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym};
use crate::functionals::FunctionalEvaluator;
use crate::functions::SmoothConvexFunc;
use crate::polytope::Polytope;
use crate::quadrature::{gauss_legendre, points_for, QuadratureRule, QuadratureScheme};

pub use descent::{solve_2d_descent, DiscreteMabuchi, HistoryEntry, SolverOptions, SolverState, StepRule};

/// Tolerance on the two compatibility conditions.
pub const COMPAT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// `w(q)`, zero for admissible `A`.
    pub w_end: f64,
    /// `w'(q) + sigma_q`, zero for admissible `A`.
    pub slope_gap: f64,
    /// Smallest sampled `w` on `(p, q)`.
    pub min_w: f64,
}

#[derive(Debug, Clone)]
pub struct Solution1d {
    pub u: SmoothConvexFunc,
    pub report: CompatibilityReport,
}

/// `w = 1/u''` from `w'' = -A`, `w(p) = 0`, `w'(p) = sigma_p`.
struct Inverse1d {
    field: Arc<dyn ScalarField>,
    left: f64,
    sigma_left: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pieces: usize,
}

impl Inverse1d {
    fn new(field: Arc<dyn ScalarField>, left: f64, sigma_left: f64) -> Self {
        let (n, pieces) = match field.polynomial_degree() {
            Some(d) => (points_for(d + 1), 1),
            None => (24, 8),
        };
        let (nodes, weights) = gauss_legendre(n);
        Self {
            field,
            left,
            sigma_left,
            nodes,
            weights,
            pieces,
        }
    }

    /// `(w(x), w'(x))`.
    fn eval(&self, x: f64) -> (f64, f64) {
        let (mut moment, mut mass) = (0.0, 0.0);
        let len = (x - self.left) / self.pieces as f64;
        for k in 0..self.pieces {
            let a = self.left + k as f64 * len;
            for (t, wt) in self.nodes.iter().zip(&self.weights) {
                let s = a + t * len;
                let av = self.field.value(&[s]) * wt * len;
                mass += av;
                moment += (x - s) * av;
            }
        }
        (self.sigma_left * (x - self.left) - moment, self.sigma_left - mass)
    }
}

fn gauss8(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter()
        .zip(&W)
        .map(|(x, w)| w * (f(m - r * x) + f(m + r * x)))
        .sum::<f64>()
        * r
}

/// Adaptive bisection with an 8-point Gauss rule on each half.
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (gauss8(f, a, m), gauss8(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= tol {
            return l + r;
        }
        rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, gauss8(f, a, b), tol, 50)
}

/// Closed-form solve on an interval: checks compatibility of `A`, then
/// integrates `u'' = 1/w` with `u(p_o) = u'(p_o) = 0` at the midpoint.
pub fn solve_1d(p: &Polytope, a: Arc<dyn ScalarField>) -> Result<Solution1d> {
    if p.dim() != 1 {
        return Err(Error::UnsupportedDimension(p.dim()));
    }
    let (left, right) = {
        let v = p.vertices();
        (v[0][0].min(v[1][0]), v[0][0].max(v[1][0]))
    };
    let sigma_at = |x: f64| -> f64 {
        let k = (0..p.facets().len())
            .find(|&k| p.facet_segment(k).0[0] == x)
            .expect("each endpoint carries a facet");
        p.boundary_weights()[k]
    };
    let (sigma_left, sigma_right) = (sigma_at(left), sigma_at(right));
    let inv = Arc::new(Inverse1d::new(a, left, sigma_left));
    let (w_end, slope_end) = inv.eval(right);
    let slope_gap = slope_end + sigma_right;
    if w_end.abs() > COMPAT_TOL || slope_gap.abs() > COMPAT_TOL {
        return Err(Error::IncompatibleA { w_end, slope_gap });
    }
    let len = right - left;
    let mut min_w = f64::INFINITY;
    for i in 1..4000 {
        let x = left + len * i as f64 / 4000.0;
        let w = inv.eval(x).0;
        if w <= 1e-12 * len * len {
            return Err(Error::NonpositiveW { x, w });
        }
        min_w = min_w.min(w);
    }
    let center = 0.5 * (left + right);
    let inside = move |x: f64, strict: bool| -> Result<()> {
        let ok = if strict {
            x > left && x < right
        } else {
            x >= left && x <= right
        };
        if ok {
            Ok(())
        } else {
            Err(Error::EvaluationOutsideDomain(vec![x]))
        }
    };
    let (i1, i2, i3) = (inv.clone(), inv.clone(), inv);
    let value = move |x: &[f64]| -> Result<f64> {
        let x = x[0];
        inside(x, false)?;
        let f = |s: f64| (x - s) / i1.eval(s).0;
        Ok(adaptive(&f, center, x, 1e-14))
    };
    let gradient = move |x: &[f64]| -> Result<Vec<f64>> {
        let x = x[0];
        inside(x, true)?;
        let f = |s: f64| 1.0 / i2.eval(s).0;
        Ok(vec![adaptive(&f, center, x, 1e-14)])
    };
    let hessian = move |x: &[f64]| -> Result<Sym> {
        inside(x[0], true)?;
        Ok(Sym::one_d(1.0 / i3.eval(x[0]).0))
    };
    Ok(Solution1d {
        u: SmoothConvexFunc::new(1, value, gradient, hessian).with_boundary_singular(true),
        report: CompatibilityReport {
            w_end,
            slope_gap,
            min_w,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub sup: f64,
    pub l2: f64,
    pub margin: f64,
    pub h_fd: f64,
    /// `(point, S(u) - A)` at every sample.
    pub samples: Vec<(Vec<f64>, f64)>,
}

/// `S(u) - A` at quadrature points at distance at least `margin` from the
/// boundary; the `L^2` norm uses the quadrature weights.
pub fn residual(eval: &FunctionalEvaluator, u: &SmoothConvexFunc, margin: f64, h_fd: f64) -> Result<ResidualReport> {
    if !(margin > 0.0 && h_fd > 0.0 && h_fd < margin) {
        return Err(Error::InvalidField(format!(
            "residual needs 0 < h_fd < margin, got h_fd = {h_fd}, margin = {margin}"
        )));
    }
    let p = eval.polytope();
    let subdivisions = if p.dim() == 1 { 16 } else { 4 };
    let rule = QuadratureRule::for_polytope(p, QuadratureScheme::new(6).with_subdivisions(subdivisions));
    let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = rule
        .iter()
        .filter(|(x, _)| p.boundary_distance(x) >= margin)
        .map(|(x, w)| (x.to_vec(), w))
        .unzip();
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let s = eval.abreu_operator(u, &points, Some(h_fd))?;
    let a = eval.field();
    let mut samples = Vec::with_capacity(points.len());
    let (mut sup, mut l2) = (0.0f64, 0.0);
    for ((x, sx), w) in points.into_iter().zip(s).zip(weights) {
        let r = sx - a.value(&x);
        sup = sup.max(r.abs());
        l2 += w * r * r;
        samples.push((x, r));
    }
    Ok(ResidualReport {
        sup,
        l2: l2.sqrt(),
        margin,
        h_fd,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Polynomial;
    use crate::functions::guillemin_potential;
    use crate::polytope::Facet;

    fn interval(len: f64) -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -len)]).unwrap()
    }

    #[test]
    fn unit_interval_recovers_guillemin() {
        let p = interval(1.0);
        let sol = solve_1d(&p, Arc::new(2.0)).unwrap();
        assert!(sol.report.w_end.abs() < 1e-14);
        let g = guillemin_potential(&p);
        // u_o normalized at 1/2: u_o(x) - u_o(1/2) (its slope there is 0).
        let g0 = g.value(&[0.5]).unwrap();
        for x in [0.0, 1e-6, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let got = sol.u.value(&[x]).unwrap();
            assert!((got - (g.value(&[x]).unwrap() - g0)).abs() < 1e-8, "x = {x}");
        }
        assert!((sol.u.hessian(&[0.25]).unwrap().a - 1.0 / (0.25 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn constant_three_is_incompatible() {
        match solve_1d(&interval(1.0), Arc::new(3.0)) {
            Err(Error::IncompatibleA { w_end, .. }) => assert!((w_end + 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn length_two_interval() {
        let p = interval(2.0);
        let sol = solve_1d(&p, Arc::new(1.0)).unwrap();
        let x = 0.7;
        let w = x * (1.0 - x / 2.0);
        assert!((sol.u.hessian(&[x]).unwrap().a - 1.0 / w).abs() < 1e-12);
    }

    #[test]
    fn vanishing_w_is_rejected() {
        // w = x(1-x)(1-2x)^2 vanishes at the midpoint.
        let a = Polynomial::parse("10 - 48*x + 48*x^2", 1).unwrap();
        assert!(matches!(solve_1d(&interval(1.0), Arc::new(a)), Err(Error::NonpositiveW { .. })));
    }

    #[test]
    fn residual_of_closed_forms() {
        let p = interval(1.0);
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(2.0)).unwrap();
        let r = residual(&eval, &guillemin_potential(&p), 0.05, 1e-3).unwrap();
        assert!(r.sup <= 1e-6, "{}", r.sup);
        let sol = solve_1d(&p, Arc::new(2.0)).unwrap();
        assert!(residual(&eval, &sol.u, 0.05, 1e-3).unwrap().sup <= 1e-7);
        let zero = FunctionalEvaluator::new(p, Arc::new(0.0)).unwrap();
        let q = SmoothConvexFunc::from_polynomial(Polynomial::parse("x^2", 1).unwrap());
        assert!(residual(&zero, &q, 0.05, 1e-3).unwrap().sup < 1e-9);
    }
}
