//! Explicit properness constants for the Mabuchi functional and their audit
//! on sampled mesh functions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::functionals::{FunctionalEvaluator, HessianSurrogate};
use crate::functions::{guillemin_potential, normalize, ConvexFunc, MeshConvexFunc, SmoothConvexFunc};
use crate::lp::LpOptions;
use crate::mesh::Mesh;
use crate::polytope::Polytope;

use super::l1_boundary_constant;

/// Safety factor applied to the sampled sup of the reference weight.
pub const SUP_SAFETY: f64 = 1.05;
/// Samples of the reference weight stay this far from the boundary.
pub const MIN_SAMPLE_DIST: f64 = 1e-4;

/// The Abreu operator of a smooth potential, evaluated as a weight. Points
/// closer than [`MIN_SAMPLE_DIST`] to the boundary are pulled toward the
/// center of mass first, since the difference stencil must stay inside.
#[derive(Clone)]
pub struct AbreuField {
    potential: SmoothConvexFunc,
    eval: Arc<FunctionalEvaluator>,
    center: Vec<f64>,
    center_dist: f64,
}

impl std::fmt::Debug for AbreuField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AbreuField").field("center", &self.center).finish()
    }
}

impl AbreuField {
    pub fn new(potential: SmoothConvexFunc, p: &Polytope) -> Result<Self> {
        let eval = Arc::new(FunctionalEvaluator::new(p.clone(), Arc::new(0.0))?);
        let center = p.center_of_mass();
        let center_dist = p.boundary_distance(&center);
        Ok(Self {
            potential,
            eval,
            center,
            center_dist,
        })
    }

    fn pulled_in(&self, x: &[f64]) -> Vec<f64> {
        let d = self.eval.polytope().boundary_distance(x);
        if d >= MIN_SAMPLE_DIST {
            return x.to_vec();
        }
        // Distance to the boundary is concave along the segment to the center.
        let s = (self.center_dist - MIN_SAMPLE_DIST) / (self.center_dist - d);
        x.iter()
            .zip(&self.center)
            .map(|(xi, ci)| ci + s * (xi - ci))
            .collect()
    }

    pub fn try_value(&self, x: &[f64]) -> Result<f64> {
        let y = self.pulled_in(x);
        Ok(self.eval.abreu_operator(&self.potential, &[y], None)?[0])
    }
}

impl ScalarField for AbreuField {
    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }
}

/// The Abreu operator of the Guillemin potential as a weight.
pub fn abreu_reference_field(p: &Polytope) -> Result<AbreuField> {
    AbreuField::new(guillemin_potential(p), p)
}

/// Interior points refined geometrically toward the boundary, all at
/// distance at least [`MIN_SAMPLE_DIST`].
fn graded_samples(p: &Polytope) -> Vec<Vec<f64>> {
    let c = p.center_of_mass();
    let mut targets: Vec<Vec<f64>> = Vec::new();
    if p.dim() == 1 {
        targets = p.vertices().to_vec();
    } else {
        for k in 0..p.facets().len() {
            let (a, b) = p.facet_segment(k);
            for i in 0..16 {
                let t = i as f64 / 16.0;
                targets.push(vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
    }
    let mut out = vec![c.clone()];
    for tgt in &targets {
        for j in 0..10 {
            let s = j as f64 / 10.0;
            out.push(c.iter().zip(tgt).map(|(ci, ti)| ci + s * (ti - ci)).collect());
        }
        for j in 1..=40 {
            let s = 1.0 - 0.5f64.powi(j);
            let x: Vec<f64> = c.iter().zip(tgt).map(|(ci, ti)| ci + s * (ti - ci)).collect();
            if p.boundary_distance(&x) < MIN_SAMPLE_DIST {
                break;
            }
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropernessCertificate {
    pub lambda: f64,
    /// Sampled `sup |A_o|` times [`SUP_SAFETY`].
    pub a_o_sup: f64,
    pub a_o_samples: usize,
    /// `-F_{A_o}(u_o)`.
    pub c_o: f64,
    pub c_o_truncation: f64,
    /// Smallest `C'` with `integral u <= C' ||u||_b` on the discrete cone.
    pub c_prime: f64,
    /// `R = 1 + |A_o| C'`, so that `L_{A_o}(u) <= R ||u||_b`.
    pub r_bound: f64,
    /// `r = lambda / (2R)`.
    pub r: f64,
    /// `lambda - rR`.
    pub epsilon_prime: f64,
    /// `C_o - n Vol log r`.
    pub c: f64,
    /// `epsilon' / C'`, the constant in front of `integral u`.
    pub epsilon: f64,
}

/// Constants `C`, `epsilon'` with `F_A(u) >= -C + epsilon' ||u||_b` on
/// normalized functions, from `lambda`, the Guillemin reference and the
/// `L^1` constant of the discrete cone on `mesh`.
pub fn properness_certificate(
    eval: &FunctionalEvaluator,
    lambda: f64,
    mesh: Arc<Mesh>,
    base: Option<usize>,
    lp: &LpOptions,
) -> Result<PropernessCertificate> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    let p = eval.polytope();
    let field = abreu_reference_field(p)?;
    let samples = graded_samples(p);
    let mut sup = 0.0f64;
    for x in &samples {
        sup = sup.max(field.try_value(x)?.abs());
    }
    let a_o_sup = sup * SUP_SAFETY;
    let u_o = guillemin_potential(p);
    let f = eval.with_field(Arc::new(field))?.mabuchi_smooth(&u_o)?;
    let c_o = -f.value;
    let c_prime = l1_boundary_constant(eval, mesh, base, lp)?;
    let r_bound = 1.0 + a_o_sup * c_prime;
    let r = lambda / (2.0 * r_bound);
    let epsilon_prime = lambda - r * r_bound;
    let c = c_o - p.dim() as f64 * p.volume() * r.ln();
    Ok(PropernessCertificate {
        lambda,
        a_o_sup,
        a_o_samples: samples.len(),
        c_o,
        c_o_truncation: f.truncation_error,
        c_prime,
        r_bound,
        r,
        epsilon_prime,
        c,
        epsilon: epsilon_prime / c_prime,
    })
}

/// `n Vol / lambda`, the bound on `||v||_b` for a solution `v` normalized so
/// that `L_A(v) = n Vol`.
pub fn solution_norm_bound(p: &Polytope, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    Ok(p.dim() as f64 * p.volume() / lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateAudit {
    pub count: usize,
    pub violations: usize,
    /// `min (F_A(u) + C - epsilon' ||u||_b)`.
    pub min_margin: f64,
}

/// Checks `F_A(u) >= -C + epsilon' ||u||_b` on each function, with the
/// mesh `log det` surrogate.
pub fn certificate_audit(
    eval: &FunctionalEvaluator,
    cert: &PropernessCertificate,
    functions: &[MeshConvexFunc],
) -> Result<CertificateAudit> {
    let surrogate = functions.first().map(|u| HessianSurrogate::new(u.mesh().clone()));
    let margins = functions
        .par_iter()
        .map(|u| {
            let own;
            let s = match &surrogate {
                Some(s) if Arc::ptr_eq(s.mesh(), u.mesh()) => s,
                _ => {
                    own = HessianSurrogate::new(u.mesh().clone());
                    &own
                }
            };
            let f = eval.mabuchi_mesh(u, s)?.value;
            let norm = eval.boundary_norm(&ConvexFunc::Mesh(u.clone()))?;
            Ok(f + cert.c - cert.epsilon_prime * norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    let violations = margins.iter().filter(|m| **m < 0.0).count();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CertificateAudit {
        count: functions.len(),
        violations,
        min_margin,
    })
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Deterministic family of strictly convex mesh functions normalized at
/// `base`: scaled sums of the Guillemin potential, a quadratic bowl and
/// smoothed creases. Candidates whose interpolant fails the discrete
/// convexity test are redrawn.
pub fn random_normalized_mesh_functions(
    mesh: Arc<Mesh>,
    base: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<MeshConvexFunc>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = mesh.polytope().clone();
    let u_o = guillemin_potential(&p);
    let c = p.center_of_mass();
    let dim = p.dim();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count.max(1) {
            return Err(Error::NotConvex {
                index: 0,
                violation: f64::NAN,
            });
        }
        let scale: f64 = 10f64.powf(rng.random_range(-1.0..1.0));
        let alpha: f64 = rng.random_range(0.0..3.0);
        let beta: f64 = rng.random_range(0.05..2.0);
        let creases: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = (0..rng.random_range(0..4))
            .map(|_| {
                let dir: Vec<f64> = if dim == 1 {
                    vec![if rng.random_bool(0.5) { 1.0 } else { -1.0 }]
                } else {
                    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    vec![th.cos(), th.sin()]
                };
                let at: Vec<f64> = c
                    .iter()
                    .map(|ci| ci + rng.random_range(-0.4..0.4) * p.diameter())
                    .collect();
                (dir, at, rng.random_range(0.0..2.0), rng.random_range(0.02..0.2))
            })
            .collect();
        let f = |x: &[f64]| -> f64 {
            let mut v = alpha * u_o.value(x).unwrap_or(0.0);
            v += beta * x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            for (dir, at, g, s) in &creases {
                let z: f64 = dir.iter().zip(x.iter().zip(at)).map(|(d, (a, b))| d * (a - b)).sum();
                v += g * s * softplus(z / s);
            }
            scale * v
        };
        let Ok(u) = MeshConvexFunc::interpolate(mesh.clone(), f) else {
            continue;
        };
        match normalize(&ConvexFunc::Mesh(u), mesh.vertex(base))? {
            ConvexFunc::Mesh(m) => out.push(m),
            _ => unreachable!("mesh functions normalize to mesh functions"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;
    use crate::polytope::Facet;

    fn interval() -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap()
    }

    #[test]
    fn interval_certificate_constants() {
        let p = interval();
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(2.0)).unwrap();
        let mesh = Arc::new(make_mesh(&p, 1.0 / 64.0).unwrap());
        let c = properness_certificate(&eval, 0.5, mesh.clone(), None, &LpOptions::default()).unwrap();
        assert!((c.a_o_sup - 2.0 * SUP_SAFETY).abs() < 1e-6, "{c:?}");
        assert!((c.c_o - 1.0).abs() < 1e-6);
        assert!((c.c_prime - 0.25).abs() < 1e-9);
        assert!((c.r_bound - 1.525).abs() < 1e-6);
        assert!((c.epsilon_prime - 0.25).abs() < 1e-15);
        assert!((c.c - (c.c_o - c.r.ln())).abs() < 1e-15);
        let base = super::super::default_base_vertex(&mesh).unwrap();
        let fs = random_normalized_mesh_functions(mesh, base, 7, 10).unwrap();
        let audit = certificate_audit(&eval, &c, &fs).unwrap();
        assert_eq!(audit.violations, 0, "{audit:?}");
        assert!(matches!(
            properness_certificate(&eval, 0.0, Arc::new(make_mesh(&p, 0.25).unwrap()), None, &LpOptions::default()),
            Err(Error::NonpositiveLambda(_))
        ));
    }

    #[test]
    fn norm_bound_formula() {
        assert_eq!(solution_norm_bound(&interval(), 0.5).unwrap(), 2.0);
        assert!(solution_norm_bound(&interval(), -1.0).is_err());
        let big = Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -2.0)]).unwrap();
        assert_eq!(solution_norm_bound(&big, 0.5).unwrap(), 4.0);
    }
}
