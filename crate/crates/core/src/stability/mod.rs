//! Uniform and relative stability of `(polytope, A)` over the cone of
//! normalized convex functions, discretized on a mesh and solved as linear
//! programs.
//!
//! The discrete cone holds the piecewise-linear interpolants `u` that are
//! convex across every interior edge, nonnegative, and vanish at the base
//! vertex `p_o`. The estimate `lambda_hat = min L_A(u)` over this cone with
//! `||u||_b = 1` upper-bounds the true constant restricted to mesh functions;
//! it is evidence, not proof.

mod certificate;
mod degeneracy;
mod sweep;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FunctionalEvaluator;
use crate::functions::{AffineFunc, MeshConvexFunc};
use crate::lp::{self, LinearProgram, LpOptions, Relation};
use crate::mesh::{make_mesh, Mesh};
use crate::polytope::Polytope;
use crate::quadrature::{QuadratureRule, QuadratureScheme};

pub use certificate::{
    abreu_reference_field, certificate_audit, properness_certificate, random_normalized_mesh_functions,
    solution_norm_bound, AbreuField, CertificateAudit, PropernessCertificate,
};
pub use degeneracy::{
    degeneracy_diagnostic, scripted_sequences, DegeneracyEntry, DegeneracyReport, ScriptedSequence,
    SegmentSummary,
};
pub use sweep::{crease_sweep, default_crease_grid, is_representable, CreaseSweep};

/// `lambda_hat` at or above this on two refinements counts as uniformly stable.
pub const STABLE_THRESHOLD: f64 = 1e-3;
/// `|lambda_hat|` at or below this is a boundary case.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// `L_A` bound used when searching for nontrivial extremal functions.
pub const EXTREMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityStatus {
    UniformlyStable,
    RelativelyUnstable,
    BoundaryCase,
    Inconclusive,
}

impl std::fmt::Display for StabilityStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StabilityStatus::UniformlyStable => "uniformly-stable",
            StabilityStatus::RelativelyUnstable => "relatively-unstable",
            StabilityStatus::BoundaryCase => "boundary-case",
            StabilityStatus::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    /// Minimizer of `L_A` on the normalized cone.
    Minimizer,
    /// Nonzero `u` with `L_A(u) <= 0` found while `lambda_hat >= -tol`.
    NontrivialExtremal,
}

/// Vertex values of a normalized mesh function produced by an LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshWitness {
    pub kind: WitnessKind,
    pub mesh_parameter: f64,
    pub base_vertex: usize,
    pub values: Vec<f64>,
    pub boundary_norm: f64,
    pub linear_functional: f64,
}

impl MeshWitness {
    pub fn to_function(&self, mesh: Arc<Mesh>) -> MeshConvexFunc {
        MeshConvexFunc::from_normalized(mesh, self.values.clone(), self.base_vertex)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub status: StabilityStatus,
    /// LP minimum on the given mesh.
    pub lambda_hat: f64,
    /// LP minimum on the mesh with half the spacing, when computed.
    pub lambda_hat_refined: Option<f64>,
    pub mesh_parameter: f64,
    pub base_point: Vec<f64>,
    /// Minimum crease ratio over creases representable on the mesh.
    pub crease_sweep_min: Option<f64>,
    /// Minimum crease ratio over the whole sweep grid.
    pub crease_sweep_min_all: Option<f64>,
    pub crease_argmin: Option<AffineFunc>,
    pub destabilizer: Option<MeshWitness>,
    pub certificate: Option<PropernessCertificate>,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityOptions {
    pub lp: LpOptions,
    pub threshold: f64,
    /// Also solve on the mesh with spacing `h/2`.
    pub refine: bool,
    /// Run the crease sweep and record its minima.
    pub sweep: bool,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            lp: LpOptions::default(),
            threshold: STABLE_THRESHOLD,
            refine: true,
            sweep: true,
        }
    }
}

/// Normalized discrete cone on a mesh: one LP variable per vertex other than
/// the base vertex.
#[derive(Debug, Clone)]
pub struct DiscreteCone {
    mesh: Arc<Mesh>,
    base: usize,
    vertex_of: Vec<usize>,
    convexity: Vec<Vec<(usize, f64)>>,
    /// `||u||_b` coefficients.
    boundary: Vec<f64>,
    /// `integral A phi_i` coefficients.
    load: Vec<f64>,
    /// `integral phi_i` coefficients.
    mass: Vec<f64>,
}

impl DiscreteCone {
    pub fn new(eval: &FunctionalEvaluator, mesh: Arc<Mesh>, base: usize) -> Result<Self> {
        if base >= mesh.num_vertices() || mesh.is_boundary_vertex(base) {
            return Err(Error::InvalidBasePoint(
                mesh.vertex(base.min(mesh.num_vertices() - 1)).to_vec(),
            ));
        }
        let nv = mesh.num_vertices();
        let mut var_of = vec![usize::MAX; nv];
        let mut vertex_of = Vec::with_capacity(nv - 1);
        for (v, slot) in var_of.iter_mut().enumerate() {
            if v != base {
                *slot = vertex_of.len();
                vertex_of.push(v);
            }
        }
        let convexity = mesh
            .convexity_constraints()
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .filter(|(v, _)| *v != base)
                    .map(|(v, c)| (var_of[v], c))
                    .collect::<Vec<_>>()
            })
            .filter(|row| !row.is_empty())
            .collect();
        let bw = mesh.boundary_weights();
        let loads = load_vector(eval, &mesh);
        let boundary = vertex_of.iter().map(|&v| bw[v]).collect();
        let load = vertex_of.iter().map(|&v| loads[v]).collect();
        let mass = vertex_of.iter().map(|&v| mesh.lumped_mass()[v]).collect();
        Ok(Self {
            mesh,
            base,
            vertex_of,
            convexity,
            boundary,
            load,
            mass,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn num_vars(&self) -> usize {
        self.vertex_of.len()
    }

    /// LP with the convexity rows and no objective.
    fn program(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.num_vars());
        for row in &self.convexity {
            lp.add(row.clone(), Relation::Ge, 0.0);
        }
        lp
    }

    fn dense(v: &[f64]) -> Vec<(usize, f64)> {
        v.iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect()
    }

    /// `L_A` coefficients per variable.
    pub fn linear_functional_coeffs(&self) -> Vec<f64> {
        self.boundary
            .iter()
            .zip(&self.load)
            .map(|(b, m)| b - m)
            .collect()
    }

    fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut vals = vec![0.0; self.mesh.num_vertices()];
        for (i, &v) in self.vertex_of.iter().enumerate() {
            vals[v] = x[i];
        }
        vals
    }

    fn witness(&self, kind: WitnessKind, x: &[f64]) -> MeshWitness {
        let lcoef = self.linear_functional_coeffs();
        MeshWitness {
            kind,
            mesh_parameter: self.mesh.h(),
            base_vertex: self.base,
            values: self.values(x),
            boundary_norm: x.iter().zip(&self.boundary).map(|(a, b)| a * b).sum(),
            linear_functional: x.iter().zip(&lcoef).map(|(a, b)| a * b).sum(),
        }
    }

    /// `min L_A(u)` subject to `||u||_b = 1`.
    pub fn minimize_ratio(&self, opts: &LpOptions) -> Result<(f64, MeshWitness, usize)> {
        let mut lp = self.program();
        lp.objective = self.linear_functional_coeffs();
        lp.add(Self::dense(&self.boundary), Relation::Eq, 1.0);
        let s = lp::solve(&lp, opts)?;
        Ok((s.objective, self.witness(WitnessKind::Minimizer, &s.x), s.iterations))
    }

    /// `max integral u` subject to `||u||_b = 1`.
    pub fn maximize_mass(&self, opts: &LpOptions) -> Result<f64> {
        let mut lp = self.program();
        lp.objective = self.mass.iter().map(|m| -m).collect();
        lp.add(Self::dense(&self.boundary), Relation::Eq, 1.0);
        Ok(-lp::solve(&lp, opts)?.objective)
    }

    /// `min ||u||_b` subject to `L_A(u) <= tol` and `integral u = 1`; `None`
    /// when infeasible.
    pub fn find_extremal(&self, opts: &LpOptions) -> Result<Option<MeshWitness>> {
        let mut lp = self.program();
        lp.objective = self.boundary.clone();
        lp.add(
            Self::dense(&self.linear_functional_coeffs()),
            Relation::Le,
            EXTREMAL_TOL,
        );
        lp.add(Self::dense(&self.mass), Relation::Eq, 1.0);
        match lp::solve(&lp, opts) {
            Ok(s) => Ok(Some(self.witness(WitnessKind::NontrivialExtremal, &s.x))),
            Err(Error::LpInfeasible) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// `integral A phi_i` for every hat function, exact for polynomial `A`.
pub(crate) fn load_vector(eval: &FunctionalEvaluator, mesh: &Mesh) -> Vec<f64> {
    let a = eval.field();
    let scheme = match a.polynomial_degree() {
        Some(d) => QuadratureScheme::new(d + 1),
        None => QuadratureScheme::new(eval.scheme().degree).with_subdivisions(4),
    };
    let mut load = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_cells() {
        let c = mesh.cell(t);
        if mesh.dim() == 1 {
            let (xa, xb) = (mesh.vertex(c[0])[0], mesh.vertex(c[1])[0]);
            let rule = QuadratureRule::for_region(&crate::polytope::Region::Interval(xa, xb), scheme);
            for (x, w) in rule.iter() {
                let s = (x[0] - xa) / (xb - xa);
                let av = a.value(x);
                load[c[0]] += w * av * (1.0 - s);
                load[c[1]] += w * av * s;
            }
        } else {
            let (p0, p1, p2) = (mesh.vertex(c[0]), mesh.vertex(c[1]), mesh.vertex(c[2]));
            let rule = QuadratureRule::for_triangle(
                [p0[0], p0[1]],
                [p1[0], p1[1]],
                [p2[0], p2[1]],
                scheme,
            );
            for (x, w) in rule.iter() {
                let bary = mesh.barycentric(t, [x[0], x[1]]);
                let av = a.value(x);
                for k in 0..3 {
                    load[c[k]] += w * av * bary[k];
                }
            }
        }
    }
    load
}

/// Interior vertex nearest the center of mass.
pub fn default_base_vertex(mesh: &Mesh) -> Result<usize> {
    let c = mesh.polytope().center_of_mass();
    let mut best: Option<(f64, usize)> = None;
    for v in 0..mesh.num_vertices() {
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        let d: f64 = mesh
            .vertex(v)
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, v));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::InvalidBasePoint(c.clone()))
}

fn base_vertex_for(mesh: &Mesh, point: &[f64]) -> Result<usize> {
    let v = mesh.nearest_vertex(point);
    let d = mesh
        .vertex(v)
        .iter()
        .zip(point)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if d > 1e-9 * mesh.polytope().diameter() || mesh.is_boundary_vertex(v) {
        return Err(Error::InvalidBasePoint(point.to_vec()));
    }
    Ok(v)
}

fn classify(lambda: f64, refined: Option<f64>, threshold: f64) -> StabilityStatus {
    let low = refined.map_or(lambda, |r| r.min(lambda));
    if lambda >= threshold && refined.is_some_and(|r| r >= threshold) {
        StabilityStatus::UniformlyStable
    } else if low < -BOUNDARY_TOL {
        StabilityStatus::RelativelyUnstable
    } else if low.abs() <= BOUNDARY_TOL {
        StabilityStatus::BoundaryCase
    } else {
        StabilityStatus::Inconclusive
    }
}

/// Solves the stability LP on `mesh` (and on the `h/2` mesh when
/// `opts.refine`), runs the crease sweep and classifies the result.
pub fn lp_stability_estimate(
    eval: &FunctionalEvaluator,
    mesh: Arc<Mesh>,
    base: Option<usize>,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    let base = match base {
        Some(b) => b,
        None => default_base_vertex(&mesh)?,
    };
    let base_point = mesh.vertex(base).to_vec();
    let cone = DiscreteCone::new(eval, mesh.clone(), base)?;
    let (lambda_hat, witness, mut iterations) = cone.minimize_ratio(&opts.lp)?;
    let lambda_hat_refined = if opts.refine {
        let fine = Arc::new(make_mesh(eval.polytope(), mesh.h() / 2.0)?);
        let fb = base_vertex_for(&fine, &base_point)?;
        let (l, _, it) = DiscreteCone::new(eval, fine, fb)?.minimize_ratio(&opts.lp)?;
        iterations += it;
        Some(l)
    } else {
        None
    };
    let (mut crease_sweep_min, mut crease_sweep_min_all, mut crease_argmin) = (None, None, None);
    if opts.sweep {
        let grid = default_crease_grid(&mesh);
        if let Ok(all) = crease_sweep(eval, &grid, &base_point) {
            crease_sweep_min_all = Some(all.min_ratio);
            crease_argmin = Some(all.argmin.clone());
        }
        let representable: Vec<AffineFunc> = grid
            .into_iter()
            .filter(|l| is_representable(&mesh, l))
            .collect();
        if let Ok(rep) = crease_sweep(eval, &representable, &base_point) {
            crease_sweep_min = Some(rep.min_ratio);
        }
    }
    Ok(StabilityReport {
        status: classify(lambda_hat, lambda_hat_refined, opts.threshold),
        lambda_hat,
        lambda_hat_refined,
        mesh_parameter: mesh.h(),
        base_point,
        crease_sweep_min,
        crease_sweep_min_all,
        crease_argmin,
        destabilizer: Some(witness),
        certificate: None,
        lp_iterations: iterations,
    })
}

/// Outcome of the relative polystability test on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolystabilityCheck {
    pub polystable: bool,
    pub lambda_hat: f64,
    pub witness: Option<MeshWitness>,
}

/// Relatively polystable on the mesh iff `lambda_hat >= -1e-6` and no
/// normalized `u` with `integral u = 1` has `L_A(u) <= 1e-9`.
pub fn relative_kpolystability_check(
    eval: &FunctionalEvaluator,
    mesh: Arc<Mesh>,
    base: Option<usize>,
    opts: &LpOptions,
) -> Result<PolystabilityCheck> {
    let base = match base {
        Some(b) => b,
        None => default_base_vertex(&mesh)?,
    };
    let cone = DiscreteCone::new(eval, mesh, base)?;
    let (lambda_hat, witness, _) = cone.minimize_ratio(opts)?;
    if lambda_hat < -BOUNDARY_TOL {
        return Ok(PolystabilityCheck {
            polystable: false,
            lambda_hat,
            witness: Some(witness),
        });
    }
    let extremal = cone.find_extremal(opts)?;
    Ok(PolystabilityCheck {
        polystable: extremal.is_none(),
        lambda_hat,
        witness: extremal,
    })
}

/// `max integral u` over normalized mesh functions with `||u||_b = 1`, i.e.
/// the smallest `C'` with `||u||_{L^1} <= C' ||u||_b` on the discrete cone.
pub fn l1_boundary_constant(
    eval: &FunctionalEvaluator,
    mesh: Arc<Mesh>,
    base: Option<usize>,
    opts: &LpOptions,
) -> Result<f64> {
    let base = match base {
        Some(b) => b,
        None => default_base_vertex(&mesh)?,
    };
    DiscreteCone::new(eval, mesh, base)?.maximize_mass(opts)
}

/// Convenience: polytope and weight to evaluator plus mesh.
pub fn setup(p: &Polytope, a: Arc<dyn crate::field::ScalarField>, h: f64) -> Result<(FunctionalEvaluator, Arc<Mesh>)> {
    let eval = FunctionalEvaluator::new(p.clone(), a)?;
    let mesh = Arc::new(make_mesh(p, h)?);
    Ok((eval, mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Polynomial;
    use crate::polytope::Facet;

    fn interval() -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap()
    }

    #[test]
    fn interval_lambda_is_one_half() {
        let (eval, mesh) = setup(&interval(), Arc::new(2.0), 1.0 / 64.0).unwrap();
        let r = lp_stability_estimate(&eval, mesh, None, &StabilityOptions::default()).unwrap();
        assert!((r.lambda_hat - 0.5).abs() < 1e-9, "{r:?}");
        assert_eq!(r.status, StabilityStatus::UniformlyStable);
        assert!((r.crease_sweep_min.unwrap() - 0.5).abs() < 1e-12);
        let w = r.destabilizer.unwrap();
        assert!((w.boundary_norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tilted_weight_is_unstable() {
        let a = Polynomial::parse("2 + 7*(x - 0.5)", 1).unwrap();
        let (eval, mesh) = setup(&interval(), Arc::new(a), 1.0 / 64.0).unwrap();
        let r = lp_stability_estimate(&eval, mesh.clone(), None, &StabilityOptions::default()).unwrap();
        assert_eq!(r.status, StabilityStatus::RelativelyUnstable);
        assert!(r.lambda_hat <= -1.0 / 12.0 + 1e-12);
        let c = relative_kpolystability_check(&eval, mesh, None, &LpOptions::default()).unwrap();
        assert!(!c.polystable);
        assert_eq!(c.witness, r.destabilizer);
    }

    #[test]
    fn exact_mode_agrees_on_small_mesh() {
        let (eval, mesh) = setup(&interval(), Arc::new(2.0), 1.0 / 16.0).unwrap();
        let cone = DiscreteCone::new(&eval, mesh, 8).unwrap();
        let f = cone.minimize_ratio(&LpOptions::default()).unwrap().0;
        let e = cone
            .minimize_ratio(&LpOptions {
                arithmetic: crate::lp::Arithmetic::Exact,
                ..Default::default()
            })
            .unwrap()
            .0;
        assert!((f - 0.5).abs() < 1e-12 && (e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn l1_constant_on_interval() {
        let (eval, mesh) = setup(&interval(), Arc::new(2.0), 1.0 / 64.0).unwrap();
        let c = l1_boundary_constant(&eval, mesh, None, &LpOptions::default()).unwrap();
        assert!((c - 0.25).abs() < 1e-9, "{c}");
    }
}
