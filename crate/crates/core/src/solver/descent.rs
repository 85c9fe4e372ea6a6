//! Descent on the discretized Mabuchi functional over corrections
//! `u = u_o + f`, with `f` supported away from the boundary.
//!
//! The discrete functional is
//! `F(f) = F_A(u_o) + sum_i a_i [log det H_i - log det (H_i + K_i f)] - sum_j b_j f_j`
//! where `H_i = Hess u_o` at interior vertex `i`, `K_i f` the quadric-fit
//! Hessian of `f`, `a_i` the lumped mass and `b_j = integral A phi_j`. It is
//! convex in `f` and equals `F_A(u_o)` at `f = 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Sym;
use crate::functionals::{FunctionalEvaluator, HessianSurrogate};
use crate::functions::{guillemin_potential, MeshConvexFunc, SmoothConvexFunc};
use crate::mesh::Mesh;
use crate::stability::load_vector;

pub const ARMIJO_C: f64 = 1e-4;
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Steepest descent with Armijo backtracking.
    Armijo,
    /// Armijo backtracking along `-P^{-1} g`, `P` the discrete Hessian at `f = 0`.
    PreconditionedArmijo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Bound on the mass-normalized gradient `max_j |g_j| / a_j`.
    pub tol: f64,
    /// Corrections vanish within this distance of the boundary; `2h` if unset.
    pub margin: Option<f64>,
    pub step_rule: StepRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-6,
            margin: None,
            step_rule: StepRule::PreconditionedArmijo,
        }
    }
}

struct Row {
    mass: f64,
    reference: Sym,
    /// Stencil restricted to active unknowns.
    stencil: Vec<(usize, Sym)>,
}

/// The discretized functional over corrections at the active vertices.
pub struct DiscreteMabuchi {
    mesh: Arc<Mesh>,
    u_o: SmoothConvexFunc,
    base_value: f64,
    active: Vec<usize>,
    rows: Vec<Row>,
    load: Vec<f64>,
    active_mass: Vec<f64>,
}

impl DiscreteMabuchi {
    pub fn new(eval: &FunctionalEvaluator, mesh: Arc<Mesh>, margin: f64) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::InvalidMeshParameter(margin));
        }
        let p = eval.polytope();
        let u_o = guillemin_potential(p);
        let base_value = eval.mabuchi_smooth(&u_o)?.value;
        let active: Vec<usize> = (0..mesh.num_vertices())
            .filter(|&v| p.boundary_distance(mesh.vertex(v)) > margin * (1.0 + 1e-9))
            .collect();
        if active.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut index_of = vec![usize::MAX; mesh.num_vertices()];
        for (k, &v) in active.iter().enumerate() {
            index_of[v] = k;
        }
        let surrogate = HessianSurrogate::new(mesh.clone());
        let mut rows = Vec::new();
        for i in 0..mesh.num_vertices() {
            if mesh.is_boundary_vertex(i) {
                continue;
            }
            let stencil: Vec<(usize, Sym)> = surrogate
                .stencil(i)
                .iter()
                .filter(|(j, _)| index_of[*j] != usize::MAX)
                .map(|(j, k)| (index_of[*j], *k))
                .collect();
            if stencil.is_empty() {
                continue;
            }
            rows.push(Row {
                mass: mesh.lumped_mass()[i],
                reference: u_o.hessian(mesh.vertex(i))?,
                stencil,
            });
        }
        let full_load = load_vector(eval, &mesh);
        let load = active.iter().map(|&v| full_load[v]).collect();
        let active_mass = active.iter().map(|&v| mesh.lumped_mass()[v]).collect();
        Ok(Self {
            mesh,
            u_o,
            base_value,
            active,
            rows,
            load,
            active_mass,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Vertex indices carrying unknowns.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `F_A(u_o)` on the graded rule, the value at `f = 0`.
    pub fn reference_value(&self) -> f64 {
        self.base_value
    }

    fn matrix(&self, row: &Row, f: &[f64]) -> Sym {
        row.stencil
            .iter()
            .fold(row.reference, |acc, (j, k)| acc.add(&k.scale(f[*j])))
    }

    /// `(F(f), min det)`; fails when a discrete Hessian leaves the cone.
    pub fn value(&self, f: &[f64]) -> Result<(f64, f64)> {
        let mut acc = self.base_value;
        let mut min_det = f64::INFINITY;
        for (r, row) in self.rows.iter().enumerate() {
            let m = self.matrix(row, f);
            let det = m.det();
            if !(det > 0.0 && m.is_positive_definite()) {
                return Err(Error::NonConvexAtQuadraturePoint {
                    point: vec![r as f64],
                    det,
                });
            }
            min_det = min_det.min(det);
            acc += row.mass * (row.reference.det().ln() - det.ln());
        }
        acc -= self.load.iter().zip(f).map(|(b, x)| b * x).sum::<f64>();
        Ok((acc, min_det))
    }

    /// `(F(f + s) - F(f), min det at f + s)`, summed from per-vertex
    /// `log(1 + delta det / det)` so small decreases are not lost to
    /// cancellation against `F` itself.
    pub fn delta_value(&self, f: &[f64], s: &[f64]) -> Result<(f64, f64)> {
        let mut acc = 0.0;
        let mut min_det = f64::INFINITY;
        for (r, row) in self.rows.iter().enumerate() {
            let m = self.matrix(row, f);
            let e = row
                .stencil
                .iter()
                .fold(Sym::zero(m.dim), |acc, (j, k)| acc.add(&k.scale(s[*j])));
            let n = m.add(&e);
            let det = n.det();
            if !(det > 0.0 && n.is_positive_definite()) {
                return Err(Error::NonConvexAtQuadraturePoint {
                    point: vec![r as f64],
                    det,
                });
            }
            min_det = min_det.min(det);
            let change = if m.dim == 1 {
                e.a
            } else {
                m.a * e.c + e.a * m.c + e.a * e.c - 2.0 * m.b * e.b - e.b * e.b
            };
            acc -= row.mass * (change / m.det()).ln_1p();
        }
        acc -= self.load.iter().zip(s).map(|(b, x)| b * x).sum::<f64>();
        Ok((acc, min_det))
    }

    /// Analytic gradient `g_j = -sum_i a_i (H_i + K_i f)^{-1} : K_ij - b_j`.
    pub fn gradient(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut g: Vec<f64> = self.load.iter().map(|b| -b).collect();
        for row in &self.rows {
            let inv = self.matrix(row, f).inverse().ok_or(Error::LostConvexity)?;
            for (j, k) in &row.stencil {
                g[*j] -= row.mass * inv.dot(k);
            }
        }
        Ok(g)
    }

    /// Dense second derivative `sum_i a_i (M_i^{-1} K_ij M_i^{-1}) : K_il`.
    pub fn hessian(&self, f: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.active.len();
        let mut h = DMatrix::zeros(n, n);
        for row in &self.rows {
            let inv = self.matrix(row, f).inverse().ok_or(Error::LostConvexity)?;
            for (j, kj) in &row.stencil {
                let b = inv.sandwich(kj);
                for (l, kl) in &row.stencil {
                    h[(*j, *l)] += row.mass * b.dot(kl);
                }
            }
        }
        Ok(h)
    }

    /// `max_j |g_j| / a_j`, a discrete `S(u) - A`.
    pub fn residual(&self, g: &[f64]) -> f64 {
        g.iter()
            .zip(&self.active_mass)
            .map(|(gi, a)| (gi / a).abs())
            .fold(0.0, f64::max)
    }

    /// Correction values at the active vertices from a function.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.active.iter().map(|&v| f(self.mesh.vertex(v))).collect()
    }

    /// `F` at the correction sampled from `f`.
    pub fn value_of(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        Ok(self.value(&self.sample(f))?.0)
    }

    /// Vertex values of `u_o + f`.
    pub fn vertex_values(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut v = (0..self.mesh.num_vertices())
            .map(|i| self.u_o.value(self.mesh.vertex(i)))
            .collect::<Result<Vec<f64>>>()?;
        for (k, &i) in self.active.iter().enumerate() {
            v[i] += f[k];
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub value: f64,
    pub residual: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverState {
    #[serde(skip)]
    pub mesh: Option<Arc<Mesh>>,
    pub mesh_parameter: f64,
    pub margin: f64,
    pub active: Vec<usize>,
    /// Corrections at the active vertices.
    pub correction: Vec<f64>,
    pub steps: usize,
    pub value: f64,
    /// `F_A(u_o)`, the value at zero correction.
    pub reference_value: f64,
    pub history: Vec<HistoryEntry>,
    /// Smallest discrete Hessian determinant at the current iterate.
    pub convexity_margin: f64,
    pub converged: bool,
}

impl SolverState {
    pub fn initial_residual(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |h| h.residual)
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.residual)
    }

    /// `u_o + f` as a mesh function.
    pub fn solution(&self, problem: &DiscreteMabuchi) -> Result<MeshConvexFunc> {
        MeshConvexFunc::new(problem.mesh().clone(), problem.vertex_values(&self.correction)?)
    }
}

/// Minimizes the discrete functional from `u_o + init` (zero when `init`
/// is `None`) by backtracking descent. Every accepted step lowers `F`
/// strictly and keeps every discrete Hessian positive definite.
pub fn solve_2d_descent(
    eval: &FunctionalEvaluator,
    mesh: Arc<Mesh>,
    init: Option<&dyn Fn(&[f64]) -> f64>,
    opts: &SolverOptions,
) -> Result<(SolverState, DiscreteMabuchi)> {
    let margin = opts.margin.unwrap_or(2.0 * mesh.h());
    let problem = DiscreteMabuchi::new(eval, mesh.clone(), margin)?;
    let mut f = match init {
        Some(g) => problem.sample(g),
        None => vec![0.0; problem.active().len()],
    };
    let (mut value, mut det) = problem.value(&f).map_err(|_| Error::LostConvexity)?;
    let precond = match opts.step_rule {
        StepRule::Armijo => None,
        StepRule::PreconditionedArmijo => {
            let mut h = problem.hessian(&vec![0.0; f.len()])?;
            let shift = 1e-12 * h.diagonal().amax();
            for i in 0..h.nrows() {
                h[(i, i)] += shift;
            }
            Some(h.cholesky().ok_or(Error::LostConvexity)?)
        }
    };
    let mut history = Vec::new();
    let mut step_size = 0.0;
    let mut converged = false;
    let mut steps = 0;
    loop {
        let g = problem.gradient(&f)?;
        let r = problem.residual(&g);
        history.push(HistoryEntry {
            step: steps,
            value,
            residual: r,
            step_size,
        });
        if r <= opts.tol {
            converged = true;
            break;
        }
        if steps >= opts.max_iter {
            break;
        }
        let d: Vec<f64> = match &precond {
            Some(c) => c.solve(&DVector::from_column_slice(&g)).iter().map(|x| -x).collect(),
            None => g
                .iter()
                .zip(problem.active_mass.iter())
                .map(|(gi, a)| -gi / a)
                .collect(),
        };
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let accepted = loop {
            let s: Vec<f64> = d.iter().map(|y| t * y).collect();
            if let Ok((dv, m)) = problem.delta_value(&f, &s) {
                if dv < 0.0 && dv <= ARMIJO_C * t * slope {
                    let trial = f.iter().zip(&s).map(|(x, y)| x + y).collect();
                    break Some((trial, value + dv, m));
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((trial, v, m)) = accepted else {
            return Err(Error::LineSearchStall(t));
        };
        if v >= value {
            // The decrease is below the resolution of F itself.
            break;
        }
        f = trial;
        value = v;
        det = m;
        step_size = t;
        steps += 1;
    }
    let state = SolverState {
        mesh: Some(mesh.clone()),
        mesh_parameter: mesh.h(),
        margin,
        active: problem.active().to_vec(),
        correction: f,
        steps,
        value,
        reference_value: problem.reference_value(),
        history,
        convexity_margin: det,
        converged,
    };
    Ok((state, problem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;
    use crate::polytope::{Facet, Polytope};

    fn square() -> Polytope {
        Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, 0.0], -1.0),
            Facet::new([0.0, -1.0], -1.0),
        ])
        .unwrap()
    }

    fn bump(x: &[f64]) -> f64 {
        let b = 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        0.1 * (x[0] - 0.5) * (x[1] - 0.5) * b * b
    }

    #[test]
    fn gradient_matches_differences() {
        let p = square();
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(4.0)).unwrap();
        let mesh = Arc::new(make_mesh(&p, 0.125).unwrap());
        let d = DiscreteMabuchi::new(&eval, mesh, 0.25).unwrap();
        let f = d.sample(bump);
        let g = d.gradient(&f).unwrap();
        let h = d.hessian(&f).unwrap();
        let eps = 1e-6;
        for j in 0..f.len() {
            let mut fp = f.clone();
            fp[j] += eps;
            let mut fm = f.clone();
            fm[j] -= eps;
            let fd = (d.value(&fp).unwrap().0 - d.value(&fm).unwrap().0) / (2.0 * eps);
            assert!((fd - g[j]).abs() < 1e-7, "{j}: {fd} vs {}", g[j]);
            let gp = d.gradient(&fp).unwrap();
            let gm = d.gradient(&fm).unwrap();
            for l in 0..f.len() {
                assert!(((gp[l] - gm[l]) / (2.0 * eps) - h[(l, j)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn guillemin_start_is_stationary() {
        let p = square();
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(4.0)).unwrap();
        let mesh = Arc::new(make_mesh(&p, 0.125).unwrap());
        let (s, _) = solve_2d_descent(&eval, mesh, None, &SolverOptions::default()).unwrap();
        assert!(s.initial_residual() < 1e-6, "{}", s.initial_residual());
        assert!((s.value - s.reference_value).abs() < 1e-12);
    }

    #[test]
    fn perturbed_start_descends() {
        let p = square();
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(4.0)).unwrap();
        let mesh = Arc::new(make_mesh(&p, 0.125).unwrap());
        for rule in [StepRule::PreconditionedArmijo, StepRule::Armijo] {
            let opts = SolverOptions {
                step_rule: rule,
                max_iter: 20000,
                ..Default::default()
            };
            let (s, _) = solve_2d_descent(&eval, mesh.clone(), Some(&bump), &opts).unwrap();
            assert!(s.history.windows(2).all(|w| w[1].value < w[0].value), "{rule:?}");
            assert!((s.value - s.reference_value).abs() < 1e-4, "{rule:?}");
            assert!(s.final_residual() * 100.0 <= s.initial_residual(), "{rule:?}");
            assert!(s.convexity_margin > 0.0);
        }
    }
}
