//! Discrete Hessian of a mesh function from local least-squares quadrics.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::Sym;
use crate::mesh::Mesh;

/// Per-vertex Hessian as a linear map of the vertex values:
/// `H_i(v) = sum_j K_ij v_j`, fitted over the vertex star (widened to the
/// two- or three-ring where the star does not determine a quadric).
#[derive(Debug, Clone)]
pub struct HessianSurrogate {
    mesh: Arc<Mesh>,
    stencils: Vec<Vec<(usize, Sym)>>,
}

impl HessianSurrogate {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let stencils = (0..mesh.num_vertices()).map(|i| fit(&mesh, i)).collect();
        Self { mesh, stencils }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn stencil(&self, i: usize) -> &[(usize, Sym)] {
        &self.stencils[i]
    }

    pub fn hessian_at(&self, i: usize, values: &[f64]) -> Sym {
        let dim = self.mesh.dim();
        self.stencils[i]
            .iter()
            .fold(Sym::zero(dim), |acc, (j, k)| acc.add(&k.scale(values[*j])))
    }

    /// `-sum_i a_i log det H_i(v)` with lumped vertex masses `a_i`.
    pub fn log_det_integral(&self, values: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (i, a) in self.mesh.lumped_mass().iter().enumerate() {
            let det = self.hessian_at(i, values).det();
            if !(det > 0.0) || !det.is_finite() {
                return Err(Error::NonConvexAtQuadraturePoint {
                    point: self.mesh.vertex(i).to_vec(),
                    det,
                });
            }
            acc -= a * det.ln();
        }
        Ok(acc)
    }
}

fn fit(mesh: &Mesh, i: usize) -> Vec<(usize, Sym)> {
    let dim = mesh.dim();
    let h = mesh.h();
    let xi = mesh.vertex(i);
    let cols = if dim == 1 { 3 } else { 6 };
    let mut last = Vec::new();
    for depth in 1..=3 {
        let ring = mesh.ring(i, depth);
        if ring.len() < cols {
            continue;
        }
        // Coordinates scaled by h keep the normal matrix well conditioned.
        let m = DMatrix::from_fn(ring.len(), cols, |r, c| {
            let x = mesh.vertex(ring[r]);
            let dx = (x[0] - xi[0]) / h;
            if dim == 1 {
                return [1.0, dx, 0.5 * dx * dx][c];
            }
            let dy = (x[1] - xi[1]) / h;
            [1.0, dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy][c]
        });
        let svd = m.clone().svd(true, true);
        let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
        if smin <= 1e-8 * smax {
            continue;
        }
        let pinv = svd.pseudo_inverse(0.0).expect("full column rank");
        let s = 1.0 / (h * h);
        last = ring
            .iter()
            .enumerate()
            .map(|(r, &j)| {
                let k = if dim == 1 {
                    Sym::one_d(pinv[(2, r)] * s)
                } else {
                    Sym::two_d(pinv[(3, r)] * s, pinv[(4, r)] * s, pinv[(5, r)] * s)
                };
                (j, k)
            })
            .collect();
        break;
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;
    use crate::polytope::{Facet, Polytope};

    #[test]
    fn quadratics_are_reproduced() {
        let p = Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, -1.0], -1.0),
        ])
        .unwrap();
        let mesh = Arc::new(make_mesh(&p, 0.125).unwrap());
        let s = HessianSurrogate::new(mesh.clone());
        let vals: Vec<f64> = (0..mesh.num_vertices())
            .map(|i| {
                let x = mesh.vertex(i);
                1.0 + x[0] - 2.0 * x[1] + 1.5 * x[0] * x[0] + 0.5 * x[0] * x[1] + x[1] * x[1]
            })
            .collect();
        for i in 0..mesh.num_vertices() {
            let hh = s.hessian_at(i, &vals);
            assert!((hh.a - 3.0).abs() < 1e-9 && (hh.b - 0.5).abs() < 1e-9 && (hh.c - 2.0).abs() < 1e-9);
        }
        let area: f64 = mesh.lumped_mass().iter().sum();
        let ld = s.log_det_integral(&vals).unwrap();
        assert!((ld + area * (6.0f64 - 0.25).ln()).abs() < 1e-9);
    }

    #[test]
    fn interval_uses_second_differences() {
        let p = Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap();
        let mesh = Arc::new(make_mesh(&p, 0.25).unwrap());
        let s = HessianSurrogate::new(mesh);
        let v = [0.0, 0.1, 0.0, 0.3, 1.0];
        let hh = s.hessian_at(2, &v);
        assert!((hh.a - (0.1 - 0.0 + 0.3) / 0.0625).abs() < 1e-10);
    }
}
