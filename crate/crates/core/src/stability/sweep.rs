//! Crease sweeps: `L_A / ||.||_b` over normalized creases `max(0, l)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FunctionalEvaluator;
use crate::functions::{crease, normalize, AffineFunc, ConvexFunc};
use crate::mesh::Mesh;

/// Creases whose normalized boundary norm is below this are skipped.
pub const TRIVIAL_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreaseSweep {
    pub min_ratio: f64,
    /// The affine function whose crease attains the minimum.
    pub argmin: AffineFunc,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Minimum of `L_A(u)/||u||_b` over `u = normalize(max(0, l), p_o)` for `l`
/// in `grid`; the first minimizer wins ties.
pub fn crease_sweep(eval: &FunctionalEvaluator, grid: &[AffineFunc], p_o: &[f64]) -> Result<CreaseSweep> {
    let ratios = grid
        .par_iter()
        .map(|l| {
            let u = normalize(&ConvexFunc::Pl(crease(l)), p_o)?;
            let norm = eval.boundary_norm(&u)?;
            if norm < TRIVIAL_NORM {
                return Ok(None);
            }
            Ok(Some(eval.linear_functional(&u)? / norm))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let mut best: Option<(f64, &AffineFunc)> = None;
    let (mut evaluated, mut skipped) = (0, 0);
    for (l, ratio) in grid.iter().zip(ratios) {
        let Some(ratio) = ratio else {
            skipped += 1;
            continue;
        };
        evaluated += 1;
        if best.is_none_or(|b| ratio < b.0) {
            best = Some((ratio, l));
        }
    }
    let (min_ratio, argmin) = best.ok_or(Error::EmptyGrid)?;
    Ok(CreaseSweep {
        min_ratio,
        argmin: argmin.clone(),
        evaluated,
        skipped,
    })
}

/// Kinks at every interior mesh vertex (1D, both orientations) or along
/// every line through two boundary mesh vertices that are not on a common
/// facet (2D, both orientations).
pub fn default_crease_grid(mesh: &Mesh) -> Vec<AffineFunc> {
    let mut grid = Vec::new();
    if mesh.dim() == 1 {
        for v in 0..mesh.num_vertices() {
            if mesh.is_boundary_vertex(v) {
                continue;
            }
            let t = mesh.vertex(v)[0];
            grid.push(AffineFunc::new(-t, [1.0]));
            grid.push(AffineFunc::new(t, [-1.0]));
        }
        return grid;
    }
    let boundary: Vec<usize> = (0..mesh.num_vertices())
        .filter(|&v| mesh.is_boundary_vertex(v))
        .collect();
    for (i, &a) in boundary.iter().enumerate() {
        for &b in &boundary[i + 1..] {
            let shared = mesh
                .vertex_facets(a)
                .iter()
                .any(|k| mesh.vertex_facets(b).contains(k));
            if shared {
                continue;
            }
            let (p, q) = (mesh.vertex(a), mesh.vertex(b));
            let n = [q[1] - p[1], p[0] - q[0]];
            let l = AffineFunc::new(-(n[0] * p[0] + n[1] * p[1]), n.to_vec());
            grid.push(l.clone());
            grid.push(l.scale(-1.0));
        }
    }
    grid
}

/// Whether `max(0, l)` is itself a mesh function: no cell is cut by the
/// zero line of `l` in its interior.
pub fn is_representable(mesh: &Mesh, l: &AffineFunc) -> bool {
    let scale = 1.0 + l.gradient.iter().map(|g| g.abs()).sum::<f64>() * mesh.polytope().diameter()
        + l.constant.abs();
    let tol = 1e-12 * scale;
    mesh.cells().all(|c| {
        let (mut pos, mut neg) = (false, false);
        for &v in c {
            let s = l.value(mesh.vertex(v));
            pos |= s > tol;
            neg |= s < -tol;
        }
        !(pos && neg)
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::field::Polynomial;
    use crate::mesh::make_mesh;
    use crate::polytope::{Facet, Polytope};

    fn interval() -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap()
    }

    #[test]
    fn interval_sweep_minimum() {
        let p = interval();
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(2.0)).unwrap();
        let mesh = make_mesh(&p, 1.0 / 64.0).unwrap();
        let s = crease_sweep(&eval, &default_crease_grid(&mesh), &[0.5]).unwrap();
        assert!((s.min_ratio - 0.5).abs() < 1e-12);
        assert!((s.argmin.value(&[0.5])).abs() < 1e-15);
    }

    #[test]
    fn tilted_weight_crease_at_half() {
        let p = interval();
        let a = Polynomial::parse("2 + 7*(x - 0.5)", 1).unwrap();
        let eval = FunctionalEvaluator::new(p, Arc::new(a)).unwrap();
        let l = AffineFunc::new(-0.5, [1.0]);
        let u = ConvexFunc::Pl(crease(&l));
        assert!((eval.linear_functional(&u).unwrap() + 1.0 / 24.0).abs() < 1e-14);
    }

    #[test]
    fn creases_outside_are_skipped() {
        let p = interval();
        let eval = FunctionalEvaluator::new(p, Arc::new(2.0)).unwrap();
        let grid = vec![AffineFunc::new(-2.0, [1.0]), AffineFunc::new(0.5, [1.0])];
        assert_eq!(crease_sweep(&eval, &grid, &[0.5]), Err(Error::EmptyGrid));
        assert_eq!(crease_sweep(&eval, &[], &[0.5]), Err(Error::EmptyGrid));
    }

    #[test]
    fn representability() {
        let p = Polytope::new(vec![
            Facet::new([1.0, 0.0], 0.0),
            Facet::new([0.0, 1.0], 0.0),
            Facet::new([-1.0, 0.0], -1.0),
            Facet::new([0.0, -1.0], -1.0),
        ])
        .unwrap();
        let mesh = make_mesh(&p, 0.25).unwrap();
        assert!(is_representable(&mesh, &AffineFunc::new(-0.5, [1.0, 0.0])));
        assert!(is_representable(&mesh, &AffineFunc::new(-1.0, [1.0, 1.0])));
        assert!(!is_representable(&mesh, &AffineFunc::new(0.0, [1.0, -1.0])));
        assert!(!is_representable(&mesh, &AffineFunc::new(-0.3, [1.0, 0.0])));
    }
}
