//! Smooth convex approximation of a convex function by dilation toward the
//! center of mass followed by convolution with a compactly supported bump.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::Sym;
use crate::polytope::Polytope;
use crate::quadrature::gauss_legendre;

use super::{ConvexFunc, SmoothConvexFunc};

const NODES_1D: usize = 48;
const NODES_2D: usize = 20;
const MAX_HALVINGS: usize = 60;

/// Result of [`dilate_mollify_approx`].
#[derive(Debug, Clone)]
pub struct MollifiedApprox {
    pub func: SmoothConvexFunc,
    /// Dilation factor `1 - 1/k`.
    pub dilation: f64,
    /// Radius of the bump support.
    pub epsilon: f64,
    /// Sampled sup distance between the mollified and the dilated function.
    pub sup_gap: f64,
}

/// Kernel sample: offset, mass weight, first and second derivative weights.
#[derive(Debug, Clone)]
struct Node {
    y: [f64; 2],
    w: f64,
    dw: [f64; 2],
    d2w: Sym,
}

/// Profile `exp(-1/(1-t^2))` and its first two derivatives on `(-1, 1)`.
fn bump(t: f64) -> (f64, f64, f64) {
    let s = 1.0 - t * t;
    let phi = (-1.0 / s).exp();
    let g1 = -2.0 * t / (s * s);
    let g2 = -2.0 / (s * s) - 8.0 * t * t / (s * s * s);
    (phi, phi * g1, phi * (g1 * g1 + g2))
}

/// Gauss nodes on `[-1, 1]`, mirrored so the rule is exactly symmetric.
fn symmetric_gauss(m: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(m);
    let mut out: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| (2.0 * x - 1.0, 2.0 * w)).collect();
    for i in 0..m / 2 {
        let (t, wt) = out[i];
        out[m - 1 - i] = (-t, wt);
    }
    if m % 2 == 1 {
        out[m / 2].0 = 0.0;
    }
    out
}

/// One-dimensional kernel of half-width `e`: (offset, w, w', w'').
fn kernel_1d(m: usize, e: f64) -> Vec<(f64, f64, f64, f64)> {
    let g = symmetric_gauss(m);
    let z: f64 = g.iter().map(|(t, w)| w * bump(*t).0).sum();
    g.iter()
        .map(|(t, w)| {
            let (p, dp, d2p) = bump(*t);
            (t * e, w * p / z, w * dp / (z * e), w * d2p / (z * e * e))
        })
        .collect()
}

fn kernel(dim: usize, eps: f64) -> Vec<Node> {
    if dim == 1 {
        return kernel_1d(NODES_1D, eps)
            .into_iter()
            .map(|(y, w, dw, d2w)| Node {
                y: [y, 0.0],
                w,
                dw: [dw, 0.0],
                d2w: Sym::one_d(d2w),
            })
            .collect();
    }
    // Tensor bump with per-axis half-width eps/sqrt(2) so the support fits in
    // the eps-ball.
    let k = kernel_1d(NODES_2D, eps / 2f64.sqrt());
    let mut out = Vec::with_capacity(k.len() * k.len());
    for a in &k {
        for b in &k {
            out.push(Node {
                y: [a.0, b.0],
                w: a.1 * b.1,
                dw: [a.2 * b.1, a.1 * b.2],
                d2w: Sym::two_d(a.3 * b.1, a.2 * b.2, a.1 * b.3),
            });
        }
    }
    out
}

/// Dilate `u` about the center of mass by `r = 1 - 1/k`, then mollify with a
/// bump whose radius starts at `(1 - r)/4 * dist(center, boundary)` and is
/// halved until the sampled sup distance to the dilate is at most `1/k`.
pub fn dilate_mollify_approx(u: &ConvexFunc, k: usize, p: &Polytope) -> Result<MollifiedApprox> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    if u.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: u.dim(),
        });
    }
    let r = 1.0 - 1.0 / k as f64;
    let center = p.center_of_mass();
    let base = Arc::new(u.clone());
    let dilate = {
        let (base, center) = (base.clone(), center.clone());
        Arc::new(move |z: &[f64]| -> Result<f64> {
            let x: Vec<f64> = z
                .iter()
                .zip(&center)
                .map(|(zi, ci)| ci + r * (zi - ci))
                .collect();
            base.value(&x)
        })
    };
    let samples = sample_points(p);
    let mut exact = Vec::with_capacity(samples.len());
    for x in &samples {
        exact.push(dilate(x)?);
    }
    let mut eps = (1.0 - r) / 4.0 * p.boundary_distance(&center) * (1.0 - 1e-9);
    let tol = 1.0 / k as f64;
    for _ in 0..MAX_HALVINGS {
        let nodes = Arc::new(kernel(p.dim(), eps));
        let func = mollified(p.dim(), nodes, dilate.clone());
        let mut gap = 0.0f64;
        for (x, e) in samples.iter().zip(&exact) {
            gap = gap.max((func.value(x)? - e).abs());
        }
        if gap <= tol {
            return Ok(MollifiedApprox {
                func,
                dilation: r,
                epsilon: eps,
                sup_gap: gap,
            });
        }
        eps *= 0.5;
    }
    Err(Error::InvalidK(k))
}

type Dilate = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;

fn mollified(dim: usize, nodes: Arc<Vec<Node>>, f: Dilate) -> SmoothConvexFunc {
    let shifted = move |x: &[f64], n: &Node| -> Result<f64> {
        let z = [x[0] - n.y[0], if dim > 1 { x[1] - n.y[1] } else { 0.0 }];
        f(&z[..dim])
    };
    let s1 = Arc::new(shifted);
    let (s2, s3) = (s1.clone(), s1.clone());
    let (n1, n2, n3) = (nodes.clone(), nodes.clone(), nodes);
    SmoothConvexFunc::new(
        dim,
        move |x| {
            let mut acc = 0.0;
            for n in n1.iter() {
                acc += n.w * s1(x, n)?;
            }
            Ok(acc)
        },
        move |x| {
            let mut g = [0.0; 2];
            for n in n2.iter() {
                let v = s2(x, n)?;
                g[0] += n.dw[0] * v;
                g[1] += n.dw[1] * v;
            }
            Ok(g[..dim].to_vec())
        },
        move |x| {
            let mut h = Sym::zero(dim);
            for n in n3.iter() {
                h = h.add(&n.d2w.scale(s3(x, n)?));
            }
            Ok(h)
        },
    )
}

/// Dense sample of the closed polytope used for the sup-distance check.
fn sample_points(p: &Polytope) -> Vec<Vec<f64>> {
    let verts = p.vertices();
    if p.dim() == 1 {
        let (a, b) = (verts[0][0].min(verts[1][0]), verts[0][0].max(verts[1][0]));
        let n = 2000;
        return (0..=n)
            .map(|i| vec![a + (b - a) * i as f64 / n as f64])
            .collect();
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in verts {
        for d in 0..2 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    let n = 40;
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let x = vec![
                lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
            ];
            if p.deltas(&x).iter().all(|d| *d >= -1e-12) {
                out.push(x);
            }
        }
    }
    out.extend(verts.iter().cloned());
    out
}
