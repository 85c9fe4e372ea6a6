//! Property checks across modules. Expected values come from closed forms
//! computed here, independently of the library code paths under test.

use std::sync::Arc;

use kstab::field::ScalarField;
use kstab::functionals::FunctionalEvaluator;
use kstab::functions::{
    crease, dilate_mollify_approx, guillemin_potential, normalize, segment_ma_measure, AffineFunc,
    ConvexFunc, MeshConvexFunc, PlConvexFunc,
};
use kstab::mesh::make_mesh;
use kstab::polytope::{Facet, Polytope};
use kstab::quadrature::{BoundaryRule, QuadratureRule, QuadratureScheme};
use kstab::solver::{residual, solve_1d, solve_2d_descent, DiscreteMabuchi, SolverOptions};
use kstab::stability::{
    crease_sweep, default_crease_grid, is_representable, lp_stability_estimate,
    relative_kpolystability_check, setup, StabilityOptions, STABLE_THRESHOLD,
};
use kstab::{extremal_affine, Error, Polynomial};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn cubic(x: &[f64]) -> f64 {
    1.0 + 2.0 * x[0] - x[1] + x[0] * x[0] * x[1] - 0.5 * x[1].powi(3) + x[0] * x[1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interior_quadrature_is_affine_invariant(
        m in proptest::array::uniform4(-2.0f64..2.0),
        t in proptest::array::uniform2(-1.0f64..1.0),
        which in 0usize..2,
    ) {
        let det = m[0] * m[3] - m[1] * m[2];
        prop_assume!(det.abs() > 0.1);
        let p = if which == 0 { square() } else { simplex() };
        let q = p.pullback(&m, &t).unwrap();
        let scheme = QuadratureScheme::new(6);
        let direct = QuadratureRule::for_polytope(&p, scheme).integrate(cubic);
        let pulled = QuadratureRule::for_polytope(&q, scheme).integrate(|y| {
            cubic(&[m[0] * y[0] + m[1] * y[1] + t[0], m[2] * y[0] + m[3] * y[1] + t[1]])
        }) * det.abs();
        prop_assert!((direct - pulled).abs() <= 1e-10 * (1.0 + direct.abs()), "{direct} vs {pulled}");
    }

    #[test]
    fn divergence_theorem_links_boundary_and_interior(
        l in proptest::array::uniform3(-5.0f64..5.0),
        v in proptest::array::uniform2(-3.0f64..3.0),
        which in 0usize..2,
    ) {
        // div(l V) = V . grad l is constant; the boundary side uses the outward
        // unit normal -h/|h| and the sigma weight 1/|h|.
        let p = if which == 0 { square() } else { simplex() };
        let scheme = QuadratureScheme::new(4);
        let lv = |x: &[f64]| l[0] + l[1] * x[0] + l[2] * x[1];
        let interior = (v[0] * l[1] + v[1] * l[2]) * p.volume();
        let rule = BoundaryRule::for_polytope(&p, scheme);
        let boundary = rule.integrate_by_facet(|k, x| {
            let h = &p.facets()[k].normal;
            -(v[0] * h[0] + v[1] * h[1]) * lv(x)
        });
        prop_assert!((interior - boundary).abs() <= 1e-10 * (1.0 + interior.abs()));
    }

    #[test]
    fn normalize_ignores_affine_shifts(
        c in -3.0f64..3.0, g0 in -3.0f64..3.0, g1 in -3.0f64..3.0,
        k in 0.2f64..0.8,
    ) {
        let p_o = [0.5, 0.5];
        let u = ConvexFunc::Pl(PlConvexFunc::new(vec![
            AffineFunc::new(0.0, [0.0, 0.0]),
            AffineFunc::new(-k, [1.0, 0.3]),
            AffineFunc::new(-0.5, [-0.4, 1.0]),
        ]).unwrap());
        let shifted = match &u {
            ConvexFunc::Pl(f) => ConvexFunc::Pl(PlConvexFunc::new(
                f.pieces().iter().map(|q| q.add(&AffineFunc::new(c, [g0, g1]))).collect(),
            ).unwrap()),
            _ => unreachable!(),
        };
        let a = normalize(&u, &p_o).unwrap();
        let b = normalize(&shifted, &p_o).unwrap();
        for x in [[0.1, 0.2], [0.5, 0.5], [0.9, 0.3], [0.7, 0.95], [0.2, 0.8]] {
            prop_assert!((a.value(&x).unwrap() - b.value(&x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn segment_measure_is_additive(
        a0 in 0.05f64..0.3, a1 in 0.05f64..0.95,
        b0 in 0.7f64..0.95, b1 in 0.05f64..0.95,
        s in 0.2f64..0.8,
        kink in 0.2f64..0.8,
    ) {
        let p = square();
        let u = ConvexFunc::Pl(PlConvexFunc::new(vec![
            AffineFunc::new(0.0, [0.0, 0.0]),
            AffineFunc::new(-kink, [1.0, 0.0]),
            AffineFunc::new(-1.0, [1.0, 1.0]),
        ]).unwrap());
        let (a, b) = ([a0, a1], [b0, b1]);
        let m = [a0 + s * (b0 - a0), a1 + s * (b1 - a1)];
        let whole = segment_ma_measure(&u, &a, &b, &p).unwrap();
        let parts = segment_ma_measure(&u, &a, &m, &p).unwrap() + segment_ma_measure(&u, &m, &b, &p).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9, "{whole} vs {parts}");
    }

    #[test]
    fn discrete_convexity_matches_segment_measures(seed in 0u64..1000) {
        let p = square();
        let mesh = Arc::new(make_mesh(&p, 0.25).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = rng.random_range(0.0..0.05);
        let values: Vec<f64> = (0..mesh.num_vertices())
            .map(|i| {
                let x = mesh.vertex(i);
                (x[0] - 0.4).powi(2) + 0.5 * (x[0] + x[1] - 1.0).abs() + noise * rng.random_range(-1.0..1.0)
            })
            .collect();
        match MeshConvexFunc::new(mesh.clone(), values.clone()) {
            Ok(u) => {
                let u = ConvexFunc::Mesh(u);
                for e in mesh.interior_edges() {
                    let (a, b) = crossing(&mesh, e);
                    prop_assert!(segment_ma_measure(&u, &a, &b, &p).unwrap() >= -1e-9);
                }
            }
            Err(Error::NotConvex { index, .. }) => {
                // Wrap without the check to probe the offending edge.
                let e = &mesh.interior_edges()[index];
                let (a, b) = crossing(&mesh, e);
                prop_assert!(edge_jump(&mesh, &values, e, &a, &b) < 0.0);
            }
            Err(other) => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn linear_functional_is_linear(alpha in 0.0f64..5.0, beta in 0.0f64..5.0, t in 0.1f64..0.9) {
        let p = square();
        let eval = FunctionalEvaluator::new(p, Arc::new(4.0)).unwrap();
        let u = ConvexFunc::Pl(crease(&AffineFunc::new(-t, [1.0, 0.5])));
        let w = ConvexFunc::Pl(crease(&AffineFunc::new(t - 1.0, [0.0, 1.0])));
        let combo = ConvexFunc::Pl(PlConvexFunc::new(vec![
            AffineFunc::zero(2),
            AffineFunc::new(-t * alpha, [alpha, 0.5 * alpha]),
            AffineFunc::new((t - 1.0) * beta, [0.0, beta]),
            AffineFunc::new(-t * alpha + (t - 1.0) * beta, [alpha, 0.5 * alpha + beta]),
        ]).unwrap());
        let lhs = eval.linear_functional(&combo).unwrap();
        let rhs = alpha * eval.linear_functional(&u).unwrap() + beta * eval.linear_functional(&w).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

/// Segment through the midpoint of edge `(a, b)`, from inside triangle
/// `(a, b, c)` to inside `(a, b, d)`.
fn crossing(mesh: &kstab::Mesh, e: &kstab::mesh::InteriorEdge) -> (Vec<f64>, Vec<f64>) {
    let (pa, pb) = (mesh.vertex(e.a), mesh.vertex(e.b));
    let m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
    let toward = |v: usize| {
        let q = mesh.vertex(v);
        vec![m[0] + 0.3 * (q[0] - m[0]), m[1] + 0.3 * (q[1] - m[1])]
    };
    (toward(e.c), toward(e.d))
}

/// Slope jump of the interpolant along `(from, to)` where it crosses edge
/// `(a, b)`, computed from the two cell planes.
fn edge_jump(mesh: &kstab::Mesh, values: &[f64], e: &kstab::mesh::InteriorEdge, from: &[f64], to: &[f64]) -> f64 {
    let grad = |i: usize, j: usize, k: usize| {
        let (p, q, r) = (mesh.vertex(i), mesh.vertex(j), mesh.vertex(k));
        let (d1, d2) = ([q[0] - p[0], q[1] - p[1]], [r[0] - p[0], r[1] - p[1]]);
        let (v1, v2) = (values[j] - values[i], values[k] - values[i]);
        let det = d1[0] * d2[1] - d1[1] * d2[0];
        [(v1 * d2[1] - v2 * d1[1]) / det, (d1[0] * v2 - d2[0] * v1) / det]
    };
    let (g1, g2) = (grad(e.a, e.b, e.c), grad(e.a, e.b, e.d));
    let dir = [to[0] - from[0], to[1] - from[1]];
    (g2[0] - g1[0]) * dir[0] + (g2[1] - g1[1]) * dir[1]
}

#[test]
fn midpoint_rule_converges_at_second_order() {
    let p = square();
    let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).exp();
    let exact = QuadratureRule::for_polytope(&p, QuadratureScheme::new(14).with_subdivisions(4)).integrate(f);
    let err = |h: f64| (make_mesh(&p, h).unwrap().integrate_midpoint(f) - exact).abs();
    let ratio = err(1.0 / 16.0) / err(1.0 / 32.0);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn mollified_approximations_converge_on_compacts() {
    let p = interval();
    let u = ConvexFunc::Pl(
        PlConvexFunc::new(vec![
            AffineFunc::new(0.0, [0.0]),
            AffineFunc::new(-0.6, [2.0]),
            AffineFunc::new(0.3, [-1.0]),
        ])
        .unwrap(),
    );
    let mut last = f64::INFINITY;
    for k in [10usize, 50, 100] {
        let approx = dilate_mollify_approx(&u, k, &p).unwrap();
        let gap = (0..=600)
            .map(|i| 0.2 + 0.6 * i as f64 / 600.0)
            .map(|x| (approx.func.value(&[x]).unwrap() - u.value(&[x]).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 2.0 / k as f64, "k = {k}: {gap}");
        assert!(gap < last);
        last = gap;
    }
}

#[test]
fn extremal_weight_annihilates_affine_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in [interval(), square(), simplex()] {
        let a = extremal_affine(&p).unwrap().func;
        let eval = FunctionalEvaluator::new(p.clone(), Arc::new(a.to_polynomial())).unwrap();
        for _ in 0..100 {
            let g: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-10.0..10.0)).collect();
            let l = AffineFunc::new(rng.random_range(-10.0..10.0), g);
            assert!(eval.linear_functional(&ConvexFunc::Affine(l)).unwrap().abs() <= 1e-9);
        }
    }
}

#[test]
fn abreu_operator_is_second_order_in_the_step() {
    // A = 2 + 4(6x^2 - 6x + 1) keeps the endpoint conditions and gives a
    // quartic w, so the difference stencil has a genuine h^2 error term.
    let p = interval();
    let a = Polynomial::parse("2 + 4*(6*x^2 - 6*x + 1)", 1).unwrap();
    let sol = solve_1d(&p, Arc::new(a.clone())).unwrap();
    let eval = FunctionalEvaluator::new(p, Arc::new(a.clone())).unwrap();
    let x = vec![vec![0.3]];
    let dev = |h: f64| (eval.abreu_operator(&sol.u, &x, Some(h)).unwrap()[0] - a.value(&x[0])).abs();
    let ratio = dev(2e-2) / dev(1e-2);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn solve_1d_round_trip_residual() {
    let p = interval();
    let eval = FunctionalEvaluator::new(p.clone(), Arc::new(2.0)).unwrap();
    let sol = solve_1d(&p, Arc::new(2.0)).unwrap();
    assert!(residual(&eval, &sol.u, 0.05, 1e-3).unwrap().sup <= 1e-7);
}

#[test]
fn lp_estimate_is_below_representable_creases_and_refines_downward() {
    for tilt in [0.0, 1.5, -2.5, 7.0] {
        let a = Polynomial::parse(&format!("2 + {tilt}*(x - 0.5)"), 1).unwrap();
        let (eval, mesh) = setup(&interval(), Arc::new(a), 1.0 / 16.0).unwrap();
        let r = lp_stability_estimate(&eval, mesh.clone(), None, &StabilityOptions::default()).unwrap();
        let grid: Vec<AffineFunc> = default_crease_grid(&mesh)
            .into_iter()
            .filter(|l| is_representable(&mesh, l))
            .collect();
        let sweep = crease_sweep(&eval, &grid, &r.base_point).unwrap();
        assert!(r.lambda_hat <= sweep.min_ratio + 1e-9, "tilt {tilt}");
        assert!(r.lambda_hat_refined.unwrap() <= r.lambda_hat + 1e-9, "tilt {tilt}");
        let check = relative_kpolystability_check(&eval, mesh, None, &Default::default()).unwrap();
        if r.lambda_hat < 0.0 {
            assert!(!check.polystable);
            assert_eq!(check.witness, r.destabilizer);
        } else if r.lambda_hat >= STABLE_THRESHOLD {
            assert!(check.polystable);
        }
    }
}

#[test]
fn guillemin_minimizes_the_discrete_functional() {
    let p = square();
    let eval = FunctionalEvaluator::new(p.clone(), Arc::new(4.0)).unwrap();
    let mesh = Arc::new(make_mesh(&p, 1.0 / 8.0).unwrap());
    let (state, problem) = solve_2d_descent(&eval, mesh.clone(), None, &SolverOptions::default()).unwrap();
    let best = state.value;
    let d = DiscreteMabuchi::new(&eval, mesh, state.margin).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut finite = 0;
    for _ in 0..20 {
        let (c, fx, fy) = (
            rng.random_range(-0.1..0.1),
            rng.random_range(1.0..3.0),
            rng.random_range(1.0..3.0),
        );
        let f = move |x: &[f64]| {
            let b = 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
            c * b * b * (fx * x[0]).sin() * (fy * x[1]).cos()
        };
        // A perturbation leaving the discrete convex cone has F = +infinity.
        if let Ok(v) = d.value_of(f) {
            finite += 1;
            assert!(v >= best - 1e-12);
        }
    }
    assert!(finite >= 15, "{finite}");
    assert_eq!(problem.active(), d.active());
}

#[test]
fn guillemin_potential_is_finite_on_the_closure() {
    let u = guillemin_potential(&square());
    assert_eq!(u.value(&[0.0, 0.0]).unwrap(), 0.0);
    assert!(u.value(&[1.0, 0.5]).unwrap().is_finite());
}
