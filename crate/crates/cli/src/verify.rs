//! The `verify` audit bundle.

use std::sync::Arc;

use kstab::stability::{
    certificate_audit, default_base_vertex, degeneracy_diagnostic, random_normalized_mesh_functions,
    scripted_sequences, solution_norm_bound, CertificateAudit, PropernessCertificate,
};
use kstab::{
    guillemin_potential, lp_stability_estimate, make_mesh, normalize, properness_certificate, solve_1d,
    AffineFunc, ConvexFunc, Facet, FunctionalEvaluator, Polynomial, Polytope, SmoothConvexFunc,
    StabilityOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::Context;
use crate::Failure;

const IBP_TOL_1D: f64 = 1e-6;
const IBP_TOL_2D: f64 = 1e-4;
const AUDIT_COUNT_1D: usize = 50;
const AUDIT_COUNT_2D: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Serialize)]
struct AuditItem {
    name: &'static str,
    status: Status,
    /// Measured gap or margin; the sign convention is given in `detail`.
    measured: f64,
    tolerance: f64,
    detail: String,
}

#[derive(Serialize)]
struct VerifyReport {
    weight: String,
    lambda_hat: f64,
    passed: bool,
    items: Vec<AuditItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<PropernessCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    audit: Option<CertificateAudit>,
}

fn item(name: &'static str, ok: bool, measured: f64, tolerance: f64, detail: String) -> AuditItem {
    AuditItem {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        measured,
        tolerance,
        detail,
    }
}

fn skipped(name: &'static str, detail: &str) -> AuditItem {
    AuditItem {
        name,
        status: Status::Skipped,
        measured: f64::NAN,
        tolerance: f64::NAN,
        detail: detail.to_owned(),
    }
}

/// A solution of the Abreu equation for the weight in force: the Guillemin
/// potential for the extremal weight, the exact solution in 1D otherwise.
fn reference_solution(ctx: &Context) -> Result<Option<SmoothConvexFunc>, Failure> {
    if ctx.weight.extremal {
        return Ok(Some(guillemin_potential(&ctx.polytope)));
    }
    if ctx.polytope.dim() == 1 {
        return Ok(Some(solve_1d(&ctx.polytope, ctx.weight.field.clone())?.u));
    }
    Ok(None)
}

/// Test functions for the identity: `x^2`, an affine function and `v` in 1D;
/// seeded random cubics in 2D.
fn ibp_functions(p: &Polytope, v: &SmoothConvexFunc, seed: u64) -> Result<Vec<ConvexFunc>, Failure> {
    if p.dim() == 1 {
        return Ok(vec![
            SmoothConvexFunc::from_polynomial(Polynomial::parse("x^2", 1)?).into(),
            AffineFunc::new(0.7, [-1.3]).into(),
            v.clone().into(),
        ]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..5 {
        let mut q = Polynomial::zero(2);
        for (i, j) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)] {
            q.add_term([i, j], rng.random_range(-1.0..1.0));
        }
        out.push(SmoothConvexFunc::from_polynomial(q).into());
    }
    Ok(out)
}

fn ibp_item(eval: &FunctionalEvaluator, v: &SmoothConvexFunc, seed: u64) -> Result<AuditItem, Failure> {
    let p = eval.polytope();
    let tol = if p.dim() == 1 { IBP_TOL_1D } else { IBP_TOL_2D };
    let mut worst = 0.0f64;
    let functions = ibp_functions(p, v, seed)?;
    for u in &functions {
        worst = worst.max(eval.ibp_identity_check(v, u)?.gap);
    }
    Ok(item(
        "ibp-identity",
        worst <= tol,
        worst,
        tol,
        format!("max |L_A(u) - integral W_v : Hess u| over {} functions", functions.len()),
    ))
}

fn degeneracy_item(seed: u64) -> Result<AuditItem, Failure> {
    let interval = Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)])?;
    let eval = FunctionalEvaluator::new(interval, Arc::new(2.0))?;
    let mut mismatches = 0usize;
    let mut parts = Vec::new();
    for s in scripted_sequences(seed) {
        let r = degeneracy_diagnostic(&eval, &s.functions, &s.segments)?;
        let ok = r.degenerating == s.expect_degenerating && r.l_vanishing == s.expect_l_vanishing;
        mismatches += usize::from(!ok);
        parts.push(format!(
            "{}: degenerating {}, L vanishing {}",
            s.name, r.degenerating, r.l_vanishing
        ));
    }
    Ok(item(
        "degeneracy",
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("flag mismatches on the built-in interval sequences; {}", parts.join("; ")),
    ))
}

pub fn verify(ctx: &Context) -> Result<(), Failure> {
    let p = &ctx.polytope;
    let eval = ctx.evaluator()?;
    let mesh = Arc::new(make_mesh(p, ctx.h)?);
    let opts = StabilityOptions {
        lp: ctx.lp_options(),
        refine: false,
        sweep: false,
        ..Default::default()
    };
    let lambda = lp_stability_estimate(&eval, mesh.clone(), None, &opts)?.lambda_hat;
    let v = reference_solution(ctx)?;
    let mut items = Vec::new();

    match &v {
        Some(v) => items.push(ibp_item(&eval, v, ctx.seed)?),
        None => items.push(skipped("ibp-identity", "no reference solution for a non-extremal 2D weight")),
    }

    let (mut certificate, mut audit) = (None, None);
    if lambda > 0.0 {
        let cert = properness_certificate(&eval, lambda, mesh.clone(), None, &opts.lp)?;
        let count = if p.dim() == 1 { AUDIT_COUNT_1D } else { AUDIT_COUNT_2D };
        let functions = random_normalized_mesh_functions(mesh.clone(), default_base_vertex(&mesh)?, ctx.seed, count)?;
        let a = certificate_audit(&eval, &cert, &functions)?;
        items.push(item(
            "properness-certificate",
            a.violations == 0,
            a.min_margin,
            0.0,
            format!(
                "{} of {} functions violate F_A(u) >= -C + eps' ||u||_b; measured is the smallest margin",
                a.violations, a.count
            ),
        ));
        certificate = Some(cert);
        audit = Some(a);
    } else {
        items.push(item(
            "properness-certificate",
            false,
            lambda,
            0.0,
            "lambda_hat is not positive, no certificate exists".into(),
        ));
    }

    match (&v, lambda > 0.0) {
        (Some(v), true) => {
            let bound = solution_norm_bound(p, lambda)?;
            let norm = eval.boundary_norm(&normalize(&v.clone().into(), &p.center_of_mass())?)?;
            items.push(item(
                "norm-bound",
                norm <= bound,
                norm,
                bound,
                "||v||_b of the normalized solution against n Vol / lambda_hat".into(),
            ));
        }
        (None, _) => items.push(skipped("norm-bound", "no reference solution")),
        (_, false) => items.push(item(
            "norm-bound",
            false,
            lambda,
            0.0,
            "lambda_hat is not positive".into(),
        )),
    }

    items.push(degeneracy_item(ctx.seed)?);

    let passed = items.iter().all(|i| i.status != Status::Fail);
    ctx.emit(
        "verify",
        &[
            ("ibp_tol", if p.dim() == 1 { IBP_TOL_1D } else { IBP_TOL_2D }),
            ("lp_tol", opts.lp.tol),
        ],
        VerifyReport {
            weight: ctx.weight.display.clone(),
            lambda_hat: lambda,
            passed,
            items,
            certificate,
            audit,
        },
    )?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Audit)
    }
}
