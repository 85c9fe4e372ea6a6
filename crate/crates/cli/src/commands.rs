//! Subcommand implementations; each builds one report document.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use kstab::io::{to_toml, MeshFunctionRecord, PolytopeRecord, ReportDocument};
use kstab::lp::LpOptions;
use kstab::solver::{CompatibilityReport, ResidualReport};
use kstab::stability::{
    PolystabilityCheck, BOUNDARY_TOL, EXTREMAL_TOL, STABLE_THRESHOLD,
};
use kstab::{
    extremal_affine, lp_stability_estimate, make_mesh, relative_kpolystability_check, residual,
    segment_ma_measure, solve_1d, solve_2d_descent, ConvexFunc, Error, FunctionalEvaluator, Polynomial,
    Polytope, QuadratureScheme, SolverOptions, SolverState, StabilityOptions, StabilityReport,
};
use clap::ValueEnum;
use serde::Serialize;

use crate::config::{affine_formula, load_polytope, parse_function, parse_points, parse_weight, Weight};
use crate::{Cli, Command, EvalArgs, Failure, Operation};

/// Sample margin and stencil step of the 1D residual report.
const RESIDUAL_MARGIN: f64 = 0.05;
const RESIDUAL_H_FD: f64 = 1e-3;
/// Rows of the 1D solution table.
const TABLE_ROWS: usize = 65;

/// Everything a command needs from the shared flags.
pub struct Context {
    pub polytope: Polytope,
    pub weight: Weight,
    pub h: f64,
    pub degree: Option<usize>,
    pub tol: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Context {
    fn from_cli(cli: &Cli) -> Result<Self, Failure> {
        let path = cli
            .polytope
            .as_ref()
            .ok_or_else(|| Failure::Usage("--polytope is required".into()))?;
        let polytope = load_polytope(path)?;
        let weight = parse_weight(&cli.a, &polytope)?;
        let h = cli.h.unwrap_or(if polytope.dim() == 1 { 1.0 / 64.0 } else { 1.0 / 8.0 });
        if h.is_nan() || h <= 0.0 {
            return Err(Failure::Usage(format!("--h must be positive, got {h}")));
        }
        if let Some(t) = cli.tol {
            if t.is_nan() || t <= 0.0 {
                return Err(Failure::Usage(format!("--tol must be positive, got {t}")));
            }
        }
        if cli.degree == Some(0) {
            return Err(Failure::Usage("--degree must be at least 1".into()));
        }
        Ok(Self {
            polytope,
            weight,
            h,
            degree: cli.degree,
            tol: cli.tol,
            seed: cli.seed,
            out: cli.out.clone(),
        })
    }

    pub fn evaluator(&self) -> Result<FunctionalEvaluator, Error> {
        self.evaluator_with(self.weight.field.clone())
    }

    pub fn evaluator_with(&self, field: Arc<dyn kstab::ScalarField>) -> Result<FunctionalEvaluator, Error> {
        match self.degree {
            Some(d) => FunctionalEvaluator::with_scheme(self.polytope.clone(), field, QuadratureScheme::new(d)),
            None => FunctionalEvaluator::new(self.polytope.clone(), field),
        }
    }

    pub fn lp_options(&self) -> LpOptions {
        let mut lp = LpOptions::default();
        if let Some(t) = self.tol {
            lp.tol = t;
        }
        lp
    }

    pub fn emit<T: Serialize>(&self, kind: &str, tolerances: &[(&str, f64)], report: T) -> Result<(), Failure> {
        let tolerances: BTreeMap<String, f64> = tolerances.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let text = to_toml(&ReportDocument::new(kind, tolerances, report))?;
        print!("{text}");
        if let Some(path) = &self.out {
            kstab::io::save(path, &text)?;
        }
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::ExtremalAffine => extremal(&ctx),
        Command::Stability => stability(&ctx),
        Command::Solve => solve(&ctx),
        Command::Verify => crate::verify::verify(&ctx),
        Command::Eval(args) => eval(&ctx, args),
    }
}

#[derive(Serialize)]
struct ExtremalReport {
    polytope: PolytopeRecord,
    /// The weight as a formula, e.g. `A = 2`.
    formula: String,
    constant: f64,
    gradient: Vec<f64>,
    /// `L_A(1)`, `L_A(x_i)`.
    residuals: Vec<f64>,
    max_residual: f64,
}

fn extremal(ctx: &Context) -> Result<(), Failure> {
    let a = extremal_affine(&ctx.polytope)?;
    let max_residual = a.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    ctx.emit(
        "extremal-affine",
        &[],
        ExtremalReport {
            polytope: PolytopeRecord::from_polytope(&ctx.polytope),
            formula: format!("A = {}", affine_formula(a.func.constant, &a.func.gradient)),
            constant: a.func.constant,
            gradient: a.func.gradient.clone(),
            residuals: a.residuals,
            max_residual,
        },
    )
}

#[derive(Serialize)]
struct StabilityCommandReport {
    polytope: PolytopeRecord,
    weight: String,
    polystable: bool,
    polystability: PolystabilityCheck,
    estimate: StabilityReport,
}

fn stability(ctx: &Context) -> Result<(), Failure> {
    let eval = ctx.evaluator()?;
    let mesh = Arc::new(make_mesh(&ctx.polytope, ctx.h)?);
    let opts = StabilityOptions {
        lp: ctx.lp_options(),
        ..Default::default()
    };
    let estimate = lp_stability_estimate(&eval, mesh.clone(), None, &opts)?;
    let polystability = relative_kpolystability_check(&eval, mesh, None, &opts.lp)?;
    ctx.emit(
        "stability",
        &[
            ("lp_tol", opts.lp.tol),
            ("stable_threshold", STABLE_THRESHOLD),
            ("boundary_tol", BOUNDARY_TOL),
            ("extremal_tol", EXTREMAL_TOL),
        ],
        StabilityCommandReport {
            polytope: PolytopeRecord::from_polytope(&ctx.polytope),
            weight: ctx.weight.display.clone(),
            polystable: polystability.polystable,
            polystability,
            estimate,
        },
    )
}

#[derive(Serialize)]
struct ResidualSummary {
    sup: f64,
    l2: f64,
    margin: f64,
    h_fd: f64,
    samples: usize,
}

impl From<&ResidualReport> for ResidualSummary {
    fn from(r: &ResidualReport) -> Self {
        Self {
            sup: r.sup,
            l2: r.l2,
            margin: r.margin,
            h_fd: r.h_fd,
            samples: r.samples.len(),
        }
    }
}

#[derive(Serialize)]
struct Solve1dReport {
    polytope: PolytopeRecord,
    weight: String,
    compatibility: CompatibilityReport,
    residual: ResidualSummary,
    /// Rows `[x, u(x), u''(x)]`.
    table: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct Solve2dReport {
    polytope: PolytopeRecord,
    weight: String,
    state: SolverState,
    checkpoint: MeshFunctionRecord,
}

fn solve(ctx: &Context) -> Result<(), Failure> {
    let eval = ctx.evaluator()?;
    if ctx.polytope.dim() == 1 {
        let sol = solve_1d(&ctx.polytope, ctx.weight.field.clone())?;
        let r = residual(&eval, &sol.u, RESIDUAL_MARGIN, RESIDUAL_H_FD)?;
        let v = ctx.polytope.vertices();
        let (lo, hi) = (v[0][0].min(v[1][0]), v[0][0].max(v[1][0]));
        let mut table = Vec::with_capacity(TABLE_ROWS);
        for i in 1..=TABLE_ROWS {
            let x = lo + (hi - lo) * i as f64 / (TABLE_ROWS + 1) as f64;
            table.push([x, sol.u.value(&[x])?, sol.u.hessian(&[x])?.a]);
        }
        return ctx.emit(
            "solve",
            &[("residual_margin", RESIDUAL_MARGIN), ("residual_h_fd", RESIDUAL_H_FD)],
            Solve1dReport {
                polytope: PolytopeRecord::from_polytope(&ctx.polytope),
                weight: ctx.weight.display.clone(),
                compatibility: sol.report,
                residual: (&r).into(),
                table,
            },
        );
    }
    let mesh = Arc::new(make_mesh(&ctx.polytope, ctx.h)?);
    let mut opts = SolverOptions::default();
    if let Some(t) = ctx.tol {
        opts.tol = t;
    }
    let (state, problem) = solve_2d_descent(&eval, mesh, None, &opts)?;
    let checkpoint = MeshFunctionRecord::from_function(&state.solution(&problem)?);
    ctx.emit(
        "solve",
        &[("gradient_tol", opts.tol), ("max_iter", opts.max_iter as f64)],
        Solve2dReport {
            polytope: PolytopeRecord::from_polytope(&ctx.polytope),
            weight: ctx.weight.display.clone(),
            state,
            checkpoint,
        },
    )
}

#[derive(Serialize)]
struct QuadratureMeta {
    degree: usize,
    subdivisions: usize,
    graded_layers: usize,
}

#[derive(Serialize, Default)]
struct EvalRecord {
    operation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    function: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flag: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature: Option<QuadratureMeta>,
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str, Failure> {
    v.as_deref()
        .ok_or_else(|| Failure::Usage(format!("this operation needs --{flag}")))
}

fn eval(ctx: &Context, args: &EvalArgs) -> Result<(), Failure> {
    let p = &ctx.polytope;
    let op = args.operation;
    let eval = ctx.evaluator()?;
    // The same quantity with two more degrees and twice the subdivisions.
    let finer = FunctionalEvaluator::with_scheme(
        p.clone(),
        eval.field().clone(),
        QuadratureScheme::new(eval.scheme().degree + 2).with_subdivisions(2 * eval.scheme().subdivisions),
    )?;
    let meta = Some(QuadratureMeta {
        degree: eval.scheme().degree,
        subdivisions: eval.scheme().subdivisions,
        graded_layers: eval.graded_scheme().layers,
    });
    let mut rec = EvalRecord {
        operation: op.to_possible_value().expect("no skipped variants").get_name().to_owned(),
        function: args.u.clone().or_else(|| args.f.clone()),
        ..Default::default()
    };
    let func = |spec: &Option<String>| -> Result<ConvexFunc, Failure> {
        Ok(parse_function(required(spec, "u")?, p)?)
    };
    match op {
        Operation::Volume => rec.value = Some(p.volume()),
        Operation::CenterOfMass => rec.values = Some(p.center_of_mass()),
        Operation::Delzant => rec.flag = Some(p.is_delzant()?),
        Operation::IntegrateInterior | Operation::IntegrateBoundary => {
            let f = Polynomial::parse(required(&args.f, "f")?, p.dim())?;
            let run = |e: &FunctionalEvaluator| {
                if op == Operation::IntegrateInterior {
                    e.integrate_interior(|x| f.eval(x))
                } else {
                    e.integrate_boundary(|x| f.eval(x))
                }
            };
            let v = run(&eval);
            rec.value = Some(v);
            rec.error_estimate = Some((v - run(&finer)).abs());
            rec.quadrature = meta;
        }
        Operation::BoundaryNorm | Operation::LinearFunctional => {
            let u = func(&args.u)?;
            let run = |e: &FunctionalEvaluator| {
                if op == Operation::BoundaryNorm {
                    e.boundary_norm(&u)
                } else {
                    e.linear_functional(&u)
                }
            };
            let v = run(&eval)?;
            rec.value = Some(v);
            rec.error_estimate = Some((v - run(&finer)?).abs());
            rec.quadrature = meta;
        }
        Operation::Mabuchi => {
            let u = func(&args.u)?;
            let m = eval.mabuchi(&u)?;
            let fine = finer.mabuchi(&u)?;
            rec.value = Some(m.value);
            rec.values = Some(vec![m.log_det_term, m.linear_term]);
            rec.error_estimate = Some(m.truncation_error.abs() + (m.value - fine.value).abs());
            rec.quadrature = meta;
        }
        Operation::AbreuOperator => {
            let ConvexFunc::Smooth(u) = func(&args.u)? else {
                return Err(Failure::Usage("abreu-operator needs a smooth --u".into()));
            };
            let points = parse_points(required(&args.at, "at")?, p.dim())?;
            let s = eval.abreu_operator(&u, &points, args.h_fd)?;
            let halved: Vec<f64> = points
                .iter()
                .map(|x| {
                    let h = args.h_fd.unwrap_or_else(|| (1e-3f64).min(p.boundary_distance(x) / 4.0));
                    eval.abreu_operator(&u, std::slice::from_ref(x), Some(h / 2.0)).map(|v| v[0])
                })
                .collect::<Result<_, _>>()?;
            let err = s.iter().zip(&halved).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            rec.values = Some(s);
            rec.error_estimate = Some(err);
            rec.points = Some(points);
        }
        Operation::IbpIdentity => {
            let u = func(&args.u)?;
            let v = kstab::guillemin_potential(p);
            let c = eval.ibp_identity_check(&v, &u)?;
            rec.values = Some(vec![c.lhs, c.rhs]);
            rec.value = Some(c.gap);
            rec.quadrature = meta;
        }
        Operation::SegmentMeasure => {
            let u = func(&args.u)?;
            let a = parse_points(required(&args.from, "from")?, p.dim())?;
            let b = parse_points(required(&args.to, "to")?, p.dim())?;
            if a.len() != 1 || b.len() != 1 {
                return Err(Failure::Usage("--from and --to take one point each".into()));
            }
            rec.value = Some(segment_ma_measure(&u, &a[0], &b[0], p)?);
            rec.points = Some(vec![a[0].clone(), b[0].clone()]);
        }
    }
    ctx.emit("eval", &[], rec)
}
