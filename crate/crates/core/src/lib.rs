//! Numerical toolkit for uniform K-stability of convex polytopes and the
//! Abreu equation.

// Negated comparisons are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod error;
pub mod field;
pub mod functionals;
pub mod functions;
pub mod io;
pub mod lp;
pub mod mesh;
pub mod polytope;
pub mod quadrature;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use field::{FnField, Polynomial, ScalarField, Sym};
pub use functions::{
    crease, dilate_mollify_approx, guillemin_potential, normalize, segment_ma_measure, AffineFunc,
    ConvexFunc, MeshConvexFunc, PlConvexFunc, SmoothConvexFunc,
};
pub use functionals::{
    extremal_affine, ExtremalAffine, FunctionalEvaluator, HessianSurrogate, IbpCheck, MabuchiValue,
};
pub use mesh::{make_mesh, Mesh};
pub use polytope::{Facet, Polytope};
pub use quadrature::{BoundaryRule, GradedScheme, QuadratureRule, QuadratureScheme};
pub use solver::{residual, solve_1d, solve_2d_descent, SolverOptions, SolverState};
pub use stability::{
    lp_stability_estimate, properness_certificate, relative_kpolystability_check, StabilityOptions,
    StabilityReport, StabilityStatus,
};

/// Library version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
