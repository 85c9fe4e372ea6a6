//! `kstab`: command-line front end.
//!
//! Every report is TOML with the toolkit version and the tolerances in force.
//! Exit codes: 0 success, 1 audit failure or other runtime error, 2 invalid
//! polytope or arguments, 3 LP failure, 4 incompatible `A`.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kstab::Error;

#[derive(Debug, Parser)]
#[command(name = "kstab", version, about = "Uniform K-stability of polytopes and the Abreu equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Polytope file (TOML).
    #[arg(long, global = true)]
    pub polytope: Option<PathBuf>,
    /// Weight: `extremal`, affine coefficients `[c0, c1, ..]`, or a quadratic in x, y.
    #[arg(long = "A", global = true, default_value = "extremal")]
    pub a: String,
    /// Mesh spacing (default 1/64 in 1D, 1/8 in 2D).
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Interior quadrature degree.
    #[arg(long, global = true)]
    pub degree: Option<usize>,
    /// LP tolerance for `stability`/`verify`, gradient tolerance for `solve`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Also write the report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized audits.
    #[arg(long, global = true, default_value_t = 2024)]
    pub seed: u64,
    /// Worker thread cap for parallel assemblies.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// The affine A annihilating every affine function under L_A.
    ExtremalAffine,
    /// Uniform stability estimate, polystability check and destabilizer.
    Stability,
    /// Solve the Abreu equation (exactly in 1D, by descent in 2D).
    Solve,
    /// Integration by parts, properness certificate, norm bound and degeneracy audits.
    Verify,
    /// Evaluate a single operation.
    Eval(EvalArgs),
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    pub operation: Operation,
    /// Convex function: `guillemin`, `crease:c,g1[,g2]` or a polynomial.
    #[arg(long)]
    pub u: Option<String>,
    /// Integrand for the integration operations (polynomial).
    #[arg(long)]
    pub f: Option<String>,
    /// Points separated by `;`, coordinates by `,`.
    #[arg(long)]
    pub at: Option<String>,
    /// Segment start for `segment-measure`.
    #[arg(long)]
    pub from: Option<String>,
    /// Segment end for `segment-measure`.
    #[arg(long)]
    pub to: Option<String>,
    /// Finite-difference step for `abreu-operator`.
    #[arg(long)]
    pub h_fd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Operation {
    Volume,
    CenterOfMass,
    Delzant,
    IntegrateInterior,
    IntegrateBoundary,
    BoundaryNorm,
    LinearFunctional,
    Mabuchi,
    AbreuOperator,
    IbpIdentity,
    SegmentMeasure,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    /// The report was produced but at least one audit failed.
    Audit,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Audit => 1,
        Failure::Usage(_) => 2,
        Failure::Core(e) => match e {
            Error::UnsupportedDimension(_)
            | Error::InvalidPolytope(_)
            | Error::UnboundedDomain(_)
            | Error::EmptyInterior
            | Error::NonIntegerNormals(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidMeshParameter(_)
            | Error::MeshTooFine { .. } => 2,
            Error::LpInfeasible | Error::LpUnbounded | Error::LpIterationLimit(_) => 3,
            Error::IncompatibleA { .. } | Error::NonpositiveW { .. } => 4,
            _ => 1,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set the thread cap: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Audit => eprintln!("error: audit failed"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(exit_code(&Failure::Audit), 1);
        assert_eq!(exit_code(&Failure::Core(Error::UnboundedDomain(vec![1.0, 0.0]))), 2);
        assert_eq!(exit_code(&Failure::Core(Error::LpIterationLimit(10))), 3);
        assert_eq!(exit_code(&Failure::Core(Error::LpInfeasible)), 3);
        let incompatible = Error::IncompatibleA {
            w_end: -0.5,
            slope_gap: -1.0,
        };
        assert_eq!(exit_code(&Failure::Core(incompatible)), 4);
        assert_eq!(exit_code(&Failure::Core(Error::LineSearchStall(1e-14))), 1);
    }
}
