//! Dense two-phase simplex method over `f64` or exact rationals.
//!
//! Problems are `minimize c.x` subject to linear rows (`<=`, `>=`, `=`) and
//! `x >= 0`. Pivoting uses the most negative reduced cost, falling back to
//! Bland's rule after a run of degenerate pivots. Ratio-test ties are broken
//! lexicographically against a fixed perturbation of the rhs, then by lowest
//! index, so degenerate vertices are left quickly and runs are deterministic.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact mode is only accepted up to this many variables.
pub const EXACT_VARIABLE_LIMIT: usize = 500;

/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// Sparse row `sum coeffs . x  (relation)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize objective . x` over `x >= 0` and the constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    Float,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    /// Most negative reduced cost, Bland's rule after degenerate runs.
    Dantzig,
    /// Bland's rule throughout.
    Bland,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub arithmetic: Arithmetic,
    pub pricing: Pricing,
    pub max_iterations: usize,
    /// Feasibility and optimality tolerance in float mode.
    pub tol: f64,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            arithmetic: Arithmetic::Float,
            pricing: Pricing::Dantzig,
            max_iterations: 200_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Arithmetic needed by the tableau.
trait Scalar: Clone + Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;
    /// `self > tol` (exact: `self > 0`).
    fn positive(&self, tol: f64) -> bool;
    /// `self < -tol` (exact: `self < 0`).
    fn negative(&self, tol: f64) -> bool;
    fn div(&self, o: &Self) -> Self;
    /// `self -= a * b`.
    fn sub_mul(&mut self, a: &Self, b: &Self);
    fn neg(&self) -> Self;
    fn lt(&self, o: &Self) -> bool;
    /// `self <= o + tol` (exact: `self <= o`).
    fn le_tol(&self, o: &Self, tol: f64) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn positive(&self, tol: f64) -> bool {
        *self > tol
    }
    fn negative(&self, tol: f64) -> bool {
        *self < -tol
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn sub_mul(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
        if self.abs() < 1e-15 {
            *self = 0.0;
        }
    }
    fn neg(&self) -> Self {
        -self
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn le_tol(&self, o: &Self, tol: f64) -> bool {
        *self <= o + tol
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_f64(v: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(v).expect("finite coefficient")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            let n: f64 = self.numer().to_f64().unwrap_or(f64::NAN);
            let d: f64 = self.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn positive(&self, _: f64) -> bool {
        Signed::is_positive(self)
    }
    fn negative(&self, _: f64) -> bool {
        Signed::is_negative(self)
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn sub_mul(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }
    fn neg(&self) -> Self {
        -self
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn le_tol(&self, o: &Self, _: f64) -> bool {
        self <= o
    }
}

/// Solves `lp`; errors on infeasibility, unboundedness or the iteration cap.
pub fn solve(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution> {
    match opts.arithmetic {
        Arithmetic::Float => Tableau::<f64>::build(lp).run(lp, opts),
        Arithmetic::Exact => {
            if lp.num_vars > EXACT_VARIABLE_LIMIT {
                return Err(Error::DimensionMismatch {
                    expected: EXACT_VARIABLE_LIMIT,
                    got: lp.num_vars,
                });
            }
            Tableau::<BigRational>::build(lp).run(lp, opts)
        }
    }
}

/// Distinct positive rhs perturbation for row `i`.
fn perturbation(i: usize) -> f64 {
    1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract()
}

struct Tableau<T> {
    /// Constraint rows: `cols` coefficients, the rhs, then the perturbation
    /// column used only for tie-breaking.
    rows: Vec<Vec<T>>,
    /// Reduced-cost row (same layout; last entry is minus the objective).
    cost: Vec<T>,
    basis: Vec<usize>,
    cols: usize,
    first_artificial: usize,
    iterations: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        // Normalize so every rhs is >= 0; zero-rhs `>=` rows become `<=` rows
        // whose slack is a feasible starting basis.
        let mut norm: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
        for c in &lp.constraints {
            let flip = c.rhs < 0.0 || (c.rhs == 0.0 && c.relation == Relation::Ge);
            if flip {
                let rel = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                norm.push((c.coeffs.iter().map(|(j, v)| (*j, -v)).collect(), rel, -c.rhs));
            } else {
                norm.push((c.coeffs.clone(), c.relation, c.rhs));
            }
        }
        let slacks = norm.iter().filter(|r| r.1 != Relation::Eq).count();
        let arts = norm.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n + slacks;
        let cols = n + slacks + arts;
        let mut rows = Vec::with_capacity(norm.len());
        let mut basis = Vec::with_capacity(norm.len());
        let (mut s, mut a) = (n, first_artificial);
        for (coeffs, rel, rhs) in &norm {
            let mut row = vec![T::zero(); cols + 2];
            for (j, v) in coeffs {
                let cur = row[*j].to_f64();
                row[*j] = T::from_f64(cur + v);
            }
            match rel {
                Relation::Le => {
                    row[s] = T::one();
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = T::one().neg();
                    s += 1;
                    row[a] = T::one();
                    basis.push(a);
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = T::one();
                    basis.push(a);
                    a += 1;
                }
            }
            row[cols] = T::from_f64(*rhs);
            row[cols + 1] = T::from_f64(perturbation(rows.len()));
            rows.push(row);
        }
        Self {
            rows,
            cost: vec![T::zero(); cols + 2],
            basis,
            cols,
            first_artificial,
            iterations: 0,
        }
    }

    /// Sets the reduced-cost row for objective `c` (indexed by column).
    fn price_out(&mut self, c: &[T]) {
        let mut cost = c.to_vec();
        cost.resize(self.cols + 2, T::zero());
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b].clone();
            if cb.is_zero() {
                continue;
            }
            for (j, v) in self.rows[r].iter().enumerate() {
                if !v.is_zero() {
                    cost[j].sub_mul(&cb, v);
                }
            }
        }
        self.cost = cost;
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e].clone();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v = v.div(&piv);
            }
        }
        self.rows[r][e] = T::one();
        let prow = std::mem::take(&mut self.rows[r]);
        let nz: Vec<usize> = (0..self.cols + 2).filter(|&j| !prow[j].is_zero()).collect();
        let apply = |row: &mut Vec<T>| {
            let f = row[e].clone();
            if f.is_zero() {
                return;
            }
            for &j in &nz {
                row[j].sub_mul(&f, &prow[j]);
            }
            row[e] = T::zero();
        };
        for row in self.rows.iter_mut() {
            if !row.is_empty() {
                apply(row);
            }
        }
        apply(&mut self.cost);
        self.rows[r] = prow;
        self.basis[r] = e;
        self.iterations += 1;
    }

    /// Simplex iterations on the current cost row over columns `< limit`.
    fn optimize(&mut self, limit: usize, opts: &LpOptions) -> Result<()> {
        let tol = opts.tol;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(Error::LpIterationLimit(opts.max_iterations));
            }
            let bland = opts.pricing == Pricing::Bland || degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            for j in 0..limit {
                if !self.cost[j].negative(tol) {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if enter.is_none_or(|b: usize| self.cost[j].lt(&self.cost[b])) {
                    enter = Some(j);
                }
            }
            let Some(e) = enter else {
                return Ok(());
            };
            let candidates: Vec<(usize, T)> = self
                .rows
                .iter()
                .enumerate()
                .filter(|(_, row)| row[e].positive(tol))
                .map(|(r, row)| (r, row[self.cols].div(&row[e])))
                .collect();
            let Some(min) = candidates
                .iter()
                .map(|(_, t)| t)
                .reduce(|a, b| if b.lt(a) { b } else { a })
                .cloned()
            else {
                return Err(Error::LpUnbounded);
            };
            let p = self.cols + 1;
            let mut leave: Option<(usize, T)> = None;
            for (r, ratio) in &candidates {
                if !ratio.le_tol(&min, tol) {
                    continue;
                }
                let key = self.rows[*r][p].div(&self.rows[*r][e]);
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => {
                        key.lt(best) || (!best.lt(&key) && self.basis[*r] < self.basis[*lr])
                    }
                };
                if better {
                    leave = Some((*r, key));
                }
            }
            let (r, _) = leave.expect("minimum ratio row is a candidate");
            let ratio = min;
            if ratio.positive(tol) {
                degenerate = 0;
            } else {
                degenerate += 1;
            }
            self.pivot(r, e);
        }
    }

    fn run(mut self, lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution> {
        // Phase 1: minimize the sum of artificials.
        if self.first_artificial < self.cols {
            let mut c1 = vec![T::zero(); self.cols];
            for c in c1.iter_mut().skip(self.first_artificial) {
                *c = T::one();
            }
            self.price_out(&c1);
            self.optimize(self.cols, opts)?;
            let infeas = self.cost[self.cols].neg();
            if infeas.positive(opts.tol) {
                return Err(Error::LpInfeasible);
            }
            self.drive_out_artificials(opts.tol);
        }
        let c2: Vec<T> = lp.objective.iter().map(|v| T::from_f64(*v)).collect();
        self.price_out(&c2);
        self.optimize(self.first_artificial, opts)?;
        let mut x = vec![0.0; lp.num_vars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < lp.num_vars {
                x[b] = self.rows[r][self.cols].to_f64();
            }
        }
        let objective = self.cost[self.cols].neg().to_f64();
        Ok(LpSolution {
            x,
            objective,
            iterations: self.iterations,
        })
    }

    /// Pivots basic artificials (at level zero) out of the basis; rows with
    /// no usable pivot are redundant and are removed.
    fn drive_out_artificials(&mut self, tol: f64) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| {
                    let v = &self.rows[r][j];
                    v.positive(tol * 1e-3) || v.negative(tol * 1e-3)
                });
                match col {
                    Some(j) => self.pivot(r, j),
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> LinearProgram {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.add(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        lp
    }

    #[test]
    fn textbook_problem_in_both_modes() {
        for arithmetic in [Arithmetic::Float, Arithmetic::Exact] {
            for pricing in [Pricing::Dantzig, Pricing::Bland] {
                let opts = LpOptions {
                    arithmetic,
                    pricing,
                    ..Default::default()
                };
                let s = solve(&example(), &opts).unwrap();
                assert!((s.objective + 36.0).abs() < 1e-12);
                assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y s.t. x + y >= 2, x - y = 1  ->  x = 1.5, y = 0.5
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 2.0);
        lp.add(vec![(0, 1.0), (1, -1.0)], Relation::Eq, 1.0);
        let s = solve(&lp, &LpOptions::default()).unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        assert!((s.objective - 2.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![(0, 1.0)], Relation::Le, -1.0);
        assert_eq!(solve(&lp, &LpOptions::default()), Err(Error::LpInfeasible));
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.add(vec![(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&lp, &LpOptions::default()), Err(Error::LpUnbounded));
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let s = solve(&lp, &LpOptions::default()).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![-0.75, 150.0, -0.02, 6.0];
        lp.add(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add(vec![(2, 1.0)], Relation::Le, 1.0);
        for pricing in [Pricing::Dantzig, Pricing::Bland] {
            let s = solve(
                &lp,
                &LpOptions {
                    pricing,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!((s.objective + 0.05).abs() < 1e-12, "{}", s.objective);
        }
    }
}
