//! Tracks segment Monge-Ampere masses and `L_A` along a sequence of
//! normalized functions, to see whether the sequence flattens to an affine
//! limit and whether persistent mass keeps `L_A` away from zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FunctionalEvaluator;
use crate::functions::{crease, segment_ma_measure, AffineFunc, ConvexFunc, PlConvexFunc};

/// Masses below this times the segment length count as zero.
pub const MASS_TOL: f64 = 1e-6;
/// `|L_A|` below this counts as vanishing.
pub const L_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyEntry {
    pub index: usize,
    pub boundary_norm: f64,
    pub linear_functional: f64,
    /// `N(I)` for each segment, in input order.
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub length: f64,
    pub min_mass: f64,
    pub last_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub entries: Vec<DegeneracyEntry>,
    pub segments: Vec<SegmentSummary>,
    /// Every segment mass of the last entry is below tolerance.
    pub degenerating: bool,
    /// `|L_A|` of the last entry is below tolerance.
    pub l_vanishing: bool,
    /// `m = min` over entries and segments of the mass.
    pub persistent_mass: f64,
    /// `min_k L_A(u_k)`, recorded when `m > 0`.
    pub tau: Option<f64>,
}

/// Evaluates `N_k(I)` and `L_A(u_k)` for every function and segment.
pub fn degeneracy_diagnostic(
    eval: &FunctionalEvaluator,
    sequence: &[ConvexFunc],
    segments: &[(Vec<f64>, Vec<f64>)],
) -> Result<DegeneracyReport> {
    if sequence.is_empty() || segments.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let p = eval.polytope();
    let mut entries = Vec::with_capacity(sequence.len());
    for (index, u) in sequence.iter().enumerate() {
        let masses = segments
            .iter()
            .map(|(a, b)| segment_ma_measure(u, a, b, p))
            .collect::<Result<Vec<_>>>()?;
        entries.push(DegeneracyEntry {
            index,
            boundary_norm: eval.boundary_norm(u)?,
            linear_functional: eval.linear_functional(u)?,
            masses,
        });
    }
    let last = entries.last().expect("nonempty sequence");
    let summaries: Vec<SegmentSummary> = segments
        .iter()
        .enumerate()
        .map(|(j, (a, b))| SegmentSummary {
            a: a.clone(),
            b: b.clone(),
            length: a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            min_mass: entries.iter().map(|e| e.masses[j]).fold(f64::INFINITY, f64::min),
            last_mass: last.masses[j],
        })
        .collect();
    let degenerating = summaries.iter().all(|s| s.last_mass < MASS_TOL * s.length);
    let l_vanishing = last.linear_functional.abs() < L_TOL;
    let persistent_mass = summaries.iter().map(|s| s.min_mass).fold(f64::INFINITY, f64::min);
    let tau = (persistent_mass > 0.0).then(|| {
        entries
            .iter()
            .map(|e| e.linear_functional)
            .fold(f64::INFINITY, f64::min)
    });
    Ok(DegeneracyReport {
        entries,
        segments: summaries,
        degenerating,
        l_vanishing,
        persistent_mass,
        tau,
    })
}

/// A built-in sequence on `[0, 1]` together with the flags it should raise.
#[derive(Debug, Clone)]
pub struct ScriptedSequence {
    pub name: &'static str,
    pub ks: Vec<f64>,
    pub functions: Vec<ConvexFunc>,
    pub segments: Vec<(Vec<f64>, Vec<f64>)>,
    pub expect_degenerating: bool,
    pub expect_l_vanishing: bool,
}

fn abs_half(scale: f64) -> ConvexFunc {
    ConvexFunc::Pl(
        PlConvexFunc::new(vec![
            AffineFunc::new(-0.5 * scale, [scale]),
            AffineFunc::new(0.5 * scale, [-scale]),
        ])
        .expect("two pieces"),
    )
}

/// The three reference sequences for `k = 10, ..., 1e7`: a crease sliding
/// into the vertex `x = 1`, the fixed function `|x - 1/2|` and the shrinking
/// `|x - 1/2| / k`. Each uses the segments `(0.25, 0.75)`, `(0.1, 0.9)` and
/// three seeded random segments around `1/2`.
pub fn scripted_sequences(seed: u64) -> Vec<ScriptedSequence> {
    let ks: Vec<f64> = (1..=7).map(|j| 10f64.powi(j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = vec![(vec![0.25], vec![0.75]), (vec![0.1], vec![0.9])];
    for _ in 0..3 {
        segments.push((vec![rng.random_range(0.01..0.49)], vec![rng.random_range(0.51..0.99)]));
    }
    vec![
        ScriptedSequence {
            name: "vertex-crease",
            functions: ks
                .iter()
                .map(|&k| ConvexFunc::Pl(crease(&AffineFunc::new(1.0 - k, [k]))))
                .collect(),
            ks: ks.clone(),
            segments: segments.clone(),
            expect_degenerating: true,
            expect_l_vanishing: false,
        },
        ScriptedSequence {
            name: "fixed-kink",
            functions: ks.iter().map(|_| abs_half(1.0)).collect(),
            ks: ks.clone(),
            segments: segments.clone(),
            expect_degenerating: false,
            expect_l_vanishing: false,
        },
        ScriptedSequence {
            name: "shrinking-kink",
            functions: ks.iter().map(|&k| abs_half(1.0 / k)).collect(),
            ks,
            segments,
            expect_degenerating: true,
            expect_l_vanishing: true,
        },
    ]
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::polytope::{Facet, Polytope};

    fn eval() -> FunctionalEvaluator {
        let p = Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap();
        FunctionalEvaluator::new(p, Arc::new(2.0)).unwrap()
    }

    #[test]
    fn scripted_flags() {
        let e = eval();
        for s in scripted_sequences(11) {
            let r = degeneracy_diagnostic(&e, &s.functions, &s.segments).unwrap();
            assert_eq!(r.degenerating, s.expect_degenerating, "{}", s.name);
            assert_eq!(r.l_vanishing, s.expect_l_vanishing, "{}", s.name);
        }
    }

    #[test]
    fn closed_forms() {
        let e = eval();
        let s = scripted_sequences(3);
        // Sliding crease: ||u||_b = 1 and L_A = 1 - 1/k.
        let r = degeneracy_diagnostic(&e, &s[0].functions, &s[0].segments).unwrap();
        for (entry, k) in r.entries.iter().zip(&s[0].ks) {
            assert!((entry.boundary_norm - 1.0).abs() < 1e-12);
            assert!((entry.linear_functional - (1.0 - 1.0 / k)).abs() < 1e-9);
        }
        // Fixed kink: N = 2 on every segment, L_A = 1/2, tau recorded.
        let r = degeneracy_diagnostic(&e, &s[1].functions, &s[1].segments).unwrap();
        assert!((r.persistent_mass - 2.0).abs() < 1e-9);
        assert!((r.tau.unwrap() - 0.5).abs() < 1e-12);
        // Shrinking kink: N = 2/k and L_A = 1/(2k).
        let r = degeneracy_diagnostic(&e, &s[2].functions, &s[2].segments).unwrap();
        let last = r.entries.last().unwrap();
        assert!((last.masses[0] - 2e-7).abs() < 1e-12);
        assert!((last.linear_functional - 5e-8).abs() < 1e-15);
    }

    #[test]
    fn seeded_segments_are_deterministic() {
        assert_eq!(scripted_sequences(5)[0].segments, scripted_sequences(5)[0].segments);
        assert_ne!(scripted_sequences(5)[0].segments, scripted_sequences(6)[0].segments);
    }
}
