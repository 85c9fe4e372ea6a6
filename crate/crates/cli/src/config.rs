//! Parsing of the weight, function and point arguments.

use std::path::Path;
use std::sync::Arc;

use kstab::{
    crease, extremal_affine, guillemin_potential, AffineFunc, ConvexFunc, Error, Polynomial, Polytope, Result,
    ScalarField, SmoothConvexFunc,
};

/// Highest total degree accepted for `A` on the command line.
pub const MAX_WEIGHT_DEGREE: usize = 2;

/// The weight `A` with the text it was parsed from.
#[derive(Clone)]
pub struct Weight {
    pub field: Arc<dyn ScalarField>,
    pub display: String,
    /// True when `A` is the extremal affine function of the polytope.
    pub extremal: bool,
}

/// Affine formula with coefficients rounded to 12 digits after the point and
/// vanishing ones dropped.
pub fn affine_formula(constant: f64, gradient: &[f64]) -> String {
    let tidy = |c: f64| {
        let r = (c * 1e12).round() / 1e12;
        if r == 0.0 {
            0.0
        } else {
            r
        }
    };
    let mut out = format!("{}", tidy(constant));
    for (i, g) in gradient.iter().enumerate() {
        let g = tidy(*g);
        if g == 0.0 {
            continue;
        }
        let var = ["x", "y"][i];
        let sign = if g < 0.0 { '-' } else { '+' };
        out.push_str(&format!(" {sign} {}*{var}", g.abs()));
    }
    out
}

pub fn load_polytope(path: &Path) -> Result<Polytope> {
    kstab::io::load_polytope(path)
}

/// `extremal`, a bracketed list of affine coefficients `[c0, c1, ..]`, or a
/// polynomial of degree at most two in `x`, `y`.
pub fn parse_weight(spec: &str, p: &Polytope) -> Result<Weight> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("extremal") {
        let a = extremal_affine(p)?.func;
        let poly = a.to_polynomial();
        return Ok(Weight {
            display: affine_formula(a.constant, &a.gradient),
            field: Arc::new(poly),
            extremal: true,
        });
    }
    let poly = if let Some(list) = spec.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
        let c = parse_numbers(list)?;
        if c.len() != p.dim() + 1 {
            return Err(Error::DimensionMismatch {
                expected: p.dim() + 1,
                got: c.len(),
            });
        }
        AffineFunc::new(c[0], c[1..].to_vec()).to_polynomial()
    } else {
        Polynomial::parse(spec, p.dim())?
    };
    if poly.degree() > MAX_WEIGHT_DEGREE {
        return Err(Error::Parse(format!(
            "A must have degree at most {MAX_WEIGHT_DEGREE}, got {}",
            poly.degree()
        )));
    }
    Ok(Weight {
        display: poly.to_string(),
        field: Arc::new(poly),
        extremal: false,
    })
}

/// `guillemin`, `crease:c,g1[,g2]` for `max(0, c + g.x)`, or a polynomial.
pub fn parse_function(spec: &str, p: &Polytope) -> Result<ConvexFunc> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("guillemin") {
        return Ok(guillemin_potential(p).into());
    }
    if let Some(rest) = spec.strip_prefix("crease:") {
        let c = parse_numbers(rest)?;
        if c.len() != p.dim() + 1 {
            return Err(Error::DimensionMismatch {
                expected: p.dim() + 1,
                got: c.len(),
            });
        }
        return Ok(crease(&AffineFunc::new(c[0], c[1..].to_vec())).into());
    }
    Ok(SmoothConvexFunc::from_polynomial(Polynomial::parse(spec, p.dim())?).into())
}

/// Points separated by `;`, coordinates by `,`.
pub fn parse_points(spec: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let x = parse_numbers(s)?;
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            Ok(x)
        })
        .collect()
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{t:?}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use kstab::Facet;

    use super::*;

    fn interval() -> Polytope {
        Polytope::new(vec![Facet::new([1.0], 0.0), Facet::new([-1.0], -1.0)]).unwrap()
    }

    #[test]
    fn weight_forms() {
        let p = interval();
        let w = parse_weight("extremal", &p).unwrap();
        assert!(w.extremal && (w.field.value(&[0.3]) - 2.0).abs() < 1e-12);
        let w = parse_weight("[2, 7]", &p).unwrap();
        assert_eq!(w.field.value(&[1.0]), 9.0);
        let w = parse_weight("2 + 7*(x - 0.5)", &p).unwrap();
        assert!((w.field.value(&[0.5]) - 2.0).abs() < 1e-15);
        assert!(parse_weight("x^3", &p).is_err());
        assert!(parse_weight("[1, 2, 3]", &p).is_err());
    }

    #[test]
    fn formula_drops_rounding_noise() {
        assert_eq!(affine_formula(2.0000000000000013, &[-2.7e-15]), "2");
        assert_eq!(affine_formula(5.999999999999998, &[1e-16, 1e-16]), "6");
        assert_eq!(affine_formula(2.0, &[7.0]), "2 + 7*x");
        assert_eq!(affine_formula(1.5, &[0.0, -0.25]), "1.5 - 0.25*y");
    }

    #[test]
    fn function_and_point_forms() {
        let p = interval();
        assert!(matches!(parse_function("guillemin", &p), Ok(ConvexFunc::Smooth(_))));
        assert!(matches!(parse_function("crease:-0.5,1", &p), Ok(ConvexFunc::Pl(_))));
        assert!(matches!(parse_function("x^2", &p), Ok(ConvexFunc::Smooth(_))));
        assert_eq!(parse_points("0.25; 0.5", 1).unwrap(), vec![vec![0.25], vec![0.5]]);
        assert!(parse_points("0.25,0.5", 1).is_err());
    }
}
