//! TOML file formats for polytopes, functions and reports.
//!
//! Floats are written in shortest round-trip decimal form, so reading a
//! written file reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{AffineFunc, MeshConvexFunc, PlConvexFunc};
use crate::mesh::{make_mesh, Mesh};
use crate::polytope::{Facet, Polytope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetRecord {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeRecord {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub facets: Vec<FacetRecord>,
    /// Per-facet `sigma` densities; `1/|h_k|` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_weights: Option<Vec<f64>>,
}

impl PolytopeRecord {
    pub fn from_polytope(p: &Polytope) -> Self {
        let default_weights: Vec<f64> = p.facets().iter().map(|f| 1.0 / f.norm()).collect();
        Self {
            dimension: p.dim(),
            name: p.name().map(str::to_owned),
            facets: p
                .facets()
                .iter()
                .map(|f| FacetRecord {
                    normal: f.normal.clone(),
                    offset: f.offset,
                })
                .collect(),
            boundary_weights: (p.boundary_weights() != default_weights.as_slice())
                .then(|| p.boundary_weights().to_vec()),
        }
    }

    pub fn build(&self) -> Result<Polytope> {
        if let Some(f) = self.facets.iter().find(|f| f.normal.len() != self.dimension) {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: f.normal.len(),
            });
        }
        let mut p = Polytope::new(
            self.facets
                .iter()
                .map(|f| Facet::new(f.normal.clone(), f.offset))
                .collect(),
        )?;
        if let Some(name) = &self.name {
            p = p.with_name(name.clone());
        }
        if let Some(w) = &self.boundary_weights {
            p = p.with_boundary_weights(w.clone())?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceRecord {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlRecord {
    pub dimension: usize,
    pub pieces: Vec<PieceRecord>,
}

impl PlRecord {
    pub fn from_function(u: &PlConvexFunc) -> Self {
        Self {
            dimension: u.dim(),
            pieces: u
                .pieces()
                .iter()
                .map(|l| PieceRecord {
                    gradient: l.gradient.clone(),
                    constant: l.constant,
                })
                .collect(),
        }
    }

    pub fn build(&self) -> Result<PlConvexFunc> {
        PlConvexFunc::new(
            self.pieces
                .iter()
                .map(|p| AffineFunc::new(p.constant, p.gradient.clone()))
                .collect(),
        )
    }
}

/// A mesh function refers to its mesh by polytope and `h`; the mesh itself
/// is rebuilt deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFunctionRecord {
    pub polytope: PolytopeRecord,
    pub mesh_parameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_vertex: Option<usize>,
    pub values: Vec<f64>,
}

impl MeshFunctionRecord {
    pub fn from_function(u: &MeshConvexFunc) -> Self {
        Self {
            polytope: PolytopeRecord::from_polytope(u.mesh().polytope()),
            mesh_parameter: u.mesh().h(),
            base_vertex: u.base_vertex(),
            values: u.values().to_vec(),
        }
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(make_mesh(&self.polytope.build()?, self.mesh_parameter)?))
    }

    pub fn build(&self) -> Result<MeshConvexFunc> {
        let u = MeshConvexFunc::new(self.mesh()?, self.values.clone())?;
        match self.base_vertex {
            Some(b) => u.with_base_vertex(b),
            None => Ok(u),
        }
    }
}

/// A report with the toolkit version and the tolerances in force.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument<T> {
    pub kind: String,
    pub version: String,
    pub tolerances: BTreeMap<String, f64>,
    pub report: T,
}

impl<T: Serialize> ReportDocument<T> {
    pub fn new(kind: &str, tolerances: BTreeMap<String, f64>, report: T) -> Self {
        Self {
            kind: kind.to_owned(),
            version: crate::VERSION.to_owned(),
            tolerances,
            report,
        }
    }
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn from_toml<T: for<'de> Deserialize<'de>>(src: &str) -> Result<T> {
    toml::from_str(src).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_polytope(src: &str) -> Result<Polytope> {
    from_toml::<PolytopeRecord>(src)?.build()
}

pub fn write_polytope(p: &Polytope) -> Result<String> {
    to_toml(&PolytopeRecord::from_polytope(p))
}

pub fn load_polytope(path: impl AsRef<Path>) -> Result<Polytope> {
    read_polytope(&std::fs::read_to_string(path)?)
}

pub fn save(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    Ok(std::fs::write(path, contents)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const SQUARE: &str = r#"
dimension = 2
name = "square"

[[facets]]
normal = [1.0, 0.0]
offset = 0.0

[[facets]]
normal = [0.0, 1.0]
offset = 0.0

[[facets]]
normal = [-1.0, 0.0]
offset = -1.0

[[facets]]
normal = [0.0, -1.0]
offset = -1.0
"#;

    #[test]
    fn reads_square() {
        let p = read_polytope(SQUARE).unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert_eq!(p.name(), Some("square"));
        let again = read_polytope(&write_polytope(&p).unwrap()).unwrap();
        assert_eq!(again.facets(), p.facets());
    }

    #[test]
    fn mismatched_normal_is_rejected() {
        let src = "dimension = 2\n[[facets]]\nnormal = [1.0]\noffset = 0.0\n";
        assert!(matches!(read_polytope(src), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(read_polytope("dimension = ["), Err(Error::Parse(_))));
    }

    #[test]
    fn mesh_function_round_trip() {
        let p = read_polytope(SQUARE).unwrap();
        let mesh = Arc::new(make_mesh(&p, 0.25).unwrap());
        let u = MeshConvexFunc::interpolate(mesh, |x| (x[0] - 0.5).powi(2) + 0.1 * x[1]).unwrap();
        let rec = MeshFunctionRecord::from_function(&u);
        let back: MeshFunctionRecord = from_toml(&to_toml(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.build().unwrap().values(), u.values());
    }

    proptest! {
        #[test]
        fn polytope_round_trip_is_bit_exact(
            lo in -1e3f64..1e3, len in 1e-6f64..1e6, scale in 1e-3f64..1e3,
        ) {
            let p = Polytope::new(vec![
                Facet::new([scale], scale * lo),
                Facet::new([-1.0 / scale], -(lo + len) / scale),
            ]).unwrap();
            let rec = PolytopeRecord::from_polytope(&p);
            let back: PolytopeRecord = from_toml(&to_toml(&rec).unwrap()).unwrap();
            for (a, b) in back.facets.iter().zip(&rec.facets) {
                prop_assert_eq!(a.offset.to_bits(), b.offset.to_bits());
                prop_assert_eq!(a.normal[0].to_bits(), b.normal[0].to_bits());
            }
        }

        #[test]
        fn pl_round_trip_is_bit_exact(
            pieces in proptest::collection::vec((any::<f64>(), any::<f64>(), any::<f64>()), 1..6),
        ) {
            prop_assume!(pieces.iter().all(|(a, b, c)| a.is_finite() && b.is_finite() && c.is_finite()));
            let u = PlConvexFunc::new(
                pieces.iter().map(|(c, g0, g1)| AffineFunc::new(*c, vec![*g0, *g1])).collect(),
            ).unwrap();
            let rec = PlRecord::from_function(&u);
            let back: PlRecord = from_toml(&to_toml(&rec).unwrap()).unwrap();
            for (a, b) in back.pieces.iter().zip(&rec.pieces) {
                prop_assert_eq!(a.constant.to_bits(), b.constant.to_bits());
                prop_assert_eq!(a.gradient[0].to_bits(), b.gradient[0].to_bits());
                prop_assert_eq!(a.gradient[1].to_bits(), b.gradient[1].to_bits());
            }
        }
    }
}
