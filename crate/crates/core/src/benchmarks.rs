//! Bundled benchmark trusses.
//!
//! Geometry, initial areas (0.5 m²) and modulus (200 GPa) are fixed. Loads and
//! supports are plain model-file blocks and can be edited or replaced.

use std::fmt;
use std::str::FromStr;

use crate::model_file::parse_model;
use crate::truss::TrussModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkCase {
    Case1,
    Case2,
    Case3,
    Case3d,
}

impl BenchmarkCase {
    pub const ALL: [BenchmarkCase; 4] = [
        BenchmarkCase::Case1,
        BenchmarkCase::Case2,
        BenchmarkCase::Case3,
        BenchmarkCase::Case3d,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BenchmarkCase::Case1 => "case1",
            BenchmarkCase::Case2 => "case2",
            BenchmarkCase::Case3 => "case3",
            BenchmarkCase::Case3d => "case3d",
        }
    }

    pub fn json(self) -> &'static str {
        match self {
            BenchmarkCase::Case1 => include_str!("../data/case1.json"),
            BenchmarkCase::Case2 => include_str!("../data/case2.json"),
            BenchmarkCase::Case3 => include_str!("../data/case3.json"),
            BenchmarkCase::Case3d => include_str!("../data/case3d.json"),
        }
    }

    pub fn model(self) -> TrussModel {
        parse_model(self.json(), self.id()).expect("bundled models are valid")
    }

    /// Uniform starting area ratio.
    pub fn initial_alpha(self) -> f64 {
        match self {
            BenchmarkCase::Case1 => 0.35,
            BenchmarkCase::Case2 => 0.5,
            BenchmarkCase::Case3 => 0.4,
            BenchmarkCase::Case3d => 0.1,
        }
    }

    /// Known optimised compliance for this layout, if any.
    pub fn reference_compliance(self) -> Option<f64> {
        match self {
            BenchmarkCase::Case1 => Some(0.38),
            BenchmarkCase::Case2 => Some(5.33),
            BenchmarkCase::Case3 => Some(0.79),
            BenchmarkCase::Case3d => None,
        }
    }
}

impl fmt::Display for BenchmarkCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCase(pub String);

impl fmt::Display for UnknownCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown benchmark case '{}' (expected case1, case2, case3 or case3d)",
            self.0
        )
    }
}

impl std::error::Error for UnknownCase {}

impl FromStr for BenchmarkCase {
    type Err = UnknownCase;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchmarkCase::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| UnknownCase(s.to_string()))
    }
}
