//! JSON model files.
//!
//! ```json
//! {"dimension": 2,
//!  "nodes": [[0, 0], [1, 0]],
//!  "bars": [{"i": 0, "j": 1, "area0": 0.5, "E": 2e11}],
//!  "supports": [[0, 0], [0, 1], [1, 1]],
//!  "loads": [[1, 0, 1000.0]]}
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::truss::{Bar, TrussError, TrussModel};

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: line {line}, column {column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {source}")]
    Invalid { origin: String, source: TrussError },
}

impl ModelFileError {
    /// The structural error behind an otherwise well-formed file.
    pub fn truss_error(&self) -> Option<&TrussError> {
        match self {
            ModelFileError::Invalid { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarRecord {
    pub i: usize,
    pub j: usize,
    pub area0: f64,
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub dimension: usize,
    pub nodes: Vec<Vec<f64>>,
    pub bars: Vec<BarRecord>,
    pub supports: Vec<(usize, usize)>,
    #[serde(default)]
    pub loads: Vec<(usize, usize, f64)>,
}

impl ModelFile {
    /// `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ModelFileError> {
        serde_json::from_str(text).map_err(|e| ModelFileError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_model(&self, origin: &str) -> Result<TrussModel, ModelFileError> {
        let bars = self
            .bars
            .iter()
            .map(|b| Bar {
                node_i: b.i,
                node_j: b.j,
                area0: b.area0,
                youngs_modulus: b.youngs_modulus,
            })
            .collect();
        TrussModel::new(
            self.dimension,
            self.nodes.clone(),
            bars,
            self.supports.iter().copied(),
            &self.loads,
        )
        .map_err(|source| ModelFileError::Invalid {
            origin: origin.to_string(),
            source,
        })
    }

    pub fn from_model(model: &TrussModel, description: Option<String>) -> Self {
        Self {
            description,
            dimension: model.dimension(),
            nodes: (0..model.n_nodes())
                .map(|n| model.node(n).to_vec())
                .collect(),
            bars: model
                .bars()
                .iter()
                .map(|b| BarRecord {
                    i: b.node_i,
                    j: b.node_j,
                    area0: b.area0,
                    youngs_modulus: b.youngs_modulus,
                })
                .collect(),
            supports: model.supports().iter().copied().collect(),
            loads: model.load_entries(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialise")
    }
}

pub fn parse_model(text: &str, origin: &str) -> Result<TrussModel, ModelFileError> {
    ModelFile::parse(text, origin)?.to_model(origin)
}

pub fn load_model(path: &Path) -> Result<TrussModel, ModelFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_model(&text, &path.display().to_string())
}
