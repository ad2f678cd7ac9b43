//! Trace, design and summary files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trussqa_core::{DofMap, OptimizationResult, StopReason, TrussModel};

use crate::Failure;

pub const EQUILIBRIUM_TRACE: &str = "equilibrium_trace.csv";
pub const DISPLACEMENTS: &str = "displacements.json";
pub const OPTIMIZE_TRACE: &str = "optimize_trace.csv";
pub const DESIGN_FINAL: &str = "design_final.json";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Serialize)]
pub struct EquilibriumRow {
    pub iter: usize,
    pub psi: f64,
    pub rel_error_vs_direct: f64,
    pub epsilon: f64,
    pub accepted: bool,
}

#[derive(Debug, Serialize)]
pub struct OptimizeRow {
    pub iter: usize,
    pub compliance: f64,
    pub volume_ratio: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarDesign {
    pub bar: usize,
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    /// `α·A⁰` in m².
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub bars: Vec<BarDesign>,
    /// As reached by the optimiser's iterative equilibrium.
    pub compliance: f64,
    /// Re-evaluated with a direct solve.
    pub compliance_direct: f64,
    pub volume: f64,
}

impl DesignFile {
    pub fn new(
        model: &TrussModel,
        alpha: &[f64],
        compliance: f64,
        compliance_direct: f64,
        volume: f64,
    ) -> Self {
        let bars = model
            .bars()
            .iter()
            .zip(alpha)
            .enumerate()
            .map(|(k, (b, &a))| BarDesign {
                bar: k,
                i: b.node_i,
                j: b.node_j,
                alpha: a,
                area: a * b.area0,
            })
            .collect();
        Self {
            bars,
            compliance,
            compliance_direct,
            volume,
        }
    }

    pub fn load(path: &Path, model: &TrussModel) -> Result<Vec<f64>, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        let file: DesignFile = serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        if file.bars.len() != model.n_bars() {
            return Err(Failure::Input(format!(
                "{}: {} bars, model has {}",
                path.display(),
                file.bars.len(),
                model.n_bars()
            )));
        }
        let mut alpha = vec![0.0; model.n_bars()];
        for b in &file.bars {
            let slot = alpha.get_mut(b.bar).ok_or_else(|| {
                Failure::Input(format!(
                    "{}: bar index {} out of range",
                    path.display(),
                    b.bar
                ))
            })?;
            *slot = b.alpha;
        }
        Ok(alpha)
    }
}

#[derive(Debug, Serialize)]
pub struct Displacements {
    pub psi: f64,
    pub psi_direct: f64,
    pub rel_error_vs_direct: f64,
    pub residual: f64,
    pub compliance: f64,
    pub stop_reason: StopReason,
    pub qasp_iterations: usize,
    /// Per node, one entry per axis; fixed DOFs are zero.
    pub nodes: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
}

impl Displacements {
    pub fn node_table(
        model: &TrussModel,
        dofs: &DofMap,
        reduced: &nalgebra::DVector<f64>,
    ) -> Vec<Vec<f64>> {
        let full = dofs.expand(reduced);
        let d = model.dimension();
        (0..model.n_nodes())
            .map(|n| full.as_slice()[n * d..(n + 1) * d].to_vec())
            .collect()
    }
}

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub base: u64,
    /// Sampler seed of each outer iteration's equilibrium solve.
    pub equilibrium: Vec<u64>,
    /// Sampler seed of the design update that produced each iterate.
    pub design: Vec<Option<u64>>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub model: String,
    pub sampler: String,
    pub compliance: f64,
    pub initial_compliance: f64,
    pub volume_ratio: f64,
    pub v_target: f64,
    pub stop_reason: String,
    pub outer_iterations: usize,
    pub elapsed_secs: f64,
    pub seeds: Seeds,
}

impl Summary {
    pub fn new(
        model: String,
        sampler: &str,
        base_seed: u64,
        result: &OptimizationResult,
        elapsed_secs: f64,
    ) -> Self {
        let rows = &result.trace.iterations;
        Self {
            model,
            sampler: sampler.to_string(),
            compliance: result.compliance,
            initial_compliance: rows.first().map_or(f64::NAN, |r| r.compliance),
            volume_ratio: result.volume_ratio,
            v_target: result.v_target,
            stop_reason: result.stop.to_string(),
            outer_iterations: rows.len(),
            elapsed_secs,
            seeds: Seeds {
                base: base_seed,
                equilibrium: rows.iter().map(|r| r.equilibrium_seed).collect(),
                design: rows.iter().map(|r| r.design_seed).collect(),
            },
        }
    }
}

pub fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_csv<T: Serialize>(path: PathBuf, rows: &[T]) -> Result<(), Failure> {
    let fail = |e: csv::Error| Failure::Input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush()
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Numerical(format!("cannot serialise {}: {e}", path.display())))?;
    fs::write(&path, text + "\n")
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}
