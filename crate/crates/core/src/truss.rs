//! Pin-jointed truss model and the mechanical quantities built on it.
//!
//! Fixed degrees of freedom are eliminated up front: every matrix and vector
//! below lives in the *reduced* space of free DOFs, so `K(α)` is symmetric
//! positive definite whenever the supports remove all rigid-body modes and
//! every `α_k > 0`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Bars shorter than this are rejected when a model is built.
pub const MIN_BAR_LENGTH: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrussError {
    #[error("unsupported dimension {0}, expected 2 or 3")]
    UnsupportedDimension(usize),
    #[error("node {node} has {found} coordinates, expected {expected}")]
    NodeDimension {
        node: usize,
        expected: usize,
        found: usize,
    },
    #[error("node {node} has a non-finite coordinate")]
    NonFiniteCoordinate { node: usize },
    #[error("bar {bar} references node {node}, but the model has {n_nodes} nodes")]
    NodeOutOfRange {
        bar: usize,
        node: usize,
        n_nodes: usize,
    },
    #[error("bar {bar} connects node {node} to itself")]
    SameEndpoints { bar: usize, node: usize },
    #[error("bar {bar} is degenerate (length {length:e} m)")]
    DegenerateBar { bar: usize, length: f64 },
    #[error("bar {bar} has non-positive initial area {value}")]
    NonPositiveArea { bar: usize, value: f64 },
    #[error("bar {bar} has non-positive Young's modulus {value}")]
    NonPositiveModulus { bar: usize, value: f64 },
    #[error("bar index {bar} out of range ({n_bars} bars)")]
    BarOutOfRange { bar: usize, n_bars: usize },
    #[error("support ({node}, {axis}) is out of range")]
    SupportOutOfRange { node: usize, axis: usize },
    #[error("load ({node}, {axis}) is out of range")]
    LoadOutOfRange { node: usize, axis: usize },
    #[error("load ({node}, {axis}) acts on a fixed degree of freedom")]
    LoadOnFixedDof { node: usize, axis: usize },
    #[error("load ({node}, {axis}) is not finite")]
    NonFiniteLoad { node: usize, axis: usize },
    #[error("structure under-constrained: {0}")]
    UnderConstrained(String),
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("design variable {index} = {value} violates its bounds [{lower}, {upper}]")]
    DesignOutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid design bounds at {index}: lower {lower}, upper {upper}")]
    InvalidDesignBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
}

/// One axial member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub node_i: usize,
    pub node_j: usize,
    /// Initial cross-sectional area `A_k⁰` in m².
    pub area0: f64,
    /// Young's modulus in Pa.
    pub youngs_modulus: f64,
}

/// A fixed degree of freedom: `(node, axis)`.
pub type Support = (usize, usize);

/// Immutable truss geometry, material, supports and loads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrussModel {
    dimension: usize,
    coords: Vec<f64>,
    bars: Vec<Bar>,
    supports: BTreeSet<Support>,
    loads: DVector<f64>,
}

impl TrussModel {
    /// Builds and validates a model. `loads` are `(node, axis, force)` triples;
    /// repeated entries on the same DOF are summed.
    pub fn new(
        dimension: usize,
        nodes: Vec<Vec<f64>>,
        bars: Vec<Bar>,
        supports: impl IntoIterator<Item = Support>,
        loads: &[(usize, usize, f64)],
    ) -> Result<Self, TrussError> {
        if dimension != 2 && dimension != 3 {
            return Err(TrussError::UnsupportedDimension(dimension));
        }
        let n_nodes = nodes.len();
        let mut coords = Vec::with_capacity(n_nodes * dimension);
        for (node, c) in nodes.iter().enumerate() {
            if c.len() != dimension {
                return Err(TrussError::NodeDimension {
                    node,
                    expected: dimension,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(TrussError::NonFiniteCoordinate { node });
            }
            coords.extend_from_slice(c);
        }

        let supports: BTreeSet<Support> = supports.into_iter().collect();
        for &(node, axis) in &supports {
            if node >= n_nodes || axis >= dimension {
                return Err(TrussError::SupportOutOfRange { node, axis });
            }
        }

        let mut f = DVector::zeros(n_nodes * dimension);
        for &(node, axis, value) in loads {
            if node >= n_nodes || axis >= dimension {
                return Err(TrussError::LoadOutOfRange { node, axis });
            }
            if !value.is_finite() {
                return Err(TrussError::NonFiniteLoad { node, axis });
            }
            if value != 0.0 && supports.contains(&(node, axis)) {
                return Err(TrussError::LoadOnFixedDof { node, axis });
            }
            f[node * dimension + axis] += value;
        }

        let model = Self {
            dimension,
            coords,
            bars,
            supports,
            loads: f,
        };
        for (k, bar) in model.bars.iter().enumerate() {
            for node in [bar.node_i, bar.node_j] {
                if node >= n_nodes {
                    return Err(TrussError::NodeOutOfRange {
                        bar: k,
                        node,
                        n_nodes,
                    });
                }
            }
            if bar.node_i == bar.node_j {
                return Err(TrussError::SameEndpoints {
                    bar: k,
                    node: bar.node_i,
                });
            }
            if !(bar.area0 > 0.0) {
                return Err(TrussError::NonPositiveArea {
                    bar: k,
                    value: bar.area0,
                });
            }
            if !(bar.youngs_modulus > 0.0) {
                return Err(TrussError::NonPositiveModulus {
                    bar: k,
                    value: bar.youngs_modulus,
                });
            }
            bar_geometry(&model, k)?;
        }

        let required = dimension * (dimension + 1) / 2;
        if model.supports.len() < required {
            return Err(TrussError::UnderConstrained(format!(
                "{} support constraints, at least {required} needed to remove rigid-body modes",
                model.supports.len()
            )));
        }
        Ok(model)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn n_bars(&self) -> usize {
        self.bars.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.coords.len()
    }

    pub fn node(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dimension..(index + 1) * self.dimension]
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn supports(&self) -> &BTreeSet<Support> {
        &self.supports
    }

    /// Nodal force vector over all `d·M` DOFs.
    pub fn loads(&self) -> &DVector<f64> {
        &self.loads
    }

    /// Force vector restricted to the free DOFs of `dofs`.
    pub fn reduced_loads(&self, dofs: &DofMap) -> DVector<f64> {
        DVector::from_iterator(
            dofs.n_free(),
            dofs.free_dofs().iter().map(|&g| self.loads[g]),
        )
    }

    /// Non-zero loads as `(node, axis, force)` triples.
    pub fn load_entries(&self) -> Vec<(usize, usize, f64)> {
        self.loads
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(g, v)| (g / self.dimension, g % self.dimension, *v))
            .collect()
    }
}

/// Global DOF numbering with fixed DOFs eliminated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    free_dofs: Vec<usize>,
    full_to_reduced: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(model: &TrussModel) -> Self {
        let d = model.dimension();
        let mut free_dofs = Vec::new();
        let mut full_to_reduced = vec![None; model.n_dofs()];
        for (g, slot) in full_to_reduced.iter_mut().enumerate() {
            if !model.supports().contains(&(g / d, g % d)) {
                *slot = Some(free_dofs.len());
                free_dofs.push(g);
            }
        }
        Self {
            free_dofs,
            full_to_reduced,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Reduced index of global DOF `g`, or `None` when it is fixed.
    pub fn reduced(&self, g: usize) -> Option<usize> {
        self.full_to_reduced.get(g).copied().flatten()
    }

    /// Scatters a reduced vector back to all DOFs, with zeros on fixed ones.
    pub fn expand(&self, reduced: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.full_to_reduced.len());
        for (r, &g) in self.free_dofs.iter().enumerate() {
            full[g] = reduced[r];
        }
        full
    }
}

/// Area ratios `α` together with their box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    alpha: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl DesignVector {
    pub fn new(
        alpha: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, TrussError> {
        for (what, v) in [("lower bounds", &lower), ("upper bounds", &upper)] {
            if v.len() != alpha.len() {
                return Err(TrussError::DimensionMismatch {
                    what,
                    expected: alpha.len(),
                    found: v.len(),
                });
            }
        }
        for i in 0..alpha.len() {
            if !(lower[i] > 0.0) || !(lower[i] <= upper[i]) {
                return Err(TrussError::InvalidDesignBounds {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
            if !(alpha[i] >= lower[i] && alpha[i] <= upper[i]) {
                return Err(TrussError::DesignOutOfBounds {
                    index: i,
                    value: alpha[i],
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        Ok(Self {
            alpha,
            lower,
            upper,
        })
    }

    /// Every bar at `value`, with uniform bounds.
    pub fn uniform(n: usize, value: f64, lower: f64, upper: f64) -> Result<Self, TrussError> {
        Self::new(
            DVector::from_element(n, value),
            DVector::from_element(n, lower),
            DVector::from_element(n, upper),
        )
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Same bounds, new values (checked).
    pub fn with_alpha(&self, alpha: DVector<f64>) -> Result<Self, TrussError> {
        Self::new(alpha, self.lower.clone(), self.upper.clone())
    }
}

/// Reduced nodal displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub u: DVector<f64>,
}

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: DVector::zeros(n),
        }
    }
}

impl From<DVector<f64>> for StateVector {
    fn from(u: DVector<f64>) -> Self {
        Self { u }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarGeometry {
    pub length: f64,
    /// Unit vector from `node_i` to `node_j`.
    pub direction: Vec<f64>,
}

pub fn bar_geometry(model: &TrussModel, k: usize) -> Result<BarGeometry, TrussError> {
    let bar = model.bars.get(k).ok_or(TrussError::BarOutOfRange {
        bar: k,
        n_bars: model.n_bars(),
    })?;
    let a = model.node(bar.node_i);
    let b = model.node(bar.node_j);
    let diff: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let length = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(length >= MIN_BAR_LENGTH) {
        return Err(TrussError::DegenerateBar { bar: k, length });
    }
    Ok(BarGeometry {
        length,
        direction: diff.into_iter().map(|v| v / length).collect(),
    })
}

/// Axial element stiffness `(E·A⁰/L)·[[nnᵀ, −nnᵀ], [−nnᵀ, nnᵀ]]` in the
/// element DOF order `(node_i axes…, node_j axes…)`.
pub fn element_stiffness0(model: &TrussModel, k: usize) -> Result<DMatrix<f64>, TrussError> {
    let geom = bar_geometry(model, k)?;
    let bar = &model.bars[k];
    let d = model.dimension();
    let scale = bar.youngs_modulus * bar.area0 / geom.length;
    let n = &geom.direction;
    Ok(DMatrix::from_fn(2 * d, 2 * d, |r, c| {
        let sign = if (r < d) == (c < d) { 1.0 } else { -1.0 };
        sign * scale * n[r % d] * n[c % d]
    }))
}

/// One bar's contribution to the reduced stiffness: a dense block over the
/// bar's free DOFs only. The block equals `scale · c cᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarStiffness {
    pub dofs: Vec<usize>,
    pub block: DMatrix<f64>,
    /// `E·A⁰/L`.
    pub scale: f64,
    /// `±n` restricted to the free DOFs in `dofs`.
    pub coeffs: Vec<f64>,
}

impl BarStiffness {
    /// `uᵀ K_k u = scale·(cᵀu)²`, never negative.
    pub fn energy_norm(&self, u: &DVector<f64>) -> f64 {
        let elong: f64 = self
            .dofs
            .iter()
            .zip(&self.coeffs)
            .map(|(&r, c)| c * u[r])
            .sum();
        self.scale * elong * elong
    }
}

/// The per-bar matrices `K_k` with `K(α) = Σ α_k K_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStiffnessSet {
    n_free: usize,
    bars: Vec<BarStiffness>,
}

impl UnitStiffnessSet {
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_bars(&self) -> usize {
        self.bars.len()
    }

    pub fn bars(&self) -> &[BarStiffness] {
        &self.bars
    }

    /// `K_k` expanded to a dense reduced-size matrix.
    pub fn dense(&self, k: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_free, self.n_free);
        self.scatter_scaled(k, 1.0, &mut m);
        m
    }

    fn scatter_scaled(&self, k: usize, scale: f64, into: &mut DMatrix<f64>) {
        let bar = &self.bars[k];
        for (a, &ra) in bar.dofs.iter().enumerate() {
            for (b, &rb) in bar.dofs.iter().enumerate() {
                into[(ra, rb)] += scale * bar.block[(a, b)];
            }
        }
    }

    fn check_design(&self, alpha: &DVector<f64>) -> Result<(), TrussError> {
        if alpha.len() != self.bars.len() {
            return Err(TrussError::DimensionMismatch {
                what: "design vector",
                expected: self.bars.len(),
                found: alpha.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, what: &'static str, v: &DVector<f64>) -> Result<(), TrussError> {
        if v.len() != self.n_free {
            return Err(TrussError::DimensionMismatch {
                what,
                expected: self.n_free,
                found: v.len(),
            });
        }
        Ok(())
    }
}

pub fn assemble_unit_stiffness(
    model: &TrussModel,
    dofs: &DofMap,
) -> Result<UnitStiffnessSet, TrussError> {
    let d = model.dimension();
    let mut bars = Vec::with_capacity(model.n_bars());
    for (k, bar) in model.bars().iter().enumerate() {
        let ke = element_stiffness0(model, k)?;
        let geom = bar_geometry(model, k)?;
        let global: Vec<usize> = (0..d)
            .map(|a| bar.node_i * d + a)
            .chain((0..d).map(|a| bar.node_j * d + a))
            .collect();
        let kept: Vec<(usize, usize)> = global
            .iter()
            .enumerate()
            .filter_map(|(local, &g)| dofs.reduced(g).map(|r| (local, r)))
            .collect();
        let block = DMatrix::from_fn(kept.len(), kept.len(), |a, b| ke[(kept[a].0, kept[b].0)]);
        let coeffs = kept
            .iter()
            .map(|&(local, _)| {
                let n = geom.direction[local % d];
                if local < d {
                    -n
                } else {
                    n
                }
            })
            .collect();
        bars.push(BarStiffness {
            dofs: kept.iter().map(|&(_, r)| r).collect(),
            block,
            scale: bar.youngs_modulus * bar.area0 / geom.length,
            coeffs,
        });
    }
    Ok(UnitStiffnessSet {
        n_free: dofs.n_free(),
        bars,
    })
}

/// `K(α) = Σ_k α_k K_k`, dense.
pub fn global_stiffness(
    units: &UnitStiffnessSet,
    alpha: &DVector<f64>,
) -> Result<DMatrix<f64>, TrussError> {
    units.check_design(alpha)?;
    let mut k = DMatrix::zeros(units.n_free, units.n_free);
    for (i, &a) in alpha.iter().enumerate() {
        units.scatter_scaled(i, a, &mut k);
    }
    Ok(k)
}

/// `Ψ(U; α) = ½ UᵀK(α)U − FᵀU`.
pub fn potential_energy(
    units: &UnitStiffnessSet,
    alpha: &DVector<f64>,
    state: &StateVector,
    loads: &DVector<f64>,
) -> Result<f64, TrussError> {
    units.check_state("state vector", &state.u)?;
    units.check_state("load vector", loads)?;
    let k = global_stiffness(units, alpha)?;
    Ok(0.5 * state.u.dot(&(&k * &state.u)) - loads.dot(&state.u))
}

/// `∂Ψ/∂U = K(α)U − F`.
pub fn potential_gradient(
    units: &UnitStiffnessSet,
    alpha: &DVector<f64>,
    state: &StateVector,
    loads: &DVector<f64>,
) -> Result<DVector<f64>, TrussError> {
    units.check_state("state vector", &state.u)?;
    units.check_state("load vector", loads)?;
    let k = global_stiffness(units, alpha)?;
    Ok(&k * &state.u - loads)
}

/// Solves `K(α)U = F` by Cholesky factorisation. Used as a reference.
pub fn direct_solve(
    units: &UnitStiffnessSet,
    alpha: &DVector<f64>,
    loads: &DVector<f64>,
) -> Result<StateVector, TrussError> {
    units.check_state("load vector", loads)?;
    let k = global_stiffness(units, alpha)?;
    let chol = k.cholesky().ok_or_else(|| {
        TrussError::UnderConstrained("stiffness matrix is not positive definite".into())
    })?;
    Ok(StateVector {
        u: chol.solve(loads),
    })
}

/// `C = FᵀU`.
pub fn compliance(loads: &DVector<f64>, state: &StateVector) -> Result<f64, TrussError> {
    if loads.len() != state.u.len() {
        return Err(TrussError::DimensionMismatch {
            what: "state vector",
            expected: loads.len(),
            found: state.u.len(),
        });
    }
    Ok(loads.dot(&state.u))
}

/// `ω_i = −Uᵀ K_i U` for every bar.
pub fn compliance_sensitivity(
    units: &UnitStiffnessSet,
    state: &StateVector,
) -> Result<DVector<f64>, TrussError> {
    units.check_state("state vector", &state.u)?;
    Ok(DVector::from_iterator(
        units.n_bars(),
        units.bars.iter().map(|b| -b.energy_norm(&state.u)),
    ))
}

/// `Σ α_k L_k A_k⁰`.
pub fn volume(model: &TrussModel, alpha: &DVector<f64>) -> Result<f64, TrussError> {
    let grad = volume_gradient(model)?;
    if alpha.len() != grad.len() {
        return Err(TrussError::DimensionMismatch {
            what: "design vector",
            expected: grad.len(),
            found: alpha.len(),
        });
    }
    Ok(grad.dot(alpha))
}

/// `D_k = L_k A_k⁰`, constant in `α`.
pub fn volume_gradient(model: &TrussModel) -> Result<DVector<f64>, TrussError> {
    let mut d = DVector::zeros(model.n_bars());
    for (k, bar) in model.bars().iter().enumerate() {
        d[k] = bar_geometry(model, k)?.length * bar.area0;
    }
    Ok(d)
}
