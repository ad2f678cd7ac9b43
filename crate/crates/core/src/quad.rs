//! Second-order local models and quadratic penalty augmentation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest tolerated `|H_ij − H_ji|` when a Hessian is accepted.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("hessian is not symmetric (|H_ij - H_ji| = {0:e})")]
    Asymmetric(f64),
    #[error("penalty factor must be positive, got {0}")]
    NonPositivePenalty(f64),
}

/// `f(δ) = c + δᵀg + δᵀAδ`, with `A` half the Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub constant: f64,
    pub gradient: DVector<f64>,
    /// Symmetric; equal to `½ ∂²f/∂x²`.
    pub a: DMatrix<f64>,
}

impl QuadraticForm {
    /// Builds a form directly in the `A = ½H` convention.
    pub fn new(constant: f64, gradient: DVector<f64>, a: DMatrix<f64>) -> Result<Self, QuadError> {
        let n = gradient.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(QuadError::DimensionMismatch {
                what: "quadratic coefficient matrix",
                expected: n,
                found: if a.nrows() != n { a.nrows() } else { a.ncols() },
            });
        }
        let asym = max_asymmetry(&a);
        if asym > SYMMETRY_TOL * (1.0 + a.abs().max()) {
            return Err(QuadError::Asymmetric(asym));
        }
        Ok(Self {
            constant,
            gradient,
            a,
        })
    }

    /// First-order model: zero quadratic part.
    pub fn linear(constant: f64, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        Self {
            constant,
            gradient,
            a: DMatrix::zeros(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::linear(0.0, DVector::zeros(n))
    }

    pub fn n_vars(&self) -> usize {
        self.gradient.len()
    }

    pub fn evaluate(&self, delta: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(delta) + delta.dot(&(&self.a * delta))
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Truncated Taylor series `f + gᵀδ + ½ δᵀHδ`.
pub fn taylor2(
    constant: f64,
    gradient: DVector<f64>,
    hessian_full: &DMatrix<f64>,
) -> Result<QuadraticForm, QuadError> {
    QuadraticForm::new(constant, gradient, hessian_full * 0.5)
}

/// Linearised constraint `value + gradientᵀδ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub penalty: f64,
}

impl LinearConstraint {
    pub fn new(value: f64, gradient: DVector<f64>, penalty: f64) -> Self {
        Self {
            value,
            gradient,
            penalty,
        }
    }

    pub fn eval(&self, delta: &DVector<f64>) -> f64 {
        self.value + self.gradient.dot(delta)
    }
}

/// Equalities `h_j + ∇h_jᵀδ = 0` and inequalities `l_j + ∇l_jᵀδ ≤ 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearConstraintSet {
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
}

impl LinearConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.equalities.is_empty() && self.inequalities.is_empty()
    }
}

/// Penalised form over `(δ, λ)`; slack variables occupy the last `n_slack`
/// positions and are bounded below by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedForm {
    pub form: QuadraticForm,
    pub n_slack: usize,
}

impl AugmentedForm {
    /// Finite upper bound for each slack at the linearisation point.
    pub fn slack_upper_bounds(constraints: &LinearConstraintSet) -> Vec<f64> {
        constraints
            .inequalities
            .iter()
            .map(|c| (2.0 * c.value.abs()).max(1.0))
            .collect()
    }
}

/// Adds `Σ c_h (h + ∇hᵀδ)² + Σ c_l (l + ∇lᵀδ + λ)²` to `objective`.
pub fn penalty_augment(
    objective: &QuadraticForm,
    constraints: &LinearConstraintSet,
) -> Result<AugmentedForm, QuadError> {
    let n = objective.n_vars();
    let n_slack = constraints.inequalities.len();
    let total = n + n_slack;

    let mut constant = objective.constant;
    let mut g = DVector::zeros(total);
    g.rows_mut(0, n).copy_from(&objective.gradient);
    let mut a = DMatrix::zeros(total, total);
    a.view_mut((0, 0), (n, n)).copy_from(&objective.a);

    let mut add = |c: &LinearConstraint, slack: Option<usize>| -> Result<(), QuadError> {
        if !(c.penalty > 0.0) {
            return Err(QuadError::NonPositivePenalty(c.penalty));
        }
        if c.gradient.len() != n {
            return Err(QuadError::DimensionMismatch {
                what: "constraint gradient",
                expected: n,
                found: c.gradient.len(),
            });
        }
        let mut d = DVector::zeros(total);
        d.rows_mut(0, n).copy_from(&c.gradient);
        if let Some(s) = slack {
            d[n + s] = 1.0;
        }
        constant += c.penalty * c.value * c.value;
        g.axpy(2.0 * c.penalty * c.value, &d, 1.0);
        a.ger(c.penalty, &d, &d, 1.0);
        Ok(())
    };

    for c in &constraints.equalities {
        add(c, None)?;
    }
    for (s, c) in constraints.inequalities.iter().enumerate() {
        add(c, Some(s))?;
    }

    Ok(AugmentedForm {
        form: QuadraticForm {
            constant,
            gradient: g,
            a,
        },
        n_slack,
    })
}
