//! Fixtures shared by the benchmarks.

use nalgebra::DVector;
use trussqa_core::optimizer::EquilibriumProblem;
use trussqa_core::{
    assemble_unit_stiffness, qubo_from_quadratic, BenchmarkCase, DofMap, EncodingSpec, QaspProblem,
    QuadraticForm, QuboProblem, UnitStiffnessSet,
};

pub struct CaseFixture {
    pub case: BenchmarkCase,
    pub units: UnitStiffnessSet,
    pub loads: DVector<f64>,
    pub alpha: DVector<f64>,
}

impl CaseFixture {
    pub fn new(case: BenchmarkCase) -> Self {
        let model = case.model();
        let dofs = DofMap::new(&model);
        let units = assemble_unit_stiffness(&model, &dofs).expect("bundled models assemble");
        let loads = model.reduced_loads(&dofs);
        let alpha = DVector::from_element(model.n_bars(), case.initial_alpha());
        Self {
            case,
            units,
            loads,
            alpha,
        }
    }

    /// Potential-energy model at `U = 0`.
    pub fn equilibrium_model(&self) -> QuadraticForm {
        let problem = EquilibriumProblem::new(&self.units, &self.alpha, &self.loads)
            .expect("fixture dimensions agree");
        problem.model_at(&DVector::zeros(self.loads.len()))
    }

    pub fn encoding(&self, bits_per_var: u32) -> EncodingSpec {
        let n = self.loads.len();
        EncodingSpec::from_error(
            DVector::from_element(n, 1e-4 / 3.0),
            DVector::zeros(n),
            bits_per_var,
        )
        .expect("valid encoding")
    }

    pub fn equilibrium_qubo(&self, bits_per_var: u32) -> QuboProblem {
        qubo_from_quadratic(&self.equilibrium_model(), &self.encoding(bits_per_var))
            .expect("model and encoding agree")
    }
}
