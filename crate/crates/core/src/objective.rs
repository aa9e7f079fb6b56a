//! Entropy and the regularized transport objective `⟨γ,C⟩ + λH(γ) + J(γ)`.

use ndarray::ArrayView2;

use crate::error::{shape_mismatch, OtError, Result};
use crate::measure::CostMatrix;
use crate::regularizers::{composite_value, RegularizerSpec};

/// Entries below this are treated as exact zeros by [`entropy`].
pub const ENTROPY_ZERO_FLOOR: f64 = 1e-300;

/// `H(γ) = Σ h(γ_ij)` with `h(x) = x log x − x` and `h(0) = 0`.
///
/// A negative entry makes `H` infinite; this is reported as an error instead.
pub fn entropy(plan: ArrayView2<'_, f64>) -> Result<f64> {
    let mut total = 0.0;
    for ((row, col), &x) in plan.indexed_iter() {
        if x < 0.0 || x.is_nan() {
            return Err(OtError::NegativeEntry { row, col, value: x });
        }
        if x >= ENTROPY_ZERO_FLOOR {
            total += x * x.ln() - x;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct ObjectiveSpec {
    pub cost: CostMatrix,
    pub lambda: f64,
    pub regularizers: Vec<RegularizerSpec>,
}

impl ObjectiveSpec {
    pub fn new(cost: CostMatrix, lambda: f64, regularizers: Vec<RegularizerSpec>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "entropic weight must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            cost,
            lambda,
            regularizers,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.cost.dim()
    }
}

/// Evaluates the objective of `spec` at `plan`.
pub fn objective_value(plan: ArrayView2<'_, f64>, spec: &ObjectiveSpec) -> Result<f64> {
    regularized_cost(plan, &spec.cost, spec.lambda, &spec.regularizers)
}

/// Same as [`objective_value`] but with the entropic weight unconstrained
/// (`lambda = 0` gives the plain linear cost plus `J`).
pub fn regularized_cost(
    plan: ArrayView2<'_, f64>,
    cost: &CostMatrix,
    lambda: f64,
    regularizers: &[RegularizerSpec],
) -> Result<f64> {
    if plan.dim() != cost.dim() {
        return Err(shape_mismatch("objective plan vs cost", cost.dim(), plan.dim()));
    }
    let linear: f64 = plan
        .iter()
        .zip(cost.entries().iter())
        .map(|(g, c)| g * c)
        .sum();
    let ent = if lambda != 0.0 { lambda * entropy(plan)? } else { 0.0 };
    let reg = if regularizers.is_empty() {
        0.0
    } else {
        composite_value(plan, regularizers)?
    };
    Ok(linear + ent + reg)
}
