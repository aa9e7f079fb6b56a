use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{shape_mismatch, OtError, Result};
use crate::measure::DiscreteMeasure;

/// Feasibility tolerance recorded on plans checked against marginals when
/// the caller does not pick one.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-7;

/// Nonnegative coupling matrix.
///
/// A plan built with [`TransportPlan::with_marginals`] carries the tolerance
/// its marginals were verified to, so downstream checks can be reproduced.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
    feasibility_tol: Option<f64>,
}

impl TransportPlan {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if let Some(((row, col), &value)) = entries
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(OtError::NegativeEntry { row, col, value });
        }
        Ok(Self {
            entries,
            feasibility_tol: None,
        })
    }

    /// Builds a plan and checks both marginals to within `tol`.
    pub fn with_marginals(
        entries: Array2<f64>,
        mu1: &DiscreteMeasure,
        mu2: &DiscreteMeasure,
        tol: f64,
    ) -> Result<Self> {
        let mut plan = Self::new(entries)?;
        let residual = marginal_residual(plan.view(), mu1, mu2)?;
        if residual > tol {
            return Err(OtError::InvalidParameter(format!(
                "plan marginal residual {residual:e} exceeds tolerance {tol:e}"
            )));
        }
        plan.feasibility_tol = Some(tol);
        Ok(plan)
    }

    /// Product coupling `mu1 ⊗ mu2`, feasible to rounding.
    pub fn product(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> Self {
        Self {
            entries: mu1.outer(mu2),
            feasibility_tol: Some(DEFAULT_FEASIBILITY_TOL),
        }
    }

    /// Solver output; the entries are trusted to be nonnegative and finite.
    pub(crate) fn from_solver(entries: Array2<f64>, feasibility_tol: Option<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            entries,
            feasibility_tol,
        }
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn feasibility_tol(&self) -> Option<f64> {
        self.feasibility_tol
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(0))
    }
}

/// Largest absolute violation of either marginal constraint (∞-norm).
pub fn marginal_residual(
    plan: ArrayView2<'_, f64>,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
) -> Result<f64> {
    let (n, m) = plan.dim();
    if n != mu1.len() || m != mu2.len() {
        return Err(shape_mismatch(
            "marginal_residual",
            (mu1.len(), mu2.len()),
            (n, m),
        ));
    }
    let rows = plan
        .sum_axis(Axis(1))
        .iter()
        .zip(mu1.weights())
        .fold(0.0_f64, |acc, (s, w)| acc.max((s - w).abs()));
    let cols = plan
        .sum_axis(Axis(0))
        .iter()
        .zip(mu2.weights())
        .fold(0.0_f64, |acc, (s, w)| acc.max((s - w).abs()));
    Ok(rows.max(cols))
}
