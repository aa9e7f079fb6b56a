//! Differentiable plan regularizers and their weighted composition `J`.
//!
//! * class-based group lasso `Σ_j Σ_ℓ ‖γ(I_ℓ, j)‖₂` over rows sharing a source label,
//! * temporal smoothness `‖s·γX − P‖²_F` tying the barycentric image of the
//!   plan to the image `P` from the previous step,
//! * a plain quadratic `‖γ − Γ‖²_F`, mostly useful for solver tests.
//!
//! The group lasso is not differentiable where a block vanishes. Plans coming
//! out of Sinkhorn are strictly positive, so in practice every block norm is
//! positive; at an exactly zero block the subgradient 0 is used, and block
//! norms are floored at `zero_norm_floor` to bound the gradient magnitude.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{shape_mismatch, OtError, Result};

pub const DEFAULT_ZERO_NORM_FLOOR: f64 = 1e-12;

/// Partition of the plan rows into per-class index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGroups {
    groups: Vec<Vec<usize>>,
    n_rows: usize,
}

impl ClassGroups {
    /// Validates that `groups` are disjoint and cover `0..n_rows`.
    pub fn new(groups: Vec<Vec<usize>>, n_rows: usize) -> Result<Self> {
        let mut seen = vec![false; n_rows];
        for &i in groups.iter().flatten() {
            if i >= n_rows {
                return Err(OtError::GroupCoverage {
                    rows: n_rows,
                    reason: format!("row index {i} out of range"),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(OtError::GroupCoverage {
                    rows: n_rows,
                    reason: format!("row {i} belongs to more than one group"),
                });
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(OtError::GroupCoverage {
                rows: n_rows,
                reason: format!("row {i} is not in any group"),
            });
        }
        Ok(Self { groups, n_rows })
    }

    /// One group per distinct label, ordered by label.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n_classes = labels.iter().copied().max().unwrap_or(0);
        let mut groups = vec![Vec::new(); n_classes + 1];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups.retain(|g| !g.is_empty());
        Self {
            groups,
            n_rows: labels.len(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn check_rows(&self, plan_rows: usize) -> Result<()> {
        if plan_rows != self.n_rows {
            return Err(OtError::GroupCoverage {
                rows: plan_rows,
                reason: format!("groups partition {} rows", self.n_rows),
            });
        }
        Ok(())
    }
}

/// Anchor of the temporal term: the plan's barycentric image
/// `row_scale · γ · target_points` is pulled towards `previous_mapped`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAnchor {
    target_points: Array2<f64>,
    previous_mapped: Array2<f64>,
    row_scale: f64,
}

impl TemporalAnchor {
    pub fn new(
        target_points: Array2<f64>,
        previous_mapped: Array2<f64>,
        row_scale: f64,
    ) -> Result<Self> {
        if target_points.ncols() != previous_mapped.ncols() {
            return Err(shape_mismatch(
                "temporal anchor point dimension",
                target_points.ncols(),
                previous_mapped.ncols(),
            ));
        }
        if !(row_scale > 0.0 && row_scale.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "row_scale must be positive, got {row_scale}"
            )));
        }
        Ok(Self {
            target_points,
            previous_mapped,
            row_scale,
        })
    }

    pub fn target_points(&self) -> ArrayView2<'_, f64> {
        self.target_points.view()
    }

    pub fn previous_mapped(&self) -> ArrayView2<'_, f64> {
        self.previous_mapped.view()
    }

    pub fn row_scale(&self) -> f64 {
        self.row_scale
    }

    /// `2 · row_scale² · σ_max(X Xᵀ)`: a Lipschitz constant of [`temporal_grad`]
    /// in Frobenius norm.
    pub fn smoothness_bound(&self) -> f64 {
        let x = &self.target_points;
        let d = x.ncols();
        let gram = x.t().dot(x);
        let gram = nalgebra::DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
        let top = gram
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(0.0_f64, f64::max);
        2.0 * self.row_scale * self.row_scale * top
    }

    fn check_plan(&self, plan: ArrayView2<'_, f64>) -> Result<()> {
        let (n, m) = plan.dim();
        if m != self.target_points.nrows() || n != self.previous_mapped.nrows() {
            return Err(shape_mismatch(
                "temporal plan shape",
                (self.previous_mapped.nrows(), self.target_points.nrows()),
                (n, m),
            ));
        }
        Ok(())
    }

    /// `row_scale · γ · X − P`
    fn residual(&self, plan: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut r = plan.dot(&self.target_points);
        Zip::from(&mut r)
            .and(&self.previous_mapped)
            .for_each(|r, &p| *r = self.row_scale * *r - p);
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegularizerKind {
    ClassGroupLasso {
        groups: ClassGroups,
        zero_norm_floor: f64,
    },
    TemporalSmoothness(TemporalAnchor),
    /// `‖γ − center‖²_F`
    QuadraticTest { center: Array2<f64> },
}

/// One weighted term of `J`.
///
/// `smoothness_bound` is a Lipschitz constant of the *unweighted* term's
/// gradient, when one is known.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub weight: f64,
    pub smoothness_bound: Option<f64>,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, weight: f64, smoothness_bound: Option<f64>) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "regularizer weight must be nonnegative, got {weight}"
            )));
        }
        if let Some(b) = smoothness_bound {
            if !(b >= 0.0) {
                return Err(OtError::InvalidParameter(format!(
                    "smoothness bound must be nonnegative, got {b}"
                )));
            }
        }
        Ok(Self {
            kind,
            weight,
            smoothness_bound,
        })
    }

    /// Group lasso with the default norm floor and no smoothness bound.
    pub fn group_lasso(groups: ClassGroups, weight: f64) -> Result<Self> {
        Self::new(
            RegularizerKind::ClassGroupLasso {
                groups,
                zero_norm_floor: DEFAULT_ZERO_NORM_FLOOR,
            },
            weight,
            None,
        )
    }

    /// Temporal term with its closed-form smoothness bound.
    pub fn temporal(anchor: TemporalAnchor, weight: f64) -> Result<Self> {
        let bound = anchor.smoothness_bound();
        Self::new(RegularizerKind::TemporalSmoothness(anchor), weight, Some(bound))
    }

    pub fn quadratic(center: Array2<f64>, weight: f64) -> Result<Self> {
        Self::new(RegularizerKind::QuadraticTest { center }, weight, Some(2.0))
    }

    pub fn value(&self, plan: ArrayView2<'_, f64>) -> Result<f64> {
        match &self.kind {
            RegularizerKind::ClassGroupLasso { groups, .. } => group_lasso_value(plan, groups),
            RegularizerKind::TemporalSmoothness(anchor) => temporal_value(plan, anchor),
            RegularizerKind::QuadraticTest { center } => quadratic_value(plan, center.view()),
        }
    }

    pub fn grad(&self, plan: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match &self.kind {
            RegularizerKind::ClassGroupLasso {
                groups,
                zero_norm_floor,
            } => group_lasso_grad(plan, groups, *zero_norm_floor),
            RegularizerKind::TemporalSmoothness(anchor) => temporal_grad(plan, anchor),
            RegularizerKind::QuadraticTest { center } => quadratic_grad(plan, center.view()),
        }
    }
}

/// Per-(group, column) block norms, laid out group-major.
fn block_norms(plan: ArrayView2<'_, f64>, groups: &ClassGroups) -> Vec<Vec<f64>> {
    let m = plan.ncols();
    groups
        .groups
        .iter()
        .map(|rows| {
            let mut sq = vec![0.0; m];
            for &i in rows {
                for (acc, &x) in sq.iter_mut().zip(plan.row(i)) {
                    *acc += x * x;
                }
            }
            sq.into_iter().map(f64::sqrt).collect()
        })
        .collect()
}

pub fn group_lasso_value(plan: ArrayView2<'_, f64>, groups: &ClassGroups) -> Result<f64> {
    groups.check_rows(plan.nrows())?;
    Ok(block_norms(plan, groups).iter().flatten().sum())
}

pub fn group_lasso_grad(
    plan: ArrayView2<'_, f64>,
    groups: &ClassGroups,
    zero_norm_floor: f64,
) -> Result<Array2<f64>> {
    groups.check_rows(plan.nrows())?;
    let norms = block_norms(plan, groups);
    let mut grad = Array2::zeros(plan.dim());
    for (rows, norms) in groups.groups.iter().zip(&norms) {
        for &i in rows {
            for (j, (g, &x)) in grad.row_mut(i).iter_mut().zip(plan.row(i)).enumerate() {
                let norm = norms[j];
                if norm > 0.0 {
                    *g = x / norm.max(zero_norm_floor);
                }
            }
        }
    }
    Ok(grad)
}

pub fn temporal_value(plan: ArrayView2<'_, f64>, anchor: &TemporalAnchor) -> Result<f64> {
    anchor.check_plan(plan)?;
    Ok(anchor.residual(plan).iter().map(|r| r * r).sum())
}

/// `2 · s · (s·γX − P) · Xᵀ`
pub fn temporal_grad(plan: ArrayView2<'_, f64>, anchor: &TemporalAnchor) -> Result<Array2<f64>> {
    anchor.check_plan(plan)?;
    let mut grad = anchor.residual(plan).dot(&anchor.target_points.t());
    grad *= 2.0 * anchor.row_scale;
    Ok(grad)
}

pub fn quadratic_value(plan: ArrayView2<'_, f64>, center: ArrayView2<'_, f64>) -> Result<f64> {
    if plan.dim() != center.dim() {
        return Err(shape_mismatch("quadratic center", center.dim(), plan.dim()));
    }
    Ok(plan
        .iter()
        .zip(center.iter())
        .map(|(x, c)| (x - c) * (x - c))
        .sum())
}

pub fn quadratic_grad(
    plan: ArrayView2<'_, f64>,
    center: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if plan.dim() != center.dim() {
        return Err(shape_mismatch("quadratic center", center.dim(), plan.dim()));
    }
    Ok(Zip::from(plan)
        .and(center)
        .map_collect(|&x, &c| 2.0 * (x - c)))
}

/// `Σ_r weight_r · value_r(γ)`
pub fn composite_value(plan: ArrayView2<'_, f64>, regs: &[RegularizerSpec]) -> Result<f64> {
    regs.iter()
        .filter(|r| r.weight != 0.0)
        .try_fold(0.0, |acc, r| Ok(acc + r.weight * r.value(plan)?))
}

/// `Σ_r weight_r · grad_r(γ)`
pub fn composite_grad(plan: ArrayView2<'_, f64>, regs: &[RegularizerSpec]) -> Result<Array2<f64>> {
    let mut grad = Array2::zeros(plan.dim());
    for r in regs.iter().filter(|r| r.weight != 0.0) {
        grad.scaled_add(r.weight, &r.grad(plan)?);
    }
    Ok(grad)
}

pub fn composite_value_grad(
    plan: ArrayView2<'_, f64>,
    regs: &[RegularizerSpec],
) -> Result<(f64, Array2<f64>)> {
    Ok((composite_value(plan, regs)?, composite_grad(plan, regs)?))
}
