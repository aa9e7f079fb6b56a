//! Continuous domain adaptation along a drifting sequence of target batches.
//!
//! The labeled source `X⁰` is first coupled to the initial target by plain
//! entropic transport. Every later batch is coupled to the source by a
//! regularized problem `⟨γ,C⟩ + λH(γ) + η_c R_c(γ) + η_t R_t(γ)`, where the
//! ground cost is measured either from the currently mapped source positions
//! (sequential) or from `X⁰` itself (static). After each step the source is
//! moved to its barycentric image and a nearest-neighbour classifier trained
//! on the moved points labels fresh samples of the current target.

use ndarray::{Array2, ArrayView2};

use crate::error::{shape_mismatch, OtError, Result};
use crate::measure::{pairwise_cost, DiscreteMeasure, LabeledPointCloud, Metric};
use crate::objective::ObjectiveSpec;
use crate::plan::TransportPlan;
use crate::regularizers::{ClassGroups, RegularizerSpec, TemporalAnchor};
use crate::sinkhorn::{sinkhorn, SinkhornOptions};
use crate::solvers::{solve_cgs, solve_fb, CgsOptions, FbOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CostMode {
    Sequential,
    Static,
}

impl CostMode {
    pub fn tag(self) -> &'static str {
        match self {
            CostMode::Sequential => "seq",
            CostMode::Static => "static",
        }
    }
}

impl std::str::FromStr for CostMode {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequential" => Ok(CostMode::Sequential),
            "static" => Ok(CostMode::Static),
            other => Err(OtError::InvalidParameter(format!("unknown cost mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Fb,
    Cgs,
}

impl std::str::FromStr for SolverKind {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fb" => Ok(SolverKind::Fb),
            "cgs" => Ok(SolverKind::Cgs),
            other => Err(OtError::InvalidParameter(format!("unknown solver {other:?}"))),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Fb => "fb",
            SolverKind::Cgs => "cgs",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptationStrategy {
    pub cost_mode: CostMode,
    pub use_class_reg: bool,
    pub use_temporal_reg: bool,
    pub eta_c: f64,
    pub eta_t: f64,
    pub lambda: f64,
    pub metric: Metric,
    pub solver: SolverKind,
    /// Used for the initial coupling and for unregularized steps.
    pub sinkhorn: SinkhornOptions,
    pub fb: FbOptions,
    pub cgs: CgsOptions,
}

impl AdaptationStrategy {
    /// Strategy with the given regularizer set and default solver settings.
    pub fn new(
        cost_mode: CostMode,
        eta_c: Option<f64>,
        eta_t: Option<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let strategy = Self {
            cost_mode,
            use_class_reg: eta_c.is_some(),
            use_temporal_reg: eta_t.is_some(),
            eta_c: eta_c.unwrap_or(0.0),
            eta_t: eta_t.unwrap_or(0.0),
            lambda,
            metric: Metric::Euclidean,
            solver: SolverKind::Fb,
            sinkhorn: SinkhornOptions::default(),
            fb: FbOptions {
                accept_inexact_inner: true,
                ..FbOptions::default()
            },
            cgs: CgsOptions {
                accept_inexact_inner: true,
                ..CgsOptions::default()
            },
        };
        strategy.validate()?;
        Ok(strategy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        for (name, eta, used) in [
            ("eta_c", self.eta_c, self.use_class_reg),
            ("eta_t", self.eta_t, self.use_temporal_reg),
        ] {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(OtError::InvalidParameter(format!(
                    "{name} must be nonnegative, got {eta}"
                )));
            }
            if eta > 0.0 && !used {
                return Err(OtError::InvalidParameter(format!(
                    "{name} is positive but its regularizer is disabled"
                )));
            }
        }
        Ok(())
    }

    /// Regularizer-set tag: `class`, `time`, `class+time` or `none`.
    pub fn method_tag(&self) -> &'static str {
        match (self.use_class_reg, self.use_temporal_reg) {
            (true, true) => "class+time",
            (true, false) => "class",
            (false, true) => "time",
            (false, false) => "none",
        }
    }
}

/// Source positions carried along the sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationSequenceState {
    source: Array2<f64>,
    /// Current barycentric image of the source.
    pub mapped_source: Array2<f64>,
    /// Image before the last update.
    pub previous_mapped: Array2<f64>,
    pub step_index: usize,
    pub plans: Vec<TransportPlan>,
}

impl AdaptationSequenceState {
    /// Couples `source` to the first target and maps it there.
    pub fn initialize(
        source: &LabeledPointCloud,
        first_target: &LabeledPointCloud,
        strategy: &AdaptationStrategy,
    ) -> Result<Self> {
        let plan = initial_coupling(
            source,
            first_target,
            strategy.lambda,
            strategy.metric,
            &strategy.sinkhorn,
        )?;
        let mapped = barycentric_map(plan.view(), first_target.points())?;
        Ok(Self {
            source: source.points().to_owned(),
            previous_mapped: mapped.clone(),
            mapped_source: mapped,
            step_index: 0,
            plans: vec![plan],
        })
    }

    pub fn source(&self) -> ArrayView2<'_, f64> {
        self.source.view()
    }
}

/// Row `i` of the result is `Σ_j γ_ij y_j / Σ_j γ_ij`.
pub fn barycentric_map(
    plan: ArrayView2<'_, f64>,
    target_points: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if plan.ncols() != target_points.nrows() {
        return Err(shape_mismatch(
            "barycentric_map",
            target_points.nrows(),
            plan.ncols(),
        ));
    }
    let mut mapped = plan.dot(&target_points);
    for (i, (mut row, plan_row)) in mapped.outer_iter_mut().zip(plan.outer_iter()).enumerate() {
        let mass = plan_row.sum();
        if !(mass > 0.0) {
            return Err(OtError::ZeroRow { row: i });
        }
        row /= mass;
    }
    Ok(mapped)
}

/// Entropic plan between uniform measures on two clouds.
pub fn initial_coupling(
    source: &LabeledPointCloud,
    target: &LabeledPointCloud,
    lambda: f64,
    metric: Metric,
    sinkhorn_opts: &SinkhornOptions,
) -> Result<TransportPlan> {
    let cost = pairwise_cost(source.points(), target.points(), metric)?;
    let mu1 = DiscreteMeasure::uniform(source.len())?;
    let mu2 = DiscreteMeasure::uniform(target.len())?;
    let opts = SinkhornOptions {
        epsilon: lambda,
        ..*sinkhorn_opts
    };
    Ok(accept_inexact(sinkhorn(cost.entries(), &mu1, &mu2, &opts).map(|o| o.plan))?)
}

fn accept_inexact(result: Result<TransportPlan>) -> Result<TransportPlan> {
    match result {
        Err(OtError::NonConvergence { plan, .. }) => Ok(*plan),
        other => other,
    }
}

/// One regularized adaptation step towards `target`.
pub fn adapt_step(
    state: &AdaptationSequenceState,
    target: &LabeledPointCloud,
    strategy: &AdaptationStrategy,
    source_labels: &[usize],
) -> Result<(TransportPlan, AdaptationSequenceState)> {
    strategy.validate()?;
    let n = state.source.nrows();
    if source_labels.len() != n {
        return Err(shape_mismatch("adapt_step source labels", n, source_labels.len()));
    }
    let origin = match strategy.cost_mode {
        CostMode::Sequential => state.mapped_source.view(),
        CostMode::Static => state.source.view(),
    };
    let cost = pairwise_cost(origin, target.points(), strategy.metric)?;
    let mut regs = Vec::new();
    if strategy.use_class_reg && strategy.eta_c > 0.0 {
        regs.push(RegularizerSpec::group_lasso(
            ClassGroups::from_labels(source_labels),
            strategy.eta_c,
        )?);
    }
    if strategy.use_temporal_reg && strategy.eta_t > 0.0 {
        let anchor = TemporalAnchor::new(
            target.points().to_owned(),
            state.mapped_source.clone(),
            n as f64,
        )?;
        regs.push(RegularizerSpec::temporal(anchor, strategy.eta_t)?);
    }
    let mu1 = DiscreteMeasure::uniform(n)?;
    let mu2 = DiscreteMeasure::uniform(target.len())?;
    let plan = if regs.is_empty() {
        let opts = SinkhornOptions {
            epsilon: strategy.lambda,
            ..strategy.sinkhorn
        };
        accept_inexact(sinkhorn(cost.entries(), &mu1, &mu2, &opts).map(|o| o.plan))?
    } else {
        let spec = ObjectiveSpec::new(cost, strategy.lambda, regs)?;
        let init = TransportPlan::product(&mu1, &mu2);
        match strategy.solver {
            SolverKind::Fb => solve_fb(&spec, &mu1, &mu2, &init, &strategy.fb)?.0,
            SolverKind::Cgs => solve_cgs(&spec, &mu1, &mu2, &init, &strategy.cgs)?.0,
        }
    };
    let mapped = barycentric_map(plan.view(), target.points())?;
    let mut plans = state.plans.clone();
    plans.push(plan.clone());
    let next = AdaptationSequenceState {
        source: state.source.clone(),
        previous_mapped: state.mapped_source.clone(),
        mapped_source: mapped,
        step_index: state.step_index + 1,
        plans,
    };
    Ok((plan, next))
}

/// k-nearest-neighbour labels by euclidean distance. Distance ties go to the
/// lower train index, vote ties to the smaller label.
pub fn knn_classify(
    train_points: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test_points: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<usize>> {
    let n = train_points.nrows();
    if n == 0 {
        return Err(OtError::EmptyTrainSet);
    }
    if train_labels.len() != n {
        return Err(shape_mismatch("knn train labels", n, train_labels.len()));
    }
    if train_points.ncols() != test_points.ncols() {
        return Err(shape_mismatch(
            "knn point dimension",
            train_points.ncols(),
            test_points.ncols(),
        ));
    }
    if k == 0 || k > n {
        return Err(OtError::InvalidParameter(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let n_labels = train_labels.iter().copied().max().unwrap_or(0) + 1;
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut votes = vec![0usize; n_labels];
    let predictions = test_points
        .outer_iter()
        .map(|q| {
            dist.clear();
            dist.extend(train_points.outer_iter().enumerate().map(|(i, p)| {
                let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            }));
            if k == 1 {
                let best = dist
                    .iter()
                    .copied()
                    .reduce(|a, b| if b.0 < a.0 { b } else { a })
                    .expect("train set is nonempty");
                return train_labels[best.1];
            }
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            dist.select_nth_unstable_by(k - 1, cmp);
            votes.fill(0);
            for &(_, i) in &dist[..k] {
                votes[train_labels[i]] += 1;
            }
            let top = *votes.iter().max().expect("labels exist");
            votes.iter().position(|&v| v == top).expect("a label has the top count")
        })
        .collect();
    Ok(predictions)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / predicted.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRecord {
    pub step: usize,
    pub angle_deg: f64,
    pub method: &'static str,
    pub cost_mode: CostMode,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracyReport {
    pub records: Vec<AccuracyRecord>,
}

impl AccuracyReport {
    pub fn mean_accuracy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.accuracy).sum::<f64>() / self.records.len() as f64
    }
}

/// Mean, minimum and maximum of a set of values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Everything one adaptation run consumes.
#[derive(Clone, Copy, Debug)]
pub struct SequenceInput<'a> {
    pub source: &'a LabeledPointCloud,
    /// `targets[0]` is used for the initial coupling.
    pub targets: &'a [LabeledPointCloud],
    /// Labeled evaluation draws aligned with `targets`.
    pub eval_sets: &'a [LabeledPointCloud],
    /// Rotation angle of each target, for reporting.
    pub angles_deg: &'a [f64],
    /// Neighbours used by the classifier.
    pub k: usize,
}

/// Runs the whole sequence, scoring a classifier on the mapped source after
/// every step.
pub fn run_sequence(
    input: SequenceInput<'_>,
    strategy: &AdaptationStrategy,
) -> Result<AccuracyReport> {
    let SequenceInput {
        source,
        targets,
        eval_sets,
        angles_deg,
        k,
    } = input;
    if targets.is_empty() {
        return Err(OtError::InvalidParameter("no target batches".into()));
    }
    if eval_sets.len() != targets.len() || angles_deg.len() != targets.len() {
        return Err(shape_mismatch(
            "run_sequence eval sets / angles",
            targets.len(),
            (eval_sets.len(), angles_deg.len()),
        ));
    }
    let labels = source
        .labels()
        .ok_or_else(|| OtError::InvalidCloud("source cloud has no labels".into()))?;
    let score = |mapped: &Array2<f64>, eval: &LabeledPointCloud| -> Result<f64> {
        let truth = eval
            .labels()
            .ok_or_else(|| OtError::InvalidCloud("evaluation cloud has no labels".into()))?;
        let predicted = knn_classify(mapped.view(), labels, eval.points(), k)?;
        Ok(accuracy(&predicted, truth))
    };
    let record = |step: usize, accuracy: f64| AccuracyRecord {
        step,
        angle_deg: angles_deg[step],
        method: strategy.method_tag(),
        cost_mode: strategy.cost_mode,
        accuracy,
    };

    let mut state = AdaptationSequenceState::initialize(source, &targets[0], strategy)?;
    let mut report = AccuracyReport::default();
    report
        .records
        .push(record(0, score(&state.mapped_source, &eval_sets[0])?));
    for (t, (target, eval)) in targets.iter().zip(eval_sets).enumerate().skip(1) {
        let (_, next) = adapt_step(&state, target, strategy, labels)?;
        state = next;
        report
            .records
            .push(record(t, score(&state.mapped_source, eval)?));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn barycentric_examples() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [5.0, -1.0]];
        let identity = Array2::from_diag(&ndarray::Array1::from_elem(3, 1.0 / 3.0));
        let mapped = barycentric_map(identity.view(), x.view()).unwrap();
        for (a, b) in mapped.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-15);
        }

        let uniform = Array2::from_elem((2, 3), 1.0 / 6.0);
        let mapped = barycentric_map(uniform.view(), x.view()).unwrap();
        for row in mapped.outer_iter() {
            assert!((row[0] - 7.0 / 3.0).abs() < 1e-14);
            assert!((row[1] - 1.0).abs() < 1e-14);
        }

        let plan = array![[0.3, 0.2], [0.1, 0.4]];
        let targets = array![[0.0, 0.0], [10.0, 0.0]];
        let mapped = barycentric_map(plan.view(), targets.view()).unwrap();
        assert!((mapped[[0, 0]] - 4.0).abs() < 1e-14);
        assert!((mapped[[1, 0]] - 8.0).abs() < 1e-14);
        assert_eq!(mapped[[0, 1]], 0.0);
    }

    #[test]
    fn barycentric_zero_row() {
        let plan = array![[0.5, 0.5], [0.0, 0.0]];
        let targets = array![[0.0], [1.0]];
        assert!(matches!(
            barycentric_map(plan.view(), targets.view()),
            Err(OtError::ZeroRow { row: 1 })
        ));
    }

    #[test]
    fn knn_examples() {
        let train = array![[0.0, 0.0], [10.0, 0.0]];
        let test = array![[2.0, 0.0], [10.0, 0.0], [7.0, 1.0]];
        let pred = knn_classify(train.view(), &[1, 2], test.view(), 1).unwrap();
        assert_eq!(pred, vec![1, 2, 2]);

        let single = array![[3.0, 3.0]];
        let pred = knn_classify(single.view(), &[4], test.view(), 1).unwrap();
        assert_eq!(pred, vec![4, 4, 4]);
    }

    #[test]
    fn knn_tie_breaks() {
        // Equidistant neighbours: lower index wins.
        let train = array![[-1.0], [1.0]];
        let pred = knn_classify(train.view(), &[2, 1], array![[0.0]].view(), 1).unwrap();
        assert_eq!(pred, vec![2]);
        // Split vote: smaller label wins.
        let pred = knn_classify(train.view(), &[2, 1], array![[0.0]].view(), 2).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn knn_majority() {
        let train = array![[0.0], [0.1], [0.2], [5.0]];
        let pred = knn_classify(train.view(), &[1, 2, 2, 1], array![[0.05]].view(), 3).unwrap();
        assert_eq!(pred, vec![2]);
    }

    #[test]
    fn knn_errors() {
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            knn_classify(empty.view(), &[], array![[0.0, 0.0]].view(), 1),
            Err(OtError::EmptyTrainSet)
        ));
        let train = array![[0.0, 0.0]];
        assert!(knn_classify(train.view(), &[1], array![[0.0, 0.0]].view(), 2).is_err());
        assert!(knn_classify(train.view(), &[1], array![[0.0, 0.0]].view(), 0).is_err());
    }

    #[test]
    fn strategy_validation() {
        assert!(AdaptationStrategy::new(CostMode::Static, Some(1.0), None, 0.1).is_ok());
        assert!(AdaptationStrategy::new(CostMode::Static, None, None, 0.0).is_err());
        let mut s = AdaptationStrategy::new(CostMode::Static, None, None, 0.1).unwrap();
        s.eta_t = 3.0;
        assert!(s.validate().is_err());
        assert_eq!(
            AdaptationStrategy::new(CostMode::Sequential, Some(1.0), Some(2.0), 0.1)
                .unwrap()
                .method_tag(),
            "class+time"
        );
    }

    #[test]
    fn spread_of_values() {
        let s = Spread::of(&[0.5, 1.0, 0.75]).unwrap();
        assert_eq!((s.mean, s.min, s.max), (0.75, 0.5, 1.0));
        assert!(Spread::of(&[]).is_none());
    }
}
