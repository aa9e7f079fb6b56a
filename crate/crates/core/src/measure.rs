//! Discrete measures, labeled point clouds and ground-cost matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{shape_mismatch, OtError, Result};

/// Maximum deviation of a measure's total mass from 1 accepted at construction.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probability vector with strictly positive entries summing to one.
///
/// Individual zero-mass atoms are rejected: the scaling solvers would have to
/// pin the matching plan row or column to zero, which they do not support.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(OtError::InvalidMeasure("no atoms".into()));
        }
        if let Some((i, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w <= 0.0)
        {
            return Err(OtError::InvalidMeasure(format!(
                "weight {w} at index {i} is not strictly positive"
            )));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(OtError::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        Self::new(Array1::from(weights))
    }

    /// Uniform measure over `n` atoms.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OtError::InvalidMeasure("no atoms".into()));
        }
        Ok(Self {
            weights: Array1::from_elem(n, 1.0 / n as f64),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    /// Product coupling `self ⊗ other`.
    pub fn outer(&self, other: &DiscreteMeasure) -> Array2<f64> {
        let (n, m) = (self.len(), other.len());
        Array2::from_shape_fn((n, m), |(i, j)| self.weights[i] * other.weights[j])
    }
}

/// Sample positions (one row per point) with optional class labels in `1..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPointCloud {
    points: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl LabeledPointCloud {
    pub fn new(points: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(OtError::InvalidCloud(format!("shape {n}x{d} is empty")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(OtError::InvalidCloud("non-finite coordinate".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(shape_mismatch("cloud labels", n, labels.len()));
            }
            if labels.iter().any(|&l| l == 0) {
                return Err(OtError::InvalidCloud("labels must be >= 1".into()));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn unlabeled(points: Array2<f64>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Number of classes `L`, i.e. the largest label present.
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().copied().max())
            .unwrap_or(0)
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Vec<usize>>) {
        (self.points, self.labels)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Metric {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

impl std::str::FromStr for Metric {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "sqeuclidean" | "squared-euclidean" | "squared_euclidean" => {
                Ok(Metric::SquaredEuclidean)
            }
            other => Err(OtError::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::SquaredEuclidean => "sqeuclidean",
        })
    }
}

/// Nonnegative finite ground-cost matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    metric: Option<Metric>,
}

impl CostMatrix {
    /// Wraps an arbitrary cost matrix that was not produced from point clouds.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if let Some(((i, j), c)) = entries
            .indexed_iter()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            return Err(OtError::InvalidCost(format!(
                "entry ({i}, {j}) = {c} is negative or not finite"
            )));
        }
        Ok(Self {
            entries,
            metric: None,
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn metric(&self) -> Option<Metric> {
        self.metric
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }
}

/// Pairwise ground cost between the rows of two clouds.
pub fn pairwise_cost(
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    metric: Metric,
) -> Result<CostMatrix> {
    if source.ncols() != target.ncols() {
        return Err(shape_mismatch(
            "pairwise_cost point dimension",
            source.ncols(),
            target.ncols(),
        ));
    }
    let entries = Array2::from_shape_fn((source.nrows(), target.nrows()), |(i, j)| {
        let sq: f64 = source
            .row(i)
            .iter()
            .zip(target.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        match metric {
            Metric::Euclidean => sq.sqrt(),
            Metric::SquaredEuclidean => sq,
        }
    });
    Ok(CostMatrix {
        entries,
        metric: Some(metric),
    })
}

/// [`pairwise_cost`] on two clouds.
pub fn cloud_cost(
    source: &LabeledPointCloud,
    target: &LabeledPointCloud,
    metric: Metric,
) -> Result<CostMatrix> {
    pairwise_cost(source.points(), target.points(), metric)
}
