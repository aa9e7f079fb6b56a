//! Sinkhorn scaling for entropic optimal transport,
//! `argmin_{γ ∈ Π(μ1, μ2)} ⟨γ, C⟩ + ε H(γ)`.
//!
//! The solution has the form `diag(u) · exp(−C/ε) · diag(v)`. The stabilized
//! variant keeps the scalings as log-potentials `(a, b)` and iterates on the
//! absorbed kernel `exp(a_i + b_j − C_ij/ε)`; whenever the running scalings
//! leave `[e^-ABSORB, e^ABSORB]` they are folded back into the potentials, and
//! an exact log-sum-exp sweep is used if a kernel row or column underflows.
//! The plain variant scales `exp(−C/ε)` directly and reports overflow.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{shape_mismatch, OtError, Result};
use crate::measure::DiscreteMeasure;
use crate::plan::{marginal_residual, TransportPlan};

const ABSORB: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornOptions {
    /// Entropic weight of the subproblem.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once the ∞-norm marginal residual is at most this.
    pub tolerance: f64,
    pub stabilized: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            max_iters: 10_000,
            tolerance: 1e-9,
            stabilized: true,
        }
    }
}

impl SinkhornOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "sinkhorn epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(OtError::InvalidParameter(format!(
                "sinkhorn tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(OtError::InvalidParameter(
                "sinkhorn max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Log-scalings `(a, b)` of a solved problem, usable as a warm start.
#[derive(Clone, Debug, PartialEq)]
pub struct Potentials {
    pub row: Array1<f64>,
    pub col: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct SinkhornOutcome {
    pub plan: TransportPlan,
    /// Completed row+column sweeps.
    pub iterations: usize,
    /// Marginal residual of `plan`.
    pub residual: f64,
    /// Row-marginal residual observed after each sweep.
    pub residual_history: Vec<f64>,
    pub potentials: Potentials,
}

/// Solves the entropic problem for an arbitrary finite `cost`.
///
/// Hitting `max_iters` above tolerance yields [`OtError::NonConvergence`],
/// which carries the last iterate.
pub fn sinkhorn(
    cost: ArrayView2<'_, f64>,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    opts: &SinkhornOptions,
) -> Result<SinkhornOutcome> {
    sinkhorn_warm(cost, mu1, mu2, opts, None)
}

/// [`sinkhorn`] starting from given log-scalings instead of zeros.
pub fn sinkhorn_warm(
    cost: ArrayView2<'_, f64>,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    opts: &SinkhornOptions,
    warm: Option<&Potentials>,
) -> Result<SinkhornOutcome> {
    opts.validate()?;
    let (n, m) = cost.dim();
    if n != mu1.len() || m != mu2.len() {
        return Err(shape_mismatch("sinkhorn cost", (mu1.len(), mu2.len()), (n, m)));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(OtError::InvalidCost("non-finite sinkhorn cost".into()));
    }
    if let Some(w) = warm {
        if w.row.len() != n || w.col.len() != m {
            return Err(shape_mismatch(
                "sinkhorn warm start",
                (n, m),
                (w.row.len(), w.col.len()),
            ));
        }
    }
    let (entries, iterations, history, potentials) = if opts.stabilized {
        Stabilized::new(cost, mu1, mu2, opts.epsilon, warm).run(opts)
    } else {
        plain(cost, mu1, mu2, opts, warm)?
    };
    let residual = marginal_residual(entries.view(), mu1, mu2)?;
    let plan = TransportPlan::from_solver(entries, Some(opts.tolerance));
    if residual > opts.tolerance {
        return Err(OtError::NonConvergence {
            plan: Box::new(plan),
            iterations,
            residual,
        });
    }
    Ok(SinkhornOutcome {
        plan,
        iterations,
        residual,
        residual_history: history,
        potentials,
    })
}

fn row_residual(u: &Array1<f64>, kv: &Array1<f64>, mu: ArrayView1<'_, f64>) -> f64 {
    u.iter()
        .zip(kv)
        .zip(mu)
        .fold(0.0_f64, |acc, ((u, s), w)| acc.max((u * s - w).abs()))
}

/// `out_j = Σ_i k_ij x_i`, row-major friendly.
fn transpose_matvec(k: &Array2<f64>, x: &Array1<f64>, out: &mut Array1<f64>) {
    out.fill(0.0);
    for (row, &xi) in k.outer_iter().zip(x) {
        out.scaled_add(xi, &row);
    }
}

fn all_positive_finite(x: &Array1<f64>) -> bool {
    x.iter().all(|v| v.is_finite() && *v > 0.0)
}

type RawOutcome = (Array2<f64>, usize, Vec<f64>, Potentials);

fn plain(
    cost: ArrayView2<'_, f64>,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    opts: &SinkhornOptions,
    warm: Option<&Potentials>,
) -> Result<RawOutcome> {
    let kernel = cost.mapv(|c| (-c / opts.epsilon).exp());
    if kernel.iter().any(|k| !k.is_finite() || *k <= 0.0) {
        return Err(OtError::NumericalOverflow { iteration: 0 });
    }
    let (mut u, mut v) = match warm {
        Some(w) => (w.row.mapv(f64::exp), w.col.mapv(f64::exp)),
        None => (Array1::ones(mu1.len()), Array1::ones(mu2.len())),
    };
    let mut kv = Array1::zeros(mu1.len());
    let mut ktu = Array1::zeros(mu2.len());
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        kv.assign(&kernel.dot(&v));
        if iterations > 0 {
            let r = row_residual(&u, &kv, mu1.weights());
            history.push(r);
            if r <= opts.tolerance || iterations == opts.max_iters {
                break;
            }
        }
        Zip::from(&mut u)
            .and(&kv)
            .and(mu1.weights())
            .for_each(|u, &s, &w| *u = w / s);
        transpose_matvec(&kernel, &u, &mut ktu);
        Zip::from(&mut v)
            .and(&ktu)
            .and(mu2.weights())
            .for_each(|v, &s, &w| *v = w / s);
        iterations += 1;
        if !all_positive_finite(&u) || !all_positive_finite(&v) {
            return Err(OtError::NumericalOverflow { iteration: iterations });
        }
    }
    let mut plan = kernel;
    for ((i, j), p) in plan.indexed_iter_mut() {
        *p *= u[i] * v[j];
    }
    if plan.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(OtError::NumericalOverflow { iteration: iterations });
    }
    let potentials = Potentials {
        row: u.mapv(f64::ln),
        col: v.mapv(f64::ln),
    };
    Ok((plan, iterations, history, potentials))
}

struct Stabilized<'a> {
    /// `(C − min C) / ε`
    scaled: Array2<f64>,
    log_mu1: Array1<f64>,
    log_mu2: Array1<f64>,
    mu1: &'a DiscreteMeasure,
    mu2: &'a DiscreteMeasure,
    a: Array1<f64>,
    b: Array1<f64>,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl<'a> Stabilized<'a> {
    fn new(
        cost: ArrayView2<'_, f64>,
        mu1: &'a DiscreteMeasure,
        mu2: &'a DiscreteMeasure,
        epsilon: f64,
        warm: Option<&Potentials>,
    ) -> Self {
        let min = cost.iter().copied().fold(f64::INFINITY, f64::min);
        let scaled = cost.mapv(|c| (c - min) / epsilon);
        let (a, b) = match warm {
            Some(w) => (w.row.clone(), w.col.clone()),
            None => (Array1::zeros(mu1.len()), Array1::zeros(mu2.len())),
        };
        Self {
            scaled,
            log_mu1: mu1.weights().mapv(f64::ln),
            log_mu2: mu2.weights().mapv(f64::ln),
            mu1,
            mu2,
            a,
            b,
        }
    }

    /// One exact row+column update in the log domain.
    fn log_sweep(&mut self) {
        for (i, row) in self.scaled.outer_iter().enumerate() {
            let b = &self.b;
            let lse = log_sum_exp(row.iter().zip(b.iter()).map(|(k, b)| b - k));
            self.a[i] = self.log_mu1[i] - lse;
        }
        for j in 0..self.b.len() {
            let col = self.scaled.column(j);
            let a = &self.a;
            let lse = log_sum_exp(col.iter().zip(a.iter()).map(|(k, a)| a - k));
            self.b[j] = self.log_mu2[j] - lse;
        }
    }

    fn kernel(&self) -> Array2<f64> {
        let mut g = self.scaled.clone();
        for ((i, j), g) in g.indexed_iter_mut() {
            *g = (self.a[i] + self.b[j] - *g).exp();
        }
        g
    }

    fn run(mut self, opts: &SinkhornOptions) -> RawOutcome {
        let (n, m) = self.scaled.dim();
        self.log_sweep();
        let mut iterations = 1;
        let mut kernel = self.kernel();
        let mut u: Array1<f64> = Array1::ones(n);
        let mut v: Array1<f64> = Array1::ones(m);
        let mut u_next = Array1::zeros(n);
        let mut v_next = Array1::zeros(m);
        let mut kv: Array1<f64>;
        let mut ktu = Array1::zeros(m);
        let mut history = Vec::new();
        loop {
            kv = kernel.dot(&v);
            let r = row_residual(&u, &kv, self.mu1.weights());
            history.push(r);
            if r <= opts.tolerance || iterations >= opts.max_iters {
                break;
            }
            Zip::from(&mut u_next)
                .and(&kv)
                .and(self.mu1.weights())
                .for_each(|u, &s, &w| *u = w / s);
            transpose_matvec(&kernel, &u_next, &mut ktu);
            Zip::from(&mut v_next)
                .and(&ktu)
                .and(self.mu2.weights())
                .for_each(|v, &s, &w| *v = w / s);
            iterations += 1;
            if !all_positive_finite(&u_next) || !all_positive_finite(&v_next) {
                // A kernel row or column underflowed: fall back to an exact sweep.
                self.absorb(&mut u, &mut v);
                self.log_sweep();
                kernel = self.kernel();
                continue;
            }
            std::mem::swap(&mut u, &mut u_next);
            std::mem::swap(&mut v, &mut v_next);
            let drift = u
                .iter()
                .chain(v.iter())
                .fold(0.0_f64, |acc, x| acc.max(x.ln().abs()));
            if drift > ABSORB {
                self.absorb(&mut u, &mut v);
                kernel = self.kernel();
            }
        }
        self.absorb(&mut u, &mut v);
        let mut plan = self.kernel();
        plan.mapv_inplace(|p| p.max(f64::MIN_POSITIVE));
        let potentials = Potentials {
            row: self.a,
            col: self.b,
        };
        (plan, iterations, history, potentials)
    }

    fn absorb(&mut self, u: &mut Array1<f64>, v: &mut Array1<f64>) {
        Zip::from(&mut self.a).and(&*u).for_each(|a, u| *a += u.ln());
        Zip::from(&mut self.b).and(&*v).for_each(|b, v| *b += v.ln());
        u.fill(1.0);
        v.fill(1.0);
    }
}
