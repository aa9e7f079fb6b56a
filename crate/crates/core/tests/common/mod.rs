//! Reference implementations that share no code with the library.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};

/// `Σ x log x − x` with `0 log 0 = 0`.
pub fn entropy_ref(plan: ArrayView2<'_, f64>) -> f64 {
    plan.iter()
        .map(|&x| if x > 0.0 { x * x.ln() - x } else { 0.0 })
        .sum()
}

/// 2×2 plans with uniform marginals are `[[t, ½−t], [½−t, t]]`.
pub fn two_by_two(t: f64) -> Array2<f64> {
    ndarray::array![[t, 0.5 - t], [0.5 - t, t]]
}

/// Minimizes `f(two_by_two(t))` over `t ∈ (0, ½)` on a uniform grid.
pub fn brute_force_2x2(step: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let count = (0.5 / step).round() as usize;
    let mut best = (f64::INFINITY, 0.25);
    for k in 1..count {
        let t = k as f64 * step;
        let v = f(&two_by_two(t));
        if v < best.0 {
            best = (v, t);
        }
    }
    two_by_two(best.1)
}

/// `⟨γ, C⟩ + λ H(γ)` evaluated entry by entry.
pub fn entropic_objective(plan: &Array2<f64>, cost: &Array2<f64>, lambda: f64) -> f64 {
    let linear: f64 = plan.iter().zip(cost).map(|(p, c)| p * c).sum();
    linear + lambda * entropy_ref(plan.view())
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference(x: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut grad = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        grad[idx] = (up - down) / (2.0 * h);
    }
    grad
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn relative_error(a: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    frobenius(&(a - reference)) / frobenius(reference).max(1e-300)
}

/// `‖s·γX − P‖²_F` with explicit loops.
pub fn temporal_ref(plan: &Array2<f64>, x: &Array2<f64>, prev: &Array2<f64>, s: f64) -> f64 {
    let (n, m) = plan.dim();
    let d = x.ncols();
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..d {
            let mut mapped = 0.0;
            for j in 0..m {
                mapped += plan[[i, j]] * x[[j, k]];
            }
            let r = s * mapped - prev[[i, k]];
            total += r * r;
        }
    }
    total
}

/// `Σ_j Σ_groups ‖γ(group, j)‖₂` with explicit loops.
pub fn group_lasso_ref(plan: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut total = 0.0;
    for j in 0..plan.ncols() {
        for &c in &classes {
            let sq: f64 = (0..plan.nrows())
                .filter(|&i| labels[i] == c)
                .map(|i| plan[[i, j]] * plan[[i, j]])
                .sum();
            total += sq.sqrt();
        }
    }
    total
}

/// Largest eigenvalue of a symmetric 2×2 matrix in closed form.
pub fn top_eigenvalue_2x2(a: f64, b: f64, d: f64) -> f64 {
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    mean + radius
}

/// Row-normalized `γ Y` with explicit loops.
pub fn barycentric_ref(plan: &Array2<f64>, targets: &Array2<f64>) -> Array2<f64> {
    let (n, m) = plan.dim();
    let d = targets.ncols();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let mass: f64 = (0..m).map(|j| plan[[i, j]]).sum();
        for k in 0..d {
            out[[i, k]] = (0..m).map(|j| plan[[i, j]] * targets[[j, k]]).sum::<f64>() / mass;
        }
    }
    out
}
