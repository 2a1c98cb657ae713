//! ℓ1-constrained least squares on sufficient statistics.
//!
//! For a mask `M` and radius `R` the solver minimises
//!
//! ```text
//! f(β) = YᵀY − 2βᵀXᵀY + βᵀXᵀXβ    over β supported on M with ‖β‖₁ ≤ R
//! ```
//!
//! by projected gradient descent. The gradient step uses `1/L` with `L` the
//! largest eigenvalue of the restricted `XᵀX` (the Lipschitz constant of
//! `∇f/2`), and the projection onto the ℓ1 ball is exact.

use crate::data::{ModelMask, SufficientStats};
use crate::error::{Error, Result};

/// Residual sums of squares below `n * DEGENERATE_RSS_PER_ROW` are floored
/// when forming the profile likelihood.
pub const DEGENERATE_RSS_PER_ROW: f64 = 1e-12;

const POWER_ITERATION_TOL: f64 = 1e-8;
const POWER_ITERATION_MAX: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    FixedInverseLipschitz,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the relative objective decrease and the largest coefficient
    /// change (relative to `max(1, ‖β‖∞)`) both fall below this.
    pub tolerance: f64,
    pub step_rule: StepRule,
}

impl SolverConfig {
    pub fn new(max_iterations: usize, tolerance: f64, step_rule: StepRule) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        Ok(Self {
            max_iterations,
            tolerance,
            step_rule,
        })
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-10,
            step_rule: StepRule::FixedInverseLipschitz,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mask: ModelMask,
    /// Length `d`; exactly zero outside the mask.
    pub beta: Vec<f64>,
    /// `Σ (Y_i − X_iᵀβ̂)²`, i.e. `−2ℓ_R(M; D)`.
    pub neg2_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub l1_norm: f64,
}

/// Euclidean projection of `v` onto `{u : ‖u‖₁ ≤ radius}`.
///
/// Sort-and-threshold: find `θ` with `Σ max(|v_j| − θ, 0) = radius` and
/// soft-threshold by it.
pub fn project_l1(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "projection radius must be positive, got {radius}");
    let l1: f64 = v.iter().map(|a| a.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|a| a.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    let mut out: Vec<f64> = v
        .iter()
        .map(|&a| a.signum() * (a.abs() - theta).max(0.0))
        .collect();
    // Rounding in θ can leave the result a hair outside the ball.
    let norm: f64 = out.iter().map(|a| a.abs()).sum();
    if norm > radius {
        let s = radius / norm;
        out.iter_mut().for_each(|a| *a *= s);
    }
    out
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix (row-major).
pub fn largest_eigenvalue(a: &[f64], dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    // Deterministic start with no special symmetry.
    let mut v: Vec<f64> = (0..dim).map(|j| 1.0 + 0.37 * j as f64 / dim as f64).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    let mut w = vec![0.0; dim];
    for _ in 0..POWER_ITERATION_MAX {
        mat_vec(a, dim, &v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        std::mem::swap(&mut v, &mut w);
        let done = (norm - lambda).abs() <= POWER_ITERATION_TOL * norm;
        lambda = norm;
        if done {
            break;
        }
    }
    lambda
}

/// Upper bound on the spectral radius (max absolute row sum).
fn gershgorin_bound(a: &[f64], dim: usize) -> f64 {
    (0..dim)
        .map(|j| a[j * dim..(j + 1) * dim].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn mat_vec(a: &[f64], dim: usize, v: &[f64], out: &mut [f64]) {
    for j in 0..dim {
        out[j] = a[j * dim..(j + 1) * dim].iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

fn objective(stats: &SufficientStats, beta: &[f64]) -> f64 {
    stats.rss(beta)
}

/// Minimises `‖Y − Xβ‖²` over `β` supported on `mask` with `‖β‖₁ ≤ radius`.
///
/// Non-convergence within `max_iterations` is reported through
/// `FitResult::converged`, not as an error.
pub fn fit_constrained_ls(
    stats: &SufficientStats,
    mask: &ModelMask,
    radius: f64,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    fit_observed(stats, mask, radius, cfg, |_, _| {})
}

/// Like [`fit_constrained_ls`], calling `observe(β_M, f(β_M))` on the
/// starting point and after every iteration.
pub fn fit_observed<F: FnMut(&[f64], f64)>(
    stats: &SufficientStats,
    mask: &ModelMask,
    radius: f64,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<FitResult> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "l1 radius must be positive, got {radius}"
        )));
    }
    let d = stats.dim();
    let sub = stats.restrict(mask)?;
    let m = sub.dim();
    let a = sub.xtx_row_major();
    let b = sub.xty();

    let mut beta = vec![0.0; m];
    let mut f = objective(&sub, &beta);
    observe(&beta, f);

    let mut iterations = 0;
    let mut converged = true;
    let lambda_max = largest_eigenvalue(a, m);
    if m > 0 && lambda_max > 0.0 {
        converged = false;
        let mut lipschitz = lambda_max * (1.0 + 1e-6);
        let mut step = 1.0 / lipschitz;
        let mut grad = vec![0.0; m];
        let mut trial = vec![0.0; m];
        let mut safeguarded = false;
        while iterations < cfg.max_iterations {
            iterations += 1;
            mat_vec(a, m, &beta, &mut grad);
            grad.iter_mut().zip(b).for_each(|(g, bj)| *g -= bj);

            let (next, f_next) = match cfg.step_rule {
                StepRule::FixedInverseLipschitz => {
                    for j in 0..m {
                        trial[j] = beta[j] - step * grad[j];
                    }
                    let next = project_l1(&trial, radius);
                    let f_next = objective(&sub, &next);
                    if f_next > f + 1e-12 * f.abs().max(1.0) && !safeguarded {
                        // Power iteration underestimated L; fall back to a
                        // guaranteed bound and retry this iteration.
                        lipschitz = gershgorin_bound(a, m).max(lipschitz);
                        step = 1.0 / lipschitz;
                        safeguarded = true;
                        iterations -= 1;
                        continue;
                    }
                    (next, f_next)
                }
                StepRule::Backtracking => loop {
                    for j in 0..m {
                        trial[j] = beta[j] - step * grad[j];
                    }
                    let next = project_l1(&trial, radius);
                    let f_next = objective(&sub, &next);
                    // Sufficient decrease for f/2 with step t.
                    let mut lin = 0.0;
                    let mut sq = 0.0;
                    for j in 0..m {
                        let dj = next[j] - beta[j];
                        lin += grad[j] * dj;
                        sq += dj * dj;
                    }
                    let bound = 0.5 * f + lin + sq / (2.0 * step);
                    if 0.5 * f_next <= bound + 1e-12 * f.abs().max(1.0) || step < 1e-300 {
                        break (next, f_next);
                    }
                    step *= 0.5;
                },
            };

            let max_change = next
                .iter()
                .zip(&beta)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let scale = next.iter().fold(1.0_f64, |s, x| s.max(x.abs()));
            let rel_decrease = (f - f_next) / f.abs().max(f64::MIN_POSITIVE);
            beta = next;
            f = f_next;
            observe(&beta, f);
            if rel_decrease < cfg.tolerance && max_change <= cfg.tolerance * scale {
                converged = true;
                break;
            }
        }
    }

    let mut full = vec![0.0; d];
    for (j, v) in mask.indices().zip(&beta) {
        full[j] = *v;
    }
    let l1_norm = beta.iter().map(|x| x.abs()).sum();
    Ok(FitResult {
        mask: *mask,
        beta: full,
        neg2_loglik: f.max(0.0),
        iterations,
        converged,
        l1_norm,
    })
}

/// `−2ℓ*_R(M; D) = n log(RSS / n)`.
pub fn profile_loglik(fit: &FitResult, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(fit.neg2_loglik > 0.0) {
        return Err(Error::DegenerateFit(fit.neg2_loglik));
    }
    let n = n as f64;
    Ok(n * (fit.neg2_loglik / n).ln())
}

/// Profile likelihood with the residual sum of squares floored at
/// `n * DEGENERATE_RSS_PER_ROW`, so the score stays finite.
pub fn profile_loglik_floored(rss: f64, n: usize) -> f64 {
    let nf = n as f64;
    let floor = nf * DEGENERATE_RSS_PER_ROW;
    nf * (rss.max(floor) / nf).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, n: usize, d: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (0..d).map(|j| cols[j][i] * beta[j]).sum::<f64>() + rng.random_range(-0.5..0.5)
            })
            .collect();
        Dataset::with_observed_bound(cols, y).unwrap()
    }

    // Normal equations with nalgebra's Cholesky: independent of the solver.
    fn ols(data: &Dataset, mask: &ModelMask) -> Vec<f64> {
        let idx: Vec<usize> = mask.indices().collect();
        let x = DMatrix::from_fn(data.n(), idx.len(), |i, k| data.x(i, idx[k]));
        let y = DVector::from_column_slice(data.y());
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * y;
        let sol = xtx.cholesky().expect("well conditioned").solve(&xty);
        let mut full = vec![0.0; data.d()];
        for (k, &j) in idx.iter().enumerate() {
            full[j] = sol[k];
        }
        full
    }

    // Grid search over the 2-D ℓ1 ball.
    fn grid_project(v: [f64; 2], radius: f64, steps: usize) -> [f64; 2] {
        let mut best = [0.0, 0.0];
        let mut best_d = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                let u0 = -radius + 2.0 * radius * a as f64 / steps as f64;
                let u1 = -radius + 2.0 * radius * b as f64 / steps as f64;
                if u0.abs() + u1.abs() > radius + 1e-12 {
                    continue;
                }
                let dist = (u0 - v[0]).powi(2) + (u1 - v[1]).powi(2);
                if dist < best_d {
                    best_d = dist;
                    best = [u0, u1];
                }
            }
        }
        best
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_l1(&[3.0, 0.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_l1(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
        let p = project_l1(&[2.0, 1.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
        let g = grid_project([2.0, 1.0], 1.0, 400);
        assert!((g[0] - 1.0).abs() < 1e-9 && g[1].abs() < 1e-9);
        assert_eq!(project_l1(&[-3.0, 1.0], 2.0), vec![-2.0, 0.0]);
    }

    #[test]
    fn empty_mask_fit() {
        let data = random_instance(1, 20, 3);
        let stats = data.sufficient_stats();
        let fit = fit_constrained_ls(&stats, &ModelMask::EMPTY, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(fit.beta, vec![0.0; 3]);
        assert_eq!(fit.neg2_loglik, stats.yty());
        assert!(fit.converged);
    }

    #[test]
    fn exact_interpolation() {
        let stats = SufficientStats::from_parts(2, vec![5.0], vec![10.0], 20.0).unwrap();
        let fit = fit_constrained_ls(&stats, &ModelMask::full(1), 10.0, &SolverConfig::default()).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!(fit.neg2_loglik.abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn slack_constraint_reproduces_ols() {
        let data = random_instance(5, 100, 6);
        let stats = data.sufficient_stats();
        for bits in 1u64..64 {
            let mask = ModelMask::from_bits(bits);
            let reference = ols(&data, &mask);
            let radius = reference.iter().map(|x| x.abs()).sum::<f64>() + 0.5;
            for rule in [StepRule::FixedInverseLipschitz, StepRule::Backtracking] {
                let cfg = SolverConfig {
                    step_rule: rule,
                    ..SolverConfig::default()
                };
                let fit = fit_constrained_ls(&stats, &mask, radius, &cfg).unwrap();
                assert!(fit.converged);
                let err = fit
                    .beta
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-6, "mask {mask}: {err}");
            }
        }
    }

    #[test]
    fn active_constraint_matches_grid_search() {
        // Two-variable problem with ‖β_OLS‖₁ well above R: compare the
        // objective against a fine grid over the ball.
        let data = random_instance(17, 60, 2);
        let stats = data.sufficient_stats();
        let radius = 0.3;
        let fit = fit_constrained_ls(&stats, &ModelMask::full(2), radius, &SolverConfig::default()).unwrap();
        let steps = 600;
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                let u = [
                    -radius + 2.0 * radius * a as f64 / steps as f64,
                    -radius + 2.0 * radius * b as f64 / steps as f64,
                ];
                if u[0].abs() + u[1].abs() <= radius {
                    best = best.min(stats.rss(&u));
                }
            }
        }
        assert!(fit.l1_norm <= radius + 1e-9);
        assert!(fit.neg2_loglik <= best + 1e-9);
        assert!(best - fit.neg2_loglik < 1e-2);
    }

    #[test]
    fn descent_is_monotone_and_feasible() {
        let data = random_instance(23, 80, 5);
        let stats = data.sufficient_stats();
        let mask = ModelMask::from_bits(0b10111);
        let mut trace = Vec::new();
        let radius = 0.8;
        fit_observed(&stats, &mask, radius, &SolverConfig::default(), |b, f| {
            assert!(b.iter().map(|x| x.abs()).sum::<f64>() <= radius + 1e-12);
            assert_eq!(b.len(), mask.size());
            trace.push(f);
        })
        .unwrap();
        assert!(trace.len() > 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn larger_models_fit_at_least_as_well() {
        let data = random_instance(29, 50, 4);
        let stats = data.sufficient_stats();
        let cfg = SolverConfig::default();
        let fits: Vec<f64> = (0u64..16)
            .map(|b| {
                fit_constrained_ls(&stats, &ModelMask::from_bits(b), 1.5, &cfg)
                    .unwrap()
                    .neg2_loglik
            })
            .collect();
        for small in 0u64..16 {
            for big in 0u64..16 {
                if small & !big == 0 {
                    assert!(fits[big as usize] <= fits[small as usize] + 1e-7);
                }
            }
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let data = random_instance(31, 40, 4);
        let stats = data.sufficient_stats();
        let cfg = SolverConfig::new(1, 1e-10, StepRule::FixedInverseLipschitz).unwrap();
        let fit = fit_constrained_ls(&stats, &ModelMask::full(4), 5.0, &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn bad_configuration_is_rejected() {
        assert!(SolverConfig::new(0, 1e-10, StepRule::Backtracking).is_err());
        assert!(SolverConfig::new(10, 0.0, StepRule::Backtracking).is_err());
        let stats = SufficientStats::from_parts(2, vec![5.0], vec![10.0], 20.0).unwrap();
        assert!(fit_constrained_ls(&stats, &ModelMask::full(1), 0.0, &SolverConfig::default()).is_err());
        assert!(fit_constrained_ls(&stats, &ModelMask::full(2), 1.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn power_iteration_matches_eigendecomposition() {
        let data = random_instance(37, 30, 5);
        let stats = data.sufficient_stats();
        let a = DMatrix::from_row_slice(5, 5, stats.xtx_row_major());
        let exact = a.symmetric_eigen().eigenvalues.max();
        let approx = largest_eigenvalue(stats.xtx_row_major(), 5);
        assert!((approx - exact).abs() <= 1e-6 * exact);
        // Start vector orthogonal to the all-ones direction still works.
        let m = [1.0, -1.0, -1.0, 1.0];
        assert!((largest_eigenvalue(&m, 2) - 2.0).abs() < 1e-6);
    }

    fn fit_with_rss(rss: f64) -> FitResult {
        FitResult {
            mask: ModelMask::EMPTY,
            beta: vec![],
            neg2_loglik: rss,
            iterations: 0,
            converged: true,
            l1_norm: 0.0,
        }
    }

    #[test]
    fn profile_likelihood_values() {
        // residuals (1, 1)
        assert_eq!(profile_loglik(&fit_with_rss(2.0), 2).unwrap(), 0.0);
        assert_eq!(profile_loglik(&fit_with_rss(4.0), 4).unwrap(), 0.0);
        // 100 residuals of sqrt(0.5), summed one at a time.
        let rss: f64 = (0..100).map(|_| 0.5_f64.sqrt().powi(2)).sum();
        let naive = 100.0 * (rss / 100.0).ln();
        let v = profile_loglik(&fit_with_rss(50.0), 100).unwrap();
        assert!((v - naive).abs() < 1e-9);
        assert!((v - (-69.314_718_055_994_53)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_fit_is_signalled_and_floored() {
        assert!(matches!(
            profile_loglik(&fit_with_rss(0.0), 10),
            Err(Error::DegenerateFit(_))
        ));
        assert!(profile_loglik(&fit_with_rss(1.0), 0).is_err());
        let floored = profile_loglik_floored(0.0, 10);
        assert_eq!(floored, 10.0 * 1e-12_f64.ln());
        assert_eq!(profile_loglik_floored(5.0, 10), 10.0 * 0.5_f64.ln());
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(
            v in proptest::collection::vec(-10.0f64..10.0, 1..8),
            radius in 0.01f64..5.0,
        ) {
            let p = project_l1(&v, radius);
            let l1: f64 = p.iter().map(|a| a.abs()).sum();
            prop_assert!(l1 <= radius + 1e-12);
            // Any other feasible point is no closer: check random
            // convex combinations of p with signed vertices.
            let dist = |u: &[f64]| u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let dp = dist(&p);
            for j in 0..v.len() {
                for sign in [-1.0, 1.0] {
                    let mut vert = vec![0.0; v.len()];
                    vert[j] = sign * radius;
                    for t in [0.01, 0.1, 0.5] {
                        let q: Vec<f64> = p.iter().zip(&vert).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                        prop_assert!(dist(&q) >= dp - 1e-9);
                    }
                }
            }
        }

        #[test]
        fn projection_2d_matches_grid(a in -3.0f64..3.0, b in -3.0f64..3.0, radius in 0.2f64..2.0) {
            let p = project_l1(&[a, b], radius);
            let g = grid_project([a, b], radius, 200);
            let res = 2.0 * radius / 200.0;
            prop_assert!((p[0] - g[0]).abs() <= 2.0 * res && (p[1] - g[1]).abs() <= 2.0 * res);
        }
    }
}
