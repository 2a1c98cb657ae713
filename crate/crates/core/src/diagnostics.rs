//! Design diagnostics: the sparse minimum eigenvalue of `Σ̂ = XᵀX / n` and
//! the ℓ1 radius above which the constraint cannot bind.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{Dataset, ModelMask};

/// Largest number of principal submatrices examined exactly.
pub const EXACT_MASK_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa0Estimate {
    pub value: f64,
    /// `false` when the full-matrix minimum eigenvalue was used as a lower
    /// bound instead of the exact infimum over supports.
    pub exact: bool,
    pub max_size: usize,
    pub masks_examined: usize,
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn min_eigenvalue(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigen().eigenvalues.min()
}

/// `inf { βᵀΣ̂β / ‖β‖² : 1 ≤ ‖β‖₀ ≤ max_size }`.
///
/// By eigenvalue interlacing the infimum is attained on supports of size
/// exactly `max_size`; those are enumerated when there are at most
/// [`EXACT_MASK_LIMIT`] of them.
pub fn sparse_min_eigenvalue(data: &Dataset, max_size: usize) -> Kappa0Estimate {
    let d = data.d();
    let max_size = max_size.clamp(1, d);
    let stats = data.sufficient_stats();
    let n = data.n() as f64;
    let sigma = DMatrix::from_row_slice(d, d, stats.xtx_row_major()) / n;
    let count = binomial(d, max_size);
    if count <= EXACT_MASK_LIMIT && d <= 24 {
        let mut best = f64::INFINITY;
        let mut examined = 0;
        for bits in 0u64..(1 << d) {
            let mask = ModelMask::from_bits(bits);
            if mask.size() != max_size {
                continue;
            }
            let idx: Vec<usize> = mask.indices().collect();
            let sub = DMatrix::from_fn(max_size, max_size, |a, b| sigma[(idx[a], idx[b])]);
            best = best.min(min_eigenvalue(sub));
            examined += 1;
        }
        Kappa0Estimate {
            value: best,
            exact: true,
            max_size,
            masks_examined: examined,
        }
    } else {
        Kappa0Estimate {
            value: min_eigenvalue(sigma),
            exact: false,
            max_size,
            masks_examined: 1,
        }
    }
}

/// `r · sqrt(d̄ / κ₀)`; infinite when `κ₀ ≤ 0`.
pub fn radius_guidance(r: f64, max_size: usize, kappa0: f64) -> f64 {
    if kappa0 > 0.0 {
        r * (max_size as f64 / kappa0).sqrt()
    } else {
        f64::INFINITY
    }
}
