//! Randomised privacy primitives: Laplace noise, noisy minimisation over a
//! finite candidate set, and the exponential mechanism.
//!
//! All randomness flows through [`RngStream`]. Per-candidate draws are keyed
//! by the candidate's mask rather than its list position, so reordering the
//! candidates never changes which noise a given model receives.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::ModelMask;
use crate::error::{Error, Result};

/// Domain-separation tags for streams derived from a caller's stream.
pub(crate) mod tags {
    pub const CANDIDATE_NOISE: u64 = 0x6e6f_6973_795f_6d69; // "noisy_mi"
    pub const EXPONENTIAL: u64 = 0x6578_706d_6563_6800;
    pub const SENSITIVITY: u64 = 0x675f_6f66_5f64_0000;
    pub const FALLBACK: u64 = 0x6661_6c6c_6261_636b;
    pub const DATA: u64 = 0x6461_7461_0000_0000;
    pub const REPLICATION: u64 = 0x7265_706c_6963_6174;
}

/// Privacy parameters. `epsilon = +∞` is accepted and means "no noise";
/// it exists for non-private baselines only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }
}

/// A reproducible randomness source identified by `(seed, stream_id)`.
///
/// Streams are cheap descriptors; [`RngStream::rng`] materialises the
/// generator. Distinct stream ids select disjoint ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Child stream for `key`; the same `(self, key)` always gives the same child.
    pub fn derive(&self, key: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(key.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a sequence of words into one stream key.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Uniform on (0, 1) with 53 bits of resolution; zero is rejected.
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u > 0.0 {
            return u;
        }
    }
}

/// One draw from Laplace(0, scale), density `exp(−|z|/scale) / (2 scale)`,
/// by inversion of the CDF.
pub fn sample_laplace<R: RngCore + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    assert!(scale >= 0.0, "Laplace scale must be non-negative, got {scale}");
    let u = open_unit(rng) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Standard Laplace draw from a fresh generator on `stream`.
pub fn laplace_from_stream(stream: &RngStream) -> f64 {
    sample_laplace(&mut stream.rng(), 1.0)
}

/// Releases `value + (sensitivity / ε) Z` with `Z` standard Laplace.
pub fn noisy_release<R: RngCore + ?Sized>(
    value: f64,
    sensitivity: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<f64> {
    if !(sensitivity > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    if !budget.is_pure() {
        return Err(Error::InvalidParameter(
            "Laplace release is a pure-DP mechanism; delta must be 0".into(),
        ));
    }
    let z = sample_laplace(rng, 1.0);
    Ok(value + laplace_scale(sensitivity, budget.epsilon()) * z)
}

/// `sensitivity / ε`, zero when `ε = ∞`.
pub fn laplace_scale(sensitivity: f64, epsilon: f64) -> f64 {
    if epsilon.is_infinite() {
        0.0
    } else {
        sensitivity / epsilon
    }
}

/// A candidate model with its (clean) loss and the scale of the Laplace
/// noise to add to it. A zero scale is only used for `ε = ∞` baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub mask: ModelMask,
    pub score: f64,
    pub noise_scale: f64,
}

impl ScoredCandidate {
    pub fn new(mask: ModelMask, score: f64, noise_scale: f64) -> Result<Self> {
        if !(noise_scale >= 0.0) || noise_scale.is_infinite() {
            return Err(Error::InvalidParameter(format!(
                "noise scale must be finite and non-negative, got {noise_scale}"
            )));
        }
        Ok(Self {
            mask,
            score,
            noise_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisySelection {
    pub chosen: ModelMask,
    /// Realised noisy scores, aligned with the input list.
    pub noisy_scores: Vec<f64>,
}

/// The standard Laplace draw attached to `mask` under `rng`.
pub fn candidate_noise(rng: &RngStream, mask: &ModelMask) -> f64 {
    laplace_from_stream(&rng.derive(tags::CANDIDATE_NOISE).derive(mask.bits()))
}

/// Adds `noise_scale · Z_M` to every score and returns the minimiser.
///
/// Ties (in floating point) go to the smaller mask, then to the smaller
/// bit pattern.
pub fn noisy_argmin(candidates: &[ScoredCandidate], rng: &RngStream) -> Result<NoisySelection> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let noisy_scores: Vec<f64> = candidates
        .iter()
        .map(|c| {
            if c.noise_scale == 0.0 {
                c.score
            } else {
                c.score + c.noise_scale * candidate_noise(rng, &c.mask)
            }
        })
        .collect();
    let best = argmin_with_ties(candidates.iter().map(|c| c.mask).zip(noisy_scores.iter().copied()));
    Ok(NoisySelection {
        chosen: best,
        noisy_scores,
    })
}

pub(crate) fn argmin_with_ties<I: Iterator<Item = (ModelMask, f64)>>(items: I) -> ModelMask {
    items
        .min_by(|(ma, sa), (mb, sb)| sa.total_cmp(sb).then(ma.cmp(mb)))
        .map(|(m, _)| m)
        .expect("non-empty")
}

/// Selection probabilities `∝ exp(−ε · score / (2 · sensitivity))`, in input
/// order. Computed with the minimum score subtracted first.
pub fn exponential_probabilities(
    candidates: &[ScoredCandidate],
    sensitivity: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if !(sensitivity > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    let best = candidates
        .iter()
        .map(|c| c.score)
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = if epsilon.is_infinite() {
        candidates
            .iter()
            .map(|c| if c.score == best { 1.0 } else { 0.0 })
            .collect()
    } else {
        let rate = epsilon / (2.0 * sensitivity);
        candidates
            .iter()
            .map(|c| (-rate * (c.score - best)).exp())
            .collect()
    };
    let total: f64 = weights.iter().sum();
    // The minimiser always carries weight exp(0) = 1.
    assert!(total >= 1.0, "exponential mechanism weights vanished");
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Samples a candidate with probability `∝ exp(−ε · score / (2 · sensitivity))`.
///
/// The inverse-CDF walk visits candidates in canonical mask order, so the
/// output depends on the candidate set, not on its listing order.
pub fn exponential_mechanism(
    candidates: &[ScoredCandidate],
    sensitivity: f64,
    budget: &PrivacyBudget,
    rng: &RngStream,
) -> Result<ModelMask> {
    if !budget.is_pure() {
        return Err(Error::InvalidParameter(
            "exponential mechanism is pure-DP; delta must be 0".into(),
        ));
    }
    exponential_sample(candidates, sensitivity, budget.epsilon(), rng)
}

pub(crate) fn exponential_sample(
    candidates: &[ScoredCandidate],
    sensitivity: f64,
    epsilon: f64,
    rng: &RngStream,
) -> Result<ModelMask> {
    let probs = exponential_probabilities(candidates, sensitivity, epsilon)?;
    let mut order: Vec<(ModelMask, f64)> = candidates.iter().map(|c| c.mask).zip(probs).collect();
    order.sort_by_key(|a| a.0);
    let u: f64 = rng.derive(tags::EXPONENTIAL).rng().random();
    let mut acc = 0.0;
    for &(mask, p) in &order {
        acc += p;
        if u < acc {
            return Ok(mask);
        }
    }
    // Rounding left the cumulative sum just under 1.
    Ok(order
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|(m, _)| *m)
        .expect("some candidate has positive probability"))
}

/// Budget of an ε₁-private sensitivity estimate feeding an ε₂-private
/// mechanism that is valid whenever the estimate bounds the true
/// sensitivity, which it fails to do with probability at most δ.
pub fn compose_eps_delta(stage1_eps: f64, stage2_eps: f64, delta: f64) -> Result<PrivacyBudget> {
    if !(stage1_eps > 0.0) || !(stage2_eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stage budgets must be positive, got ({stage1_eps}, {stage2_eps})"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    PrivacyBudget::new(stage1_eps + stage2_eps, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn mask(bits: u64) -> ModelMask {
        ModelMask::from_bits(bits)
    }

    fn cand(bits: u64, score: f64, scale: f64) -> ScoredCandidate {
        ScoredCandidate::new(mask(bits), score, scale).unwrap()
    }

    fn chi_square_ok(counts: &[usize], probs: &[f64]) -> (f64, f64) {
        let total: usize = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * total as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let crit = ChiSquared::new((counts.len() - 1) as f64)
            .unwrap()
            .inverse_cdf(0.99);
        (stat, crit)
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -0.1).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.0).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY, 0.0).is_ok());
        assert!(PrivacyBudget::pure(1.0).unwrap().is_pure());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(42, 7);
        let a = sample_laplace(&mut s.rng(), 1.0);
        let b = sample_laplace(&mut s.rng(), 1.0);
        assert_eq!(a.to_bits(), b.to_bits());
        let c = sample_laplace(&mut RngStream::new(42, 8).rng(), 1.0);
        assert_ne!(a, c);
        assert_eq!(s.derive(3), s.derive(3));
        assert_ne!(s.derive(3), s.derive(4));
        assert_ne!(s.derive(3), RngStream::new(43, 7).derive(3));
    }

    #[test]
    fn laplace_moments() {
        let mut rng = RngStream::from_seed(1).rng();
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng, 1.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((1.96..=2.04).contains(&var), "variance {var}");
        // P(|Z| > ln 2) = exp(−ln 2) = 1/2
        let tail = draws.iter().filter(|z| z.abs() > 2f64.ln()).count() as f64 / n as f64;
        assert!((tail - 0.5).abs() < 0.005, "tail {tail}");
    }

    #[test]
    fn laplace_scale_applies() {
        let s = RngStream::from_seed(9);
        let z1 = sample_laplace(&mut s.rng(), 1.0);
        let z3 = sample_laplace(&mut s.rng(), 3.0);
        assert!((z3 - 3.0 * z1).abs() < 1e-12);
    }

    #[test]
    fn release_scale_and_limits() {
        assert_eq!(laplace_scale(9.0, 1.0), 9.0);
        // r = 1, R = 2, ε = 0.5: per-model scale 2 (r + R)² / ε
        assert_eq!(laplace_scale(2.0 * 9.0, 0.5), 36.0);
        let inf = PrivacyBudget::pure(f64::INFINITY).unwrap();
        let mut rng = RngStream::from_seed(2).rng();
        assert_eq!(noisy_release(3.5, 9.0, &inf, &mut rng).unwrap(), 3.5);

        let b = PrivacyBudget::pure(1.0).unwrap();
        let s = RngStream::from_seed(5);
        let v = noisy_release(1.0, 9.0, &b, &mut s.rng()).unwrap();
        let z = sample_laplace(&mut s.rng(), 1.0);
        assert!((v - (1.0 + 9.0 * z)).abs() < 1e-12);

        assert!(noisy_release(1.0, 0.0, &b, &mut rng).is_err());
        let approx = PrivacyBudget::new(1.0, 0.1).unwrap();
        assert!(noisy_release(1.0, 1.0, &approx, &mut rng).is_err());
    }

    #[test]
    fn noisy_argmin_basics() {
        let s = RngStream::from_seed(3);
        assert!(noisy_argmin(&[], &s).is_err());
        let one = noisy_argmin(&[cand(0b1, 10.0, 100.0)], &s).unwrap();
        assert_eq!(one.chosen, mask(0b1));
        let clean = [cand(0b1, 3.0, 0.0), cand(0b10, 1.0, 0.0), cand(0b100, 2.0, 0.0)];
        assert_eq!(noisy_argmin(&clean, &s).unwrap().chosen, mask(0b10));
        let tiny = [cand(0b1, 3.0, 1e-12), cand(0b10, 1.0, 1e-12), cand(0b100, 2.0, 1e-12)];
        assert_eq!(noisy_argmin(&tiny, &s).unwrap().chosen, mask(0b10));
    }

    #[test]
    fn noisy_argmin_tie_rule() {
        let s = RngStream::from_seed(3);
        let tied = [cand(0b11, 1.0, 0.0), cand(0b100, 1.0, 0.0), cand(0b1000, 1.0, 0.0)];
        assert_eq!(noisy_argmin(&tied, &s).unwrap().chosen, mask(0b100));
    }

    #[test]
    fn noisy_scores_are_recomputable() {
        let s = RngStream::from_seed(11);
        let c = [cand(0b1, 1.0, 2.0), cand(0b10, 0.5, 2.0)];
        let sel = noisy_argmin(&c, &s).unwrap();
        for (cand, noisy) in c.iter().zip(&sel.noisy_scores) {
            let z = candidate_noise(&s, &cand.mask);
            assert_eq!(*noisy, cand.score + cand.noise_scale * z);
        }
    }

    #[test]
    fn noisy_argmin_is_permutation_equivariant() {
        let c = [cand(0b1, 1.0, 2.0), cand(0b10, 0.5, 2.0), cand(0b11, 0.8, 2.0), cand(0b100, 1.2, 2.0)];
        let mut rev = c;
        rev.reverse();
        for seed in 0..200 {
            let s = RngStream::from_seed(seed);
            assert_eq!(noisy_argmin(&c, &s).unwrap().chosen, noisy_argmin(&rev, &s).unwrap().chosen);
            assert_eq!(
                exponential_mechanism(&c, 1.0, &PrivacyBudget::pure(1.0).unwrap(), &s).unwrap(),
                exponential_mechanism(&rev, 1.0, &PrivacyBudget::pure(1.0).unwrap(), &s).unwrap()
            );
        }
    }

    // P(Z1 − Z2 ≤ −t) for independent standard Laplace variables, by
    // trapezoidal integration of f(z) · P(Z2 ≥ z + t) over z.
    fn difference_cdf_numeric(t: f64) -> f64 {
        let f = |z: f64| 0.5 * (-z.abs()).exp();
        let upper_tail = |x: f64| if x >= 0.0 { 0.5 * (-x).exp() } else { 1.0 - 0.5 * x.exp() };
        let (lo, hi, steps) = (-40.0, 40.0, 400_000);
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for k in 0..=steps {
            let z = lo + k as f64 * h;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += w * f(z) * upper_tail(z + t);
        }
        acc * h
    }

    #[test]
    fn wrong_choice_probability_matches_convolution() {
        let (delta, b) = (1.0, 1.0);
        let expected = difference_cdf_numeric(delta / b);
        let c = [cand(0b1, 0.0, b), cand(0b10, delta, b)];
        let draws = 1_000_000;
        let wrong = (0..draws)
            .filter(|&k| noisy_argmin(&c, &RngStream::new(99, k)).unwrap().chosen == mask(0b10))
            .count();
        let p = wrong as f64 / draws as f64;
        assert!((p - expected).abs() < 0.005, "empirical {p}, convolution {expected}");
    }

    #[test]
    fn exponential_probabilities_closed_form() {
        // ε s / (2G) = ln 3 ⇒ (3/4, 1/4)
        let g = 1.0;
        let eps = 1.0;
        let s = 2.0 * g * 3f64.ln() / eps;
        let c = [cand(0b1, 0.0, 1.0), cand(0b10, s, 1.0)];
        let p = exponential_probabilities(&c, g, eps).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);

        let budget = PrivacyBudget::pure(eps).unwrap();
        let mut counts = [0usize; 2];
        for k in 0..100_000 {
            let m = exponential_mechanism(&c, g, &budget, &RngStream::new(5, k)).unwrap();
            counts[if m == mask(0b1) { 0 } else { 1 }] += 1;
        }
        let (stat, crit) = chi_square_ok(&counts, &[0.75, 0.25]);
        assert!(stat < crit, "chi-square {stat} >= {crit}");
    }

    #[test]
    fn exponential_uniform_cases() {
        let equal: Vec<_> = (0..4).map(|j| cand(1 << j, 2.0, 1.0)).collect();
        let budget = PrivacyBudget::pure(1.0).unwrap();
        let mut counts = [0usize; 4];
        for k in 0..100_000 {
            let m = exponential_mechanism(&equal, 1.0, &budget, &RngStream::new(8, k)).unwrap();
            counts[m.bits().trailing_zeros() as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.25).abs() < 0.01);
        }
        let spread: Vec<_> = (0..4).map(|j| cand(1 << j, j as f64 * 100.0, 1.0)).collect();
        let p = exponential_probabilities(&spread, 1.0, 1e-12).unwrap();
        assert!(p.iter().all(|q| (q - 0.25).abs() < 1e-6));
    }

    #[test]
    fn exponential_infinite_epsilon_is_argmin() {
        let c = [cand(0b1, 2.0, 1.0), cand(0b10, 1.0, 1.0), cand(0b100, 1.5, 1.0)];
        let budget = PrivacyBudget::pure(f64::INFINITY).unwrap();
        for k in 0..20 {
            assert_eq!(
                exponential_mechanism(&c, 1.0, &budget, &RngStream::new(1, k)).unwrap(),
                mask(0b10)
            );
        }
    }

    #[test]
    fn exponential_errors() {
        let b = PrivacyBudget::pure(1.0).unwrap();
        let s = RngStream::from_seed(0);
        assert!(exponential_mechanism(&[], 1.0, &b, &s).is_err());
        assert!(exponential_mechanism(&[cand(1, 0.0, 1.0)], 0.0, &b, &s).is_err());
        let approx = PrivacyBudget::new(1.0, 0.01).unwrap();
        assert!(exponential_mechanism(&[cand(1, 0.0, 1.0)], 1.0, &approx, &s).is_err());
    }

    #[test]
    fn composition() {
        let eps = 0.7;
        let b = compose_eps_delta(eps, eps, 0.01).unwrap();
        assert_eq!((b.epsilon(), b.delta()), (2.0 * eps, 0.01));
        let b = compose_eps_delta(0.5, 0.5, 0.05).unwrap();
        assert_eq!((b.epsilon(), b.delta()), (1.0, 0.05));
        let b = compose_eps_delta(0.1, 0.9, 0.01).unwrap();
        assert_eq!((b.epsilon(), b.delta()), (1.0, 0.01));
        assert!(compose_eps_delta(0.0, 1.0, 0.1).is_err());
        assert!(compose_eps_delta(1.0, -1.0, 0.1).is_err());
        assert!(compose_eps_delta(1.0, 1.0, 0.0).is_err());
        assert!(compose_eps_delta(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn candidate_validation() {
        assert!(ScoredCandidate::new(mask(1), 0.0, -1.0).is_err());
        assert!(ScoredCandidate::new(mask(1), 0.0, f64::NAN).is_err());
        assert!(ScoredCandidate::new(mask(1), 0.0, f64::INFINITY).is_err());
    }
}
