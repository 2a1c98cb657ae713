//! Private model selection by penalized, ℓ1-constrained likelihood.
//!
//! Two procedures are provided:
//!
//! * [`pcls_select`]: penalized constrained least squares. Each candidate is
//!   scored by `L_R(M) = RSS_R(M) + φ|M|`, where `RSS_R(M)` is the residual
//!   sum of squares of the ℓ1-constrained fit. The score has global
//!   sensitivity `(r + R)²`, so Laplace noise of scale `2(r + R)²/ε` per
//!   candidate makes the noisy minimiser ε-DP for any `R` and `φ`.
//! * [`pcpl_select`]: penalized constrained profile likelihood,
//!   `L*_R(M) = n log(RSS_R(M)/n) + φ|M|`. Its sensitivity is only locally
//!   bounded, so a first stage releases a noisy upper bound `G(D)` on that
//!   local sensitivity (ε₁-DP, valid with probability ≥ 1 − δ) and the
//!   second stage calibrates the candidate noise to it. Total: `(ε₁ + ε₂, δ)`.
//!
//! Call discipline: the only data-dependent input to the stage-two noise
//! scale is the stage-one output `G(D)`. Nothing else computed from the
//! data may feed the calibration.
//!
//! `R`, `φ` and `r` are caller-supplied constants. Choosing them from the
//! private data inside a selection call would void the guarantee.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ModelMask};
use crate::error::{Error, Result};
use crate::mechanisms::{
    argmin_with_ties, candidate_noise, compose_eps_delta, exponential_sample, laplace_from_stream,
    laplace_scale, noisy_argmin, tags, PrivacyBudget, RngStream, ScoredCandidate,
};
use crate::solver::{fit_constrained_ls, profile_loglik_floored, FitResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pcls,
    Pcpl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    #[default]
    NoisyArgmin,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    /// ℓ1 radius `R`.
    pub radius: f64,
    /// Per-variable penalty `φ_n`.
    pub phi: f64,
    /// For PCPL, `epsilon` is the stage-two budget and `delta` the failure
    /// probability of the stage-one bound.
    pub budget: PrivacyBudget,
    pub mechanism: Mechanism,
    /// Public bound on `|Y|`.
    pub r: f64,
    /// PCPL stage-one budget; defaults to `budget.epsilon()`.
    pub stage1_epsilon: Option<f64>,
    pub solver: SolverConfig,
}

impl SelectionConfig {
    pub fn new(radius: f64, phi: f64, budget: PrivacyBudget, r: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "R must be positive and finite, got {radius}"
            )));
        }
        if !(phi >= 0.0 && phi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "phi must be non-negative and finite, got {phi}"
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "r must be positive and finite, got {r}"
            )));
        }
        Ok(Self {
            radius,
            phi,
            budget,
            mechanism: Mechanism::NoisyArgmin,
            r,
            stage1_epsilon: None,
            solver: SolverConfig::default(),
        })
    }

    pub fn with_mechanism(mut self, mechanism: Mechanism) -> Self {
        self.mechanism = mechanism;
        self
    }

    pub fn with_stage1_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stage-one epsilon must be positive, got {eps}"
            )));
        }
        self.stage1_epsilon = Some(eps);
        Ok(self)
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    fn stage1_eps(&self) -> f64 {
        self.stage1_epsilon.unwrap_or(self.budget.epsilon())
    }

    fn r_plus_radius_sq(&self) -> f64 {
        (self.r + self.radius).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityKind {
    GlobalLs,
    LocalProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBound {
    pub kind: SensitivityKind,
    pub value: f64,
}

/// Global sensitivity `(r + R)²` of the constrained residual sum of squares.
pub fn ls_sensitivity(r: f64, radius: f64) -> SensitivityBound {
    assert!(r > 0.0 && radius > 0.0, "bounds must be positive");
    SensitivityBound {
        kind: SensitivityKind::GlobalLs,
        value: (r + radius).powi(2),
    }
}

/// Upper bound `n(r + R)² / (RSS_R(M) − (r + R)²)` on the local sensitivity
/// of `n log(RSS_R(M)/n)`. `None` when the denominator is not positive.
pub fn profile_local_sensitivity(n: usize, r: f64, radius: f64, rss: f64) -> Option<f64> {
    let c = (r + radius).powi(2);
    let denom = rss - c;
    (denom > 0.0).then(|| n as f64 * c / denom)
}

/// Outcome of the stage-one sensitivity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GEstimate {
    Bound(f64),
    /// The noisy denominator was not positive; carries its value.
    NonPositive(f64),
}

impl GEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            GEstimate::Bound(g) => Some(*g),
            GEstimate::NonPositive(_) => None,
        }
    }
}

/// `G(D) = n c / (min_M RSS_R(M) − c + c (Z_G − log(1/(2δ))) / ε₁)` with
/// `c = (r + R)²`.
pub fn g_of_d_formula(
    n: usize,
    r_plus_radius_sq: f64,
    min_rss: f64,
    stage1_eps: f64,
    delta: f64,
    z_g: f64,
) -> GEstimate {
    let c = r_plus_radius_sq;
    let shift = if stage1_eps.is_infinite() {
        0.0
    } else {
        c * (z_g - (1.0 / (2.0 * delta)).ln()) / stage1_eps
    };
    let denom = min_rss - c + shift;
    if denom > 0.0 {
        GEstimate::Bound(n as f64 * c / denom)
    } else {
        GEstimate::NonPositive(denom)
    }
}

/// Constrained fits for a list of candidates, computed once and reusable
/// across penalties and privacy levels.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub n: usize,
    pub radius: f64,
    pub max_abs_y: f64,
    pub r_data_dependent: bool,
    pub fits: Vec<FitResult>,
}

impl FittedModels {
    pub fn min_rss(&self) -> f64 {
        self.fits
            .iter()
            .map(|f| f.neg2_loglik)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn nonconverged(&self) -> usize {
        self.fits.iter().filter(|f| !f.converged).count()
    }

    pub fn masks(&self) -> impl Iterator<Item = ModelMask> + '_ {
        self.fits.iter().map(|f| f.mask)
    }
}

/// Fits every candidate (in parallel) under the ℓ1 radius.
pub fn fit_models(
    data: &Dataset,
    models: &[ModelMask],
    radius: f64,
    solver: &SolverConfig,
) -> Result<FittedModels> {
    if models.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let stats = data.sufficient_stats();
    let fits = models
        .par_iter()
        .map(|m| fit_constrained_ls(&stats, m, radius, solver))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedModels {
        n: data.n(),
        radius,
        max_abs_y: data.y().iter().fold(0.0, |a, y| a.max(y.abs())),
        r_data_dependent: data.r_is_data_dependent(),
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub mask: ModelMask,
    /// Absent when the exponential mechanism or the uniform fallback chose
    /// the model (no per-candidate noisy score exists).
    pub noisy_score: Option<f64>,
    /// Pre-noise score. Releasing it voids the privacy guarantee.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub algorithm: Algorithm,
    pub chosen: ModelMask,
    #[serde(with = "float_or_inf")]
    pub epsilon_total: f64,
    pub delta: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub phi_n: f64,
    pub r: f64,
    /// `r` was inferred from the observed response, which is not DP.
    pub r_data_dependent: bool,
    pub seed: u64,
    pub stream_id: u64,
    pub mechanism: Mechanism,
    pub fallback_uniform: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_of_d: Option<f64>,
    /// Sensitivity the candidate noise was calibrated to; absent on fallback.
    pub sensitivity_used: Option<f64>,
    pub nonconverged_fits: usize,
    pub models: Vec<ModelScore>,
}

impl SelectionReport {
    /// Copy with every clean score removed.
    pub fn redacted(&self) -> Self {
        let mut out = self.clone();
        out.models.iter_mut().for_each(|m| m.clean_score = None);
        out
    }
}

mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

fn check_inputs(fitted: &FittedModels, cfg: &SelectionConfig) -> Result<()> {
    if fitted.fits.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if fitted.radius != cfg.radius {
        return Err(Error::InvalidParameter(format!(
            "models were fitted with R = {} but the configuration has R = {}",
            fitted.radius, cfg.radius
        )));
    }
    if fitted.max_abs_y > cfg.r {
        return Err(Error::InvalidParameter(format!(
            "response reaches {} but the configured bound is r = {}",
            fitted.max_abs_y, cfg.r
        )));
    }
    Ok(())
}

/// Minimises the candidate scores with the configured mechanism.
/// `sensitivity` is the per-score sensitivity; noisy minimisation uses
/// scale `2 · sensitivity / ε`.
fn choose(
    masks: &[ModelMask],
    scores: &[f64],
    sensitivity: f64,
    epsilon: f64,
    mechanism: Mechanism,
    rng: &RngStream,
) -> Result<(ModelMask, Vec<Option<f64>>)> {
    let scale = laplace_scale(2.0 * sensitivity, epsilon);
    let candidates = masks
        .iter()
        .zip(scores)
        .map(|(m, s)| ScoredCandidate::new(*m, *s, scale))
        .collect::<Result<Vec<_>>>()?;
    match mechanism {
        Mechanism::NoisyArgmin => {
            let sel = noisy_argmin(&candidates, rng)?;
            Ok((sel.chosen, sel.noisy_scores.into_iter().map(Some).collect()))
        }
        Mechanism::Exponential => {
            let chosen = exponential_sample(&candidates, sensitivity, epsilon, rng)?;
            Ok((chosen, vec![None; masks.len()]))
        }
    }
}

/// Penalized constrained least squares selection (ε-DP).
pub fn pcls_select(
    data: &Dataset,
    models: &[ModelMask],
    cfg: &SelectionConfig,
    rng: &RngStream,
) -> Result<SelectionReport> {
    let fitted = fit_models(data, models, cfg.radius, &cfg.solver)?;
    pcls_from_fits(&fitted, cfg, rng)
}

pub fn pcls_scores(fitted: &FittedModels, phi: f64) -> Vec<f64> {
    fitted
        .fits
        .iter()
        .map(|f| f.neg2_loglik + phi * f.mask.size() as f64)
        .collect()
}

/// [`pcls_select`] on precomputed fits.
pub fn pcls_from_fits(
    fitted: &FittedModels,
    cfg: &SelectionConfig,
    rng: &RngStream,
) -> Result<SelectionReport> {
    check_inputs(fitted, cfg)?;
    if !cfg.budget.is_pure() {
        return Err(Error::InvalidParameter(
            "PCLS is ε-DP; delta must be 0".into(),
        ));
    }
    let masks: Vec<ModelMask> = fitted.masks().collect();
    let scores = pcls_scores(fitted, cfg.phi);
    let sensitivity = ls_sensitivity(cfg.r, cfg.radius).value;
    let (chosen, noisy) = choose(
        &masks,
        &scores,
        sensitivity,
        cfg.budget.epsilon(),
        cfg.mechanism,
        rng,
    )?;
    Ok(SelectionReport {
        algorithm: Algorithm::Pcls,
        chosen,
        epsilon_total: cfg.budget.epsilon(),
        delta: 0.0,
        radius: cfg.radius,
        phi_n: cfg.phi,
        r: cfg.r,
        r_data_dependent: fitted.r_data_dependent,
        seed: rng.seed,
        stream_id: rng.stream_id,
        mechanism: cfg.mechanism,
        fallback_uniform: false,
        g_of_d: None,
        sensitivity_used: Some(sensitivity),
        nonconverged_fits: fitted.nonconverged(),
        models: table(&masks, &scores, noisy),
    })
}

fn table(masks: &[ModelMask], clean: &[f64], noisy: Vec<Option<f64>>) -> Vec<ModelScore> {
    masks
        .iter()
        .zip(clean)
        .zip(noisy)
        .map(|((m, c), n)| ModelScore {
            mask: *m,
            noisy_score: n,
            clean_score: Some(*c),
        })
        .collect()
}

/// Stage one of PCPL: the noisy local-sensitivity bound `G(D)`.
pub fn compute_g_of_d(
    data: &Dataset,
    models: &[ModelMask],
    cfg: &SelectionConfig,
    stage1_eps: f64,
    rng: &RngStream,
) -> Result<GEstimate> {
    let fitted = fit_models(data, models, cfg.radius, &cfg.solver)?;
    check_inputs(&fitted, cfg)?;
    Ok(g_from_fits(&fitted, cfg, stage1_eps, rng))
}

/// The standard Laplace draw used for `Z_G` under `rng`.
pub fn g_noise(rng: &RngStream) -> f64 {
    laplace_from_stream(&rng.derive(tags::SENSITIVITY))
}

fn g_from_fits(fitted: &FittedModels, cfg: &SelectionConfig, stage1_eps: f64, rng: &RngStream) -> GEstimate {
    g_of_d_formula(
        fitted.n,
        cfg.r_plus_radius_sq(),
        fitted.min_rss(),
        stage1_eps,
        cfg.budget.delta(),
        g_noise(rng),
    )
}

pub fn pcpl_scores(fitted: &FittedModels, phi: f64) -> Vec<f64> {
    fitted
        .fits
        .iter()
        .map(|f| profile_loglik_floored(f.neg2_loglik, fitted.n) + phi * f.mask.size() as f64)
        .collect()
}

/// Penalized constrained profile likelihood selection (`(ε₁ + ε₂, δ)`-DP).
pub fn pcpl_select(
    data: &Dataset,
    models: &[ModelMask],
    cfg: &SelectionConfig,
    rng: &RngStream,
) -> Result<SelectionReport> {
    let fitted = fit_models(data, models, cfg.radius, &cfg.solver)?;
    pcpl_from_fits(&fitted, cfg, rng)
}

/// [`pcpl_select`] on precomputed fits.
pub fn pcpl_from_fits(
    fitted: &FittedModels,
    cfg: &SelectionConfig,
    rng: &RngStream,
) -> Result<SelectionReport> {
    check_inputs(fitted, cfg)?;
    let delta = cfg.budget.delta();
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(
            "PCPL needs delta in (0, 1)".into(),
        ));
    }
    let eps2 = cfg.budget.epsilon();
    let eps1 = cfg.stage1_eps();
    let total = compose_eps_delta(eps1, eps2, delta)?;

    let masks: Vec<ModelMask> = fitted.masks().collect();
    let scores = pcpl_scores(fitted, cfg.phi);
    let estimate = g_from_fits(fitted, cfg, eps1, rng);

    let (chosen, noisy, sensitivity, fallback) = match estimate {
        GEstimate::Bound(g) => {
            let (chosen, noisy) = choose(&masks, &scores, g, eps2, cfg.mechanism, rng)?;
            (chosen, noisy, Some(g), false)
        }
        GEstimate::NonPositive(_) => {
            // Output independent of the data.
            let mut canonical = masks.clone();
            canonical.sort();
            let k = rng.derive(tags::FALLBACK).rng().random_range(0..canonical.len());
            (canonical[k], vec![None; masks.len()], None, true)
        }
    };
    Ok(SelectionReport {
        algorithm: Algorithm::Pcpl,
        chosen,
        epsilon_total: total.epsilon(),
        delta: total.delta(),
        radius: cfg.radius,
        phi_n: cfg.phi,
        r: cfg.r,
        r_data_dependent: fitted.r_data_dependent,
        seed: rng.seed,
        stream_id: rng.stream_id,
        mechanism: cfg.mechanism,
        fallback_uniform: fallback,
        g_of_d: estimate.value(),
        sensitivity_used: sensitivity,
        nonconverged_fits: fitted.nonconverged(),
        models: table(&masks, &scores, noisy),
    })
}

/// Noiseless minimiser of a score table, with the usual tie rule.
pub fn deterministic_choice(masks: &[ModelMask], scores: &[f64]) -> Option<ModelMask> {
    (!masks.is_empty()).then(|| argmin_with_ties(masks.iter().copied().zip(scores.iter().copied())))
}

/// The standard Laplace draw PCLS/PCPL attach to `mask` under `rng`.
pub fn model_noise(rng: &RngStream, mask: &ModelMask) -> f64 {
    candidate_noise(rng, mask)
}
