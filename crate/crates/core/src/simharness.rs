//! Synthetic regression data and replicated selection sweeps.
//!
//! Every replication draws its dataset from a stream keyed by `(n,
//! replication)` and its selection noise from a stream keyed by the full grid
//! point plus the replication index. Results are therefore identical no
//! matter how replications are scheduled across threads, and all grid points
//! at a given `n` see the same datasets.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, ModelMask};
use crate::enumeration::all_subsets;
use crate::error::{Error, Result};
use crate::mechanisms::{hash_words, tags, PrivacyBudget, RngStream};
use crate::selection::{
    deterministic_choice, fit_models, pcls_from_fits, pcls_scores, pcpl_from_fits, pcpl_scores,
    Algorithm, Mechanism, SelectionConfig,
};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XLaw {
    /// Independent Uniform[−1, 1] entries.
    UniformPm1,
}

/// Linear model `Y = Xβ₀ + W`, `W ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub beta0: Vec<f64>,
    pub sigma: f64,
    pub x_law: XLaw,
    pub seed: RngStream,
}

impl SyntheticSpec {
    pub fn new(n: usize, beta0: Vec<f64>, sigma: f64, seed: RngStream) -> Result<Self> {
        if n == 0 || beta0.is_empty() {
            return Err(Error::InvalidParameter("need n >= 1 and a non-empty beta0".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            n,
            beta0,
            sigma,
            x_law: XLaw::UniformPm1,
            seed,
        })
    }

    /// `β₀ = (1, 1, 1, 0, 0, 0)`, unit noise.
    pub fn model1(n: usize, seed: RngStream) -> Self {
        Self::new(n, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0], 1.0, seed).expect("valid preset")
    }

    /// `β₀ = (1.5, 1, 0.5, 0, 0, 0)`, unit noise.
    pub fn model2(n: usize, seed: RngStream) -> Self {
        Self::new(n, vec![1.5, 1.0, 0.5, 0.0, 0.0, 0.0], 1.0, seed).expect("valid preset")
    }

    pub fn preset(model_id: u32, n: usize, seed: RngStream) -> Result<Self> {
        match model_id {
            1 => Ok(Self::model1(n, seed)),
            2 => Ok(Self::model2(n, seed)),
            _ => Err(Error::InvalidParameter(format!(
                "unknown model id {model_id}; presets are 1 and 2"
            ))),
        }
    }

    pub fn d(&self) -> usize {
        self.beta0.len()
    }

    pub fn true_mask(&self) -> ModelMask {
        ModelMask::from_indices(
            self.beta0
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| j),
        )
        .expect("beta0 length checked against mask width")
    }
}

/// Draws a dataset from `spec`. The response bound is set to the observed
/// `max |Y|` and the dataset is flagged accordingly.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, ModelMask)> {
    let mut rng = spec.seed.derive(tags::DATA).rng();
    let d = spec.d();
    let mut cols = vec![Vec::with_capacity(spec.n); d];
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut yi = 0.0;
        for (col, b) in cols.iter_mut().zip(&spec.beta0) {
            let x: f64 = match spec.x_law {
                XLaw::UniformPm1 => rng.random_range(-1.0..=1.0),
            };
            yi += x * b;
            col.push(x);
        }
        let w: f64 = rng.sample(StandardNormal);
        y.push(yi + spec.sigma * w);
    }
    Ok((Dataset::with_observed_bound(cols, y)?, spec.true_mask()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiGrid {
    Explicit(Vec<f64>),
    /// `0` plus 40 log-spaced points on `[0.01 n, n/2]`.
    Default,
}

impl PhiGrid {
    pub fn values(&self, n: usize) -> Vec<f64> {
        match self {
            PhiGrid::Explicit(v) => v.clone(),
            PhiGrid::Default => default_phi_grid(n),
        }
    }
}

pub fn default_phi_grid(n: usize) -> Vec<f64> {
    let lo = (0.01 * n as f64).ln();
    let hi = (0.5 * n as f64).ln();
    let k = 40;
    std::iter::once(0.0)
        .chain((0..k).map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub radius_values: Vec<f64>,
    pub phi: PhiGrid,
    pub eps_values: Vec<f64>,
    /// Must be `[0.0]` for PCLS.
    pub delta_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub algorithm: Algorithm,
    pub mechanism: Mechanism,
    /// Label written to the `model_id` column.
    pub model_id: u32,
    /// Defaults to every non-empty subset.
    pub candidates: Option<Vec<ModelMask>>,
    pub solver: SolverConfig,
    /// Record wall-clock time per selection. Off by default because timings
    /// make output files differ between otherwise identical runs.
    pub timing: bool,
}

impl SweepGrid {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            radius_values: vec![3.5],
            phi: PhiGrid::Default,
            eps_values: vec![1.0],
            delta_values: vec![match algorithm {
                Algorithm::Pcls => 0.0,
                Algorithm::Pcpl => 1e-4,
            }],
            n_values: vec![100],
            replications: 500,
            algorithm,
            mechanism: Mechanism::NoisyArgmin,
            model_id: 1,
            candidates: None,
            solver: SolverConfig::default(),
            timing: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let nonempty = !self.radius_values.is_empty()
            && !self.eps_values.is_empty()
            && !self.delta_values.is_empty()
            && !self.n_values.is_empty()
            && !matches!(&self.phi, PhiGrid::Explicit(v) if v.is_empty());
        if !nonempty {
            return Err(Error::InvalidParameter("every grid list must be non-empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if self.algorithm == Algorithm::Pcls && self.delta_values.iter().any(|&d| d != 0.0) {
            return Err(Error::InvalidParameter("PCLS takes delta = 0 only".into()));
        }
        if self.algorithm == Algorithm::Pcpl && self.delta_values.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(Error::InvalidParameter("PCPL needs delta in (0, 1)".into()));
        }
        if self.n_values.contains(&0) {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub d: usize,
    pub model_id: u32,
    #[serde(rename = "R")]
    pub radius: f64,
    pub phi: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub algorithm: Algorithm,
    pub replications: usize,
    pub prop_correct: f64,
    pub prop_agree: f64,
    pub fallback_rate: f64,
    pub mean_runtime_ms: Option<f64>,
    pub nonconverged_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "n",
    "d",
    "model_id",
    "R",
    "phi",
    "epsilon",
    "delta",
    "algorithm",
    "replications",
    "prop_correct",
    "prop_agree",
    "fallback_rate",
    "mean_runtime_ms",
];

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Input(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.d.to_string(),
                r.model_id.to_string(),
                fmt_f64(r.radius),
                fmt_f64(r.phi),
                fmt_f64(r.epsilon),
                fmt_f64(r.delta),
                match r.algorithm {
                    Algorithm::Pcls => "pcls".to_string(),
                    Algorithm::Pcpl => "pcpl".to_string(),
                },
                r.replications.to_string(),
                fmt_f64(r.prop_correct),
                fmt_f64(r.prop_agree),
                fmt_f64(r.fallback_rate),
                r.mean_runtime_ms.map(fmt_f64).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Input(e.to_string()))
    }

    pub fn nonconverged_fits(&self) -> usize {
        self.rows.iter().map(|r| r.nonconverged_fits).sum()
    }

    /// Rows with the given `(n, R, ε)`, in φ order.
    pub fn slice(&self, n: usize, radius: f64, epsilon: f64) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.radius == radius && r.epsilon == epsilon)
            .collect()
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    correct: u64,
    agree: u64,
    fallback: u64,
    nanos: u128,
    nonconverged: u64,
}

struct GridPoint {
    radius: f64,
    phi: f64,
    epsilon: f64,
    delta: f64,
}

/// Runs every grid point for `grid.replications` synthetic datasets drawn
/// from `template` (whose `n` is overridden by the grid).
pub fn run_sweep(grid: &SweepGrid, template: &SyntheticSpec) -> Result<SweepResult> {
    grid.validate()?;
    let d = template.d();
    let candidates: Vec<ModelMask> = match &grid.candidates {
        Some(c) if c.is_empty() => return Err(Error::EmptyCandidates),
        Some(c) => c.clone(),
        None => all_subsets(d, false, None)?.masks().to_vec(),
    };

    let mut rows = Vec::new();
    for &n in &grid.n_values {
        let phis = grid.phi.values(n);
        let mut points = Vec::new();
        for &radius in &grid.radius_values {
            for &phi in &phis {
                for &epsilon in &grid.eps_values {
                    for &delta in &grid.delta_values {
                        points.push(GridPoint {
                            radius,
                            phi,
                            epsilon,
                            delta,
                        });
                    }
                }
            }
        }
        // Validate every configuration before spending any compute.
        for p in &points {
            config_for(grid, p, 1.0)?;
        }

        let totals = (0..grid.replications)
            .into_par_iter()
            .map(|rep| replicate(grid, template, &candidates, &points, n, rep))
            .try_reduce(
                || vec![Tally::default(); points.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        x.correct += y.correct;
                        x.agree += y.agree;
                        x.fallback += y.fallback;
                        x.nanos += y.nanos;
                        x.nonconverged += y.nonconverged;
                    }
                    Ok(a)
                },
            )?;

        let reps = grid.replications as f64;
        for (p, t) in points.iter().zip(totals) {
            rows.push(SweepRow {
                n,
                d,
                model_id: grid.model_id,
                radius: p.radius,
                phi: p.phi,
                epsilon: p.epsilon,
                delta: p.delta,
                algorithm: grid.algorithm,
                replications: grid.replications,
                prop_correct: t.correct as f64 / reps,
                prop_agree: t.agree as f64 / reps,
                fallback_rate: t.fallback as f64 / reps,
                mean_runtime_ms: grid.timing.then(|| t.nanos as f64 / reps / 1e6),
                nonconverged_fits: t.nonconverged as usize,
            });
        }
    }
    Ok(SweepResult { rows })
}

fn config_for(grid: &SweepGrid, p: &GridPoint, r: f64) -> Result<SelectionConfig> {
    let budget = PrivacyBudget::new(p.epsilon, p.delta)?;
    Ok(SelectionConfig::new(p.radius, p.phi, budget, r)?
        .with_mechanism(grid.mechanism)
        .with_solver(grid.solver))
}

fn replicate(
    grid: &SweepGrid,
    template: &SyntheticSpec,
    candidates: &[ModelMask],
    points: &[GridPoint],
    n: usize,
    rep: usize,
) -> Result<Vec<Tally>> {
    let spec = SyntheticSpec {
        n,
        seed: template
            .seed
            .derive(hash_words(&[tags::DATA, n as u64, rep as u64])),
        ..template.clone()
    };
    let (data, truth) = generate(&spec)?;
    let r = data.r();

    let mut out = vec![Tally::default(); points.len()];
    let mut fitted = None;
    let mut fit_nanos = 0u128;
    let mut sharing = 1u128;
    for (k, p) in points.iter().enumerate() {
        if fitted.as_ref().is_none_or(|f: &crate::selection::FittedModels| f.radius != p.radius) {
            let start = Instant::now();
            fitted = Some(fit_models(&data, candidates, p.radius, &grid.solver)?);
            fit_nanos = start.elapsed().as_nanos();
            sharing = points.iter().filter(|q| q.radius == p.radius).count() as u128;
        }
        let fitted = fitted.as_ref().expect("fitted above");
        let cfg = config_for(grid, p, r)?;
        let noise = template.seed.derive(hash_words(&[
            tags::REPLICATION,
            n as u64,
            p.radius.to_bits(),
            p.phi.to_bits(),
            p.epsilon.to_bits(),
            p.delta.to_bits(),
            rep as u64,
        ]));
        let start = Instant::now();
        let (report, scores) = match grid.algorithm {
            Algorithm::Pcls => (pcls_from_fits(fitted, &cfg, &noise)?, pcls_scores(fitted, p.phi)),
            Algorithm::Pcpl => (pcpl_from_fits(fitted, &cfg, &noise)?, pcpl_scores(fitted, p.phi)),
        };
        let elapsed = start.elapsed().as_nanos() + fit_nanos / sharing;
        let baseline = deterministic_choice(candidates, &scores).expect("non-empty candidates");
        let t = &mut out[k];
        t.correct += (report.chosen == truth) as u64;
        t.agree += (report.chosen == baseline) as u64;
        t.fallback += report.fallback_uniform as u64;
        t.nanos += elapsed;
        t.nonconverged += fitted.nonconverged() as u64;
    }
    Ok(out)
}
