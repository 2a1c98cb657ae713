//! Bounded regression datasets, covariate masks and sufficient statistics.
//!
//! Every privacy calibration downstream assumes `|x_ij| <= 1` and
//! `|y_i| <= r`. [`Dataset`] refuses to exist if either bound is violated;
//! bringing raw data into range is the job of [`standardize`].

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum number of covariates a [`ModelMask`] can address.
pub const MAX_COVARIATES: usize = 64;

/// A subset of covariates, stored as a bit-set (bit `j` set means covariate
/// `j` is active, zero-based).
///
/// Masks order by cardinality first and then by numeric bit value. This is
/// the canonical order used for enumeration and for breaking ties.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModelMask {
    bits: u64,
}

impl ModelMask {
    pub const EMPTY: ModelMask = ModelMask { bits: 0 };

    pub fn from_bits(bits: u64) -> Self {
        Self { bits }
    }

    /// Builds a mask from zero-based covariate indices.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
        let mut bits = 0u64;
        for j in indices {
            if j >= MAX_COVARIATES {
                return Err(Error::IndexOutOfRange {
                    index: j + 1,
                    d: MAX_COVARIATES,
                });
            }
            bits |= 1 << j;
        }
        Ok(Self { bits })
    }

    /// All of the first `d` covariates.
    pub fn full(d: usize) -> Self {
        assert!(d <= MAX_COVARIATES, "d = {d} exceeds {MAX_COVARIATES}");
        if d == MAX_COVARIATES {
            Self { bits: u64::MAX }
        } else {
            Self {
                bits: (1u64 << d) - 1,
            }
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn size(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, j: usize) -> bool {
        j < MAX_COVARIATES && self.bits & (1 << j) != 0
    }

    pub fn is_subset_of(&self, other: &ModelMask) -> bool {
        self.bits & !other.bits == 0
    }

    /// Index of the highest active covariate plus one (0 for the empty mask).
    pub fn width(&self) -> usize {
        MAX_COVARIATES - self.bits.leading_zeros() as usize
    }

    /// Active covariates, zero-based, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width()).filter(move |&j| self.contains(j))
    }

    /// Active covariates, one-based, as used in files and on the command line.
    pub fn one_based(&self) -> Vec<usize> {
        self.indices().map(|j| j + 1).collect()
    }
}

impl Ord for ModelMask {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.size()
            .cmp(&other.size())
            .then(self.bits.cmp(&other.bits))
    }
}

impl PartialOrd for ModelMask {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for ModelMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelMask{:?}", self.one_based())
    }
}

impl fmt::Display for ModelMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, j) in self.one_based().into_iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

// Serialized as the list of one-based indices.
impl Serialize for ModelMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModelMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(deserializer)?;
        if indices.contains(&0) {
            return Err(serde::de::Error::custom("covariate indices are one-based"));
        }
        ModelMask::from_indices(indices.into_iter().map(|j| j - 1))
            .map_err(serde::de::Error::custom)
    }
}

/// Covariates `x` (n x d, column-major, entries in `[-1, 1]`) and response
/// `y` (entries in `[-r, r]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    r: f64,
    r_data_dependent: bool,
}

impl Dataset {
    /// Builds a dataset from covariate columns, rejecting any entry outside
    /// its bound.
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>, r: f64) -> Result<Self> {
        Self::build(columns, y, r, false)
    }

    /// Builds a dataset whose response bound is taken from the data itself
    /// (`r = max |y|`). The resulting dataset is flagged: a data-dependent
    /// bound is not a public quantity.
    pub fn with_observed_bound(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let r = max_abs(&y);
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(
                "response is identically zero; cannot infer a positive bound r".into(),
            ));
        }
        Self::build(columns, y, r, true)
    }

    fn build(columns: Vec<Vec<f64>>, y: Vec<f64>, r: f64, r_data_dependent: bool) -> Result<Self> {
        let n = y.len();
        let d = columns.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("dataset has no rows".into()));
        }
        if d == 0 {
            return Err(Error::DimensionMismatch("dataset has no covariates".into()));
        }
        if d > MAX_COVARIATES {
            return Err(Error::DimensionOutOfRange {
                d,
                max: MAX_COVARIATES,
            });
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "response bound r must be positive and finite, got {r}"
            )));
        }
        let mut x = Vec::with_capacity(n * d);
        for (j, col) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "covariate {} has {} rows, response has {n}",
                    j + 1,
                    col.len()
                )));
            }
            for (i, &v) in col.iter().enumerate() {
                if !(v.abs() <= 1.0) {
                    return Err(Error::BoundViolation {
                        row: i,
                        column: Some(j),
                        value: v,
                        bound: 1.0,
                    });
                }
            }
            x.extend(col);
        }
        for (i, &v) in y.iter().enumerate() {
            if !(v.abs() <= r) {
                return Err(Error::BoundViolation {
                    row: i,
                    column: None,
                    value: v,
                    bound: r,
                });
            }
        }
        Ok(Self {
            n,
            d,
            x,
            y,
            r,
            r_data_dependent,
        })
    }

    /// Returns a copy with a constant column of ones prepended as covariate 1.
    pub fn with_intercept(&self) -> Result<Self> {
        if self.d + 1 > MAX_COVARIATES {
            return Err(Error::DimensionOutOfRange {
                d: self.d + 1,
                max: MAX_COVARIATES,
            });
        }
        let mut x = vec![1.0; self.n];
        x.extend_from_slice(&self.x);
        Ok(Self {
            d: self.d + 1,
            x,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// True when `r` was inferred from the observed response.
    pub fn r_is_data_dependent(&self) -> bool {
        self.r_data_dependent
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.x(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|j| self.column(j).to_vec()).collect()
    }

    /// Replaces row `i`, keeping the same bound. Used to build adjacent datasets.
    pub fn replace_row(&self, i: usize, x_row: &[f64], y_value: f64) -> Result<Self> {
        if i >= self.n || x_row.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "replacement row {i} with {} covariates for a {}x{} dataset",
                x_row.len(),
                self.n,
                self.d
            )));
        }
        let mut columns = self.columns();
        for (col, &v) in columns.iter_mut().zip(x_row) {
            col[i] = v;
        }
        let mut y = self.y.clone();
        y[i] = y_value;
        Self::build(columns, y, self.r, self.r_data_dependent)
    }

    pub fn sufficient_stats(&self) -> SufficientStats {
        SufficientStats::from_dataset(self)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, &a| m.max(a.abs()))
}

/// How raw data is brought into the bounded domain.
#[derive(Debug, Clone, PartialEq)]
pub enum StandardizePolicy {
    /// Truncate covariates to `[-1, 1]` and the response to `[-r, r]`. With
    /// `r = None` the response is left as is and `r = max |y|`.
    Clip { r: Option<f64> },
    /// Map each covariate affinely from its public range `(lo, hi)` onto
    /// `[-1, 1]`, and the response from `y_range` onto `[-r, r]`. Values
    /// outside a declared range are clipped after mapping. With `r = None`
    /// the response is mapped onto `[-1, 1]` and `r = max |y|`.
    Rescale {
        x_ranges: Vec<(f64, f64)>,
        y_range: (f64, f64),
        r: Option<f64>,
    },
}

pub fn standardize(raw_x: &[Vec<f64>], raw_y: &[f64], policy: &StandardizePolicy) -> Result<Dataset> {
    let n = raw_y.len();
    if let Some((j, col)) = raw_x.iter().enumerate().find(|(_, c)| c.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "covariate {} has {} rows, response has {n}",
            j + 1,
            col.len()
        )));
    }
    let (columns, y, r) = match policy {
        StandardizePolicy::Clip { r } => {
            let columns: Vec<Vec<f64>> = raw_x
                .iter()
                .map(|c| c.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
                .collect();
            let y: Vec<f64> = match r {
                Some(r) => raw_y.iter().map(|v| v.clamp(-r, *r)).collect(),
                None => raw_y.to_vec(),
            };
            (columns, y, *r)
        }
        StandardizePolicy::Rescale {
            x_ranges,
            y_range,
            r,
        } => {
            if x_ranges.len() != raw_x.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} covariate ranges for {} covariates",
                    x_ranges.len(),
                    raw_x.len()
                )));
            }
            let mut columns = Vec::with_capacity(raw_x.len());
            for (j, (col, &(lo, hi))) in raw_x.iter().zip(x_ranges).enumerate() {
                let map = affine_to_unit(lo, hi, || format!("covariate {}", j + 1))?;
                columns.push(col.iter().map(|&v| map(v)).collect());
            }
            let map = affine_to_unit(y_range.0, y_range.1, || "response".to_string())?;
            let scale = r.unwrap_or(1.0);
            let y = raw_y.iter().map(|&v| scale * map(v)).collect();
            (columns, y, *r)
        }
    };
    match r {
        Some(r) => Dataset::new(columns, y, r),
        None => Dataset::with_observed_bound(columns, y),
    }
}

fn affine_to_unit(lo: f64, hi: f64, what: impl Fn() -> String) -> Result<impl Fn(f64) -> f64> {
    if hi == lo {
        return Err(Error::ZeroWidthRange(what()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "range ({lo}, {hi}) for {} is not an increasing finite interval",
            what()
        )));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    Ok(move |v: f64| ((v - mid) / half).clamp(-1.0, 1.0))
}

/// `XᵀX`, `XᵀY`, `YᵀY` and `n`: everything the least-squares solver needs.
///
/// `xtx` is stored row-major. A dimension-zero instance (from restricting to
/// the empty mask) keeps `yty` and `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    dim: usize,
    n: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
}

impl SufficientStats {
    pub fn from_dataset(data: &Dataset) -> Self {
        let d = data.d();
        let mut xtx = vec![0.0; d * d];
        let mut xty = vec![0.0; d];
        let mut yty = 0.0;
        let mut row = vec![0.0; d];
        for i in 0..data.n() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = data.x(i, j);
            }
            let yi = data.y[i];
            yty += yi * yi;
            for j in 0..d {
                xty[j] += row[j] * yi;
                for k in j..d {
                    xtx[j * d + k] += row[j] * row[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                xtx[j * d + k] = xtx[k * d + j];
            }
        }
        Self {
            dim: d,
            n: data.n(),
            xtx,
            xty,
            yty,
        }
    }

    /// Assembles statistics from precomputed parts. `xtx` is row-major.
    pub fn from_parts(n: usize, xtx: Vec<f64>, xty: Vec<f64>, yty: f64) -> Result<Self> {
        let dim = xty.len();
        if xtx.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "xtx has {} entries, expected {}",
                xtx.len(),
                dim * dim
            )));
        }
        Ok(Self {
            dim,
            n,
            xtx,
            xty,
            yty,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xtx(&self, j: usize, k: usize) -> f64 {
        self.xtx[j * self.dim + k]
    }

    pub fn xtx_row_major(&self) -> &[f64] {
        &self.xtx
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// Principal submatrix / subvector on the active covariates of `mask`.
    pub fn restrict(&self, mask: &ModelMask) -> Result<SufficientStats> {
        if mask.width() > self.dim {
            return Err(Error::DimensionMismatch(format!(
                "mask {mask} addresses covariates beyond d = {}",
                self.dim
            )));
        }
        let idx: Vec<usize> = mask.indices().collect();
        let m = idx.len();
        let mut xtx = Vec::with_capacity(m * m);
        for &j in &idx {
            for &k in &idx {
                xtx.push(self.xtx(j, k));
            }
        }
        Ok(SufficientStats {
            dim: m,
            n: self.n,
            xtx,
            xty: idx.iter().map(|&j| self.xty[j]).collect(),
            yty: self.yty,
        })
    }

    /// `‖Y − Xβ‖² = YᵀY − 2βᵀXᵀY + βᵀXᵀXβ`.
    pub fn rss(&self, beta: &[f64]) -> f64 {
        debug_assert_eq!(beta.len(), self.dim);
        let mut quad = 0.0;
        for (row, bj) in self.xtx.chunks_exact(self.dim.max(1)).zip(beta) {
            let acc: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            quad += bj * acc;
        }
        let lin: f64 = beta.iter().zip(&self.xty).map(|(b, c)| b * c).sum();
        self.yty - 2.0 * lin + quad
    }
}
