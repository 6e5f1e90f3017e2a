//! Monte Carlo harness: replicate fan-out, moment estimators, growth fits,
//! a normality check and the divergence probe for `rho(F)`.
//!
//! Every replicate draws its own field from `mix_seed(master, [scale, rep])`,
//! and replicates are collected in order, so results do not depend on the
//! size of the rayon pool.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::field::{mix_seed, splitmix64, FieldError, LazyField, MAX_RADIUS};
use crate::fpp::{box_time, guard_radius, passage_time, point_time, FppError, DEFAULT_GUARD};
use crate::invasion::{constrained_geodesic, default_margin, invade, invasion_window, InvasionError, StopCondition};
use crate::lattice::{AnnulusSpec, BoxSpec, Vertex};
use crate::percolation::{find_m_and_circuit_capped, Circuit, PercolationError, DEFAULT_SCAN_CAP};
use crate::weights::{series_criterion, Classification, DistributionSpec, WeightsError, UNDECIDED_BAND};

/// Replicate count below which the normality check reports `Underpowered`.
pub const CLT_MIN_REPS: usize = 500;
/// Kolmogorov-Smirnov band coefficient (asymptotic 1% level).
pub const KS_COEFFICIENT: f64 = 1.63;
pub const SKEWNESS_LIMIT: f64 = 0.2;
/// Largest box searched for the circuit `C_n`.
pub const CIRCUIT_MAX_RADIUS: u32 = 1 << 12;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("degenerate sample at scale {scale}: all {reps} replicates equal {value}")]
    DegenerateSample { scale: String, reps: usize, value: f64 },
    #[error("scale {scale}, replicate {rep}: {source}")]
    Replicate {
        scale: String,
        rep: usize,
        #[source]
        source: Box<McError>,
    },
    #[error(transparent)]
    Fpp(#[from] FppError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Invasion(#[from] InvasionError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

/// What is measured in each replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `T(0, ∂B(r))` for each radius.
    BoxTime { radii: Vec<u32> },
    /// `T(0, x)` for each point, inside the guard box.
    PointTime { points: Vec<(i32, i32)> },
    /// `T(0, C_n)` to the innermost p_c-open circuit at or beyond scale `n`.
    CircuitTime { exponents: Vec<i32> },
    /// Time of the constrained geodesic `gamma_n` inside the invasion cluster.
    ConstrainedTime { exponents: Vec<u32> },
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::BoxTime { .. } => "box_time",
            Quantity::PointTime { .. } => "point_time",
            Quantity::CircuitTime { .. } => "circuit_time",
            Quantity::ConstrainedTime { .. } => "constrained_time",
        }
    }

    pub fn scale_count(&self) -> usize {
        match self {
            Quantity::BoxTime { radii } => radii.len(),
            Quantity::PointTime { points } => points.len(),
            Quantity::CircuitTime { exponents } => exponents.len(),
            Quantity::ConstrainedTime { exponents } => exponents.len(),
        }
    }

    /// Label of scale `i` as written to the results table.
    pub fn scale_label(&self, i: usize) -> String {
        match self {
            Quantity::BoxTime { radii } => radii[i].to_string(),
            Quantity::PointTime { points } => format!("({},{})", points[i].0, points[i].1),
            Quantity::CircuitTime { exponents } => exponents[i].to_string(),
            Quantity::ConstrainedTime { exponents } => exponents[i].to_string(),
        }
    }

    /// Seed coordinate of scale `i`.
    fn scale_key(&self, i: usize) -> u64 {
        match self {
            Quantity::BoxTime { radii } => radii[i] as u64,
            Quantity::PointTime { points } => ((points[i].0 as u32 as u64) << 32) | points[i].1 as u32 as u64,
            Quantity::CircuitTime { exponents } => exponents[i] as u32 as u64,
            Quantity::ConstrainedTime { exponents } => exponents[i] as u64,
        }
    }

    /// Dyadic exponent of scale `i`, where one exists.
    fn exponent(&self, i: usize) -> Option<f64> {
        match self {
            Quantity::BoxTime { radii } => Some((radii[i] as f64).log2()),
            Quantity::PointTime { .. } => None,
            Quantity::CircuitTime { exponents } => Some(exponents[i] as f64),
            Quantity::ConstrainedTime { exponents } => Some(exponents[i] as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub distribution: DistributionSpec,
    pub quantity: Quantity,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default = "default_guard")]
    pub guard_ratio: f64,
    /// Resample count for a bootstrap `stderr_var`; `None` uses the
    /// fourth-moment formula.
    #[serde(default)]
    pub bootstrap_resamples: Option<usize>,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

impl ExperimentConfig {
    pub fn new(distribution: DistributionSpec, quantity: Quantity, reps: usize, master_seed: u64) -> Self {
        ExperimentConfig { distribution, quantity, reps, master_seed, guard_ratio: DEFAULT_GUARD, bootstrap_resamples: None }
    }

    pub fn validate(&self) -> Result<(), McError> {
        let bad = |m: String| Err(McError::InvalidConfig(m));
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if !(self.guard_ratio >= 1.5) {
            return bad(format!("guard ratio must be at least 1.5, got {}", self.guard_ratio));
        }
        if self.quantity.scale_count() == 0 {
            return bad("empty scale list".into());
        }
        let increasing = |v: &[i64]| v.windows(2).all(|w| w[0] < w[1]);
        match &self.quantity {
            Quantity::BoxTime { radii } => {
                if !increasing(&radii.iter().map(|r| *r as i64).collect::<Vec<_>>()) {
                    return bad("radii must be strictly increasing".into());
                }
                if radii[0] == 0 || *radii.last().unwrap() > MAX_RADIUS {
                    return bad(format!("radii must lie in 1..={MAX_RADIUS}"));
                }
            }
            Quantity::PointTime { points } => {
                for p in points {
                    let r = guard_radius(Vertex::new(p.0, p.1), self.guard_ratio);
                    if r > MAX_RADIUS {
                        return bad(format!("point {p:?} needs radius {r} > {MAX_RADIUS}"));
                    }
                }
            }
            Quantity::CircuitTime { exponents } => {
                if !increasing(&exponents.iter().map(|n| *n as i64).collect::<Vec<_>>()) {
                    return bad("exponents must be strictly increasing".into());
                }
                if exponents[0] < -1 || *exponents.last().unwrap() > 10 {
                    return bad("circuit exponents must lie in -1..=10".into());
                }
            }
            Quantity::ConstrainedTime { exponents } => {
                if !increasing(&exponents.iter().map(|n| *n as i64).collect::<Vec<_>>()) {
                    return bad("exponents must be strictly increasing".into());
                }
                if *exponents.last().unwrap() > 12 {
                    return bad("constrained-time exponents must be at most 12".into());
                }
            }
        }
        if let Some(b) = self.bootstrap_resamples {
            if b < 2 {
                return bad("bootstrap needs at least 2 resamples".into());
            }
        }
        Ok(())
    }

    /// Seed of replicate `rep` at scale `i`.
    pub fn replicate_seed(&self, i: usize, rep: usize) -> u64 {
        mix_seed(self.master_seed, &[self.quantity.scale_key(i), rep as u64])
    }
}

/// One replicate of scale `i` drawn from `seed`.
pub fn sample_once(cfg: &ExperimentConfig, i: usize, seed: u64) -> Result<f64, McError> {
    let d = &cfg.distribution;
    match &cfg.quantity {
        Quantity::BoxTime { radii } => {
            let f = LazyField::new(BoxSpec::new(radii[i]), seed)?;
            Ok(box_time(&f, d, radii[i])?.time)
        }
        Quantity::PointTime { points } => {
            let x = Vertex::new(points[i].0, points[i].1);
            let f = LazyField::new(BoxSpec::new(guard_radius(x, cfg.guard_ratio).max(1)), seed)?;
            Ok(point_time(&f, d, x, cfg.guard_ratio)?.time)
        }
        Quantity::CircuitTime { exponents } => circuit_time(d, exponents[i], seed),
        Quantity::ConstrainedTime { exponents } => {
            let n = exponents[i];
            let (stop, radius) = invasion_window(n, default_margin(n));
            let f = LazyField::new(BoxSpec::new(radius), seed)?;
            let c = invade(&f, StopCondition::ReachedRadius(stop))?;
            Ok(constrained_geodesic(&f, d, &c, n)?.0.time)
        }
    }
}

/// `T(0, C_n)` on the field drawn from `seed`.
fn circuit_time(d: &DistributionSpec, n: i32, seed: u64) -> Result<f64, McError> {
    let (_, c, radius) = locate_circuit(n, seed)?;
    let f = LazyField::new(BoxSpec::new(radius), seed)?;
    Ok(passage_time(&f, d, &[Vertex::ORIGIN], &c.vertices, None)?.time)
}

/// `m(n)` and `C_n` for the field drawn from `seed`, doubling the box up to
/// [`CIRCUIT_MAX_RADIUS`] while the annulus scan runs out of room. Also
/// returns the radius of the box that was searched last.
pub fn locate_circuit(n: i32, seed: u64) -> Result<(i32, Circuit, u32), McError> {
    let mut radius = AnnulusSpec::new(n.max(-1) + 1).outer_radius();
    loop {
        let f = LazyField::new(BoxSpec::new(radius), seed)?;
        match find_m_and_circuit_capped(&f, n, DEFAULT_SCAN_CAP) {
            Ok((m, c)) => return Ok((m, c, radius)),
            Err(PercolationError::ScanCapExceeded { box_limited: true, .. }) if radius < CIRCUIT_MAX_RADIUS => {
                radius = (radius * 2).min(CIRCUIT_MAX_RADIUS);
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// All replicates of scale `i`, in replicate order.
pub fn sample_scale(cfg: &ExperimentConfig, i: usize) -> Result<Vec<f64>, McError> {
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            sample_once(cfg, i, cfg.replicate_seed(i, rep)).map_err(|e| McError::Replicate {
                scale: cfg.quantity.scale_label(i),
                rep,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Sample moments of one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
    pub stderr_mean: f64,
    pub stderr_var: f64,
    pub reps: usize,
}

impl Moments {
    /// Requires at least two values. `stderr_var` uses
    /// `Var(s^2) ≈ (m4 - (n-3)/(n-1) s^4) / n` with `m4` the fourth central
    /// sample moment.
    pub fn from_sample(xs: &[f64]) -> Moments {
        let n = xs.len();
        assert!(n >= 2, "need at least two values");
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let var = ss / (nf - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let var_of_var = ((m4 - (nf - 3.0) / (nf - 1.0) * var * var) / nf).max(0.0);
        Moments { mean, var, stderr_mean: (var / nf).sqrt(), stderr_var: var_of_var.sqrt(), reps: n }
    }
}

/// Bootstrap standard error of the sample variance with a deterministic
/// resampling stream.
pub fn bootstrap_stderr_var(xs: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = xs.len();
    let vars: Vec<f64> = (0..resamples)
        .map(|b| {
            let mut state = mix_seed(seed, &[b as u64]);
            let draw: Vec<f64> = (0..n)
                .map(|_| {
                    state = splitmix64(state);
                    xs[(state % n as u64) as usize]
                })
                .collect();
            Moments::from_sample(&draw).var
        })
        .collect();
    Moments::from_sample(&vars).var.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub scale: String,
    pub quantity: String,
    pub mean: f64,
    pub var: f64,
    pub stderr_mean: f64,
    pub stderr_var: f64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `c · sum_{k=2}^n F^{-1}(p_c + 2^{-k})` (squared terms for the variance).
    Series,
    /// `c · n`, i.e. `c · log2(radius)`.
    Log,
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitModel::Series => write!(f, "series"),
            FitModel::Log => write!(f, "log"),
        }
    }
}

/// Least-squares fit through the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub model: FitModel,
    pub c_hat: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub quantity: String,
    pub rows: Vec<EstimateRow>,
    pub mean_fit: Option<Fit>,
    pub var_fit: Option<Fit>,
}

impl EstimateTable {
    pub const CSV_HEADER: [&'static str; 8] =
        ["scale", "quantity", "mean", "var", "stderr_mean", "stderr_var", "reps", "seed"];

    /// Writes `scale,quantity,mean,var,stderr_mean,stderr_var,reps,seed`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `sum_{k=2}^n F^{-1}(p_c + 2^{-k})`, with each term raised to `power`.
pub fn series_partial_sum(d: &DistributionSpec, n: f64, power: i32) -> f64 {
    let top = n.floor() as i64;
    (2..=top).map(|k| d.quantile_above_pc((-(k as f64)).exp2()).powi(power)).sum()
}

/// Ordinary least squares `y = slope · x + intercept`, returning
/// `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Least squares `y = c · x`; `r_squared` is measured against the mean of `y`.
pub fn proportional_fit(model: FitModel, x: &[f64], y: &[f64]) -> Option<Fit> {
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if x.len() < 2 || sxx == 0.0 {
        return None;
    }
    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - c * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { if ss_res == 0.0 { 1.0 } else { 0.0 } } else { 1.0 - ss_res / ss_tot };
    Some(Fit { model, c_hat: c, r_squared })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EstimateTable, McError> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], handing each row to `on_row` as soon as its scale
/// finishes so callers can keep partial results when a later scale fails.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut on_row: impl FnMut(&EstimateRow)) -> Result<EstimateTable, McError> {
    cfg.validate()?;
    let q = &cfg.quantity;
    let mut rows = Vec::with_capacity(q.scale_count());
    for i in 0..q.scale_count() {
        let xs = sample_scale(cfg, i)?;
        let mut m = Moments::from_sample(&xs);
        if let Some(b) = cfg.bootstrap_resamples {
            m.stderr_var = bootstrap_stderr_var(&xs, b, mix_seed(cfg.master_seed, &[q.scale_key(i), u64::MAX]));
        }
        let row = EstimateRow {
            scale: q.scale_label(i),
            quantity: q.name().to_string(),
            mean: m.mean,
            var: m.var,
            stderr_mean: m.stderr_mean,
            stderr_var: m.stderr_var,
            reps: m.reps,
            seed: cfg.master_seed,
        };
        on_row(&row);
        rows.push(row);
    }
    let exps: Option<Vec<f64>> = (0..q.scale_count()).map(|i| q.exponent(i)).collect();
    let (mean_fit, var_fit) = match exps {
        Some(ns) => {
            let s1: Vec<f64> = ns.iter().map(|n| series_partial_sum(&cfg.distribution, *n, 1)).collect();
            let s2: Vec<f64> = ns.iter().map(|n| series_partial_sum(&cfg.distribution, *n, 2)).collect();
            let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
            let vars: Vec<f64> = rows.iter().map(|r| r.var).collect();
            (proportional_fit(FitModel::Series, &s1, &means), proportional_fit(FitModel::Series, &s2, &vars))
        }
        None => (None, None),
    };
    Ok(EstimateTable { quantity: q.name().to_string(), rows, mean_fit, var_fit })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CltVerdict {
    ConsistentWithNormal,
    Rejected,
    Underpowered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub scale: String,
    pub reps: usize,
    pub raw_sample: Vec<f64>,
    /// `(x - mean) / s` with the unbiased sample standard deviation `s`.
    pub standardized_sample: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_threshold: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub verdict: CltVerdict,
}

impl CltReport {
    /// Writes `rep,value,standardized`.
    pub fn write_sample_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rep", "value", "standardized"])?;
        for (i, (x, z)) in self.raw_sample.iter().zip(&self.standardized_sample).enumerate() {
            out.write_record([i.to_string(), format!("{x:?}"), format!("{z:?}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One-sample Kolmogorov-Smirnov distance to the standard normal.
pub fn ks_statistic_normal(xs: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let c = normal.cdf(*x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

/// Standardizes `sample` by its own moments and tests it against `N(0, 1)`.
pub fn clt_from_sample(scale: &str, sample: Vec<f64>) -> Result<CltReport, McError> {
    let n = sample.len();
    if n < 2 {
        return Err(McError::InvalidConfig("normality check needs at least 2 replicates".into()));
    }
    let m = Moments::from_sample(&sample);
    if m.var == 0.0 {
        return Err(McError::DegenerateSample { scale: scale.to_string(), reps: n, value: sample[0] });
    }
    let sd = m.var.sqrt();
    let z: Vec<f64> = sample.iter().map(|x| (x - m.mean) / sd).collect();
    let nf = n as f64;
    let zm = z.iter().sum::<f64>() / nf;
    let m2 = z.iter().map(|x| (x - zm).powi(2)).sum::<f64>() / nf;
    let m3 = z.iter().map(|x| (x - zm).powi(3)).sum::<f64>() / nf;
    let m4 = z.iter().map(|x| (x - zm).powi(4)).sum::<f64>() / nf;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let ks = ks_statistic_normal(&z);
    let threshold = KS_COEFFICIENT / nf.sqrt();
    let verdict = if n < CLT_MIN_REPS {
        CltVerdict::Underpowered
    } else if ks < threshold && skewness.abs() < SKEWNESS_LIMIT {
        CltVerdict::ConsistentWithNormal
    } else {
        CltVerdict::Rejected
    };
    Ok(CltReport {
        scale: scale.to_string(),
        reps: n,
        raw_sample: sample,
        standardized_sample: z,
        ks_statistic: ks,
        ks_threshold: threshold,
        skewness,
        excess_kurtosis,
        verdict,
    })
}

/// Normality check of scale `i` of `cfg`.
pub fn clt_test(cfg: &ExperimentConfig, i: usize) -> Result<CltReport, McError> {
    cfg.validate()?;
    if i >= cfg.quantity.scale_count() {
        return Err(McError::InvalidConfig(format!("scale index {i} out of range")));
    }
    clt_from_sample(&cfg.quantity.scale_label(i), sample_scale(cfg, i)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoRow {
    pub n: u32,
    pub mean: f64,
    /// Mean of `T(0, ∂B(2^n)) - T(0, ∂B(2^{n-1}))`; zero on the first row.
    pub increment: f64,
    pub stderr_increment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoProbe {
    pub rows: Vec<RhoRow>,
    /// Fitted `beta` in `increment_n ~ n^{-beta}` over the significant
    /// increments.
    pub tail_exponent: Option<f64>,
    pub trend: Classification,
    pub criterion: Classification,
    pub agrees: bool,
}

/// Mean box times at radii `2^n`, `n` in `exponents`, measured on one field
/// per replicate so that increments are paired. The increments are
/// classified as summable when they fall below noise or decay faster than
/// `1/n`.
pub fn rho_divergence_probe(
    d: &DistributionSpec,
    exponents: &[u32],
    reps: usize,
    master_seed: u64,
) -> Result<RhoProbe, McError> {
    if reps < 2 || exponents.len() < 3 || exponents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(McError::InvalidConfig("probe needs reps >= 2 and at least 3 increasing exponents".into()));
    }
    let top = *exponents.last().unwrap();
    if top > 15 {
        return Err(McError::InvalidConfig(format!("exponent {top} exceeds 15")));
    }
    let per_rep: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>, McError> {
            let f = LazyField::new(BoxSpec::new(1 << top), mix_seed(master_seed, &[rep as u64]))?;
            exponents.iter().map(|n| Ok(box_time(&f, d, 1 << n)?.time)).collect()
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut fit_x = Vec::new();
    let mut fit_y = Vec::new();
    let mut tail_noise = 0usize;
    for (j, n) in exponents.iter().enumerate() {
        let ts: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
        let mean = Moments::from_sample(&ts).mean;
        let (increment, stderr_increment) = if j == 0 {
            (0.0, 0.0)
        } else {
            let inc: Vec<f64> = per_rep.iter().map(|v| v[j] - v[j - 1]).collect();
            let m = Moments::from_sample(&inc);
            (m.mean, m.stderr_mean)
        };
        if j > 0 {
            // increments span n-1 -> n over `n - prev` dyadic steps
            let steps = (n - exponents[j - 1]) as f64;
            if increment > 2.0 * stderr_increment && increment > 0.0 {
                fit_x.push((*n as f64).ln());
                fit_y.push((increment / steps).ln());
            } else if 2 * j >= exponents.len() {
                tail_noise += 1;
            }
        }
        rows.push(RhoRow { n: *n, mean, increment, stderr_increment });
    }
    let tail_rows = exponents.len() - exponents.len().div_ceil(2);
    let tail_exponent = (fit_x.len() >= 2).then(|| -linear_fit(&fit_x, &fit_y).0);
    let trend = if tail_noise == tail_rows {
        Classification::Converges
    } else {
        match tail_exponent {
            Some(b) if b > 1.0 + UNDECIDED_BAND => Classification::Converges,
            Some(b) if b < 1.0 - UNDECIDED_BAND => Classification::Diverges,
            _ => Classification::Undecided,
        }
    };
    let criterion = series_criterion(d, 64)?.classification;
    Ok(RhoProbe { rows, tail_exponent, trend, criterion, agrees: trend == criterion })
}
