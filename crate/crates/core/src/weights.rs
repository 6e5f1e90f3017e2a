//! Edge-weight laws with an atom of mass exactly `p_c = 1/2` at zero.
//!
//! Every law is exposed through its quantile function
//! `F^{-1}(t) = inf{x : F(x) >= t}`, which is what the coupling
//! `t_e = F^{-1}(omega_e)` needs. Quantiles just above `p_c` are computed
//! from the excess `s = t - p_c` directly so that the dyadic series
//! `sum_k F^{-1}(p_c + 2^{-k})` stays exact far beyond `k = 52`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Critical bond percolation probability on Z^2.
pub const P_C: f64 = 0.5;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("parameter must be positive and finite, got {0}")]
    BadParameter(f64),
    #[error("quantile table: {0}")]
    BadTable(String),
    #[error("K_max must be at least 8, got {0}")]
    KMaxTooSmall(u32),
    #[error("unrecognised distribution `{0}` (expected bernoulli, fa:a=<real>, gb:b=<real> or table:<path>)")]
    UnknownDistribution(String),
    #[error("reading quantile table: {0}")]
    Csv(#[from] csv::Error),
    #[error("reading quantile table: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of a tabulated CDF: `F(value) = prob`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub prob: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    /// Zero or one with probability 1/2 each.
    BernoulliCritical,
    /// `F_a(x) = x^a + p_c` on `0 <= x^a <= 1 - p_c`.
    PowerLawFa { a: f64 },
    /// `G_b(x) = exp(-1/x^b) + p_c` on `0 <= exp(-1/x^b) <= 1 - p_c`.
    StretchedExpGb { b: f64 },
    /// Step CDF through the listed points.
    TableQuantile { breakpoints: Vec<Breakpoint> },
}

/// A weight law with `F(0) = p_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistributionSpec {
    kind: DistributionKind,
}

impl DistributionSpec {
    pub fn bernoulli() -> Self {
        DistributionSpec { kind: DistributionKind::BernoulliCritical }
    }

    pub fn power_law(a: f64) -> Result<Self, WeightsError> {
        check_param(a)?;
        Ok(DistributionSpec { kind: DistributionKind::PowerLawFa { a } })
    }

    pub fn stretched_exp(b: f64) -> Result<Self, WeightsError> {
        check_param(b)?;
        Ok(DistributionSpec { kind: DistributionKind::StretchedExpGb { b } })
    }

    /// Builds a tabulated law. Probabilities must be strictly increasing,
    /// start at or above `p_c` and end at 1; values must be nondecreasing
    /// and positive wherever `prob > p_c` (otherwise `F(0) > p_c`).
    pub fn table(breakpoints: Vec<Breakpoint>) -> Result<Self, WeightsError> {
        let bad = |m: &str| Err(WeightsError::BadTable(m.to_string()));
        if breakpoints.is_empty() {
            return bad("no rows");
        }
        if breakpoints[0].prob < P_C {
            return bad("first probability is below 1/2");
        }
        if breakpoints.last().map(|b| b.prob) != Some(1.0) {
            return bad("last probability must be 1");
        }
        for w in breakpoints.windows(2) {
            if w[1].prob <= w[0].prob {
                return bad("probabilities must be strictly increasing");
            }
            if w[1].value < w[0].value {
                return bad("values must be nondecreasing");
            }
        }
        for bp in &breakpoints {
            if !bp.value.is_finite() || bp.value < 0.0 {
                return bad("values must be finite and nonnegative");
            }
            if bp.prob > P_C && bp.value <= 0.0 {
                return bad("a zero value above probability 1/2 would give F(0) > 1/2");
            }
        }
        Ok(DistributionSpec { kind: DistributionKind::TableQuantile { breakpoints } })
    }

    /// Reads a CSV file with header `prob,value`.
    pub fn table_from_csv(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "prob" || &headers[1] != "value" {
            return Err(WeightsError::BadTable("header must be `prob,value`".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.deserialize() {
            rows.push(rec?);
        }
        Self::table(rows)
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    /// `F^{-1}(t)` for `t` in `(0, 1)`.
    pub fn quantile(&self, t: f64) -> Result<f64, WeightsError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(WeightsError::ProbabilityOutOfRange(t));
        }
        Ok(self.quantile_unchecked(t))
    }

    /// As [`quantile`](Self::quantile) but without the range check; `t`
    /// must lie in `[0, 1]`. Used on the hot path of the coupling.
    #[inline]
    pub fn quantile_unchecked(&self, t: f64) -> f64 {
        if t <= P_C {
            0.0
        } else {
            self.quantile_above_pc(t - P_C)
        }
    }

    /// `F^{-1}(p_c + s)` for `s` in `(0, 1/2]`.
    pub fn quantile_above_pc(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let s = s.min(1.0 - P_C);
        match &self.kind {
            DistributionKind::BernoulliCritical => 1.0,
            DistributionKind::PowerLawFa { a } => s.powf(1.0 / a),
            DistributionKind::StretchedExpGb { b } => (-s.ln()).powf(-1.0 / b),
            DistributionKind::TableQuantile { breakpoints } => {
                breakpoints
                    .iter()
                    .find(|bp| bp.prob - P_C >= s)
                    .unwrap_or_else(|| breakpoints.last().expect("validated nonempty"))
                    .value
            }
        }
    }

    /// The distribution function `F(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.kind {
            DistributionKind::BernoulliCritical => {
                if x < 1.0 {
                    P_C
                } else {
                    1.0
                }
            }
            DistributionKind::PowerLawFa { a } => {
                let m = x.powf(*a);
                if m > 1.0 - P_C {
                    1.0
                } else {
                    m + P_C
                }
            }
            DistributionKind::StretchedExpGb { b } => {
                if x == 0.0 {
                    return P_C;
                }
                let m = (-1.0 / x.powf(*b)).exp();
                if m > 1.0 - P_C {
                    1.0
                } else {
                    m + P_C
                }
            }
            DistributionKind::TableQuantile { breakpoints } => breakpoints
                .iter()
                .rev()
                .find(|bp| bp.value <= x)
                .map_or(P_C, |bp| bp.prob.max(P_C)),
        }
    }

    /// Right end of the support.
    pub fn support_max(&self) -> f64 {
        self.quantile_above_pc(1.0 - P_C)
    }
}

fn check_param(v: f64) -> Result<(), WeightsError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(WeightsError::BadParameter(v))
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistributionKind::BernoulliCritical => write!(f, "bernoulli"),
            DistributionKind::PowerLawFa { a } => write!(f, "fa:a={a}"),
            DistributionKind::StretchedExpGb { b } => write!(f, "gb:b={b}"),
            DistributionKind::TableQuantile { breakpoints } => {
                write!(f, "table[{} rows]", breakpoints.len())
            }
        }
    }
}

/// Parses the command-line forms `bernoulli`, `fa:a=<real>`, `gb:b=<real>`
/// and `table:<path>` (the latter reads the file).
impl FromStr for DistributionSpec {
    type Err = WeightsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let unknown = || WeightsError::UnknownDistribution(s.to_string());
        if s == "bernoulli" {
            return Ok(Self::bernoulli());
        }
        if let Some(path) = s.strip_prefix("table:") {
            return Self::table_from_csv(path);
        }
        let parse = |rest: &str, key: &str| -> Result<f64, WeightsError> {
            rest.strip_prefix(key)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(unknown)
        };
        if let Some(rest) = s.strip_prefix("fa:") {
            return Self::power_law(parse(rest, "a=")?);
        }
        if let Some(rest) = s.strip_prefix("gb:") {
            return Self::stretched_exp(parse(rest, "b=")?);
        }
        Err(unknown())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Converges,
    Diverges,
    Undecided,
}

/// Partial sums of `sum_{k=2}^{K} F^{-1}(p_c + 2^{-k})` and the verdict on
/// whether the full series converges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub terms: Vec<f64>,
    /// `partial_sums[i]` sums the terms for `k = 2..=i+2`.
    pub partial_sums: Vec<f64>,
    pub classification: Classification,
    pub k_max: u32,
    /// Fitted `alpha` in `term_k ~ k^{-alpha}` over the last half of the terms.
    pub tail_exponent_estimate: Option<f64>,
}

/// Half-width of the band around the `1/k` boundary inside which tabulated
/// laws are reported as undecided.
pub const UNDECIDED_BAND: f64 = 0.1;

pub fn series_criterion(d: &DistributionSpec, k_max: u32) -> Result<CriterionReport, WeightsError> {
    if k_max < 8 {
        return Err(WeightsError::KMaxTooSmall(k_max));
    }
    let terms: Vec<f64> = (2..=k_max)
        .map(|k| d.quantile_above_pc((-(k as f64)).exp2()))
        .collect();
    let partial_sums: Vec<f64> = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let tail = tail_exponent(&terms, k_max);
    let classification = match d.kind() {
        DistributionKind::BernoulliCritical => Classification::Diverges,
        // term 2^{-k/a}: geometric for every a > 0
        DistributionKind::PowerLawFa { .. } => Classification::Converges,
        // term (k ln 2)^{-1/b}: summable iff 1/b > 1
        DistributionKind::StretchedExpGb { b } => {
            if *b < 1.0 {
                Classification::Converges
            } else {
                Classification::Diverges
            }
        }
        DistributionKind::TableQuantile { .. } => {
            let window = &terms[terms.len() / 2..];
            if window.iter().all(|t| *t == 0.0) {
                Classification::Converges
            } else {
                match tail {
                    Some(alpha) if alpha > 1.0 + UNDECIDED_BAND => Classification::Converges,
                    Some(alpha) if alpha < 1.0 - UNDECIDED_BAND => Classification::Diverges,
                    _ => Classification::Undecided,
                }
            }
        }
    };
    Ok(CriterionReport {
        terms,
        partial_sums,
        classification,
        k_max,
        tail_exponent_estimate: tail,
    })
}

/// Least-squares slope of `-ln term` against `ln k` over `k` in the last
/// half of `2..=k_max`. `None` if any term in the window is zero.
fn tail_exponent(terms: &[f64], k_max: u32) -> Option<f64> {
    let first_k = (k_max / 2).max(2);
    let pts: Vec<(f64, f64)> = (first_k..=k_max)
        .map(|k| (k as f64, terms[(k - 2) as usize]))
        .collect();
    if pts.iter().any(|(_, t)| *t <= 0.0) {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (k, t)| (a + k.ln(), b + t.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (k, t)| {
        let dx = k.ln() - mx;
        (a + dx * (t.ln() - my), b + dx * dx)
    });
    Some(-sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Eta0Method {
    Analytic,
    Declared,
}

/// The moment exponent `eta_0 = sup{eta >= 0 : E[t_e^{eta/4}] < inf}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eta0Report {
    /// `f64::INFINITY` when every moment exists.
    pub eta0: f64,
    pub method: Eta0Method,
}

impl Eta0Report {
    /// Mean bounds need `eta_0 > 1`.
    pub fn supports_mean_bounds(&self) -> bool {
        self.eta0 > 1.0
    }

    /// Variance bounds and the CLT need `eta_0 > 2`.
    pub fn supports_variance_bounds(&self) -> bool {
        self.eta0 > 2.0
    }
}

/// Every supported law has bounded support, so all moments are finite.
pub fn eta0(_d: &DistributionSpec) -> Eta0Report {
    Eta0Report { eta0: f64::INFINITY, method: Eta0Method::Analytic }
}
