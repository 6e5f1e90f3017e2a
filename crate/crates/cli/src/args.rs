use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "critfpp", version, about = "Critical first-passage percolation experiments")]
pub struct Cli {
    /// Replay a run from its `.config.json` sidecar
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Size of the replicate worker pool (does not affect results)
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize, PartialEq)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Classify a weight law by the series sum_k F^{-1}(1/2 + 2^-k)
    Criterion(CriterionArgs),
    /// Mean passage times across scales
    SimMean(SimArgs),
    /// Passage-time variances across scales
    SimVar(SimArgs),
    /// Normality check of standardized passage times at one scale
    Clt(CltArgs),
    /// Correlation length L(p, eps) from crossing estimates
    CorrLength(CorrLengthArgs),
    /// Smallest p with L(p, eps) <= n
    #[command(name = "p-n")]
    #[serde(rename = "p-n")]
    PN(PnArgs),
    /// Grow an invasion cluster and report its outlet statistics
    Invasion(InvasionArgs),
    /// Count four-arm edges in an annulus
    Fourarm(FourArmArgs),
    /// Innermost open circuit C_n and a closed dual circuit
    Circuits(CircuitsArgs),
    /// Sample-wise check of T_k(gamma_n) 1{p_hat_k <= p} <= N(2^{k-1}, 2^k, p) F^{-1}(p)
    AuditAnnulusBound(AuditArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct SeedArgs {
    /// Master seed for all randomness
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw the master seed from the operating system when --seed is absent
    #[arg(long, default_value_t = false)]
    pub entropy: bool,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct CriterionArgs {
    /// Weight law: bernoulli, fa:a=<a>, gb:b=<b> or table:<csv>
    #[arg(long)]
    pub dist: String,
    /// Number of series terms
    #[arg(long, default_value_t = 64)]
    pub kmax: u32,
    /// CSV of k,term,partial_sum
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantityKind {
    /// T(0, ∂B(r))
    Box,
    /// T(0, x)
    Point,
    /// T(0, C_n)
    Circuit,
    /// Time of the constrained geodesic inside the invasion cluster
    Constrained,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct SimArgs {
    /// Weight law: bernoulli, fa:a=<a>, gb:b=<b> or table:<csv>
    #[arg(long)]
    pub dist: String,
    #[arg(long, value_enum, default_value_t = QuantityKind::Box)]
    pub quantity: QuantityKind,
    /// Dyadic exponents `lo:hi` or `n` (radii 2^lo..=2^hi)
    #[arg(long, value_name = "LO:HI")]
    pub n_exp: Option<String>,
    /// Raw radii, comma separated (box quantity only)
    #[arg(long, value_name = "R,R,..")]
    pub n: Option<String>,
    /// Target points `x,y;x,y;..` (point quantity only)
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// Truncation box ratio for point-to-point times
    #[arg(long, default_value_t = 2.0)]
    pub guard: f64,
    /// Bootstrap resamples for stderr_var (fourth-moment formula if absent)
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Results CSV; a `.summary.json` with fits is written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct CltArgs {
    /// Weight law: bernoulli, fa:a=<a>, gb:b=<b> or table:<csv>
    #[arg(long)]
    pub dist: String,
    /// Dyadic exponent of the box radius
    #[arg(long)]
    pub n_exp: Option<u32>,
    /// Raw box radius
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// Sample CSV `rep,value,standardized`; a `.summary.json` is written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct CorrLengthArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    /// Replicates per crossing estimate
    #[arg(long, default_value_t = 400)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// Largest side probed
    #[arg(long, default_value_t = 4096)]
    pub cap: u32,
    /// JSON report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct PnArgs {
    /// Side length n
    #[arg(long)]
    pub n: u32,
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 400)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    #[arg(long, default_value_t = 4096)]
    pub cap: u32,
    /// JSON report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct InvasionArgs {
    /// Weight law used for t_hat and the constrained geodesic
    #[arg(long, default_value = "bernoulli")]
    pub dist: String,
    /// Scale exponent: grows past B(2^{n+1} + margin)
    #[arg(long, default_value_t = 5)]
    pub n_exp: u32,
    /// Extra margin beyond 2^{n+1} (default 2^n)
    #[arg(long)]
    pub margin: Option<u32>,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// Trace CSV; a `.stats.json` is written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct FourArmArgs {
    /// Arm length
    #[arg(long)]
    pub m1: u32,
    /// Inner radius of the annulus E(B(2 m2)) \ E(B(m2))
    #[arg(long)]
    pub m2: u32,
    #[arg(long, default_value_t = 0.65)]
    pub p: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// CSV of contributing edges
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct CircuitsArgs {
    /// Scale exponent n of C_n
    #[arg(long, default_value_t = 1)]
    pub n_exp: i32,
    /// Level of the closed dual circuit searched in the dual annulus of scale n
    #[arg(long, default_value_t = 0.5)]
    pub dual_p: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// CSV `kind,index,x,y` of circuit vertices (dual vertices at x+1/2, y+1/2)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize, PartialEq)]
pub struct AuditArgs {
    #[arg(long, default_value = "bernoulli")]
    pub dist: String,
    #[arg(long, default_value_t = 3)]
    pub k: u32,
    #[arg(long, default_value_t = 5)]
    pub n_exp: u32,
    #[arg(long, default_value_t = 0.65)]
    pub p: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArgs,
    /// CSV with one audit row per sample
    #[arg(long)]
    pub out: Option<PathBuf>,
}
