use std::fs::File;
use std::hash::{BuildHasher, RandomState};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use critfpp_core::field::{mix_seed, LazyField};
use critfpp_core::fourarm::count_four_arm;
use critfpp_core::invasion::{
    annulus_bound_check, constrained_geodesic, default_margin, invade, invasion_stats, invasion_window, StopCondition,
};
use critfpp_core::lattice::BoxSpec;
use critfpp_core::mc::{
    clt_from_sample, locate_circuit, run_experiment_with, sample_scale, CltVerdict, EstimateRow, ExperimentConfig,
    Fit, Quantity,
};
use critfpp_core::percolation::{closed_dual_circuit_exists, correlation_length_capped, p_n_estimate_capped, DualConstraint};
use critfpp_core::weights::series_criterion;
use critfpp_core::{DistributionSpec, Error};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::args::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

fn run_err(e: impl Into<Error>) -> CliError {
    CliError::Run(e.into())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

#[derive(Serialize, serde::Deserialize)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
}

pub fn read_sidecar(path: &Path) -> Result<Command, CliError> {
    let file = File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let sidecar: Sidecar = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
    Ok(sidecar.command)
}

fn resolve_seed(s: &mut SeedArgs) -> Result<u64, CliError> {
    match (s.seed, s.entropy) {
        (Some(seed), _) => Ok(seed),
        (None, true) => {
            let seed = RandomState::new().hash_one(std::time::SystemTime::now());
            s.seed = Some(seed);
            Ok(seed)
        }
        (None, false) => Err(usage("--seed is required (pass --entropy to draw one)")),
    }
}

fn parse_dist(s: &str) -> Result<DistributionSpec, CliError> {
    s.parse().map_err(|e| usage(format!("--dist {s}: {e}")))
}

/// `lo:hi` or a single exponent.
fn parse_exp_range(s: &str) -> Result<Vec<u32>, CliError> {
    let bad = || usage(format!("--n-exp {s}: expected LO:HI or N"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n: u32 = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo > hi || hi > 15 {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| usage(format!("{flag} {s}: cannot parse {x:?}"))))
        .collect()
}

fn parse_points(s: &str) -> Result<Vec<(i32, i32)>, CliError> {
    s.split(';')
        .map(|pt| match parse_list::<i32>("--points", pt)?.as_slice() {
            [x, y] => Ok((*x, *y)),
            _ => Err(usage(format!("--points {s}: each point is x,y"))),
        })
        .collect()
}

fn sim_quantity(a: &SimArgs) -> Result<Quantity, CliError> {
    let exps = a.n_exp.as_deref().map(parse_exp_range).transpose()?;
    match a.quantity {
        QuantityKind::Box => match (exps, &a.n) {
            (Some(e), None) => Ok(Quantity::BoxTime { radii: e.into_iter().map(|k| 1u32 << k).collect() }),
            (None, Some(n)) => Ok(Quantity::BoxTime { radii: parse_list("--n", n)? }),
            _ => Err(usage("give exactly one of --n-exp and --n")),
        },
        QuantityKind::Point => match &a.points {
            Some(p) => Ok(Quantity::PointTime { points: parse_points(p)? }),
            None => Err(usage("--points is required for --quantity point")),
        },
        QuantityKind::Circuit => match exps {
            Some(e) => Ok(Quantity::CircuitTime { exponents: e.into_iter().map(|k| k as i32).collect() }),
            None => Err(usage("--n-exp is required for --quantity circuit")),
        },
        QuantityKind::Constrained => match exps {
            Some(e) => Ok(Quantity::ConstrainedTime { exponents: e }),
            None => Err(usage("--n-exp is required for --quantity constrained")),
        },
    }
}

/// Runs `cmd`, writing its sidecar first when it has an output path.
pub fn dispatch(mut cmd: Command) -> Result<(), CliError> {
    let seed = match &mut cmd {
        Command::Criterion(_) => None,
        Command::SimMean(a) | Command::SimVar(a) => Some(resolve_seed(&mut a.seed)?),
        Command::Clt(a) => Some(resolve_seed(&mut a.seed)?),
        Command::CorrLength(a) => Some(resolve_seed(&mut a.seed)?),
        Command::PN(a) => Some(resolve_seed(&mut a.seed)?),
        Command::Invasion(a) => Some(resolve_seed(&mut a.seed)?),
        Command::Fourarm(a) => Some(resolve_seed(&mut a.seed)?),
        Command::Circuits(a) => Some(resolve_seed(&mut a.seed)?),
        Command::AuditAnnulusBound(a) => Some(resolve_seed(&mut a.seed)?),
    };
    let out = match &cmd {
        Command::Criterion(a) => a.out.clone(),
        Command::SimMean(a) | Command::SimVar(a) => a.out.clone(),
        Command::Clt(a) => a.out.clone(),
        Command::CorrLength(a) => a.out.clone(),
        Command::PN(a) => a.out.clone(),
        Command::Invasion(a) => a.out.clone(),
        Command::Fourarm(a) => a.out.clone(),
        Command::Circuits(a) => a.out.clone(),
        Command::AuditAnnulusBound(a) => a.out.clone(),
    };
    if let Some(out) = &out {
        let sidecar = Sidecar { tool: "critfpp".into(), version: env!("CARGO_PKG_VERSION").into(), command: cmd.clone() };
        write_json(&sibling(out, "config.json"), &sidecar)?;
    }
    let seed = seed.unwrap_or(0);
    match &cmd {
        Command::Criterion(a) => criterion(a),
        Command::SimMean(a) => sim(a, seed, false),
        Command::SimVar(a) => sim(a, seed, true),
        Command::Clt(a) => clt(a, seed),
        Command::CorrLength(a) => corr_length(a, seed),
        Command::PN(a) => p_n(a, seed),
        Command::Invasion(a) => invasion(a, seed),
        Command::Fourarm(a) => fourarm(a, seed),
        Command::Circuits(a) => circuits(a, seed),
        Command::AuditAnnulusBound(a) => audit(a, seed),
    }
}

fn criterion(a: &CriterionArgs) -> Result<(), CliError> {
    let d = parse_dist(&a.dist)?;
    let r = series_criterion(&d, a.kmax).map_err(run_err)?;
    let mut stdout = std::io::stdout().lock();
    let printed = (|| -> std::io::Result<()> {
        writeln!(stdout, "distribution: {d}")?;
        writeln!(stdout, "classification: {:?}", r.classification)?;
        if let Some(alpha) = r.tail_exponent_estimate {
            writeln!(stdout, "tail exponent: {alpha:.4}")?;
        }
        writeln!(stdout, "k,term,partial_sum")?;
        for (i, (t, s)) in r.terms.iter().zip(&r.partial_sums).enumerate() {
            writeln!(stdout, "{},{t:?},{s:?}", i + 2)?;
        }
        stdout.flush()
    })();
    match printed {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            return Err(CliError::Io { path: PathBuf::from("<stdout>"), source: e })
        }
        _ => {}
    }
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["k", "term", "partial_sum"])?;
        for (i, (t, s)) in r.terms.iter().zip(&r.partial_sums).enumerate() {
            w.write_record([(i + 2).to_string(), format!("{t:?}"), format!("{s:?}")])?;
        }
        w.flush().map_err(|source| CliError::Io { path: out.clone(), source })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimSummary<'a> {
    quantity: &'a str,
    distribution: String,
    reps: usize,
    seed: u64,
    mean_fit: Option<Fit>,
    var_fit: Option<Fit>,
    rows: &'a [EstimateRow],
}

fn sim(a: &SimArgs, seed: u64, variance: bool) -> Result<(), CliError> {
    let d = parse_dist(&a.dist)?;
    let mut cfg = ExperimentConfig::new(d.clone(), sim_quantity(a)?, a.reps, seed);
    cfg.guard_ratio = a.guard;
    cfg.bootstrap_resamples = a.bootstrap;
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    // rows reach the CSV as they finish, so an abort keeps completed scales
    let mut writer = match &a.out {
        Some(out) => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(out)?);
            w.write_record(critfpp_core::mc::EstimateTable::CSV_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let mut write_err = None;
    let result = run_experiment_with(&cfg, |row| {
        if variance {
            println!("scale {}: var {:.6} ± {:.6} (mean {:.6})", row.scale, row.var, row.stderr_var, row.mean);
        } else {
            println!("scale {}: mean {:.6} ± {:.6} (var {:.6})", row.scale, row.mean, row.stderr_mean, row.var);
        }
        if let Some(w) = writer.as_mut() {
            if let Err(e) = w.serialize(row).and_then(|_| Ok(w.flush()?)) {
                write_err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let table = result.map_err(run_err)?;
    let fit = if variance { table.var_fit } else { table.mean_fit };
    if let Some(f) = fit {
        println!("fit {}: c_hat {:.6}, r_squared {:.4}", f.model, f.c_hat, f.r_squared);
    }
    if let Some(out) = &a.out {
        let summary = SimSummary {
            quantity: &table.quantity,
            distribution: d.to_string(),
            reps: a.reps,
            seed,
            mean_fit: table.mean_fit,
            var_fit: table.var_fit,
            rows: &table.rows,
        };
        write_json(&sibling(out, "summary.json"), &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CltSummary {
    distribution: String,
    radius: u32,
    reps: usize,
    seed: u64,
    mean: f64,
    variance: f64,
    ks_statistic: f64,
    ks_threshold: f64,
    skewness: f64,
    excess_kurtosis: f64,
    verdict: CltVerdict,
}

fn clt(a: &CltArgs, seed: u64) -> Result<(), CliError> {
    let d = parse_dist(&a.dist)?;
    let radius = match (a.n_exp, a.n) {
        (Some(e), None) if e <= 15 => 1u32 << e,
        (None, Some(n)) => n,
        (Some(e), None) => return Err(usage(format!("--n-exp {e}: at most 15"))),
        _ => return Err(usage("give exactly one of --n-exp and --n")),
    };
    let cfg = ExperimentConfig::new(d.clone(), Quantity::BoxTime { radii: vec![radius] }, a.reps, seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let sample = sample_scale(&cfg, 0).map_err(run_err)?;
    let m = critfpp_core::mc::Moments::from_sample(&sample);
    let r = clt_from_sample(&radius.to_string(), sample).map_err(run_err)?;
    println!("radius {radius}, reps {}", r.reps);
    println!("ks {:.5} (threshold {:.5}), skewness {:.4}, excess kurtosis {:.4}", r.ks_statistic, r.ks_threshold, r.skewness, r.excess_kurtosis);
    println!("verdict: {:?}", r.verdict);
    if let Some(out) = &a.out {
        r.write_sample_csv(create(out)?)?;
        let summary = CltSummary {
            distribution: d.to_string(),
            radius,
            reps: r.reps,
            seed,
            mean: m.mean,
            variance: m.var,
            ks_statistic: r.ks_statistic,
            ks_threshold: r.ks_threshold,
            skewness: r.skewness,
            excess_kurtosis: r.excess_kurtosis,
            verdict: r.verdict,
        };
        write_json(&sibling(out, "summary.json"), &summary)?;
    }
    Ok(())
}

fn corr_length(a: &CorrLengthArgs, seed: u64) -> Result<(), CliError> {
    let r = correlation_length_capped(a.p, a.epsilon, a.reps, seed, a.cap).map_err(run_err)?;
    println!("L({}, {}) = {}{}", a.p, a.epsilon, r.l, if r.near_threshold { " (near threshold)" } else { "" });
    for s in &r.sigma_curve {
        println!("  sigma({0}, {0}) = {1:.4} ± {2:.4}", s.n, s.estimate, s.stderr);
    }
    if let Some(out) = &a.out {
        write_json(out, &r)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PnReport {
    n: u32,
    epsilon: f64,
    reps: usize,
    seed: u64,
    p_n: f64,
}

fn p_n(a: &PnArgs, seed: u64) -> Result<(), CliError> {
    let p = p_n_estimate_capped(a.n, a.epsilon, a.reps, seed, a.cap).map_err(run_err)?;
    println!("p_{} = {p:.6}", a.n);
    if let Some(out) = &a.out {
        write_json(out, &PnReport { n: a.n, epsilon: a.epsilon, reps: a.reps, seed, p_n: p })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InvasionReport {
    stop_radius: u32,
    field_radius: u32,
    steps: usize,
    stats: critfpp_core::invasion::InvasionStats,
    constrained_time: f64,
    annulus_times: critfpp_core::fpp::AnnulusTimes,
}

fn invasion(a: &InvasionArgs, seed: u64) -> Result<(), CliError> {
    let d = parse_dist(&a.dist)?;
    if a.n_exp > 12 {
        return Err(usage(format!("--n-exp {}: at most 12", a.n_exp)));
    }
    let (stop, radius) = invasion_window(a.n_exp, a.margin.unwrap_or(default_margin(a.n_exp)));
    let f = LazyField::new(BoxSpec::new(radius), seed).map_err(run_err)?;
    let c = invade(&f, StopCondition::ReachedRadius(stop)).map_err(run_err)?;
    let n_list: Vec<u32> = (0..=a.n_exp).collect();
    let stats = invasion_stats(&c, &d, &n_list).map_err(run_err)?;
    let (geo, split) = constrained_geodesic(&f, &d, &c, a.n_exp).map_err(run_err)?;
    println!("invaded {} edges before reaching radius {stop}", c.steps.len());
    for (n, p) in &stats.p_hat {
        println!("  p_hat_{n} = {p:.6}");
    }
    println!("constrained geodesic to ∂B({}): time {}", 1u32 << (a.n_exp + 1), geo.time);
    if let Some(out) = &a.out {
        c.write_trace(create(out)?).map_err(run_err)?;
        let report = InvasionReport {
            stop_radius: stop,
            field_radius: radius,
            steps: c.steps.len(),
            stats,
            constrained_time: geo.time,
            annulus_times: split,
        };
        write_json(&sibling(out, "stats.json"), &report)?;
    }
    Ok(())
}

fn fourarm(a: &FourArmArgs, seed: u64) -> Result<(), CliError> {
    if a.m1 == 0 || a.m2 == 0 {
        return Err(usage("--m1 and --m2 must be positive"));
    }
    let radius = 2 * a.m2 + a.m1;
    let f = LazyField::new(BoxSpec::new(radius), seed).map_err(run_err)?;
    let r = count_four_arm(&f, a.m1, a.m2, a.p).map_err(run_err)?;
    println!("N({}, {}, {}) = {}", a.m1, a.m2, a.p, r.count);
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["edge_base_x", "edge_base_y", "orientation"])?;
        for e in &r.contributing_edges {
            w.write_record([e.base.x.to_string(), e.base.y.to_string(), e.orientation.short_name().to_string()])?;
        }
        w.flush().map_err(|source| CliError::Io { path: out.clone(), source })?;
    }
    Ok(())
}

fn circuits(a: &CircuitsArgs, seed: u64) -> Result<(), CliError> {
    if !(-1..=10).contains(&a.n_exp) {
        return Err(usage(format!("--n-exp {}: expected -1..=10", a.n_exp)));
    }
    let (m, c, _) = locate_circuit(a.n_exp, seed).map_err(run_err)?;
    println!("m({}) = {m}; C_{} has {} vertices, enclosed area {}", a.n_exp, a.n_exp, c.len(), c.enclosed_area());
    let k = a.n_exp.max(1);
    let f = LazyField::new(BoxSpec::new(1 << k), seed).map_err(run_err)?;
    let dual = closed_dual_circuit_exists(&f, a.dual_p, DualConstraint::Annulus { k }).map_err(run_err)?;
    match &dual {
        Some(w) => println!("closed dual circuit at level {} in dual annulus {k}: {} vertices", a.dual_p, w.len()),
        None => println!("no closed dual circuit at level {} in dual annulus {k}", a.dual_p),
    }
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["kind", "index", "x", "y"])?;
        for (i, v) in c.vertices.iter().enumerate() {
            w.write_record(["primal".to_string(), i.to_string(), v.x.to_string(), v.y.to_string()])?;
        }
        for (i, v) in dual.iter().flat_map(|d| d.vertices.iter()).enumerate() {
            w.write_record(["dual".to_string(), i.to_string(), v.x.to_string(), v.y.to_string()])?;
        }
        w.flush().map_err(|source| CliError::Io { path: out.clone(), source })?;
    }
    Ok(())
}

fn audit(a: &AuditArgs, seed: u64) -> Result<(), CliError> {
    let d = parse_dist(&a.dist)?;
    if !(a.k >= 1 && a.k < a.n_exp && a.n_exp <= 10) {
        return Err(usage(format!("--k {} --n-exp {}: need 1 <= k < n <= 10", a.k, a.n_exp)));
    }
    let (stop, radius) = invasion_window(a.n_exp, default_margin(a.n_exp));
    let rows = (0..a.reps)
        .into_par_iter()
        .map(|rep| -> Result<_, Error> {
            let f = LazyField::new(BoxSpec::new(radius), mix_seed(seed, &[rep as u64]))?;
            let c = invade(&f, StopCondition::ReachedRadius(stop))?;
            Ok(annulus_bound_check(&f, &d, &c, a.k, a.n_exp, a.p)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let violations = rows.iter().filter(|r| !r.holds).count();
    println!("k {} n {} p {}: {} samples, {violations} violations", a.k, a.n_exp, a.p, rows.len());
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(create(out)?);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| CliError::Io { path: out.clone(), source })?;
    }
    Ok(())
}
