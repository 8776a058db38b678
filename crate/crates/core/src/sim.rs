//! Monte-Carlo comparison of the estimators under simulated nuisance fluctuations.
//!
//! Each replication draws a sample from [`Dgp`], and for every `α` in the grid
//! builds nuisances that deviate from the truth at scale `n^(-1/α)`. Every
//! estimator is run at every tuning value and the squared error at each
//! evaluation point is recorded. Tuning is then chosen per point as the one
//! with the smallest Monte-Carlo MSE. That selection uses the truth, so it
//! is a benchmark device and not a data-driven rule.

use crate::data::Sample;
use crate::dgp::Dgp;
use crate::error::{Error, Result};
use crate::hoif::{hoif_estimate, HoifConfig};
use crate::kernels::KernelSpec;
use crate::nuisance::{covariate_rows, draw_fluctuations, fluctuated_nuisances, NuisanceFit};
use crate::pseudo::{build_pseudo, dr_learner_estimate, erm_series_fit, ErmConfig, PseudoOutcomeSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n: usize,
    pub replications: usize,
    pub alphas: Vec<f64>,
    pub eval_points: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub erm_k: Vec<usize>,
    pub hoif_k: usize,
    pub hoif_orders: Vec<usize>,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n: 500,
            replications: 500,
            alphas: vec![2.0, 4.0, 6.0, 8.0, 10.0, 15.0],
            eval_points: vec![-0.5, -0.25, 0.0, 0.25, 0.5],
            bandwidths: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            erm_k: (2..=8).collect(),
            hoif_k: 11,
            hoif_orders: vec![1, 2],
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 9] = [
    "n",
    "replications",
    "alphas",
    "eval_points",
    "bandwidths",
    "erm_k",
    "hoif_k",
    "hoif_orders",
    "seed",
];

fn parse_list<T: FromStr>(key: &str, value: &str, line: u64) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim().parse().map_err(|_| Error::MalformedInput {
                line,
                message: format!("cannot parse {v:?} in {key}"),
            })
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str, line: u64) -> Result<T> {
    value.trim().parse().map_err(|_| Error::MalformedInput {
        line,
        message: format!("cannot parse {value:?} as {key}"),
    })
}

impl StudyConfig {
    /// Parses flat `key = value` text; lists are comma separated, `#` starts a comment.
    /// Keys not given keep their defaults; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::MalformedInput {
                line,
                message: format!("expected key=value, got {body:?}"),
            })?;
            let key = key.trim();
            match key {
                "n" => cfg.n = parse_one(key, value, line)?,
                "replications" => cfg.replications = parse_one(key, value, line)?,
                "alphas" => cfg.alphas = parse_list(key, value, line)?,
                "eval_points" => cfg.eval_points = parse_list(key, value, line)?,
                "bandwidths" => cfg.bandwidths = parse_list(key, value, line)?,
                "erm_k" => cfg.erm_k = parse_list(key, value, line)?,
                "hoif_k" => cfg.hoif_k = parse_one(key, value, line)?,
                "hoif_orders" => cfg.hoif_orders = parse_list(key, value, line)?,
                "seed" => cfg.seed = parse_one(key, value, line)?,
                other => {
                    return Err(Error::MalformedInput {
                        line,
                        message: format!("unknown key {other:?}; expected one of {}", CONFIG_KEYS.join(", ")),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0)) {
            return bad("alphas must be a nonempty list of positive numbers".into());
        }
        if self.eval_points.is_empty() || self.eval_points.iter().any(|t| !(-1.0..=1.0).contains(t)) {
            return bad("eval_points must be a nonempty list inside [-1, 1]".into());
        }
        if self.bandwidths.is_empty() || self.bandwidths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return bad("bandwidths must be a nonempty list of positive numbers".into());
        }
        if self.erm_k.contains(&0) {
            return bad("erm_k values must be positive".into());
        }
        if self.hoif_orders.iter().any(|m| !(1..=crate::hoif::MAX_ORDER).contains(m)) {
            return bad(format!("hoif_orders must lie in 1..={}", crate::hoif::MAX_ORDER));
        }
        Ok(())
    }

    /// Density weights at the evaluation points, normalized to sum to one.
    pub fn density_weights(&self, dgp: &Dgp) -> Vec<f64> {
        density_weights(dgp, &self.eval_points)
    }
}

pub fn density_weights(dgp: &Dgp, eval: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = eval.iter().map(|&t| dgp.p_a(t)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

pub fn true_theta(dgp: &Dgp, a: f64) -> f64 {
    dgp.theta(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Erm,
    DrLearner,
    Hoif(usize),
    OracleDr,
    Plugin,
}

impl Method {
    /// Methods whose nuisances are estimated; the oracle uses the truth.
    pub fn is_feasible(self) -> bool {
        self != Method::OracleDr
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Erm => write!(f, "erm"),
            Method::DrLearner => write!(f, "dr_learner"),
            Method::Hoif(m) => write!(f, "hoif{m}"),
            Method::OracleDr => write!(f, "oracle_dr"),
            Method::Plugin => write!(f, "plugin"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tuning {
    K(usize),
    H(f64),
    None,
}

impl fmt::Display for Tuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tuning::K(k) => write!(f, "k={k}"),
            Tuning::H(h) => write!(f, "h={h}"),
            Tuning::None => write!(f, "none"),
        }
    }
}

/// One `(method, tuning)` column of a replication: an estimate per evaluation point.
#[derive(Debug, Clone, PartialEq)]
struct Column {
    method: Method,
    tuning: Tuning,
    estimates: Vec<f64>,
}

fn simulated_nuisance(dgp: &Dgp, sample: &Sample, alpha: f64, n: usize, seed: u64) -> NuisanceFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the stream depends on alpha alone so draws do not shift when the grid changes
    rng.set_stream(alpha.to_bits());
    let zeta = draw_fluctuations(alpha, n, &mut rng);
    fluctuated_nuisances(dgp, zeta, covariate_rows(sample))
}

fn local_columns(
    pseudo: &PseudoOutcomeSet,
    method: Method,
    cfg: &StudyConfig,
    kernel: &KernelSpec,
) -> Result<Vec<Column>> {
    cfg.bandwidths
        .iter()
        .map(|&h| {
            let estimates = cfg
                .eval_points
                .iter()
                .map(|&t| dr_learner_estimate(pseudo, t, h, 1, kernel))
                .collect::<Result<_>>()?;
            Ok(Column {
                method,
                tuning: Tuning::H(h),
                estimates,
            })
        })
        .collect()
}

fn feasible_columns(sample: &Sample, nuis: &NuisanceFit, cfg: &StudyConfig) -> Result<Vec<Column>> {
    let kernel = KernelSpec::gaussian();
    let pseudo = build_pseudo(sample, nuis)?;
    let mut cols = Vec::new();
    for &k in &cfg.erm_k {
        let fit = erm_series_fit(&pseudo, &ErmConfig::new(k, (-1.0, 1.0)))?;
        cols.push(Column {
            method: Method::Erm,
            tuning: Tuning::K(k),
            estimates: cfg.eval_points.iter().map(|&t| fit.eval(t)).collect::<Result<_>>()?,
        });
    }
    cols.extend(local_columns(&pseudo, Method::DrLearner, cfg, &kernel)?);
    for &m in &cfg.hoif_orders {
        for &h in &cfg.bandwidths {
            let estimates = cfg
                .eval_points
                .iter()
                .map(|&t| {
                    let mut hc = HoifConfig::new(t, h, cfg.hoif_k, m);
                    hc.x_ranges = Some(vec![(-1.0, 1.0)]);
                    hoif_estimate(sample, nuis, &hc).map(|e| e.estimate)
                })
                .collect::<Result<_>>()?;
            cols.push(Column {
                method: Method::Hoif(m),
                tuning: Tuning::H(h),
                estimates,
            });
        }
    }
    cols.push(Column {
        method: Method::Plugin,
        tuning: Tuning::None,
        estimates: cfg.eval_points.iter().map(|&t| nuis.m(t)).collect(),
    });
    Ok(cols)
}

/// Estimates of one replication: `per_alpha[i]` is `Err` when some estimator failed at `alphas[i]`.
struct Replication {
    oracle: Result<Vec<Column>>,
    per_alpha: Vec<Result<Vec<Column>>>,
}

fn replication(dgp: &Dgp, cfg: &StudyConfig, rep: usize) -> Replication {
    let seed = cfg.seed ^ rep as u64;
    let sample = dgp.draw_sample(cfg.n, &mut ChaCha8Rng::seed_from_u64(seed));
    let oracle = build_pseudo(&sample, &dgp.exact_nuisance())
        .and_then(|p| local_columns(&p, Method::OracleDr, cfg, &KernelSpec::gaussian()));
    let per_alpha = cfg
        .alphas
        .iter()
        .map(|&alpha| feasible_columns(&sample, &simulated_nuisance(dgp, &sample, alpha, cfg.n, seed), cfg))
        .collect();
    Replication { oracle, per_alpha }
}

/// Aggregated MSE for one `(method, alpha, tuning, t)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCell {
    pub method: Method,
    pub alpha: f64,
    pub tuning: Tuning,
    pub t: f64,
    pub mse: f64,
    pub mc_se: f64,
    pub weight: f64,
}

/// Best-tuning density-weighted MSE of one method at one `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct MseAggregate {
    pub method: Method,
    pub alpha: f64,
    pub weighted_mse: f64,
    /// Standard error of the replication-level weighted squared error at the selected tunings.
    pub mc_se: f64,
    /// Selected tuning at each evaluation point.
    pub best: Vec<Tuning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureCount {
    pub alpha: f64,
    pub failed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    pub cells: Vec<MseCell>,
    pub aggregates: Vec<MseAggregate>,
    pub failures: Vec<FailureCount>,
}

impl MseTable {
    pub fn aggregate(&self, method: Method, alpha: f64) -> Option<&MseAggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.alpha == alpha)
    }

    pub fn write_cells<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "alpha", "tuning", "t", "mse", "mc_se", "weight"])?;
        for c in &self.cells {
            w.write_record([
                c.method.to_string(),
                c.alpha.to_string(),
                c.tuning.to_string(),
                c.t.to_string(),
                c.mse.to_string(),
                c.mc_se.to_string(),
                c.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregates<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "alpha", "weighted_mse"])?;
        for a in &self.aggregates {
            w.write_record([a.method.to_string(), a.alpha.to_string(), a.weighted_mse.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_failures<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "failed", "total"])?;
        for f in &self.failures {
            w.write_record([f.alpha.to_string(), f.failed.to_string(), f.total.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let mean = v.iter().sum::<f64>() / r;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

fn run_replications(dgp: &Dgp, cfg: &StudyConfig) -> Vec<Replication> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..cfg.replications).into_par_iter().map(|r| replication(dgp, cfg, r)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.replications).map(|r| replication(dgp, cfg, r)).collect()
    }
}

/// Runs the study on the default design.
pub fn run_study(cfg: &StudyConfig) -> Result<MseTable> {
    run_study_with(&Dgp::default(), cfg)
}

/// Tuning of one estimator column with its squared errors, indexed by replication then point.
type ErrorColumn = (Tuning, Vec<Vec<f64>>);

pub fn run_study_with(dgp: &Dgp, cfg: &StudyConfig) -> Result<MseTable> {
    cfg.validate()?;
    let reps = run_replications(dgp, cfg);
    let truth: Vec<f64> = cfg.eval_points.iter().map(|&t| true_theta(dgp, t)).collect();
    let weights = cfg.density_weights(dgp);
    let mut table = MseTable {
        cells: Vec::new(),
        aggregates: Vec::new(),
        failures: Vec::new(),
    };
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        // squared errors keyed by (method, column index) then point, one entry per kept replication
        let mut errs: BTreeMap<(Method, usize), ErrorColumn> = BTreeMap::new();
        let mut failed = 0;
        for (ri, rep) in reps.iter().enumerate() {
            let cols = match (&rep.oracle, &rep.per_alpha[ai]) {
                (Ok(o), Ok(f)) => o.iter().chain(f.iter()),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("replication {ri} failed at alpha = {alpha}: {e}");
                    failed += 1;
                    continue;
                }
            };
            let mut idx: BTreeMap<Method, usize> = BTreeMap::new();
            for col in cols {
                let slot = idx.entry(col.method).or_insert(0);
                let entry = errs
                    .entry((col.method, *slot))
                    .or_insert_with(|| (col.tuning, vec![Vec::new(); truth.len()]));
                *slot += 1;
                for (j, est) in col.estimates.iter().enumerate() {
                    entry.1[j].push((est - truth[j]).powi(2));
                }
            }
        }
        table.failures.push(FailureCount {
            alpha,
            failed,
            total: cfg.replications,
        });
        if failed * 100 >= cfg.replications {
            return Err(Error::TooManyFailures {
                alpha,
                failed,
                total: cfg.replications,
            });
        }
        let mut methods: Vec<Method> = errs.keys().map(|(m, _)| *m).collect();
        methods.dedup();
        for method in methods {
            let cols: Vec<&(Tuning, Vec<Vec<f64>>)> =
                errs.range((method, 0)..=(method, usize::MAX)).map(|(_, v)| v).collect();
            let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); truth.len()];
            for (ci, (tuning, per_t)) in cols.iter().enumerate() {
                for (j, sq) in per_t.iter().enumerate() {
                    let (mse, mc_se) = mean_se(sq);
                    table.cells.push(MseCell {
                        method,
                        alpha,
                        tuning: *tuning,
                        t: cfg.eval_points[j],
                        mse,
                        mc_se,
                        weight: weights[j],
                    });
                    // ties keep the first tuning for determinism
                    if mse < best[j].0 {
                        best[j] = (mse, ci);
                    }
                }
            }
            let kept = cfg.replications - failed;
            let per_rep: Vec<f64> = (0..kept)
                .map(|r| (0..truth.len()).map(|j| weights[j] * cols[best[j].1].1[j][r]).sum())
                .collect();
            let (weighted_mse, mc_se) = mean_se(&per_rep);
            table.aggregates.push(MseAggregate {
                method,
                alpha,
                weighted_mse,
                mc_se,
                best: best.iter().map(|&(_, ci)| cols[ci].0).collect(),
            });
        }
    }
    Ok(table)
}
