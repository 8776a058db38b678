use clap::{Args, Parser, Subcommand, ValueEnum};
use drcurve::data::Sample;
use drcurve::hoif::{hoif_cross_fit, HoifConfig};
use drcurve::kernels::KernelSpec;
use drcurve::nuisance::FitConfig;
use drcurve::pseudo::{cross_fit, CrossFitConfig, ErmConfig, NuisanceSource, SecondStage};
use drcurve::rates::{rate_table, s_grid, write_rate_csv};
use drcurve::sensitivity::{bounds_estimate, BoundsConfig};
use drcurve::sim::{run_study, StudyConfig};
use drcurve::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Dose-response curve estimation for continuous treatments.
#[derive(Parser, Debug)]
#[command(name = "drcurve", version)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the curve on a CSV with header y,a,x1,...,xd.
    Estimate(EstimateArgs),
    /// Run the Monte-Carlo study.
    Simulate(SimulateArgs),
    /// Tabulate MSE rate exponents over a grid of covariate smoothness.
    Rates(RatesArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Erm,
    Dr,
    Hoif,
}

impl MethodArg {
    fn label(self) -> &'static str {
        match self {
            MethodArg::Erm => "erm",
            MethodArg::Dr => "dr",
            MethodArg::Hoif => "hoif",
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Comma-separated evaluation points.
    #[arg(long, value_delimiter = ',', default_value = "-0.5,-0.25,0,0.25,0.5", allow_hyphen_values = true)]
    eval: Vec<f64>,
    /// Bandwidth (dr, hoif).
    #[arg(long, default_value_t = 0.3)]
    h: f64,
    /// Series size of the second stage (erm).
    #[arg(long)]
    k: Option<usize>,
    /// Local polynomial order (dr); defaults to 1, or 0 when --gamma is given.
    #[arg(long)]
    p: Option<usize>,
    /// HOIF order m (hoif).
    #[arg(long)]
    order: Option<usize>,
    /// Legendre terms per covariate in the projection basis (hoif).
    #[arg(long)]
    basis_k: Option<usize>,
    /// Sensitivity parameter; adds lower and upper bound columns (dr).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, env = "DRCURVE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// key=value study configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `replications` from the configuration.
    #[arg(long)]
    reps: Option<usize>,
    /// Directory receiving mse.csv, weighted_mse.csv and failures.csv.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `seed` from the configuration.
    #[arg(long, env = "DRCURVE_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, allow_negative_numbers = true)]
    dim: f64,
    /// Grid `lo:hi:step`.
    #[arg(long, default_value = "0.5:40:0.5")]
    s_grid: String,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn output(path: Option<&Path>) -> drcurve::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn check_consistency(a: &EstimateArgs) -> drcurve::Result<()> {
    let only = |set: bool, flag: &str, method: MethodArg| {
        if set && a.method != method {
            Err(usage(format!("{flag} applies only to --method {}", method.label())))
        } else {
            Ok(())
        }
    };
    only(a.k.is_some(), "--k", MethodArg::Erm)?;
    only(a.p.is_some(), "--p", MethodArg::Dr)?;
    only(a.gamma.is_some(), "--gamma", MethodArg::Dr)?;
    only(a.order.is_some(), "--order", MethodArg::Hoif)?;
    only(a.basis_k.is_some(), "--basis-k", MethodArg::Hoif)?;
    if a.eval.is_empty() || a.eval.iter().any(|t| !t.is_finite()) {
        return Err(usage("--eval needs at least one finite point"));
    }
    Ok(())
}

fn estimate(a: &EstimateArgs) -> drcurve::Result<()> {
    check_consistency(a)?;
    let sample = Sample::from_csv(File::open(&a.input)?)?;
    let fit = FitConfig::default();
    let (point, bounds) = match a.method {
        MethodArg::Erm => {
            let cfg = CrossFitConfig {
                nuisance: NuisanceSource::Fit(fit),
                second_stage: SecondStage::Erm(ErmConfig::new(a.k.unwrap_or(5), sample.treatment_range())),
                eval: a.eval.clone(),
            };
            (cross_fit(&sample, a.seed, &cfg)?.estimate, None)
        }
        MethodArg::Dr => match a.gamma {
            Some(gamma) => {
                let mut cfg = BoundsConfig::new(gamma, a.h, a.eval.clone())?;
                cfg.p = a.p.unwrap_or(0);
                let b = bounds_estimate(&sample, a.seed, &cfg)?;
                (b.point, Some((b.lower, b.upper)))
            }
            None => {
                let cfg = CrossFitConfig {
                    nuisance: NuisanceSource::Fit(fit),
                    second_stage: SecondStage::LocalPoly {
                        h: a.h,
                        p: a.p.unwrap_or(1),
                        kernel: KernelSpec::gaussian(),
                    },
                    eval: a.eval.clone(),
                };
                (cross_fit(&sample, a.seed, &cfg)?.estimate, None)
            }
        },
        MethodArg::Hoif => {
            let template = HoifConfig::new(0.0, a.h, a.basis_k.unwrap_or(5), a.order.unwrap_or(2));
            (hoif_cross_fit(&sample, a.seed, &fit, &template, &a.eval)?, None)
        }
    };
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header = vec!["t", "method", "estimate"];
    if bounds.is_some() {
        header.extend(["lower", "upper"]);
    }
    w.write_record(&header)?;
    for (j, t) in a.eval.iter().enumerate() {
        let mut row = vec![t.to_string(), a.method.label().to_string(), point[j].to_string()];
        if let Some((lo, hi)) = &bounds {
            row.extend([lo[j].to_string(), hi[j].to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> drcurve::Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut cfg = StudyConfig::parse(&text)?;
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let table = run_study(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    table.write_cells(BufWriter::new(File::create(a.out.join("mse.csv"))?))?;
    table.write_aggregates(BufWriter::new(File::create(a.out.join("weighted_mse.csv"))?))?;
    table.write_failures(BufWriter::new(File::create(a.out.join("failures.csv"))?))?;
    Ok(())
}

fn parse_grid(spec: &str) -> drcurve::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--s-grid must be lo:hi:step, got {spec:?}")))?;
    match nums[..] {
        [lo, hi, step] => s_grid(lo, hi, step),
        _ => Err(usage(format!("--s-grid must be lo:hi:step, got {spec:?}"))),
    }
}

fn rates(a: &RatesArgs) -> drcurve::Result<()> {
    let grid = parse_grid(&a.s_grid)?;
    let rows = rate_table(a.alpha, a.dim, &grid)?;
    write_rate_csv(&rows, output(a.out.as_deref())?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Rates(a) => rates(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!(": {s}"));
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
