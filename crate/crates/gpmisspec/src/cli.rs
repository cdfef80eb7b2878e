//! Command-line interface: one binary, subcommand per operation, machine
//! readable outputs.
//!
//! Exit codes: 0 success, 1 numeric/runtime failure (with a structured
//! `ERROR <code>: <detail>` line on stderr), 2 usage error. Subcommands
//! with `--json` print a single JSON object on stdout and nothing else
//! there. Every file output gets a sibling `<file>.manifest.json`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::design::{geometry_report, Design};
use crate::error::{Error, Result};
use crate::experiments::{
    mc_expected_mle, rate_sweep, variance_decay_sweep, DesignKind, RateFitReport, SweepConfig,
};
use crate::fmt_g17;
use crate::gp::ConditionedModel;
use crate::gram::{assemble_gram, cholesky, dump_gram, JitterPolicy};
use crate::kernels::{parse_matern_spec, Kernel, MaternParams};
use crate::manifest::RunManifest;
use crate::mle::{
    driscoll_trace, expected_mle, matern_range_bounds, mle_decomposition, scale_mle,
    MisspecScenario,
};
use crate::plot::write_svg;

#[derive(Parser)]
#[command(
    name = "gpmisspec",
    version = crate::manifest::VERSION,
    about = "Scale estimation for Gaussian process models under covariance misspecification"
)]
pub struct Cli {
    /// Cap on worker threads (fallback: GPMISSPEC_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate observation designs and report their geometry
    #[command(subcommand)]
    Design(DesignCmd),
    /// Gaussian process prediction under a model kernel
    #[command(subcommand)]
    Gp(GpCmd),
    /// Scale-estimator computations
    #[command(subcommand)]
    Mle(MleCmd),
    /// Trace-growth diagnostic over nested design prefixes
    Driscoll(DriscollArgs),
    /// Growth of the expected scale estimate over a size sweep
    RateSweep(RateSweepArgs),
    /// Decay of the sup conditional variance over a size sweep
    VarianceSweep(VarianceSweepArgs),
    /// Run the embedded invariant suite
    Selftest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DesignKindArg {
    Grid,
    Halton,
}

impl From<DesignKindArg> for DesignKind {
    fn from(v: DesignKindArg) -> DesignKind {
        match v {
            DesignKindArg::Grid => DesignKind::Grid,
            DesignKindArg::Halton => DesignKind::Halton,
        }
    }
}

#[derive(Subcommand)]
pub enum DesignCmd {
    /// Generate a design and write it as a point file
    Gen {
        #[arg(long, value_enum)]
        kind: DesignKindArg,
        #[arg(long)]
        d: usize,
        /// Total number of points (grids require n = m^d)
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-row CSV `n,fill,separation,ratio` for a point file
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        /// Candidate-grid points per axis for the d >= 2 sup search
        #[arg(long, default_value_t = 65)]
        resolution: usize,
    },
}

#[derive(Subcommand)]
pub enum GpCmd {
    /// Conditional mean and variance at query points, CSV `x...,mean,variance`
    Predict {
        /// Model kernel, e.g. matern:nu=1.5,theta=1,sigma=1
        #[arg(long)]
        model: String,
        /// Design point file
        #[arg(long)]
        design: PathBuf,
        /// Data file, one value per line
        #[arg(long)]
        data: PathBuf,
        /// Query point file
        #[arg(long)]
        query: PathBuf,
    },
}

#[derive(Subcommand)]
pub enum MleCmd {
    /// Expected scale estimate tr(K_N R_N^-1)/N
    Expected {
        /// Data-generating kernel spec
        #[arg(long = "true")]
        true_kernel: String,
        /// Model kernel spec (sigma must be 1)
        #[arg(long)]
        model: String,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        json: bool,
        /// Write the model Gram matrix R_N as plain text
        #[arg(long)]
        dump_gram: Option<PathBuf>,
    },
    /// Sequential decomposition, CSV `n,numerator,denominator,ratio_sq,running_mean`
    Decompose {
        #[arg(long = "true")]
        true_kernel: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Scale MLE of a data vector under the model kernel
    Estimate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
pub struct DriscollArgs {
    #[arg(long = "true")]
    pub true_kernel: String,
    #[arg(long)]
    pub model: String,
    /// Comma-separated nested sizes, e.g. 32,64,128,256
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: std::vec::Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Sequence whose prefixes form the nested family
    #[arg(long, value_enum, default_value_t = DesignKindArg::Halton)]
    pub design: DesignKindArg,
    /// Write the per-size CSV `n,trace,trace_over_n` here
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Emit a single JSON object instead of CSV + verdict
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct RateSweepArgs {
    #[arg(long = "true")]
    pub true_kernel: String,
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, value_enum, default_value_t = DesignKindArg::Grid)]
    pub design: DesignKindArg,
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: std::vec::Vec<usize>,
    /// Monte-Carlo replicates per size (omit to skip sampling)
    #[arg(long)]
    pub mc_replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pass/fail tolerance on the fitted slope
    #[arg(long, default_value_t = 0.3)]
    pub slope_tol: f64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Log-log scatter with fitted and theoretical lines
    #[arg(long)]
    pub out_svg: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct VarianceSweepArgs {
    /// Model kernel spec
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, value_enum, default_value_t = DesignKindArg::Grid)]
    pub design: DesignKindArg,
    #[arg(long, value_parser = parse_sizes)]
    pub sizes: std::vec::Vec<usize>,
    /// Total points in the sup-search test grid
    #[arg(long, default_value_t = 4096)]
    pub test_grid: usize,
    #[arg(long, default_value_t = 0.2)]
    pub slope_tol: f64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

fn parse_sizes(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad size {t:?}: {e}"))
        })
        .collect()
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

fn read_data_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: bad data value {line:?}",
                path.display(),
                lineno + 1
            ))
        })?);
    }
    Ok(values)
}

fn model_kernel_spec(spec: &str) -> Result<MaternParams> {
    let params = parse_matern_spec(spec)?;
    if params.sigma != 1.0 {
        return Err(Error::InvalidConfig(format!(
            "model kernel must have sigma = 1 (the estimator supplies the scale), got {}",
            params.sigma
        )));
    }
    Ok(params)
}

fn scenario_from_specs(true_spec: &str, model_spec: &str, dim: usize) -> Result<MisspecScenario> {
    MisspecScenario::new(parse_matern_spec(true_spec)?, model_kernel_spec(model_spec)?, dim)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design(cmd) => run_design(cmd),
        Command::Gp(cmd) => run_gp(cmd),
        Command::Mle(cmd) => run_mle(cmd),
        Command::Driscoll(args) => run_driscoll(args),
        Command::RateSweep(args) => run_rate_sweep(args),
        Command::VarianceSweep(args) => run_variance_sweep(args),
        Command::Selftest => run_selftest(),
    }
}

fn run_design(cmd: DesignCmd) -> Result<()> {
    match cmd {
        DesignCmd::Gen { kind, d, n, out } => {
            let design = DesignKind::from(kind).build(d, n)?;
            design.write_to(&out)?;
            let mut manifest = RunManifest::new(argv());
            manifest.record_output(&out);
            manifest.write_beside(&out)?;
            Ok(())
        }
        DesignCmd::Stats { input, resolution } => {
            let design = Design::read_from(&input)?;
            let report = geometry_report(&design, resolution)?;
            println!("n,fill,separation,ratio");
            println!(
                "{},{},{},{}",
                design.len(),
                fmt_g17(report.fill_distance),
                fmt_g17(report.separation_radius),
                fmt_g17(report.ratio)
            );
            Ok(())
        }
    }
}

fn run_gp(cmd: GpCmd) -> Result<()> {
    match cmd {
        GpCmd::Predict {
            model,
            design,
            data,
            query,
        } => {
            let params = parse_matern_spec(&model)?;
            let design_points = Design::read_from(&design)?;
            let kernel = Kernel::matern(params, design_points.dim())?;
            let values = read_data_file(&data)?;
            let queries = Design::read_from(&query)?;
            if queries.dim() != design_points.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "query dimension {} vs design dimension {}",
                    queries.dim(),
                    design_points.dim()
                )));
            }
            let conditioned =
                ConditionedModel::with_data(kernel, design_points, values, &JitterPolicy::default())?;
            let header: Vec<String> = (0..queries.dim()).map(|i| format!("x{i}")).collect();
            println!("{},mean,variance", header.join(","));
            for q in queries.points() {
                let (mean, variance) = conditioned.conditional_moments(q)?;
                let coords: Vec<String> = q.iter().map(|&c| fmt_g17(c)).collect();
                println!("{},{},{}", coords.join(","), fmt_g17(mean), fmt_g17(variance));
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ExpectedJson {
    true_kernel: String,
    model_kernel: String,
    n: usize,
    value: f64,
    jitter_model: f64,
    extended_precision: bool,
}

fn run_mle(cmd: MleCmd) -> Result<()> {
    match cmd {
        MleCmd::Expected {
            true_kernel,
            model,
            design,
            json,
            dump_gram: dump,
        } => {
            let design = Design::read_from(&design)?;
            let scenario = scenario_from_specs(&true_kernel, &model, design.dim())?;
            let policy = JitterPolicy::default();
            if let Some(path) = &dump {
                let gram = assemble_gram(&scenario.model_kernel(), &design)?;
                dump_gram(&gram, path)?;
                let mut manifest = RunManifest::new(argv());
                manifest.record_output(path);
                manifest.write_beside(path)?;
            }
            let result = expected_mle(&scenario, &design, &policy)?;
            if json {
                let body = ExpectedJson {
                    true_kernel: scenario.true_params().to_string(),
                    model_kernel: scenario.model_params().to_string(),
                    n: design.len(),
                    value: result.value,
                    jitter_model: result.jitter,
                    extended_precision: result.extended_precision,
                };
                println!("{}", serde_json::to_string(&body).expect("serializable"));
            } else {
                println!("{}", fmt_g17(result.value));
            }
            Ok(())
        }
        MleCmd::Decompose {
            true_kernel,
            model,
            design,
            out_csv,
        } => {
            let design = Design::read_from(&design)?;
            let scenario = scenario_from_specs(&true_kernel, &model, design.dim())?;
            let report = mle_decomposition(&scenario, &design, &JitterPolicy::default())?;
            let mut csv = String::from("n,numerator,denominator,ratio_sq,running_mean\n");
            for t in &report.terms {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    t.n,
                    fmt_g17(t.numerator),
                    fmt_g17(t.denominator),
                    fmt_g17(t.ratio_sq),
                    fmt_g17(t.running_mean)
                ));
            }
            match out_csv {
                Some(path) => {
                    write_text(&path, &csv)?;
                    let mut manifest = RunManifest::new(argv());
                    manifest.record_output(&path);
                    manifest.write_beside(&path)?;
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        MleCmd::Estimate {
            model,
            design,
            data,
        } => {
            let design_points = Design::read_from(&design)?;
            let params = parse_matern_spec(&model)?;
            let kernel = Kernel::matern(params, design_points.dim())?;
            let values = read_data_file(&data)?;
            let estimate = scale_mle(&kernel, &design_points, &values, &JitterPolicy::default())?;
            println!("{}", fmt_g17(estimate));
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct DriscollJson {
    slope: f64,
    classification: &'static str,
    note: &'static str,
    sizes: Vec<usize>,
    traces: Vec<f64>,
}

fn run_driscoll(args: DriscollArgs) -> Result<()> {
    let max = *args
        .sizes
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidConfig("empty size list".into()))?;
    let scenario = scenario_from_specs(&args.true_kernel, &args.model, args.d)?;
    let base = DesignKind::from(args.design).build(args.d, max)?;
    let mut sorted = args.sizes.clone();
    sorted.sort_unstable();
    let family: Vec<Design> = sorted.iter().map(|&n| base.prefix(n)).collect();
    let report = driscoll_trace(&scenario, &family, &JitterPolicy::default())?;

    let mut csv = String::from("n,trace,trace_over_n\n");
    for (n, tr) in report.sizes.iter().zip(&report.traces) {
        csv.push_str(&format!(
            "{},{},{}\n",
            n,
            fmt_g17(*tr),
            fmt_g17(*tr / *n as f64)
        ));
    }
    let verdict = DriscollJson {
        slope: report.slope,
        classification: report.classification.as_str(),
        note: report.note,
        sizes: report.sizes.clone(),
        traces: report.traces.clone(),
    };
    if let Some(path) = &args.out_csv {
        write_text(path, &csv)?;
        let mut manifest = RunManifest::new(argv());
        manifest.record_output(path);
        manifest.write_beside(path)?;
    }
    if args.json {
        println!("{}", serde_json::to_string(&verdict).expect("serializable"));
    } else {
        if args.out_csv.is_none() {
            print!("{csv}");
        }
        println!(
            "{{\"slope\":{},\"classification\":\"{}\",\"note\":\"{}\"}}",
            verdict.slope, verdict.classification, verdict.note
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ScenarioJson {
    #[serde(rename = "true")]
    true_kernel: String,
    model: String,
    d: usize,
    design: &'static str,
}

#[derive(Serialize)]
struct RateSweepJson {
    scenario: ScenarioJson,
    sizes: Vec<usize>,
    values: Vec<f64>,
    slope: f64,
    intercept: f64,
    r2: f64,
    theoretical_slope: Option<f64>,
    pass: bool,
    tail_slope: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    incomplete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    banner: Option<String>,
}

fn rate_sweep_csv(report: &RateFitReport) -> String {
    let mut csv =
        String::from("n,expected_mle,mc_mean,mc_stderr,jitter_true,jitter_model,fill,separation\n");
    for row in &report.rows {
        let opt = |v: Option<f64>| v.map(|x| fmt_g17(x)).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.n,
            fmt_g17(row.expected_mle),
            opt(row.mc_mean),
            opt(row.mc_stderr),
            opt(row.jitter_true),
            fmt_g17(row.jitter_model),
            fmt_g17(row.fill_distance),
            fmt_g17(row.separation_radius)
        ));
    }
    csv
}

fn run_rate_sweep(args: RateSweepArgs) -> Result<()> {
    let scenario = scenario_from_specs(&args.true_kernel, &args.model, args.d)?;
    let mut cfg = SweepConfig::new(scenario, DesignKind::from(args.design), args.sizes.clone());
    cfg.slope_tolerance = args.slope_tol;
    cfg.seed = args.seed;
    cfg.replicates = args.mc_replicates;
    let report = rate_sweep(&cfg)?;

    if let Some(path) = &args.out_csv {
        write_text(path, &rate_sweep_csv(&report))?;
        let mut manifest = RunManifest::new(argv()).with_seed(args.seed);
        manifest.record_output(path);
        manifest.write_beside(path)?;
    }
    if let Some(path) = &args.out_svg {
        write_svg(&report, path)?;
        let mut manifest = RunManifest::new(argv()).with_seed(args.seed);
        manifest.record_output(path);
        manifest.write_beside(path)?;
    }
    let json = RateSweepJson {
        scenario: ScenarioJson {
            true_kernel: report.true_kernel.to_string(),
            model: report.model_kernel.to_string(),
            d: report.dim,
            design: report.design_kind.as_str(),
        },
        sizes: report.sizes(),
        values: report.values(),
        slope: report.slope,
        intercept: report.intercept,
        r2: report.r_squared,
        theoretical_slope: report.theoretical_slope,
        pass: report.pass,
        tail_slope: report.tail_slope,
        incomplete: report.incomplete,
        banner: report.banner.clone(),
    };
    if args.json {
        println!("{}", serde_json::to_string(&json).expect("serializable"));
    } else {
        if args.out_csv.is_none() {
            print!("{}", rate_sweep_csv(&report));
        }
        println!("{}", serde_json::to_string(&json).expect("serializable"));
    }
    Ok(())
}

#[derive(Serialize)]
struct VarianceSweepJson {
    model: String,
    d: usize,
    design: &'static str,
    test_grid_points: usize,
    sizes: Vec<usize>,
    values: Vec<f64>,
    slope: f64,
    r2: f64,
    theoretical_slope: f64,
    pass: bool,
}

fn run_variance_sweep(args: VarianceSweepArgs) -> Result<()> {
    let model = model_kernel_spec(&args.model)?;
    let report = variance_decay_sweep(
        &model,
        args.d,
        DesignKind::from(args.design),
        &args.sizes,
        args.test_grid,
        args.slope_tol,
        &JitterPolicy::default(),
    )?;
    let mut csv = String::from("n,sup_variance,jitter_model\n");
    for ((n, sup), jitter) in report
        .sizes
        .iter()
        .zip(&report.sup_variances)
        .zip(&report.jitters)
    {
        csv.push_str(&format!("{},{},{}\n", n, fmt_g17(*sup), fmt_g17(*jitter)));
    }
    if let Some(path) = &args.out_csv {
        write_text(path, &csv)?;
        let mut manifest = RunManifest::new(argv());
        manifest.record_output(path);
        manifest.write_beside(path)?;
    }
    let json = VarianceSweepJson {
        model: report.model_kernel.to_string(),
        d: report.dim,
        design: report.design_kind.as_str(),
        test_grid_points: report.test_grid_points,
        sizes: report.sizes.clone(),
        values: report.sup_variances.clone(),
        slope: report.slope,
        r2: report.r_squared,
        theoretical_slope: report.theoretical_slope,
        pass: report.pass,
    };
    if args.json {
        println!("{}", serde_json::to_string(&json).expect("serializable"));
    } else {
        if args.out_csv.is_none() {
            print!("{csv}");
        }
        println!("{}", serde_json::to_string(&json).expect("serializable"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

fn run_selftest() -> Result<()> {
    let policy = JitterPolicy::default();
    let mut checks: Vec<(&str, std::result::Result<(), String>)> = Vec::new();

    checks.push((
        "log_gamma anchors",
        (|| {
            let v = crate::specfun::log_gamma(5.0).map_err(|e| e.to_string())?;
            approx(v, 24f64.ln(), 1e-12)?;
            approx(
                crate::specfun::log_gamma(0.5).map_err(|e| e.to_string())?,
                0.5723649429247001,
                1e-12,
            )
        })(),
    ));

    checks.push((
        "bessel_k closed form vs numeric path",
        (|| {
            for half in 0..3 {
                let nu = half as f64 + 0.5;
                for &z in &[0.01, 0.5, 2.0, 10.0] {
                    let closed = crate::specfun::bessel_k(nu, z).map_err(|e| e.to_string())?;
                    let numeric =
                        crate::specfun::bessel_k_numeric(nu, z).map_err(|e| e.to_string())?;
                    approx(numeric, closed, 1e-8)?;
                }
            }
            Ok(())
        })(),
    ));

    checks.push((
        "scaled radial continuity at the small-z threshold",
        (|| {
            for &nu in &[0.5, 1.0, 1.7, 2.5] {
                let t = crate::specfun::SMALL_Z_THRESHOLD;
                let below =
                    crate::specfun::scaled_matern_radial(nu, t * (1.0 - 1e-9)).map_err(|e| e.to_string())?;
                let above =
                    crate::specfun::scaled_matern_radial(nu, t * (1.0 + 1e-9)).map_err(|e| e.to_string())?;
                approx(below, above, 1e-9)?;
            }
            Ok(())
        })(),
    ));

    checks.push((
        "grid and halton generator anchors",
        (|| {
            let g = Design::grid(1, 4).map_err(|e| e.to_string())?;
            let xs: Vec<f64> = g.points().map(|p| p[0]).collect();
            if xs != vec![0.125, 0.625, 0.375, 0.875] {
                return Err(format!("grid order {xs:?}"));
            }
            let h = Design::halton(1, 4).map_err(|e| e.to_string())?;
            let xs: Vec<f64> = h.points().map(|p| p[0]).collect();
            if xs != vec![0.5, 0.25, 0.75, 0.125] {
                return Err(format!("halton order {xs:?}"));
            }
            Ok(())
        })(),
    ));

    checks.push((
        "fill distance and separation radius on the midpoint grid",
        (|| {
            let g = Design::grid(1, 4).map_err(|e| e.to_string())?;
            let report = geometry_report(&g, 65).map_err(|e| e.to_string())?;
            approx(report.fill_distance, 0.125, 1e-15)?;
            approx(report.separation_radius, 0.125, 1e-15)
        })(),
    ));

    checks.push((
        "matched-kernel trace equals n",
        (|| {
            let design = Design::grid(1, 32).map_err(|e| e.to_string())?;
            let k = Kernel::matern(
                MaternParams::new(1.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                1,
            )
            .map_err(|e| e.to_string())?;
            let g = assemble_gram(&k, &design).map_err(|e| e.to_string())?;
            let f = cholesky(&g, &policy).map_err(|e| e.to_string())?;
            let tr = crate::gram::trace_product(&g, &f).map_err(|e| e.to_string())?;
            approx(tr, 32.0, 1e-8)
        })(),
    ));

    checks.push((
        "unbiasedness under pure scale misspecification",
        (|| {
            let s = MisspecScenario::new(
                MaternParams::new(0.5, 1.0, 2.0).map_err(|e| e.to_string())?,
                MaternParams::new(0.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                1,
            )
            .map_err(|e| e.to_string())?;
            let design = Design::grid(1, 16).map_err(|e| e.to_string())?;
            let e = expected_mle(&s, &design, &policy).map_err(|e| e.to_string())?;
            approx(e.value, 4.0, 1e-8)
        })(),
    ));

    checks.push((
        "decomposition identity",
        (|| {
            let s = MisspecScenario::new(
                MaternParams::new(0.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                MaternParams::new(1.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                1,
            )
            .map_err(|e| e.to_string())?;
            let design = Design::halton(1, 32).map_err(|e| e.to_string())?;
            let report = mle_decomposition(&s, &design, &policy).map_err(|e| e.to_string())?;
            approx(report.mean_ratio_sq, report.trace_over_n, 1e-8)
        })(),
    ));

    checks.push((
        "range bounds contain the expected estimate",
        (|| {
            let s = MisspecScenario::new(
                MaternParams::new(1.5, 2.0, 1.0).map_err(|e| e.to_string())?,
                MaternParams::new(1.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                1,
            )
            .map_err(|e| e.to_string())?;
            let (lo, hi) = matern_range_bounds(&s).map_err(|e| e.to_string())?;
            let e = expected_mle(&s, &Design::grid(1, 16).map_err(|e| e.to_string())?, &policy)
                .map_err(|e| e.to_string())?;
            if e.value < lo || e.value > hi {
                return Err(format!("{} outside [{lo}, {hi}]", e.value));
            }
            Ok(())
        })(),
    ));

    checks.push((
        "log-log fit recovers exact power laws",
        (|| {
            let fit = crate::experiments::fit_loglog(&[4, 8, 16], &[48.0, 192.0, 768.0])
                .map_err(|e| e.to_string())?;
            approx(fit.slope, 2.0, 1e-12)?;
            approx(fit.intercept, 3f64.ln(), 1e-12)
        })(),
    ));

    checks.push((
        "sampling is deterministic",
        (|| {
            let k = Kernel::matern(
                MaternParams::new(0.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                1,
            )
            .map_err(|e| e.to_string())?;
            let design = Design::halton(1, 8).map_err(|e| e.to_string())?;
            let a = crate::experiments::sample_paths(&k, &design, 3, 11, &policy)
                .map_err(|e| e.to_string())?;
            let b = crate::experiments::sample_paths(&k, &design, 3, 11, &policy)
                .map_err(|e| e.to_string())?;
            if a != b {
                return Err("replicate matrices differ across runs".into());
            }
            Ok(())
        })(),
    ));

    checks.push((
        "monte-carlo oracle brackets the trace value",
        (|| {
            let s = MisspecScenario::new(
                MaternParams::new(0.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                MaternParams::new(1.5, 1.0, 1.0).map_err(|e| e.to_string())?,
                1,
            )
            .map_err(|e| e.to_string())?;
            let design = Design::grid(1, 16).map_err(|e| e.to_string())?;
            let mc = mc_expected_mle(&s, &design, 400, 17, &policy).map_err(|e| e.to_string())?;
            let analytic = expected_mle(&s, &design, &policy).map_err(|e| e.to_string())?;
            if (mc.mean - analytic.value).abs() > 4.0 * mc.stderr {
                return Err(format!(
                    "mc {} ± {} vs analytic {}",
                    mc.mean, mc.stderr, analytic.value
                ));
            }
            Ok(())
        })(),
    ));

    let mut failures = 0;
    println!("{:-^64}", " selftest ");
    for (name, outcome) in &checks {
        match outcome {
            Ok(()) => println!("PASS  {name}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{:-^64}", "");
    println!("{} checks, {} failed", checks.len(), failures);
    if failures > 0 {
        return Err(Error::InvalidConfig(format!("{failures} selftest checks failed")));
    }
    Ok(())
}

fn approx(got: f64, want: f64, rel: f64) -> std::result::Result<(), String> {
    let scale = want.abs().max(1e-300);
    if ((got - want) / scale).abs() <= rel {
        Ok(())
    } else {
        Err(format!("got {got}, want {want} (rel {rel})"))
    }
}
