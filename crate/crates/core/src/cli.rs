//! The `fdrboot` command line.
//!
//! Exit codes: 0 on success, 2 for invalid input or arguments, 3 when the
//! data are numerically unusable (rank-deficient factors, degenerate
//! portfolios, constant series).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor_model::{
    demean_factors, estimate_alphas, fit_portfolios, residual_bootstrap, residual_matrix, autocorrelation,
};
use crate::io::{self, fmt_f64};
use crate::rng::substream;
use crate::simulation::{
    apply_methods, run_monte_carlo_with, scenario_grid, Method, MethodSettings, MonteCarloReport, ScenarioSpec,
};
use crate::testing::{PValueFn, Sidedness, TestDecision};

#[derive(Debug, Parser)]
#[command(name = "fdrboot", version, about = "FDR control with the dueling double bootstrap")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo comparison on the synthetic benchmark.
    Simulate(SimulateArgs),
    /// Apply procedures to observed t-values and their null draws.
    Test(TestArgs),
    /// Lag correlations of return series.
    Autocorr(AutocorrArgs),
    /// Alphas and residual-bootstrap null draws from returns and factors.
    Nulls(NullsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Target FDR level.
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    /// Procedures to run, comma separated (default: all).
    #[arg(short = 'm', long = "method", value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0: one per core).
    #[arg(short = 'c', long = "workers", default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output file (default: stdout).
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    /// Outer bootstrap draws.
    #[arg(long, default_value_t = 20)]
    pub outer_draws: usize,
    /// Inner bootstrap draws.
    #[arg(long, default_value_t = 500)]
    pub inner_draws: usize,
    /// Bisection steps of the slope search.
    #[arg(long, default_value_t = 20)]
    pub search_steps: usize,
}

impl Common {
    fn methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            self.methods.clone()
        }
    }

    fn settings(&self, sidedness: Sidedness) -> MethodSettings {
        let mut s = MethodSettings::with_q(self.q);
        s.ddboot.outer_draws = self.outer_draws;
        s.ddboot.inner_draws = self.inner_draws;
        s.ddboot.search_steps = self.search_steps;
        s.ddboot.sidedness = sidedness;
        s
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario 1-9, or `all`.
    #[arg(short = 's', long, default_value = "all")]
    pub scenario: String,
    #[arg(short = 'r', long, default_value_t = 2000)]
    pub runs: usize,
    /// Null draws per instance.
    #[arg(long, default_value_t = 2000)]
    pub pool_size: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// t-values CSV.
    #[arg(short = 'a', long)]
    pub alphas: PathBuf,
    /// Null draws CSV.
    #[arg(short = 'x', long)]
    pub nulls: PathBuf,
    /// Degrees of freedom when the t-values file has no `df` column.
    #[arg(long)]
    pub df: Option<f64>,
    /// One-sided p-values (positive alternatives).
    #[arg(long)]
    pub one_sided: bool,
    /// Also write ECDFs of observed and null p-values to this CSV.
    #[arg(long)]
    pub cdf: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AutocorrArgs {
    /// Returns CSV, time steps as rows.
    #[arg(short = 'i', long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub max_lag: usize,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NullsArgs {
    /// Returns CSV, time steps as rows and portfolios as columns.
    #[arg(short = 'i', long)]
    pub returns: PathBuf,
    /// Factor returns CSV, time steps as rows, without intercept.
    #[arg(short = 'f', long)]
    pub factors: PathBuf,
    /// Bootstrap draws.
    #[arg(short = 'b', long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'c', long = "workers", default_value_t = 0)]
    pub workers: usize,
    /// Output t-values CSV.
    #[arg(long)]
    pub alphas_out: PathBuf,
    /// Output null draws CSV.
    #[arg(long)]
    pub nulls_out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fdrboot: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

pub fn run(config: &RunConfig) -> Result<()> {
    let workers = match &config.command {
        Command::Simulate(a) => a.common.workers,
        Command::Test(a) => a.common.workers,
        Command::Nulls(a) => a.workers,
        Command::Autocorr(_) => 1,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| match &config.command {
        Command::Simulate(a) => simulate(a),
        Command::Test(a) => test(a),
        Command::Autocorr(a) => autocorr(a),
        Command::Nulls(a) => nulls(a),
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => io::atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let specs: Vec<ScenarioSpec> = if a.scenario.eq_ignore_ascii_case("all") {
        scenario_grid()
    } else {
        let id = a
            .scenario
            .parse()
            .map_err(|_| Error::invalid(format!("scenario '{}' is not 1-9 or 'all'", a.scenario)))?;
        vec![ScenarioSpec::standard(id)?]
    };
    let methods = a.common.methods();
    let settings = a.common.settings(Sidedness::TwoSided);
    let reports = specs
        .into_iter()
        .map(|s| {
            let spec = ScenarioSpec {
                pool_size: a.pool_size,
                ..s
            };
            run_monte_carlo_with(&spec, &methods, a.runs, &settings, a.common.seed)
        })
        .collect::<Result<Vec<MonteCarloReport>>>()?;
    let text = match a.common.format {
        Format::Text => reports.iter().map(MonteCarloReport::to_text).collect::<Vec<_>>().join("\n"),
        Format::Csv => {
            let mut s = format!("{}\n", MonteCarloReport::CSV_HEADER);
            reports.iter().for_each(|r| s.push_str(&r.to_csv_rows()));
            s
        }
        Format::Json => to_json(&reports),
    };
    emit(a.common.output.as_deref(), &text)
}

#[derive(Serialize)]
struct DecisionRecord<'a> {
    method: Method,
    threshold_p: Option<f64>,
    rejections: usize,
    rejected: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    rejected_names: Option<Vec<&'a str>>,
}

#[derive(Serialize)]
struct TestReport<'a> {
    q: f64,
    df: f64,
    hypotheses: usize,
    null_draws: usize,
    sidedness: Sidedness,
    decisions: Vec<DecisionRecord<'a>>,
}

fn test(a: &TestArgs) -> Result<()> {
    let tv = io::load_tvalues(&a.alphas, a.df)?;
    let alphas = &tv.estimates;
    let nulls = io::load_nulls(&a.nulls, alphas.df())?;
    io::check_matching(alphas, &nulls)?;
    let sidedness = if a.one_sided {
        Sidedness::OneSided
    } else {
        Sidedness::TwoSided
    };
    let methods = a.common.methods();
    let settings = a.common.settings(sidedness);
    let decisions = apply_methods(alphas, &nulls, &methods, &settings, a.common.seed)?;
    let pvals = PValueFn::new(alphas.df(), sidedness).eval_all(alphas.values());
    let names: Vec<String> = tv
        .names
        .clone()
        .unwrap_or_else(|| (1..=alphas.len()).map(|i| format!("h{i}")).collect());

    let text = match a.common.format {
        Format::Text => {
            let mut s = format!(
                "N={} df={} null draws={} q={}\n{:<10} {:>12} {:>8}\n",
                alphas.len(),
                alphas.df(),
                nulls.num_draws(),
                a.common.q,
                "Method",
                "Thr-p",
                "# of Rej"
            );
            for (m, d) in methods.iter().zip(&decisions) {
                let thr = d.threshold_p.map_or_else(|| "-".to_string(), |t| format!("{t:.6}"));
                s.push_str(&format!("{:<10} {:>12} {:>8}\n", m.label(), thr, d.num_rejected()));
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("index,name,t_value,p_value");
            for m in &methods {
                s.push(',');
                s.push_str(m.label());
            }
            s.push('\n');
            for i in 0..alphas.len() {
                s.push_str(&format!("{},{},{},{}", i + 1, names[i], fmt_f64(alphas.values()[i]), fmt_f64(pvals[i])));
                for d in &decisions {
                    s.push_str(if d.is_rejected(i) { ",1" } else { ",0" });
                }
                s.push('\n');
            }
            s
        }
        Format::Json => to_json(&TestReport {
            q: a.common.q,
            df: alphas.df(),
            hypotheses: alphas.len(),
            null_draws: nulls.num_draws(),
            sidedness,
            decisions: methods
                .iter()
                .zip(&decisions)
                .map(|(&method, d): (&Method, &TestDecision)| DecisionRecord {
                    method,
                    threshold_p: d.threshold_p,
                    rejections: d.num_rejected(),
                    rejected: &d.rejected,
                    rejected_names: tv
                        .names
                        .as_ref()
                        .map(|_| d.rejected.iter().map(|&i| names[i].as_str()).collect()),
                })
                .collect(),
        }),
    };
    if let Some(path) = &a.cdf {
        let null_p = PValueFn::new(alphas.df(), sidedness).eval_all(nulls.as_slice());
        io::atomic_write(path, cdf_csv(&pvals, &null_p).as_bytes())?;
    }
    emit(a.common.output.as_deref(), &text)
}

/// ECDFs of observed and pooled null p-values on a grid of 1001 points.
fn cdf_csv(observed: &[f64], null: &[f64]) -> String {
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (obs, nul) = (sort(observed), sort(null));
    let ecdf = |v: &[f64], x: f64| v.partition_point(|&p| p <= x) as f64 / v.len() as f64;
    let mut s = String::from("p,observed,null\n");
    for k in 0..=1000 {
        let x = k as f64 / 1000.0;
        s.push_str(&format!("{x},{},{}\n", fmt_f64(ecdf(&obs, x)), fmt_f64(ecdf(&nul, x))));
    }
    s
}

fn autocorr(a: &AutocorrArgs) -> Result<()> {
    if a.max_lag == 0 {
        return Err(Error::invalid("max lag must be at least 1"));
    }
    let (headers, returns) = io::load_returns(&a.input)?;
    let per_series = (0..returns.num_portfolios())
        .map(|i| autocorrelation(&returns.series(i), a.max_lag))
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec!["lag".to_string(), "mean".to_string()];
    cols.extend(headers);
    let k = per_series.len() as f64;
    let rows = (0..a.max_lag).map(|l| {
        let mut row = vec![(l + 1) as f64, per_series.iter().map(|s| s[l]).sum::<f64>() / k];
        row.extend(per_series.iter().map(|s| s[l]));
        row
    });
    emit(a.output.as_deref(), &io::table_csv(&cols, rows))
}

fn nulls(a: &NullsArgs) -> Result<()> {
    let (names, returns) = io::load_returns(&a.returns)?;
    let (_, raw_factors) = io::load_numeric(&a.factors)?;
    let panel = demean_factors(&raw_factors)?;
    let alphas = estimate_alphas(&panel, &returns)?;
    let residuals = residual_matrix(&fit_portfolios(&panel, &returns)?)?;
    let boot = residual_bootstrap(&residuals, alphas.df(), a.draws, &mut substream(a.seed, &[]))?;
    if boot.redraws > 0 {
        eprintln!("fdrboot: {} degenerate resamples redrawn", boot.redraws);
    }
    io::write_tvalues(&a.alphas_out, &alphas, Some(&names))?;
    io::write_nulls(&a.nulls_out, &boot.nulls)
}
