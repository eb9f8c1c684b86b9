//! Synthetic benchmark: equicorrelated multivariate-t statistics with a
//! known null set, and a seeded Monte Carlo harness comparing procedures.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{bh, bky, by, single, storey, storey_adaptive, ProcedureConfig};
use crate::error::{Error, Result};
use crate::factor_model::{AlphaEstimates, NullSampleSet};
use crate::resampling::{dueling_levels, yb, DdbootConfig, YB_DEFAULT_DRAWS};
use crate::rng::substream;
use crate::testing::{contingency, sup_threshold, HypothesisLabels, PValueFn, Sidedness, TestDecision};

/// One joint draw of `n` t-statistics with common correlation `rho`: a
/// Gaussian vector with unit diagonal and off-diagonal `rho`, divided by a
/// single `sqrt(chi2_df / df)` shared by all coordinates.
pub fn sample_mvt<R: Rng + ?Sized>(n: usize, rho: f64, df: f64, rng: &mut R) -> Vec<f64> {
    let common: f64 = rng.sample(StandardNormal);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let chi = ChiSquared::new(df).expect("df must be positive");
    let mut z: Vec<f64> = (0..n)
        .map(|_| a * common + b * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let scale = (chi.sample(rng) / df).sqrt().recip();
    z.iter_mut().for_each(|x| *x *= scale);
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Scenario number in the standard grid, 0 for custom specs.
    pub id: u32,
    pub n_hyp: usize,
    pub df: f64,
    pub rho: f64,
    pub pi0: f64,
    /// Alternatives have mean `signal_scale * Unif(0, 1]`.
    pub signal_scale: f64,
    /// Null draws generated for each instance.
    pub pool_size: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            id: 0,
            n_hyp: 50,
            df: 100.0,
            rho: 0.0,
            pi0: 0.5,
            signal_scale: 2.0,
            pool_size: 2_000,
        }
    }
}

impl ScenarioSpec {
    /// Scenario `id` (1 to 9) of the standard grid.
    pub fn standard(id: u32) -> Result<Self> {
        if !(1..=9).contains(&id) {
            return Err(Error::invalid(format!("scenario {id} not in 1..=9")));
        }
        let k = (id - 1) as usize;
        let pi0 = [0.5, 1.0, 0.25][k / 3];
        let rho = [0.0, 0.5, 0.9][k % 3];
        Ok(Self {
            id,
            rho,
            pi0,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho = {} not in [0, 1)", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(Error::invalid(format!("pi0 = {} not in [0, 1]", self.pi0)));
        }
        if self.n_hyp == 0 || self.pool_size == 0 {
            return Err(Error::invalid("need at least one hypothesis and one pool draw"));
        }
        if !(self.df >= 3.0) {
            return Err(Error::invalid(format!("df = {} below 3", self.df)));
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return Err(Error::invalid("signal scale must be positive"));
        }
        Ok(())
    }

    /// Number of null coordinates, `pi0 * N` rounded half up.
    pub fn num_nulls(&self) -> usize {
        ((self.pi0 * self.n_hyp as f64 + 0.5).floor() as usize).min(self.n_hyp)
    }

    pub fn make_instance<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimInstance> {
        self.validate()?;
        let n = self.n_hyp;
        let nulls = index::sample(rng, n, self.num_nulls()).into_vec();
        let labels = HypothesisLabels::from_null_set(n, &nulls)?;
        let mu: Vec<f64> = (0..n)
            .map(|i| {
                if labels.is_null(i) {
                    0.0
                } else {
                    // 1 - U lies in (0, 1]
                    self.signal_scale * (1.0 - rng.random::<f64>())
                }
            })
            .collect();
        let noise = sample_mvt(n, self.rho, self.df, rng);
        let alpha_hat = mu.iter().zip(&noise).map(|(m, u)| m + u).collect();
        let draws: Vec<f64> = (0..self.pool_size)
            .flat_map(|_| sample_mvt(n, self.rho, self.df, rng))
            .collect();
        Ok(SimInstance {
            mu,
            alpha_hat: AlphaEstimates::new(alpha_hat, self.df)?,
            labels,
            null_pool: NullSampleSet::new(n, draws, self.df)?,
        })
    }

    /// One-line description used in report headers.
    pub fn describe(&self) -> String {
        format!(
            "Scenario {}: rho={}, pi0={}, N={}, df={}",
            self.id, self.rho, self.pi0, self.n_hyp, self.df
        )
    }
}

/// The nine standard scenarios, in order.
pub fn scenario_grid() -> Vec<ScenarioSpec> {
    (1..=9).map(|id| ScenarioSpec::standard(id).unwrap()).collect()
}

#[derive(Debug, Clone)]
pub struct SimInstance {
    pub mu: Vec<f64>,
    pub alpha_hat: AlphaEstimates,
    pub labels: HypothesisLabels,
    pub null_pool: NullSampleSet,
}

impl SimInstance {
    /// Two-sided p-values of the observed statistics.
    pub fn p_values(&self) -> Vec<f64> {
        PValueFn::new(self.alpha_hat.df(), Sidedness::TwoSided).eval_all(self.alpha_hat.values())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Single,
    Bh,
    By,
    Bky,
    Storey,
    StoreyA,
    Yb,
    Ddb,
    Ddba,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Single,
        Method::Bh,
        Method::By,
        Method::Bky,
        Method::Storey,
        Method::StoreyA,
        Method::Yb,
        Method::Ddb,
        Method::Ddba,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Single => "Single",
            Method::Bh => "BH",
            Method::By => "BY",
            Method::Bky => "BKY",
            Method::Storey => "Storey",
            Method::StoreyA => "Storey-A",
            Method::Yb => "YB",
            Method::Ddb => "DDB",
            Method::Ddba => "DDBA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Method::ALL
            .into_iter()
            .find(|m| m.label().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Tuning shared by every method in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub classical: ProcedureConfig,
    pub ddboot: DdbootConfig,
    /// Null draws handed to YB.
    pub yb_draws: usize,
}

impl MethodSettings {
    pub fn with_q(q: f64) -> Self {
        Self {
            classical: ProcedureConfig {
                q,
                ..ProcedureConfig::default()
            },
            ddboot: DdbootConfig {
                q,
                ..DdbootConfig::default()
            },
            yb_draws: YB_DEFAULT_DRAWS,
        }
    }

    pub fn q(&self) -> f64 {
        self.classical.q
    }

    pub fn validate(&self) -> Result<()> {
        self.classical.validate()?;
        self.ddboot.validate()?;
        if self.classical.q != self.ddboot.q {
            return Err(Error::invalid("classical and bootstrap levels differ"));
        }
        if self.yb_draws == 0 {
            return Err(Error::invalid("YB needs at least one null draw"));
        }
        Ok(())
    }
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self::with_q(0.05)
    }
}

/// Applies `methods` to one set of statistics and its null pool, returning
/// decisions in the order of `methods`.
///
/// DDB and DDBA share their bootstrap draws, so on a given `seed` DDBA
/// always rejects a superset of DDB. Everything random is derived from
/// `seed`.
pub fn apply_methods(
    alpha_hat: &AlphaEstimates,
    pool: &NullSampleSet,
    methods: &[Method],
    settings: &MethodSettings,
    seed: u64,
) -> Result<Vec<TestDecision>> {
    settings.validate()?;
    let sidedness = settings.ddboot.sidedness;
    let pvals = PValueFn::new(alpha_hat.df(), sidedness).eval_all(alpha_hat.values());
    let q = settings.q();

    let needs_dd = methods.iter().any(|m| matches!(m, Method::Ddb | Method::Ddba));
    let slopes = if needs_dd {
        let targets = [q / 2.0, q];
        dueling_levels(alpha_hat, pool, &settings.ddboot, &targets, &mut substream(seed, &[2]))?
    } else {
        Vec::new()
    };

    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        out.push(match m {
            Method::Single => single(&pvals, q),
            Method::Bh => bh(&pvals, q),
            Method::By => by(&pvals, q),
            Method::Bky => bky(&pvals, q),
            Method::Storey => storey(&pvals, q, settings.classical.p0),
            Method::StoreyA => storey_adaptive(
                &pvals,
                q,
                settings.classical.boot_count,
                &mut substream(seed, &[1]),
            ),
            Method::Yb => {
                if pool.num_draws() == 0 {
                    return Err(Error::EmptyPool);
                }
                let draws = settings.yb_draws.min(pool.num_draws());
                yb(&pvals, &pool.head(draws), q, sidedness)
            }
            Method::Ddb => sup_threshold(&pvals, slopes[0]),
            Method::Ddba => sup_threshold(&pvals, slopes[1]),
        });
    }
    Ok(out)
}

/// Aggregated results of one method over all runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean largest rejected p-value, counting runs without rejections as 0.
    pub mean_threshold: f64,
    pub mean_rejections: f64,
    pub fdr: f64,
    /// Two standard errors of the FDR estimate; absent for a single run.
    pub fdr_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: ScenarioSpec,
    pub runs: usize,
    pub q: f64,
    pub seed: u64,
    pub methods: Vec<MethodSummary>,
}

impl MonteCarloReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }

    /// Aligned text table, one row per method.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} (q={}, runs={}, seed={})", self.scenario.describe(), self.q, self.runs, self.seed).unwrap();
        writeln!(s, "{:<10} {:>10} {:>10} {:>8} {:>8}", "Method", "Thr-p", "# of Rej", "FDR", "±").unwrap();
        for m in &self.methods {
            let hw = m.fdr_half_width.map_or_else(|| "n/a".to_string(), |h| format!("{h:.4}"));
            writeln!(
                s,
                "{:<10} {:>10.4} {:>10.2} {:>8.4} {:>8}",
                m.method.label(),
                m.mean_threshold,
                m.mean_rejections,
                m.fdr,
                hw
            )
            .unwrap();
        }
        s
    }

    pub const CSV_HEADER: &'static str = "scenario,rho,pi0,runs,q,seed,method,threshold_p,rejections,fdr,fdr_half_width";

    /// CSV rows without header.
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for m in &self.methods {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{:.17e},{:.17e},{:.17e},{}",
                self.scenario.id,
                self.scenario.rho,
                self.scenario.pi0,
                self.runs,
                self.q,
                self.seed,
                m.method.label(),
                m.mean_threshold,
                m.mean_rejections,
                m.fdr,
                m.fdr_half_width.map_or_else(String::new, |h| format!("{h:.17e}"))
            )
            .unwrap();
        }
        s
    }
}

struct RunRecord {
    threshold: Vec<f64>,
    rejections: Vec<f64>,
    fdp: Vec<f64>,
}

fn run_once(spec: &ScenarioSpec, methods: &[Method], settings: &MethodSettings, seed: u64, run: u64) -> Result<RunRecord> {
    let inst = spec.make_instance(&mut substream(seed, &[run, 0]))?;
    let decisions = apply_methods(
        &inst.alpha_hat,
        &inst.null_pool,
        methods,
        settings,
        crate::rng::derive_seed(seed, &[run, 1]),
    )?;
    let mut rec = RunRecord {
        threshold: Vec::with_capacity(methods.len()),
        rejections: Vec::with_capacity(methods.len()),
        fdp: Vec::with_capacity(methods.len()),
    };
    for d in &decisions {
        rec.threshold.push(d.threshold_p.unwrap_or(0.0));
        rec.rejections.push(d.num_rejected() as f64);
        rec.fdp.push(contingency(d, &inst.labels).fdp());
    }
    Ok(rec)
}

/// Monte Carlo comparison with default tuning at level `q`.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    methods: &[Method],
    runs: usize,
    q: f64,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    run_monte_carlo_with(spec, methods, runs, &MethodSettings::with_q(q), master_seed)
}

/// Runs `runs` independent instances of `spec`, applying every method to
/// each instance. Run `k` uses only substreams derived from
/// `(master_seed, k)`, so the report is identical for any thread count.
pub fn run_monte_carlo_with(
    spec: &ScenarioSpec,
    methods: &[Method],
    runs: usize,
    settings: &MethodSettings,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    spec.validate()?;
    settings.validate()?;
    if runs == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    if methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    let records: Vec<RunRecord> = (0..runs as u64)
        .into_par_iter()
        .map(|run| run_once(spec, methods, settings, master_seed, run))
        .collect::<Result<_>>()?;

    let n = runs as f64;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mean_of = |f: fn(&RunRecord) -> &Vec<f64>| records.iter().map(|r| f(r)[k]).sum::<f64>() / n;
            let fdr = mean_of(|r| &r.fdp);
            let fdr_half_width = (runs > 1).then(|| {
                let ss: f64 = records.iter().map(|r| (r.fdp[k] - fdr).powi(2)).sum();
                2.0 * (ss / (n - 1.0)).sqrt() / n.sqrt()
            });
            MethodSummary {
                method,
                mean_threshold: mean_of(|r| &r.threshold),
                mean_rejections: mean_of(|r| &r.rejections),
                fdr,
                fdr_half_width,
            }
        })
        .collect();
    Ok(MonteCarloReport {
        scenario: *spec,
        runs,
        q: settings.q(),
        seed: master_seed,
        methods: summaries,
    })
}
