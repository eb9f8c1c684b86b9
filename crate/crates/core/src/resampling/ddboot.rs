//! Dueling double bootstrap.
//!
//! The final decision is the step-up threshold `sup { p : F(p) >= p / c_q }`
//! on the observed p-values. The slope `c_q` is calibrated by bootstrapping
//! twice: `V` outer draws `u^(v)` turn the observation into candidate
//! parameters `alpha_hat - u^(v)`, and for each candidate `W` inner draws
//! estimate the FDR the slope would incur if that candidate were the truth.
//! Each candidate contributes the largest slope whose estimated FDR stays
//! within the target, and the smallest of these is used.

use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_model::{AlphaEstimates, NullSampleSet};
use crate::rng::substream;
use crate::testing::{sup_threshold, PValueFn, Sidedness, TestDecision};

/// Lower and upper margin of the slope search interval `(CQ_EPS, 1 - CQ_EPS)`.
pub const CQ_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdbootConfig {
    /// Target FDR level.
    pub q: f64,
    /// Candidate parameters sampled (`V`).
    pub outer_draws: usize,
    /// Inner draws per FDR estimate (`W`).
    pub inner_draws: usize,
    /// Bisection steps for each slope search (`S`).
    pub search_steps: usize,
    pub sidedness: Sidedness,
    /// Calibrate each candidate to `q` instead of `q/2`.
    pub aggressive: bool,
}

impl Default for DdbootConfig {
    fn default() -> Self {
        Self {
            q: 0.05,
            outer_draws: 20,
            inner_draws: 500,
            search_steps: 20,
            sidedness: Sidedness::TwoSided,
            aggressive: false,
        }
    }
}

impl DdbootConfig {
    /// Aggressive variant of `self`.
    pub fn aggressive(self) -> Self {
        Self {
            aggressive: true,
            ..self
        }
    }

    /// FDR level each candidate is calibrated to.
    pub fn target_level(&self) -> f64 {
        if self.aggressive {
            self.q
        } else {
            self.q / 2.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q = {} not in (0, 1)", self.q)));
        }
        if self.outer_draws == 0 || self.inner_draws == 0 || self.search_steps == 0 {
            return Err(Error::invalid("V, W and S must all be at least 1"));
        }
        Ok(())
    }
}

/// A candidate true parameter and the null set it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledParameter {
    pub alpha_v: Vec<f64>,
    pub implied_nulls: Vec<bool>,
}

impl SampledParameter {
    pub fn num_nulls(&self) -> usize {
        self.implied_nulls.iter().filter(|&&b| b).count()
    }
}

/// `alpha_hat - u_v`. In two-sided mode every coordinate with
/// `|alpha_hat_i| <= |u_v_i|` is set to exactly zero, which guarantees the
/// candidate keeps a share of the true nulls.
pub fn sample_alpha_v(alpha_hat: &[f64], u_v: &[f64], sidedness: Sidedness) -> SampledParameter {
    assert_eq!(alpha_hat.len(), u_v.len());
    let alpha_v: Vec<f64> = alpha_hat
        .iter()
        .zip(u_v)
        .map(|(&a, &u)| match sidedness {
            Sidedness::TwoSided if a.abs() <= u.abs() => 0.0,
            _ => a - u,
        })
        .collect();
    let implied_nulls = alpha_v
        .iter()
        .map(|&a| match sidedness {
            Sidedness::OneSided => a <= 0.0,
            Sidedness::TwoSided => a == 0.0,
        })
        .collect();
    SampledParameter {
        alpha_v,
        implied_nulls,
    }
}

/// Sorted p-values of `alpha_v + u^(w)` for a fixed set of inner draws, with
/// prefix counts of implied nulls so each FDR evaluation is a single scan.
struct InnerBlock {
    n: usize,
    sorted_p: Vec<f64>,
    null_prefix: Vec<u32>,
}

impl InnerBlock {
    fn build(param: &SampledParameter, pool: &NullSampleSet, rows: &[usize], pfn: &PValueFn) -> Self {
        Self::build_cached(param, pool, rows, pfn, None)
    }

    /// As `build`, reusing pool p-values for coordinates where `alpha_v` is
    /// exactly zero, since those p-values are just `p(u_i)`.
    fn build_cached(
        param: &SampledParameter,
        pool: &NullSampleSet,
        rows: &[usize],
        pfn: &PValueFn,
        cache: Option<&PoolPValues>,
    ) -> Self {
        let n = param.alpha_v.len();
        let any_zero = param.alpha_v.contains(&0.0);
        let mut sorted_p = Vec::with_capacity(rows.len() * n);
        let mut null_prefix = Vec::with_capacity(rows.len() * (n + 1));
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        for &b in rows {
            let cached = match cache {
                Some(c) if any_zero => Some(c.row(b)),
                _ => None,
            };
            pairs.clear();
            pairs.extend(
                param
                    .alpha_v
                    .iter()
                    .zip(pool.row(b))
                    .zip(&param.implied_nulls)
                    .enumerate()
                    .map(|(i, ((&a, &u), &null))| match cached {
                        Some(p) if a == 0.0 => (p[i], null),
                        _ => (pfn.eval(a + u), null),
                    }),
            );
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut acc = 0u32;
            null_prefix.push(0);
            for &(p, null) in &pairs {
                sorted_p.push(p);
                acc += null as u32;
                null_prefix.push(acc);
            }
        }
        Self {
            n,
            sorted_p,
            null_prefix,
        }
    }

    /// Mean false discovery proportion of the step-up rule with slope `c`.
    fn estimate(&self, c: f64) -> f64 {
        let draws = self.sorted_p.len() / self.n;
        let nf = self.n as f64;
        // same boundary values as step_up_count, computed once per slope
        let bounds: Vec<f64> = (1..=self.n).map(|k| c * k as f64 / nf).collect();
        let mut total = 0.0;
        for w in 0..draws {
            let sorted = &self.sorted_p[w * self.n..(w + 1) * self.n];
            let k = (1..=self.n).rev().find(|&k| sorted[k - 1] <= bounds[k - 1]).unwrap_or(0);
            if k > 0 {
                total += self.null_prefix[w * (self.n + 1) + k] as f64 / k as f64;
            }
        }
        total / draws as f64
    }
}

/// Per-row p-values of the pool, computed on first use.
struct PoolPValues<'a> {
    pool: &'a NullSampleSet,
    pfn: PValueFn,
    rows: Vec<OnceLock<Vec<f64>>>,
}

impl<'a> PoolPValues<'a> {
    fn new(pool: &'a NullSampleSet, pfn: PValueFn) -> Self {
        Self {
            pool,
            pfn,
            rows: (0..pool.num_draws()).map(|_| OnceLock::new()).collect(),
        }
    }

    fn row(&self, b: usize) -> &[f64] {
        self.rows[b].get_or_init(|| self.pfn.eval_all(self.pool.row(b)))
    }
}

fn check_pool(param: &SampledParameter, pool: &NullSampleSet) -> Result<()> {
    if pool.num_draws() == 0 {
        return Err(Error::EmptyPool);
    }
    if pool.num_hypotheses() != param.alpha_v.len() {
        return Err(Error::invalid(format!(
            "pool has {} hypotheses, parameter has {}",
            pool.num_hypotheses(),
            param.alpha_v.len()
        )));
    }
    Ok(())
}

/// Estimated FDR of slope `c_q` if `param` were the true parameter: the mean,
/// over `inner_draws` pool rows drawn with replacement, of the false discovery
/// proportion of the step-up rule applied to `alpha_v + u^(w)`.
pub fn estimate_fdr<R: Rng + ?Sized>(
    param: &SampledParameter,
    pool: &NullSampleSet,
    c_q: f64,
    inner_draws: usize,
    df: f64,
    sidedness: Sidedness,
    rng: &mut R,
) -> Result<f64> {
    check_pool(param, pool)?;
    if inner_draws == 0 {
        return Err(Error::invalid("need at least one inner draw"));
    }
    let rows: Vec<usize> = (0..inner_draws)
        .map(|_| rng.random_range(0..pool.num_draws()))
        .collect();
    let pfn = PValueFn::new(df, sidedness);
    Ok(InnerBlock::build(param, pool, &rows, &pfn).estimate(c_q))
}

/// Largest `c` in `(CQ_EPS, 1 - CQ_EPS)` reported feasible by `steps`
/// bisection steps.
///
/// The upper end is tried first and returned if feasible. Otherwise the
/// bracket `[lo, hi]` starts at the interval ends, is halved `steps` times
/// (feasible midpoints raise `lo`, infeasible ones lower `hi`) and `lo` is
/// returned; if no midpoint is feasible that is `CQ_EPS`, which rejects
/// nothing downstream in practice.
pub fn bisect_sup(mut feasible: impl FnMut(f64) -> bool, steps: usize) -> f64 {
    let (mut lo, mut hi) = (CQ_EPS, 1.0 - CQ_EPS);
    if feasible(hi) {
        return hi;
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Slope search for one candidate. The `inner_draws` rows are drawn once and
/// reused for every bisection step, so the searched function is fixed.
#[allow(clippy::too_many_arguments)]
pub fn find_cq<R: Rng + ?Sized>(
    param: &SampledParameter,
    pool: &NullSampleSet,
    target_level: f64,
    inner_draws: usize,
    steps: usize,
    df: f64,
    sidedness: Sidedness,
    rng: &mut R,
) -> Result<f64> {
    check_pool(param, pool)?;
    if !(target_level > 0.0 && target_level < 1.0) {
        return Err(Error::invalid(format!("target level {target_level} not in (0, 1)")));
    }
    let rows: Vec<usize> = (0..inner_draws)
        .map(|_| rng.random_range(0..pool.num_draws()))
        .collect();
    let block = InnerBlock::build(param, pool, &rows, &PValueFn::new(df, sidedness));
    Ok(bisect_sup(|c| block.estimate(c) <= target_level, steps))
}

/// Calibrated slopes `min_v c_q^(v)`, one per entry of `targets`, all
/// computed from the same outer and inner draws.
///
/// The `V` outer rows are distinct and never reused as inner rows; each
/// candidate gets its own `W` distinct inner rows from the remainder. Work
/// is split across candidates with per-candidate RNG substreams, so the
/// result depends only on `rng`.
pub fn dueling_levels<R: Rng + ?Sized>(
    alpha_hat: &AlphaEstimates,
    pool: &NullSampleSet,
    config: &DdbootConfig,
    targets: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    config.validate()?;
    if pool.num_hypotheses() != alpha_hat.len() {
        return Err(Error::invalid(format!(
            "pool has {} hypotheses, observation has {}",
            pool.num_hypotheses(),
            alpha_hat.len()
        )));
    }
    let (v_count, w_count) = (config.outer_draws, config.inner_draws);
    let b = pool.num_draws();
    if b < v_count + w_count {
        return Err(Error::PoolTooSmall {
            required: v_count + w_count,
            available: b,
        });
    }
    let outer = index::sample(rng, b, v_count).into_vec();
    let mut is_outer = vec![false; b];
    for &r in &outer {
        is_outer[r] = true;
    }
    let inner_candidates: Vec<usize> = (0..b).filter(|&r| !is_outer[r]).collect();
    let base: u64 = rng.random();
    let pfn = PValueFn::new(alpha_hat.df(), config.sidedness);
    let cache = PoolPValues::new(pool, pfn);

    let per_candidate: Vec<Vec<f64>> = outer
        .par_iter()
        .enumerate()
        .map(|(v, &row)| {
            let mut rng = substream(base, &[v as u64]);
            let param = sample_alpha_v(alpha_hat.values(), pool.row(row), config.sidedness);
            let inner: Vec<usize> = index::sample(&mut rng, inner_candidates.len(), w_count)
                .into_iter()
                .map(|k| inner_candidates[k])
                .collect();
            let block = InnerBlock::build_cached(&param, pool, &inner, &pfn, Some(&cache));
            targets
                .iter()
                .map(|&t| bisect_sup(|c| block.estimate(c) <= t, config.search_steps))
                .collect()
        })
        .collect();

    Ok((0..targets.len())
        .map(|k| per_candidate.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min))
        .collect())
}

/// Dueling double bootstrap decision on the observed statistics.
pub fn ddboot<R: Rng + ?Sized>(
    alpha_hat: &AlphaEstimates,
    pool: &NullSampleSet,
    config: &DdbootConfig,
    rng: &mut R,
) -> Result<TestDecision> {
    let c_q = dueling_levels(alpha_hat, pool, config, &[config.target_level()], rng)?[0];
    let pvals = PValueFn::new(alpha_hat.df(), config.sidedness).eval_all(alpha_hat.values());
    Ok(sup_threshold(&pvals, c_q))
}

/// Number of null coordinates on which `u1` wins the duel against `u2`:
/// `u1_i >= u2_i` (one-sided) or `|u1_i| >= |u2_i|` (two-sided).
pub fn dueling_count(u1: &[f64], u2: &[f64], null_idx: &[usize], sidedness: Sidedness) -> usize {
    null_idx
        .iter()
        .filter(|&&i| match sidedness {
            Sidedness::OneSided => u1[i] >= u2[i],
            Sidedness::TwoSided => u1[i].abs() >= u2[i].abs(),
        })
        .count()
}
