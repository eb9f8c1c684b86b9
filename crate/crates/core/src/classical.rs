//! Baseline procedures that only look at the observed p-values: a fixed
//! threshold, the linear step-up family and Storey's plug-in estimators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testing::{ecdf_at, sup_threshold, TestDecision};

/// Shared settings for the classical procedures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcedureConfig {
    /// Target FDR level.
    pub q: f64,
    /// Storey reference point.
    pub p0: f64,
    /// Resamples used to pick the reference point adaptively.
    pub boot_count: usize,
}

impl Default for ProcedureConfig {
    fn default() -> Self {
        Self {
            q: 0.05,
            p0: 0.5,
            boot_count: 500,
        }
    }
}

impl ProcedureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q = {} not in (0, 1)", self.q)));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::invalid(format!("p0 = {} not in (0, 1)", self.p0)));
        }
        Ok(())
    }
}

/// Rejects every p-value at or below `p_fixed`, ignoring multiplicity.
pub fn single(pvals: &[f64], p_fixed: f64) -> TestDecision {
    TestDecision::at_threshold(pvals, p_fixed)
}

/// Benjamini–Hochberg linear step-up at level `q`.
pub fn bh(pvals: &[f64], q: f64) -> TestDecision {
    sup_threshold(pvals, q)
}

/// Effective level of the logarithmic correction, `q / (ln N + 1/2)`.
pub fn by_level(n: usize, q: f64) -> f64 {
    q / ((n.max(1) as f64).ln() + 0.5)
}

/// Benjamini–Yekutieli: step-up at the log-corrected level, valid under
/// arbitrary dependence.
pub fn by(pvals: &[f64], q: f64) -> TestDecision {
    bh(pvals, by_level(pvals.len(), q))
}

/// Two-stage adaptive step-up of Benjamini, Krieger and Yekutieli.
///
/// Stage one runs BH at `q' = q/(1+q)`; its rejection count `r1` gives the
/// null-count estimate `N - r1`, and stage two reruns BH at `q' N / (N - r1)`.
pub fn bky(pvals: &[f64], q: f64) -> TestDecision {
    let n = pvals.len();
    let q1 = q / (1.0 + q);
    let stage1 = bh(pvals, q1);
    let r1 = stage1.num_rejected();
    if r1 == 0 {
        return stage1;
    }
    if r1 == n {
        return TestDecision::all(pvals);
    }
    let n0 = (n - r1) as f64;
    bh(pvals, q1 * n as f64 / n0)
}

/// Plug-in estimate of the alternative fraction,
/// `max(0, (F(p0) - p0) / (1 - p0))`.
pub fn storey_pi1(pvals: &[f64], p0: f64) -> f64 {
    ((ecdf_at(pvals, p0) - p0) / (1.0 - p0)).max(0.0)
}

/// Storey's threshold `sup { p : F(p) >= (1 - pi1) p / q }` with the plug-in
/// `pi1` taken at reference point `p0`.
pub fn storey(pvals: &[f64], q: f64, p0: f64) -> TestDecision {
    let pi1 = storey_pi1(pvals, p0);
    if pi1 >= 1.0 {
        return TestDecision::all(pvals);
    }
    sup_threshold(pvals, q / (1.0 - pi1))
}

/// Candidate reference points for [`storey_adaptive`].
pub fn reference_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

fn null_fraction(pvals: &[f64], lambda: f64) -> f64 {
    let above = pvals.iter().filter(|&&p| p > lambda).count();
    above as f64 / (pvals.len() as f64 * (1.0 - lambda))
}

/// Reference point chosen by the bootstrap MSE rule of Storey, Taylor and
/// Siegmund: the grid point whose resampled null-fraction estimates deviate
/// least (in mean square) from the smallest estimate on the grid.
pub fn select_reference_point<R: Rng + ?Sized>(pvals: &[f64], boot_count: usize, rng: &mut R) -> f64 {
    let n = pvals.len();
    if n < 2 || boot_count == 0 {
        return 0.5;
    }
    let grid = reference_grid();
    let target = grid
        .iter()
        .map(|&l| null_fraction(pvals, l))
        .fold(f64::INFINITY, f64::min);

    let mut mse = vec![0.0; grid.len()];
    let mut resample = vec![0.0; n];
    for _ in 0..boot_count {
        for slot in resample.iter_mut() {
            *slot = pvals[rng.random_range(0..n)];
        }
        for (m, &l) in mse.iter_mut().zip(&grid) {
            let d = null_fraction(&resample, l) - target;
            *m += d * d;
        }
    }
    let best = mse
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &m)| if m < acc.1 { (k, m) } else { acc })
        .0;
    grid[best]
}

/// Storey's procedure with the reference point picked by
/// [`select_reference_point`].
pub fn storey_adaptive<R: Rng + ?Sized>(pvals: &[f64], q: f64, boot_count: usize, rng: &mut R) -> TestDecision {
    let p0 = select_reference_point(pvals, boot_count, rng);
    storey(pvals, q, p0)
}
