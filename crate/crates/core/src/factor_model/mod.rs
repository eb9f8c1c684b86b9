//! Factor-model alpha estimation and the cross-sectional residual bootstrap.
//!
//! Portfolio returns are regressed on an intercept plus demeaned factor
//! returns. The intercept's studentized estimate is the test statistic for
//! each portfolio, and resampling time steps of the residuals jointly across
//! portfolios yields draws from the correlated null distribution of those
//! statistics.

mod autocorr;
mod bootstrap;
mod ols;

pub use autocorr::{autocorrelation, mean_autocorrelation};
pub use bootstrap::{
    bootstrap_moment_check, enumerate_resampled_means, resampled_means, residual_bootstrap,
    residual_matrix,
    BootstrapOutput, MomentDiagnostic, MAX_ENUMERATION_T,
};
pub use ols::{
    demean_columns, demean_factors, estimate_alphas, fit_portfolios, ols_fit, FactorPanel, OlsDesign, OlsFit,
    ReturnPanel,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_df(df: f64) -> Result<()> {
    if df >= 1.0 && df.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("degrees of freedom {df} must be finite and >= 1")))
    }
}

/// Observed studentized alphas together with the degrees of freedom of their
/// marginal t law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimates {
    alpha_hat: Vec<f64>,
    df: f64,
}

impl AlphaEstimates {
    pub fn new(alpha_hat: Vec<f64>, df: f64) -> Result<Self> {
        check_df(df)?;
        if alpha_hat.is_empty() {
            return Err(Error::invalid("no hypotheses"));
        }
        if let Some(i) = alpha_hat.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("alpha {i}"),
            });
        }
        Ok(Self { alpha_hat, df })
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha_hat
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn len(&self) -> usize {
        self.alpha_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_hat.is_empty()
    }
}

/// `B` joint draws from the null distribution, stored row-major (one row per
/// draw, one column per hypothesis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSampleSet {
    n: usize,
    draws: Vec<f64>,
    df: f64,
}

impl NullSampleSet {
    pub fn new(n: usize, draws: Vec<f64>, df: f64) -> Result<Self> {
        check_df(df)?;
        if n == 0 || draws.is_empty() || !draws.len().is_multiple_of(n) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of {n} hypotheses",
                draws.len()
            )));
        }
        if let Some(k) = draws.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("null draw {}, hypothesis {}", k / n, k % n),
            });
        }
        Ok(Self { n, draws, df })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, df: f64) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(b) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::invalid(format!(
                "draw {b} has {} columns, expected {n}",
                rows[b].len()
            )));
        }
        Self::new(n, rows.into_iter().flatten().collect(), df)
    }

    /// Number of draws `B`.
    pub fn num_draws(&self) -> usize {
        self.draws.len() / self.n
    }

    /// Number of hypotheses `N`.
    pub fn num_hypotheses(&self) -> usize {
        self.n
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.draws[b * self.n..(b + 1) * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.draws.chunks_exact(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.draws
    }

    /// New set made of the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut draws = Vec::with_capacity(rows.len() * self.n);
        for &b in rows {
            if b >= self.num_draws() {
                return Err(Error::invalid(format!("row {b} out of range")));
            }
            draws.extend_from_slice(self.row(b));
        }
        Self::new(self.n, draws, self.df)
    }

    /// First `b` rows (all rows when `b` exceeds the pool size).
    pub fn head(&self, b: usize) -> Self {
        let b = b.min(self.num_draws());
        Self {
            n: self.n,
            draws: self.draws[..b * self.n].to_vec(),
            df: self.df,
        }
    }
}
