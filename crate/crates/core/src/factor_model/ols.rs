use nalgebra::{DMatrix, DVector};

use super::AlphaEstimates;
use crate::error::{Error, Result};

const MEAN_TOL: f64 = 1e-12;

/// `T x K` regressor matrix: an intercept column of ones followed by
/// zero-mean factor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    x: DMatrix<f64>,
}

impl FactorPanel {
    /// Validates an already-built design (intercept first, demeaned factors,
    /// full column rank).
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (t, k) = x.shape();
        if k == 0 || t <= k {
            return Err(Error::invalid(format!("design is {t} x {k}; need T > K >= 1")));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("factor panel entry {pos}"),
            });
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("first design column must be the intercept (all ones)"));
        }
        for j in 1..k {
            let col = x.column(j);
            let scale = col.amax().max(1.0);
            if (col.mean() / scale).abs() > MEAN_TOL {
                return Err(Error::invalid(format!("factor column {j} is not demeaned")));
            }
        }
        let rank = numerical_rank(&x);
        if rank < k {
            return Err(Error::RankDeficient { rank, columns: k });
        }
        Ok(Self { x })
    }

    /// Intercept-only design with `t` rows.
    pub fn intercept_only(t: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(t, 1, 1.0))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn num_steps(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_columns(&self) -> usize {
        self.x.ncols()
    }
}

fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.max();
    let tol = max * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Prepends an intercept to `raw` (`T x k` factor returns) and subtracts each
/// factor column's sample mean.
pub fn demean_factors(raw: &DMatrix<f64>) -> Result<FactorPanel> {
    let (t, k) = raw.shape();
    if t <= k + 1 {
        return Err(Error::invalid(format!(
            "{t} time steps leave no residual degrees of freedom for {k} factors"
        )));
    }
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("factor entry {pos}"),
        });
    }
    let centered = demean_columns(raw);
    let mut x = DMatrix::from_element(t, k + 1, 1.0);
    x.columns_mut(1, k).copy_from(&centered);
    FactorPanel::new(x)
}

/// Subtracts each column's sample mean.
pub fn demean_columns(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = raw.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// `N x T` portfolio returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    values: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("empty return panel"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("return entry {pos}"),
            });
        }
        Ok(Self { values })
    }

    pub fn num_portfolios(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Least-squares fit of one return series.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Coefficients; the first is the intercept (alpha).
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual variance with divisor `T - K`.
    pub sigma2: f64,
}

impl OlsFit {
    pub fn alpha(&self) -> f64 {
        self.beta[0]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Design with its normal equations factored once, reused for every
/// portfolio.
#[derive(Debug, Clone)]
pub struct OlsDesign {
    x: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl OlsDesign {
    pub fn new(panel: &FactorPanel) -> Result<Self> {
        let x = panel.matrix().clone();
        let k = x.ncols();
        let xtx = x.transpose() * &x;
        let chol = xtx
            .cholesky()
            .ok_or(Error::RankDeficient { rank: k.saturating_sub(1), columns: k })?;
        Ok(Self { x, chol })
    }

    pub fn fit(&self, returns: &[f64]) -> Result<OlsFit> {
        let (t, k) = self.x.shape();
        if returns.len() != t {
            return Err(Error::invalid(format!(
                "return series has {} steps, design has {t}",
                returns.len()
            )));
        }
        let r = DVector::from_column_slice(returns);
        let beta = self.chol.solve(&(self.x.transpose() * &r));
        let resid = &r - &self.x * &beta;
        let sigma2 = resid.norm_squared() / (t - k) as f64;
        Ok(OlsFit {
            beta: beta.iter().copied().collect(),
            residuals: resid.iter().copied().collect(),
            sigma2,
        })
    }
}

/// `beta = (X'X)^{-1} X'r`, residuals and unbiased residual variance.
pub fn ols_fit(panel: &FactorPanel, returns: &[f64]) -> Result<OlsFit> {
    OlsDesign::new(panel)?.fit(returns)
}

/// Fits every portfolio against the shared design.
pub fn fit_portfolios(panel: &FactorPanel, returns: &ReturnPanel) -> Result<Vec<OlsFit>> {
    if panel.num_steps() != returns.num_steps() {
        return Err(Error::invalid(format!(
            "factor panel has {} steps, returns have {}",
            panel.num_steps(),
            returns.num_steps()
        )));
    }
    let design = OlsDesign::new(panel)?;
    (0..returns.num_portfolios())
        .map(|i| design.fit(&returns.series(i)))
        .collect()
}

fn is_degenerate(fit: &OlsFit, returns: &[f64]) -> bool {
    let rms = (returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64).sqrt();
    fit.sigma() <= 1e-10 * rms || fit.sigma2 == 0.0
}

/// Studentized alphas `sqrt(T) a_i / sigma_i` with `T - K` degrees of freedom.
pub fn estimate_alphas(panel: &FactorPanel, returns: &ReturnPanel) -> Result<AlphaEstimates> {
    let fits = fit_portfolios(panel, returns)?;
    let t = panel.num_steps() as f64;
    let mut alpha_hat = Vec::with_capacity(fits.len());
    for (i, fit) in fits.iter().enumerate() {
        if is_degenerate(fit, &returns.series(i)) {
            return Err(Error::DegeneratePortfolio { index: i });
        }
        alpha_hat.push(t.sqrt() * fit.alpha() / fit.sigma());
    }
    AlphaEstimates::new(alpha_hat, t - panel.num_columns() as f64)
}
