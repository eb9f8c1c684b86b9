use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::{NullSampleSet, OlsFit};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Largest series length for which all `T^T` resamples are enumerated.
pub const MAX_ENUMERATION_T: usize = 4;

const MAX_REDRAWS: usize = 10_000;

fn check_residuals(residuals: &DMatrix<f64>) -> Result<()> {
    if residuals.nrows() == 0 || residuals.ncols() < 2 {
        return Err(Error::invalid("residual matrix needs N >= 1 rows and T >= 2 columns"));
    }
    if let Some(pos) = residuals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("residual entry {pos}"),
        });
    }
    Ok(())
}

/// Stacks per-portfolio residuals into an `N x T` matrix.
pub fn residual_matrix(fits: &[OlsFit]) -> Result<DMatrix<f64>> {
    let t = fits.first().map_or(0, |f| f.residuals.len());
    if fits.iter().any(|f| f.residuals.len() != t) {
        return Err(Error::invalid("fits have different lengths"));
    }
    Ok(DMatrix::from_fn(fits.len(), t, |i, j| fits[i].residuals[j]))
}

fn draw_indices<R: Rng + ?Sized>(t: usize, rng: &mut R, out: &mut [usize]) {
    for slot in out.iter_mut() {
        *slot = rng.random_range(0..t);
    }
}

/// Mean of each row over the resampled time steps.
fn means_at(residuals: &DMatrix<f64>, idx: &[usize], out: &mut [f64]) {
    let t = idx.len() as f64;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = idx.iter().map(|&s| residuals[(i, s)]).sum::<f64>() / t;
    }
}

/// `B x N` matrix of resampled residual means. Each draw resamples `T` time
/// steps with replacement and applies the same steps to every portfolio.
pub fn resampled_means<R: Rng + ?Sized>(
    residuals: &DMatrix<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    check_residuals(residuals)?;
    let (n, t) = residuals.shape();
    let base: u64 = rng.random();
    let rows: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(base, &[b as u64]);
            let mut idx = vec![0; t];
            draw_indices(t, &mut rng, &mut idx);
            let mut row = vec![0.0; n];
            means_at(residuals, &idx, &mut row);
            row
        })
        .collect();
    Ok(DMatrix::from_fn(draws, n, |b, i| rows[b][i]))
}

/// Resampled means over every one of the `T^T` index sequences, each with
/// equal weight. Only for `T <= MAX_ENUMERATION_T`.
pub fn enumerate_resampled_means(residuals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_residuals(residuals)?;
    let (n, t) = residuals.shape();
    if t > MAX_ENUMERATION_T {
        return Err(Error::invalid(format!(
            "exact enumeration needs T <= {MAX_ENUMERATION_T}, got {t}"
        )));
    }
    let total = t.pow(t as u32);
    let mut out = DMatrix::zeros(total, n);
    let mut idx = vec![0; t];
    let mut row = vec![0.0; n];
    for code in 0..total {
        let mut c = code;
        for slot in idx.iter_mut() {
            *slot = c % t;
            c /= t;
        }
        means_at(residuals, &idx, &mut row);
        for i in 0..n {
            out[(code, i)] = row[i];
        }
    }
    Ok(out)
}

/// Null draws together with the number of degenerate resamples that were
/// discarded and redrawn.
#[derive(Debug, Clone)]
pub struct BootstrapOutput {
    pub nulls: NullSampleSet,
    pub redraws: usize,
}

/// Cross-sectional residual bootstrap.
///
/// For each draw a single sequence of `T` time steps is sampled with
/// replacement and shared by all portfolios. Portfolio `i` contributes
/// `u_i = sqrt(T) * mean / sd` of its resampled residuals, where `sd` uses
/// divisor `T - 1`. A resample in which some portfolio has zero spread is
/// redrawn.
pub fn residual_bootstrap<R: Rng + ?Sized>(
    residuals: &DMatrix<f64>,
    df: f64,
    draws: usize,
    rng: &mut R,
) -> Result<BootstrapOutput> {
    check_residuals(residuals)?;
    if draws == 0 {
        return Err(Error::invalid("need at least one bootstrap draw"));
    }
    let (n, t) = residuals.shape();
    for i in 0..n {
        let row = residuals.row(i);
        let first = row[0];
        if row.iter().all(|&v| v == first) {
            return Err(Error::DegeneratePortfolio { index: i });
        }
    }
    let base: u64 = rng.random();
    let results: Vec<Result<(Vec<f64>, usize)>> = (0..draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(base, &[b as u64]);
            let mut idx = vec![0; t];
            let mut u = vec![0.0; n];
            for attempt in 0..=MAX_REDRAWS {
                draw_indices(t, &mut rng, &mut idx);
                if studentize(residuals, &idx, &mut u) {
                    return Ok((u, attempt));
                }
            }
            Err(Error::invalid(format!(
                "bootstrap draw {b} stayed degenerate after {MAX_REDRAWS} redraws"
            )))
        })
        .collect();
    let mut flat = Vec::with_capacity(draws * n);
    let mut redraws = 0;
    for r in results {
        let (u, extra) = r?;
        flat.extend(u);
        redraws += extra;
    }
    Ok(BootstrapOutput {
        nulls: NullSampleSet::new(n, flat, df)?,
        redraws,
    })
}

/// Writes studentized resampled means into `out`; false if any portfolio's
/// resample has zero spread.
fn studentize(residuals: &DMatrix<f64>, idx: &[usize], out: &mut [f64]) -> bool {
    let t = idx.len() as f64;
    for (i, slot) in out.iter_mut().enumerate() {
        let mean = idx.iter().map(|&s| residuals[(i, s)]).sum::<f64>() / t;
        let ss: f64 = idx
            .iter()
            .map(|&s| {
                let d = residuals[(i, s)] - mean;
                d * d
            })
            .sum();
        let sd = (ss / (t - 1.0)).sqrt();
        if !(sd > 0.0) {
            return false;
        }
        *slot = t.sqrt() * mean / sd;
    }
    true
}

/// Deviations of bootstrap moments from their closed forms:
/// `E_boot[e_i] = 0` and `T * E_boot[e_i e_j] = (1/T) sum_t eps_it eps_jt`.
#[derive(Debug, Clone)]
pub struct MomentDiagnostic {
    /// `|mean of e_i|` per portfolio.
    pub mean_dev: Vec<f64>,
    /// Monte Carlo standard error of each mean.
    pub mean_se: Vec<f64>,
    /// `|T * E[e_i e_j] - (1/T) sum_t eps_it eps_jt|`.
    pub cov_dev: DMatrix<f64>,
    /// Monte Carlo standard error of `T * E[e_i e_j]`.
    pub cov_se: DMatrix<f64>,
}

impl MomentDiagnostic {
    pub fn max_mean_dev(&self) -> f64 {
        self.mean_dev.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_cov_dev(&self) -> f64 {
        self.cov_dev.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the rows of `means` (resampled residual means, `B x N`) with the
/// moments they should reproduce.
pub fn bootstrap_moment_check(residuals: &DMatrix<f64>, means: &DMatrix<f64>) -> Result<MomentDiagnostic> {
    let (n, t) = residuals.shape();
    if means.ncols() != n || means.nrows() == 0 {
        return Err(Error::invalid(format!(
            "resampled means are {} x {}, expected B x {n}",
            means.nrows(),
            means.ncols()
        )));
    }
    let b = means.nrows() as f64;
    let tf = t as f64;
    let mut mean_dev = Vec::with_capacity(n);
    let mut mean_se = Vec::with_capacity(n);
    for i in 0..n {
        let col = means.column(i);
        let m = col.mean();
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0).max(1.0);
        mean_dev.push(m.abs());
        mean_se.push((var / b).sqrt());
    }
    let mut cov_dev = DMatrix::zeros(n, n);
    let mut cov_se = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let closed: f64 = (0..t).map(|s| residuals[(i, s)] * residuals[(j, s)]).sum::<f64>() / tf;
            let prods: Vec<f64> = (0..means.nrows())
                .map(|r| tf * means[(r, i)] * means[(r, j)])
                .collect();
            let m = prods.iter().sum::<f64>() / b;
            let var = prods.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0).max(1.0);
            cov_dev[(i, j)] = (m - closed).abs();
            cov_dev[(j, i)] = cov_dev[(i, j)];
            cov_se[(i, j)] = (var / b).sqrt();
            cov_se[(j, i)] = cov_se[(i, j)];
        }
    }
    Ok(MomentDiagnostic {
        mean_dev,
        mean_se,
        cov_dev,
        cov_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn centered_rows(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, &[]);
        let mut m = DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng));
        for mut row in m.row_iter_mut() {
            let mean: f64 = row.mean();
            row.add_scalar_mut(-mean);
        }
        m
    }

    #[test]
    fn enumeration_mean_is_exactly_zero() {
        let res = DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 1.0]);
        let means = enumerate_resampled_means(&res).unwrap();
        assert_eq!(means.nrows(), 27);
        assert!(means.column(0).sum().abs() < 1e-15);
        let diag = bootstrap_moment_check(&res, &means).unwrap();
        assert!(diag.max_mean_dev() < 1e-15);
        assert!(diag.max_cov_dev() < 1e-15);
    }

    #[test]
    fn enumeration_reproduces_cross_moments() {
        for t in 2..=MAX_ENUMERATION_T {
            let res = centered_rows(3, t, t as u64);
            let means = enumerate_resampled_means(&res).unwrap();
            let diag = bootstrap_moment_check(&res, &means).unwrap();
            assert!(diag.max_mean_dev() < 1e-15, "{}", diag.max_mean_dev());
            assert!(diag.max_cov_dev() < 1e-14, "{}", diag.max_cov_dev());
        }
        assert!(enumerate_resampled_means(&centered_rows(1, 5, 0)).is_err());
    }

    #[test]
    fn identical_rows_give_identical_draws() {
        let row = centered_rows(1, 30, 4);
        let res = DMatrix::from_fn(2, 30, |_, t| row[(0, t)]);
        let out = residual_bootstrap(&res, 26.0, 200, &mut substream(5, &[])).unwrap();
        for u in out.nulls.rows() {
            assert_eq!(u[0], u[1]);
        }
    }

    #[test]
    fn bootstrap_is_deterministic_for_a_seed() {
        let res = centered_rows(4, 25, 6);
        let a = residual_bootstrap(&res, 21.0, 50, &mut substream(7, &[])).unwrap();
        let b = residual_bootstrap(&res, 21.0, 50, &mut substream(7, &[])).unwrap();
        assert_eq!(a.nulls, b.nulls);
        assert_eq!(a.nulls.num_draws(), 50);
        assert_eq!(a.nulls.num_hypotheses(), 4);
    }

    #[test]
    fn degenerate_resamples_are_redrawn() {
        // T = 3 with two equal entries: resamples {0,0,0}, {1,1,1}, ... are
        // constant with probability 1/9 + ... so redraws happen
        let res = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, -2.0]);
        let out = residual_bootstrap(&res, 2.0, 500, &mut substream(8, &[])).unwrap();
        assert!(out.redraws > 0);
        assert!(out.nulls.as_slice().iter().all(|u| u.is_finite()));
    }

    #[test]
    fn constant_residual_row_is_an_error() {
        let res = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.5, 0.5, 0.5]);
        assert!(matches!(
            residual_bootstrap(&res, 2.0, 10, &mut substream(0, &[])),
            Err(Error::DegeneratePortfolio { index: 1 })
        ));
    }

    #[test]
    fn monte_carlo_mean_within_clt_bound() {
        let res = centered_rows(5, 60, 9);
        let b = 10_000;
        let means = resampled_means(&res, b, &mut substream(10, &[])).unwrap();
        let diag = bootstrap_moment_check(&res, &means).unwrap();
        for i in 0..5 {
            let sd = diag.mean_se[i] * (b as f64).sqrt();
            assert!(diag.mean_dev[i] <= 4.0 * sd / (b as f64).sqrt());
        }
    }

    #[test]
    fn independent_rows_covariance_shrinks_with_draws() {
        let res = centered_rows(2, 80, 11);
        let closed = (0..80).map(|s| res[(0, s)] * res[(1, s)]).sum::<f64>() / 80.0;
        let mut devs = Vec::new();
        for &b in &[200usize, 20_000] {
            let means = resampled_means(&res, b, &mut substream(12, &[b as u64])).unwrap();
            let diag = bootstrap_moment_check(&res, &means).unwrap();
            assert!(diag.cov_dev[(0, 1)] <= 4.0 * diag.cov_se[(0, 1)] + 1e-12);
            devs.push(diag.cov_se[(0, 1)]);
        }
        assert!(devs[1] < devs[0] / 5.0);
        assert!(closed.abs() < 0.5);
    }
}
