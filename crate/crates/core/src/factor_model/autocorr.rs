use crate::error::{Error, Result};
use crate::stats::pearson;

/// Pearson correlation of `(x_t, x_{t+l})` for `l = 1..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag + 1 {
        return Err(Error::invalid(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "autocorrelation input".into(),
        });
    }
    (1..=max_lag)
        .map(|lag| {
            let n = series.len() - lag;
            pearson(&series[..n], &series[lag..]).ok_or(Error::ConstantSeries)
        })
        .collect()
}

/// Lag correlations averaged over several series.
pub fn mean_autocorrelation<S: AsRef<[f64]>>(series: &[S], max_lag: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::invalid("no series"));
    }
    let mut acc = vec![0.0; max_lag];
    for s in series {
        for (a, r) in acc.iter_mut().zip(autocorrelation(s.as_ref(), max_lag)?) {
            *a += r;
        }
    }
    let k = series.len() as f64;
    Ok(acc.into_iter().map(|a| a / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn alternating_series() {
        let x: Vec<f64> = (0..11).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelation(&x, 2).unwrap();
        assert!((r[0] + 1.0).abs() < 1e-15);
        assert!((r[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_and_short_series_fail() {
        assert!(matches!(autocorrelation(&[2.0; 10], 1), Err(Error::ConstantSeries)));
        assert!(autocorrelation(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let mut rng = substream(41, &[]);
        let t = 5_000;
        let x: Vec<f64> = (0..t).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sigma = 1.0 / (t as f64).sqrt();
        let r = autocorrelation(&x, 10).unwrap();
        // each lag leaves the 2-sigma band with probability ~5%
        assert!(r.iter().filter(|v| v.abs() > 2.0 * sigma).count() <= 2, "{r:?}");
        assert!(r.iter().all(|v| v.abs() < 4.0 * sigma), "{r:?}");
    }

    #[test]
    fn ar1_decays_geometrically() {
        let mut rng = substream(42, &[]);
        let mut x = vec![0.0f64; 10_000];
        let z: f64 = StandardNormal.sample(&mut rng);
        x[0] = z / (1.0f64 - 0.25).sqrt();
        for t in 1..x.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.5 * x[t - 1] + e;
        }
        for (l, r) in autocorrelation(&x, 5).unwrap().into_iter().enumerate() {
            assert!((r - 0.5f64.powi(l as i32 + 1)).abs() < 0.03, "lag {}: {r}", l + 1);
        }
    }

    #[test]
    fn averaging_over_series() {
        let a: Vec<f64> = (0..9).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let b: Vec<f64> = (0..9).map(|t| t as f64).collect();
        let m = mean_autocorrelation(&[a, b], 1).unwrap();
        assert!(m[0].abs() < 1e-12);
    }
}
