//! p-values, the empirical CDF, the step-up threshold solver and FDR
//! bookkeeping shared by every procedure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::StudentT;

/// Direction of the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    /// Null `alpha_i <= 0` against `alpha_i > 0`.
    OneSided,
    /// Null `alpha_i = 0` against `alpha_i != 0`.
    #[default]
    TwoSided,
}

/// Maps test statistics to p-values under a Student-t law.
#[derive(Debug, Clone, Copy)]
pub struct PValueFn {
    law: StudentT,
    sidedness: Sidedness,
}

impl PValueFn {
    pub fn new(df: f64, sidedness: Sidedness) -> Self {
        Self {
            law: StudentT::new(df),
            sidedness,
        }
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.sidedness {
            Sidedness::OneSided => self.law.upper_tail(u),
            Sidedness::TwoSided => self.law.two_sided_tail(u),
        }
    }

    pub fn eval_all(&self, stats: &[f64]) -> Vec<f64> {
        stats.iter().map(|&u| self.eval(u)).collect()
    }
}

/// p-value of a single statistic: the upper tail beyond `u` (one-sided) or
/// twice the tail beyond `|u|` (two-sided).
pub fn p_value(u: f64, df: f64, sidedness: Sidedness) -> Result<f64> {
    if u.is_nan() {
        return Err(Error::NonFinite {
            context: "test statistic".into(),
        });
    }
    if !(df >= 1.0) {
        return Err(Error::invalid(format!("degrees of freedom {df} < 1")));
    }
    Ok(PValueFn::new(df, sidedness).eval(u))
}

/// p-values for a vector of statistics.
pub fn p_values(stats: &[f64], df: f64, sidedness: Sidedness) -> Result<Vec<f64>> {
    if let Some(i) = stats.iter().position(|u| u.is_nan()) {
        return Err(Error::NonFinite {
            context: format!("statistic {i}"),
        });
    }
    if !(df >= 1.0) {
        return Err(Error::invalid(format!("degrees of freedom {df} < 1")));
    }
    Ok(PValueFn::new(df, sidedness).eval_all(stats))
}

/// Fraction of p-values at or below `x`.
pub fn ecdf_at(pvals: &[f64], x: f64) -> f64 {
    if pvals.is_empty() {
        return 0.0;
    }
    pvals.iter().filter(|&&p| p <= x).count() as f64 / pvals.len() as f64
}

/// Output of a multiple testing procedure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestDecision {
    /// Rejected hypothesis indices, ascending.
    pub rejected: Vec<usize>,
    /// Largest rejected p-value; `None` when nothing is rejected.
    pub threshold_p: Option<f64>,
}

impl TestDecision {
    pub fn none() -> Self {
        Self::default()
    }

    /// Rejects every hypothesis with `p <= threshold`.
    pub fn at_threshold(pvals: &[f64], threshold: f64) -> Self {
        let rejected: Vec<usize> = (0..pvals.len()).filter(|&i| pvals[i] <= threshold).collect();
        let threshold_p = rejected
            .iter()
            .map(|&i| pvals[i])
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
        Self {
            rejected,
            threshold_p,
        }
    }

    pub fn all(pvals: &[f64]) -> Self {
        Self::at_threshold(pvals, f64::INFINITY)
    }

    pub fn num_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_rejected(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }
}

/// Number of leading order statistics rejected by the step-up boundary
/// `p_(k) <= c k / N`, i.e. the largest such `k` (0 if none).
///
/// `sorted` must be ascending.
#[inline]
pub fn step_up_count(sorted: &[f64], c: f64) -> usize {
    let n = sorted.len() as f64;
    for k in (1..=sorted.len()).rev() {
        if sorted[k - 1] <= c * k as f64 / n {
            return k;
        }
    }
    0
}

/// `sup { p' : F(p') >= p'/c }` evaluated in step-up form.
///
/// The empirical CDF only jumps at observed p-values, so the supremum is
/// attained by rejecting every p-value up to the largest order statistic with
/// `p_(k) <= c k / N`. Tied p-values are rejected together.
pub fn sup_threshold(pvals: &[f64], c: f64) -> TestDecision {
    assert!(c > 0.0, "slope must be positive");
    if pvals.is_empty() {
        return TestDecision::none();
    }
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    match step_up_count(&sorted, c) {
        0 => TestDecision::none(),
        k => TestDecision::at_threshold(pvals, sorted[k - 1]),
    }
}

/// Ground-truth partition of the hypotheses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisLabels {
    is_null: Vec<bool>,
}

impl HypothesisLabels {
    pub fn from_flags(is_null: Vec<bool>) -> Self {
        Self { is_null }
    }

    pub fn from_null_set(n: usize, nulls: &[usize]) -> Result<Self> {
        let mut is_null = vec![false; n];
        for &i in nulls {
            *is_null
                .get_mut(i)
                .ok_or_else(|| Error::invalid(format!("null index {i} out of range for N = {n}")))? =
                true;
        }
        Ok(Self { is_null })
    }

    /// Labels implied by true parameter values: `alpha_i <= 0` (one-sided)
    /// or `alpha_i == 0` (two-sided) is null.
    pub fn from_parameters(alpha: &[f64], sidedness: Sidedness) -> Self {
        let is_null = alpha
            .iter()
            .map(|&a| match sidedness {
                Sidedness::OneSided => a <= 0.0,
                Sidedness::TwoSided => a == 0.0,
            })
            .collect();
        Self { is_null }
    }

    pub fn len(&self) -> usize {
        self.is_null.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_null.is_empty()
    }

    pub fn is_null(&self, i: usize) -> bool {
        self.is_null[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.is_null
    }

    pub fn null_set(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_null[i]).collect()
    }

    pub fn alt_set(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_null[i]).collect()
    }

    pub fn num_null(&self) -> usize {
        self.is_null.iter().filter(|&&b| b).count()
    }
}

/// Confusion counts of a decision against the true labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyCounts {
    pub false_pos: usize,
    pub true_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ContingencyCounts {
    pub fn rejections(&self) -> usize {
        self.false_pos + self.true_pos
    }

    pub fn total(&self) -> usize {
        self.false_pos + self.true_pos + self.false_neg + self.true_neg
    }

    /// False discovery proportion `N_{1|0} / max(R, 1)`.
    pub fn fdp(&self) -> f64 {
        self.false_pos as f64 / self.rejections().max(1) as f64
    }
}

pub fn contingency(decision: &TestDecision, labels: &HypothesisLabels) -> ContingencyCounts {
    let mut rejected = vec![false; labels.len()];
    for &i in &decision.rejected {
        rejected[i] = true;
    }
    let mut counts = ContingencyCounts::default();
    for (&null, &rej) in labels.flags().iter().zip(&rejected) {
        match (null, rej) {
            (true, true) => counts.false_pos += 1,
            (false, true) => counts.true_pos += 1,
            (false, false) => counts.false_neg += 1,
            (true, false) => counts.true_neg += 1,
        }
    }
    counts
}

pub fn fdp(counts: &ContingencyCounts) -> f64 {
    counts.fdp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Adaptive Simpson on `[a, b]` to relative accuracy `rel`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol.max(1e-300) {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        // composite rule on a fixed mesh to size the absolute tolerance
        let h = (b - a) / 2048.0;
        let rough = (0..2048)
            .map(|k| {
                let x = a + k as f64 * h;
                h / 6.0 * (f(x) + 4.0 * f(x + 0.5 * h) + f(x + h))
            })
            .sum::<f64>()
            .abs();
        rec(f, a, b, fa, fm, fb, whole, rel * rough, 40)
    }

    /// Upper tail of the t law by quadrature of the unnormalized density,
    /// normalized by quadrature as well.
    fn tail_by_quadrature(u: f64, df: f64) -> f64 {
        let g = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let far = 2000.0;
        let half = simpson(&g, 0.0, far, 1e-13);
        let upper = simpson(&g, u.abs(), far, 1e-13) / (2.0 * half);
        if u >= 0.0 {
            upper
        } else {
            1.0 - upper
        }
    }

    #[test]
    fn p_value_at_zero() {
        assert_eq!(p_value(0.0, 96.0, Sidedness::OneSided).unwrap(), 0.5);
        assert_eq!(p_value(0.0, 96.0, Sidedness::TwoSided).unwrap(), 1.0);
    }

    #[test]
    fn p_value_matches_quadrature() {
        let p = p_value(2.0, 96.0, Sidedness::TwoSided).unwrap();
        let oracle = 2.0 * tail_by_quadrature(2.0, 96.0);
        assert!(p > 0.04 && p < 0.06, "{p}");
        assert_relative_eq!(p, oracle, max_relative = 1e-10);
        for &(u, df) in &[(0.3, 5.0), (-1.7, 12.0), (4.2, 100.0), (2.5, 30.0), (6.0, 242.0)] {
            let one = p_value(u, df, Sidedness::OneSided).unwrap();
            assert_relative_eq!(one, tail_by_quadrature(u, df), max_relative = 1e-9);
        }
    }

    #[test]
    fn p_value_rejects_nan() {
        assert!(p_value(f64::NAN, 10.0, Sidedness::OneSided).is_err());
        assert!(p_value(1.0, 0.5, Sidedness::OneSided).is_err());
        assert!(p_values(&[1.0, f64::NAN], 10.0, Sidedness::TwoSided).is_err());
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(ecdf_at(&[0.2, 0.4], 0.3), 0.5);
        assert_eq!(ecdf_at(&[0.2, 0.4], 1.0), 1.0);
        assert_eq!(ecdf_at(&[0.2, 0.4], 0.2 - 1e-12), 0.0);
        // right-continuous: the jump belongs to the point itself
        assert_eq!(ecdf_at(&[0.2, 0.4], 0.2), 0.5);
    }

    #[test]
    fn sup_threshold_examples() {
        assert_eq!(sup_threshold(&[1.0, 1.0, 1.0], 0.5), TestDecision::none());

        let d = sup_threshold(&[0.001, 0.01, 0.02, 0.04, 0.9], 0.05);
        assert_eq!(d.rejected, vec![0, 1, 2, 3]);
        assert_eq!(d.threshold_p, Some(0.04));

        let d = sup_threshold(&[0.01], 0.05);
        assert_eq!(d.rejected, vec![0]);
        assert_eq!(d.threshold_p, Some(0.01));
    }

    #[test]
    fn sup_threshold_rejects_ties_together() {
        // p_(2) = p_(3) = 0.02 <= 0.05 * 2/3 only at k = 3, both go together
        let d = sup_threshold(&[0.9, 0.02, 0.02], 0.05);
        assert_eq!(d.rejected, vec![1, 2]);
    }

    #[test]
    fn step_up_uses_largest_crossing() {
        // p_(1) fails, p_(2) passes: step-up rejects both
        let d = sup_threshold(&[0.03, 0.04], 0.05);
        assert_eq!(d.rejected, vec![0, 1]);
    }

    #[test]
    fn contingency_examples() {
        let labels = HypothesisLabels::from_null_set(4, &[2, 3]).unwrap();
        let d = TestDecision {
            rejected: vec![0, 2],
            threshold_p: Some(0.1),
        };
        let c = contingency(&d, &labels);
        assert_eq!((c.false_pos, c.true_pos, c.rejections()), (1, 1, 2));
        assert_eq!(c.total(), 4);
        assert_eq!(fdp(&c), 0.5);

        let c = contingency(&TestDecision::none(), &labels);
        assert_eq!((c.false_pos, c.true_pos), (0, 0));
        assert_eq!(fdp(&c), 0.0);

        let d = TestDecision {
            rejected: labels.null_set(),
            threshold_p: Some(0.1),
        };
        let c = contingency(&d, &labels);
        assert_eq!((c.false_pos, c.true_pos), (2, 0));
        assert_eq!(fdp(&c), 1.0);
    }

    #[test]
    fn null_index_out_of_range() {
        assert!(HypothesisLabels::from_null_set(2, &[2]).is_err());
    }

    proptest! {
        #[test]
        fn rejections_grow_with_slope(
            p in proptest::collection::vec(0.0f64..=1.0, 1..30),
            c1 in 0.001f64..2.0,
            c2 in 0.001f64..2.0,
        ) {
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let small = sup_threshold(&p, lo);
            let large = sup_threshold(&p, hi);
            prop_assert!(small.rejected.iter().all(|i| large.is_rejected(*i)));
        }

        #[test]
        fn decision_is_a_threshold_rule(
            p in proptest::collection::vec(0.0f64..=1.0, 1..30),
            c in 0.001f64..2.0,
        ) {
            let d = sup_threshold(&p, c);
            if let Some(t) = d.threshold_p {
                for (i, &pi) in p.iter().enumerate() {
                    prop_assert_eq!(d.is_rejected(i), pi <= t);
                }
            } else {
                prop_assert!(d.rejected.is_empty());
            }
        }

        #[test]
        fn fdp_in_unit_interval(
            flags in proptest::collection::vec(any::<bool>(), 1..40),
            rej in proptest::collection::vec(any::<bool>(), 40),
        ) {
            let labels = HypothesisLabels::from_flags(flags.clone());
            let rejected: Vec<usize> = (0..flags.len()).filter(|&i| rej[i]).collect();
            let c = contingency(&TestDecision { rejected, threshold_p: None }, &labels);
            let f = c.fdp();
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(c.total(), flags.len());
            if labels.num_null() == 0 {
                prop_assert_eq!(f, 0.0);
            }
        }
    }
}
