use crate::factor_model::NullSampleSet;
use crate::testing::{PValueFn, Sidedness, TestDecision};

/// Null draws used by the baseline configuration.
pub const YB_DEFAULT_DRAWS: usize = 500;

/// Resampling-based FDR control of Yekutieli and Benjamini.
///
/// For each observed p-value `p` taken as a candidate threshold, the null
/// draws give a distribution of null rejection counts `R*(p)`. Its pointwise
/// `1 - q/2` upper percentile `r*(p)` bounds the false rejections with
/// probability `1 - q/2`, so `r*(p) / R(p) <= q/2` keeps the FDR below
/// `q/2 + q/2`. All hypotheses up to the largest such `p` are rejected.
pub fn yb(pvals: &[f64], nulls: &NullSampleSet, q: f64, sidedness: Sidedness) -> TestDecision {
    let n = pvals.len();
    if n == 0 {
        return TestDecision::none();
    }
    assert_eq!(nulls.num_hypotheses(), n, "null draws and p-values disagree on N");
    let pfn = PValueFn::new(nulls.df(), sidedness);
    let null_sorted: Vec<Vec<f64>> = nulls
        .rows()
        .map(|u| {
            let mut p = pfn.eval_all(u);
            p.sort_by(f64::total_cmp);
            p
        })
        .collect();
    let m = null_sorted.len();
    let beta = q / 2.0;
    // 1-based rank of the upper percentile among the m null counts
    let rank = (((1.0 - beta) * m as f64).ceil() as usize).clamp(1, m);

    let mut observed = pvals.to_vec();
    observed.sort_by(f64::total_cmp);
    let mut counts = vec![0usize; m];
    let mut accepted = None;
    for (k, &p) in observed.iter().enumerate() {
        if k + 1 < n && observed[k + 1] == p {
            continue;
        }
        let r_obs = k + 1;
        for (c, row) in counts.iter_mut().zip(&null_sorted) {
            *c = row.partition_point(|&x| x <= p);
        }
        let (_, &mut r_star, _) = counts.select_nth_unstable(rank - 1);
        if r_star as f64 / r_obs as f64 <= beta {
            accepted = Some(p);
        }
    }
    match accepted {
        Some(t) => TestDecision::at_threshold(pvals, t),
        None => TestDecision::none(),
    }
}
