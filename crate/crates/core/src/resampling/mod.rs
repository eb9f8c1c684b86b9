//! Procedures that consume draws from the correlated null distribution: the
//! resampling-based step-up of Yekutieli and Benjamini and the dueling double
//! bootstrap.

mod ddboot;
mod yb;

pub use ddboot::{
    bisect_sup, ddboot, dueling_count, dueling_levels, estimate_fdr, find_cq, sample_alpha_v,
    DdbootConfig, SampledParameter, CQ_EPS,
};
pub use yb::{yb, YB_DEFAULT_DRAWS};
