//! Data-generating environments and offline datasets.

mod dataset;
mod lqr;
mod tabular;

pub use dataset::{Dataset, LqrTransition, TabularTransition};
pub use lqr::{
    estimate_dpi_lqr, lqr_collect, lqr_collect_with_radius, lqr_discounted_return_mc, lqr_true_params,
    lqr_true_params_from, rotation, LqrEnv, LqrTheta, McEstimate, StateAction, N_ROTATIONS,
};
pub use tabular::{estimate_dpi_tabular, tabular_collect, tabular_make_random, DpiSample};
