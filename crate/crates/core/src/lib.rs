//! Bundle, predict and reconcile hierarchical wind-power forecasts.
//!
//! Assets are grouped into bundles that minimise a covariance criterion
//! under a geographic diameter limit, each level of the resulting
//! fleet / bundle / asset hierarchy is forecast independently, and the
//! forecasts are projected onto coherent ones with diagonal MinT weights.

pub mod bundling;
pub mod criterion;
pub mod forecast;
pub mod geo;
pub mod hierarchy;
pub mod metrics;
pub mod panel;
pub mod reconcile;
pub mod pipeline;
