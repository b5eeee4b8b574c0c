//! Classification of functional time series by the discrepancy of their lagged
//! covariance operators.
//!
//! Curves live on a quadrature [`funcgrid::Grid`] over `[0, 1]`. The two-group
//! classifier is trained with [`vpc::train`] and applied with [`vpc::classify`];
//! [`segmented`] handles piecewise-stationary sequences with covariance breaks.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod funcgrid;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod rng;
pub mod scalar;
pub mod segmented;
pub mod simgen;
pub mod vpc;

pub use error::{Result, VpcError};
pub use funcgrid::{Curve, CurvePanel, Grid, GridRef};
pub use operators::KernelOperator;
pub use scalar::Scalar;
pub use vpc::{classify, train, Decision, DimRule, Group, TrainConfig, VpcModel};

pub type Grid64 = Grid<f64>;
pub type Curve64 = Curve<f64>;
pub type Panel64 = CurvePanel<f64>;
pub type Kernel64 = KernelOperator<f64>;
pub type Model64 = VpcModel<f64>;
