//! Discriminative-basis classifier for functional time series.

pub mod basis;
pub mod cv;
pub mod model;
pub mod multiclass;
pub mod prefilter;

pub use basis::{
    basis_from_difference, discriminative_basis, score_matrix, select_dim, select_dim_from_spectrum,
    DiscriminativeBasis,
};
pub use cv::{single_lag_rate, single_lag_rates, tune, CvEntry, CvReport};
pub use model::{classify, lag_weight, train, Decision, DimRule, Group, LagComponent, TrainConfig, VpcModel, Weighting};
pub use multiclass::{classify_multiclass, train_multiclass, MulticlassDecision, MulticlassModel, PairRateConfig};
pub use prefilter::{amplitude_prefilter, predict, predict_panel, select_tau};
