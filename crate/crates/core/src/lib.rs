//! Gradient estimators built on sampling without replacement.

pub mod checks;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod math;
pub mod oracle;
pub mod sampling;
pub mod setprob;

pub use distributions::{CategoricalDist, DistSpec, FactorizedDist, Objective, ScoreFn, SoftmaxScore};
pub use error::{Error, Result};
pub use estimators::{Draw, Estimator, EstimatorKind, GradEstimate, Target};
pub use sampling::{OrderedSample, Threshold, UnorderedSample};
pub use setprob::{Backend, LooRatios, SetProbConfig};
