//! Toolkit for controlled overfitting in anomaly detection.
//!
//! * [`metrics`]: ARQ, empirical RADI, ROC AUC, Gaussian fits, histogram TVD.
//! * [`distmodel`]: parametric score-distribution model, closed-form RADI,
//!   its gradient and the optimal ARQ.
//! * [`controller`]: dual ARQ/RADI-gradient control with progressive freezing.
//! * [`toynet`]: small networks with manual backprop and freezable layers.
//! * [`pipeline`]: two-stage teacher/student training on synthetic data.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! fix the precision for callers that do not care.

pub mod config;
pub mod controller;
pub mod distmodel;
pub mod error;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod scalar;
pub mod scorefile;
pub mod seed;
pub mod toynet;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ScoreSet64 = metrics::ScoreSet<f64>;
pub type ScoreSet32 = metrics::ScoreSet<f32>;
pub type GaussianParams64 = metrics::GaussianParams<f64>;
pub type GaussianParams32 = metrics::GaussianParams<f32>;
pub type Histogram64 = metrics::Histogram<f64>;
pub type Histogram32 = metrics::Histogram<f32>;
pub type DistributionModel64 = distmodel::DistributionModel<f64>;
pub type DistributionModel32 = distmodel::DistributionModel<f32>;
pub type ThetaSweep64 = distmodel::ThetaSweep<f64>;
pub type ThetaStar64 = distmodel::ThetaStar<f64>;
pub type ArqInterval64 = controller::ArqInterval<f64>;
pub type ArqInterval32 = controller::ArqInterval<f32>;
pub type ControllerState64 = controller::ControllerState<f64>;
pub type ControllerState32 = controller::ControllerState<f32>;
pub type ToyNetwork64 = toynet::ToyNetwork<f64>;
pub type ToyNetwork32 = toynet::ToyNetwork<f32>;
