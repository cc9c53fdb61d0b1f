//! Cross-temporal physiological synchrony analysis.
//!
//! Modules follow the analysis flow: [`dataset`] ingests recordings,
//! [`preprocess`] cleans them, [`decompose`] splits tonic and phasic EDA,
//! [`synchrony`] measures alignment with correlation and DTW, and [`stats`]
//! compares conditions. [`synthgen`] builds synthetic cohorts with known
//! structure, [`vizmap`] turns signals into animation keyframes, and
//! [`pipeline`] runs everything from a manifest.
//!
//! Signal code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common double-precision instantiations.

// `!(x > 0.0)` is how configuration checks reject NaN along with bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod decompose;
pub mod error;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod stats;
pub mod synchrony;
pub mod synthgen;
pub mod vizmap;

pub use error::Error;
pub use scalar::Real;

pub type Recording = dataset::Recording<f64>;
pub type Recording32 = dataset::Recording<f32>;
pub type Cohort = dataset::Cohort<f64>;
pub type Cohort32 = dataset::Cohort<f32>;
pub type EdaComponents = decompose::EdaComponents<f64>;
pub type AnalysisCohort = synchrony::AnalysisCohort<f64>;
pub type SubjectSeries = synchrony::SubjectSeries<f64>;
pub type KeyframeTrack = vizmap::KeyframeTrack<f64>;
