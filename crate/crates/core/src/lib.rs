//! Importance reweighting for biquality learning.
//!
//! A biquality training set is a small *trusted* sample drawn from the
//! distribution of interest plus a large *untrusted* sample whose joint
//! distribution `P(X, Y)` may have drifted. The algorithms here estimate the
//! per-sample ratio `P_T(x, y) / P_U(x, y)` for every untrusted row and
//! retrain on the pooled data with those weights:
//!
//! * [`biquality::irbl_weights`] and [`biquality::irbl2_weights`] factor the
//!   ratio through the two concepts `P(Y | X)` (plus, for IRBL2, a
//!   discriminative covariate term);
//! * [`biquality::kdr_weights`], [`biquality::kpdr_weights`] and K-KMM factor
//!   it per class through `P(X | Y)` and the empirical priors.
//!
//! Supporting modules provide the learners ([`learners`]), density-ratio
//! estimators ([`density_ratio`]), synthetic shift injection
//! ([`corruption`]), evaluation statistics ([`evalstat`]) and SVG rendering
//! ([`plot`]).

pub mod biquality;
pub mod corruption;
pub mod data;
pub mod density_ratio;
mod error;
pub mod evalstat;
pub mod learners;
pub mod plot;
pub(crate) mod rng;

pub use error::{Error, Result};
pub use rng::derive_seed;
