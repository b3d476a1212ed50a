//! Weak upper gradients, Hopf-Lax semigroups, path modulus and the Cheeger
//! gradient flow on finite metric measure spaces.
//!
//! A space is a finite weighted graph with positive point masses; distances
//! are shortest-path lengths. Everything here is exact or solved to near
//! machine precision, so the verification routines report residuals rather
//! than estimates.

pub mod cheeger;
pub mod error;
pub mod fields;
pub mod harness;
pub mod hopflax;
pub mod modulus;
pub mod report;
pub mod space;
pub mod wasserstein;

pub(crate) mod convex;

pub use error::{Error, Result};
pub use fields::{DiscretePath, GradientField, ScalarField};
pub use report::Check;
pub use space::FiniteMetricMeasureSpace;
