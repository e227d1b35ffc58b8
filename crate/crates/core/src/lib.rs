//! Exact computer algebra for dynamical r-matrices of punctured Hitchin systems
//! on hyperelliptic curves.
//!
//! Everything is computed over exact rationals. Truncation is the only
//! approximation and it is tracked explicitly: jets in the moduli
//! directions carry a certified order, Laurent series carry a certified
//! degree window, and every identity verdict is an exact zero (or an exact
//! nonzero residual) on a reported window.

pub mod chart;
pub mod curve;
pub mod hitchin;
pub mod jetring;
pub mod kernels;
pub mod linalg;
pub mod looplie;
pub mod par;
pub mod yang_baxter;

pub use jetring::{JetMatrix, JetScalar, LaurentBlock};
