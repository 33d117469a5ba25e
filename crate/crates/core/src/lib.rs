//! Two-party private linear least squares.
//!
//! Bob and Alice each hold a horizontal slice of a dataset `(X, Y)` and fit
//! `θ` by batch gradient descent on the pooled data without either side
//! seeing the other's rows. Gradients travel under Paillier encryption and
//! every intermediate that leaves a party is covered by a one-time pad.

pub mod enclinalg;
pub mod error;
pub mod fixedpoint;
pub mod oracle;
pub mod paillier;
pub mod protocol;
pub mod transport;

pub use error::{Error, Result};
