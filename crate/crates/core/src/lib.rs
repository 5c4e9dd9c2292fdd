//! Third-order variational equations of three-dimensional (pseudo-)Euclidean
//! space, their reduction to contact elements, and the second-order
//! connection attached to them.

pub mod connection;
pub mod error;
pub mod euler_poisson;
pub mod integrate;
pub mod metric;
pub mod reduction;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
