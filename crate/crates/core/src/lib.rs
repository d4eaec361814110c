//! Coded distributed matrix multiplication over erasure channels.
//!
//! Random p-adic codes split `A` into row strips and `B` into column strips
//! and hand each worker one random linear combination of each. Alloy codes
//! run a bilinear decomposition (Strassen) on the outside and independent
//! p-adic codes on each of its products. The entangled polynomial code is
//! the deterministic baseline.

pub mod alloy;
pub mod channel;
pub mod ep;
pub mod error;
pub mod experiment;
pub mod field;
pub mod matrix;
pub mod padic;
pub mod partition;
pub mod tensor;
pub mod threshold;

pub use error::{Error, Result};
pub use field::{Field, PrimeField, Reals, ScalarMode};
pub use matrix::Matrix;
