//! Sparse tensor factorization for distributed evaluation of multi-user
//! polynomial demands.
//!
//! Each of `K` users wants a polynomial in the outputs `W_1..W_L` of `L`
//! basis subfunctions. The coefficients form a `K x P_1 x ... x P_L` demand
//! tensor `F`, which is factorized as `F = E x_1 D`: server `n` computes the
//! monomial combination in slice `E(n, ...)` and sends it to the users in the
//! support of column `D(:, n)`. Sparsity of `D` and `E` encodes the limits on
//! users per server (Delta), subfunctions per server (Gamma) and exponent
//! window width per subfunction (Lambda).
//!
//! Rust APIs use 0-based indices; the JSON formats in [`files`] are 1-based.

pub mod demand;
pub mod error;
pub mod factorizer;
pub mod files;
pub mod mlsvd;
pub mod protocol;
pub mod support;
pub mod tensor;
pub mod tiling;

pub use error::{Error, Result};
