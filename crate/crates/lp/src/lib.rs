//! Dense linear programming with bounded variables.
//!
//! [`LinearProgram`] holds a minimisation problem
//!
//! ```text
//! min  c^T x
//! s.t. a_i^T x  (<= | = | >=)  b_i
//!      l_j <= x_j <= u_j        (bounds may be infinite)
//! ```
//!
//! and [`solve`] runs a two-phase bounded-variable primal simplex on a dense
//! tableau. Pricing is Dantzig's rule, falling back to Bland's rule after a
//! run of degenerate pivots so the method cannot cycle.

mod problem;
mod simplex;

pub use problem::{LinearProgram, Sense};
pub use simplex::{solve, solve_with, LpOutcome, SimplexOptions, Solution};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}
