//! Discrete machinery for parabolic (forward-in-time) John-Nirenberg
//! estimates on dyadic grids.
//!
//! Functions are piecewise constant on the leaf cells of a dyadic grid over
//! `[0,1)^{n-1} x [0,3)`; the unit cube `[0,1)^n` is the root and the two
//! unit cubes after it in time hold its forward translates. In fixed-point
//! mode every average, comparison and seminorm weight is exact.

pub mod corpus;
pub mod cube;
pub mod error;
pub mod grid;
pub mod io;
pub mod maximal;
pub mod report;
pub mod scalar;
pub mod seminorm;
pub mod verify;

pub use cube::{DyadicCube, Relation};
pub use error::{Error, Result};
pub use grid::{AnyGrid, Domain, GridFunction, GridMode, PrefixTable};
pub use maximal::{
    check_p2, check_stopping, cz_decompose, maximal_function, select_subfamily,
    weak_type_check, Decomposition, MaximalField, Variant,
};
pub use report::VerificationReport;
pub use scalar::{parse_rational, Exponent, Sample, Scalar};
pub use seminorm::{
    antichain_oracle, bmo_plus_dyadic, bmo_plus_limit_form, jnp_classical_dyadic,
    jnp_plus_dyadic, phi_plus, CubeFamily, Functional, SeminormResult,
};
pub use corpus::{gen, GeneratorSpec, Kind, Manifest};
pub use verify::{
    default_lambda_grid, good_lambda_check, lambda0, proof_constant, theorem_check, LemmaContext,
    LemmaParams, TheoremRecord, TheoremRun,
};
