//! Random sparse Cantor sets in `[1, 2]`, exact correlation sums of their
//! densities, and maximal averages along them.
//!
//! The modules follow the pipeline: [`cantor`] holds the nested selections and
//! their densities, [`construct`] draws random layers and accepts them against the
//! count, deviation and correlation gates, [`intersect`] enumerates n-fold
//! intersections of affine copies of the level intervals, [`correlation`]
//! evaluates the correlation functional exactly, and [`maxops`] evaluates the
//! averaging, maximal and adjoint operators.

pub mod cantor;
pub mod construct;
pub mod correlation;
pub mod dimension;
pub mod error;
pub mod exact;
pub mod intersect;
pub mod linear;
pub mod maxops;
pub mod rng;
pub mod step;
pub mod verify;

pub use cantor::{
    alpha, build_deterministic, density, interval_of, nu_interval, sigma, weak_star_defect,
    CantorLevel, CantorSet, ConstructionParams, MultiIndex, Regime, SCHEMA_VERSION,
};
pub use error::{Error, Result};
pub use exact::Q;
pub use step::StepFunction;
