//! Numerical laboratory for generalized thermostat flows on surfaces.

pub mod anosov;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod identities;
pub mod jacobi;
pub mod lab;
pub mod ode;
pub mod quadrature;
pub mod report;
pub mod xray;

pub use error::{LabError, Result};
