//! Constructive time-discretised scheme for the incompressible Navier-Stokes
//! equation in Leray form, with the kernels, parametrix expansions, linear
//! parabolic solvers, growth controls and boundary-integral tools it is built from.

pub mod analytic;
pub mod boundary;
pub mod config;
pub mod control;
pub mod error;
pub mod fft;
pub mod io;
pub mod grid;
pub mod kernels;
pub mod linparab;
pub mod parametrix;
pub mod quad;
pub mod run;
pub mod scheme;
pub mod validate;

pub use error::{Error, Result};
pub use grid::{Grid, NormReport, ScalarField, Topology, VectorField};
