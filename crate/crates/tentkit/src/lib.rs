//! Numerical laboratory for parabolic problems with rough divergence-form
//! coefficients: critical exponents, weighted tent and Z-space norms,
//! Littlewood–Paley machinery, semigroups and Duhamel operators on a torus.

pub mod exponents;
pub mod cauchy;
pub mod cli;
pub mod families;
pub mod funcspaces;
pub mod grid;
pub mod operator;
pub mod spectral;
pub mod verify;

pub use num_complex::Complex64 as C64;
