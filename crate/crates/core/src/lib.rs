#![no_std]
extern crate alloc;

pub mod dynsys;
pub mod error;
pub mod family;
pub mod fourier;
pub mod interp;
pub mod linalg;
pub mod ode;
pub mod periodic;
pub mod reduce;
pub mod signal;
pub mod spectral;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
