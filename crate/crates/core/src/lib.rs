pub mod abm;
pub mod closure;
pub mod config;
pub mod domain;
pub mod error;
pub mod kernels;
pub mod kinetic;
pub mod meso;
pub mod output;
pub mod sirs;
pub mod validation;

pub use error::{Error, Result};
