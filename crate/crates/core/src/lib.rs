//! Ground states, thresholds and dynamics for the focusing NLS on a
//! waveguide `R^d x T^m`, discretized by Fourier collocation.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod frequency;
pub mod functionals;
pub mod grid;
pub mod init;
pub mod mass;
pub mod params;
pub mod pipeline;
pub mod reference;
pub mod snapshot;

pub use config::Config;
pub use error::{Error, Result};
pub use field::{Field, Point, Ratio};
pub use functionals::{evaluate, FunctionalReport, Quantities};
pub use grid::Grid;
pub use params::{DomainPolicy, DomainSpec, Mode, ModelParams};
