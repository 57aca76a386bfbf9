//! Simulation of degenerate squeezed-light generation in nonlinear waveguides.

pub mod analysis;
pub mod error;
pub mod kgrid;
pub mod linalg;
pub mod meanfield;
pub mod oracles;
pub mod qprop;

pub use error::{Result, SqzError};
pub use kgrid::{Frame, KappaGrid, ModeParams, Spectral};
pub use linalg::{BlockPair, CMat};
pub use num_complex::Complex64;
pub use qprop::{BogoliubovBlocks, GaussianMoments, GeneratorBlocks, MomentPath, PropagateOptions, Propagation, TraceRecord};
pub use analysis::{HomodyneExtrema, JsaMatrix, SchmidtData, Takagi};
