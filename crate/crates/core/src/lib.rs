//! Kolmogorov flow toolkit: pseudo-spectral simulation, symmetry reduction,
//! autoencoder latent manifolds, learned discrete-time dynamics and the
//! statistics used to validate them.
pub mod burst;
pub mod error;
pub mod series;
pub mod spectral;
pub mod nnet;
pub mod labeling;
pub mod latent;
pub mod pipeline;
pub mod reduction;
pub mod stats;
pub mod symmetry;

pub use error::{Error, Result};
pub use series::SnapshotSeries;
pub use spectral::{Diagnostics, FlowParams, Grid, Solver, SpectralField};

// longer names for the two modules with short file names
pub use burst as burst_predict;
pub use latent as latent_dynamics;
