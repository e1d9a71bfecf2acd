pub mod experiment;
pub mod graphgen;
pub mod graphstats;
pub mod kernels;
pub mod limits;
pub mod linalg;
pub mod metricspace;
pub mod rng;
pub mod spectral;
pub mod stats;
