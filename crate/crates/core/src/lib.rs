pub mod bundle;
pub mod cli;
pub mod client;
pub mod dual;
pub mod edge;
pub mod editor;
pub mod error;
pub mod gan_models;
pub mod image_io;
pub mod inference;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod optim;
pub mod profiler;
pub mod protocol;
pub mod pyramid;
pub mod server;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{BundleError, Error, Result};
