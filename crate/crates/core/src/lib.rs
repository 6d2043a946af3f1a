pub mod abstraction;
pub mod classk;
pub mod error;
pub mod error_model;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod lyapunov;
pub mod planner;
pub mod runtime;
pub mod scenario;
pub mod simulator;
pub mod system;

pub use error::{Error, Result};
