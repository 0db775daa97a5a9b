pub mod error;
pub mod forward;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};
pub mod assembly;
pub mod gallery;
pub mod identify;
pub mod io;
pub mod presets;
