pub mod boolfun;
pub mod error;
pub mod fixtures;
pub mod games;
pub mod longcode;
pub mod obsfourier;
pub mod pipeline;
pub mod quantum;
pub mod seeding;
pub mod suite;
pub mod transforms;
pub mod value;

pub use error::{Error, Result};
