pub mod ad;
pub mod cli;
pub mod config;
pub mod error;
pub mod nlp;
pub mod ocp;
pub mod powertrain;
pub mod race;
pub mod sim;
pub mod thermal;
pub mod vehicle;

pub use error::{Error, Result};
