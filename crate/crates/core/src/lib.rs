//! Relay selection, strategy selection and power allocation for max-min
//! fair cooperative decode-and-forward OFDM networks.

pub mod error;
pub mod netmodel;
pub mod rates;
pub mod solver;
pub mod scheme;
pub mod alloc_ideal;
pub mod oracle;
pub mod alloc_finite;

pub use error::{Error, Result};
pub mod experiment;
