//! Deferred-decision trajectory optimization.

pub mod cli;
pub mod error;
pub mod io;
pub mod micp;
pub mod model;
pub mod oracle;
pub mod qcvx;
pub mod scenario;
pub mod scp;
pub mod tree;

pub use error::DdtoError;
