//! Annotation project server.
//!
//! Projects live in one directory each under a data root. Reads go through
//! an immutable in-memory snapshot; every save is appended to a log and
//! fsynced before it is acknowledged.

pub mod error;
pub mod http;
pub mod model;
pub mod service;
pub mod store;

pub use error::ApiError;
pub use http::{start, ServerConfig, ServerHandle};
pub use service::{Export, Registry};
