//! HTTP service and batch front end over `cnocs-core`.

pub mod error;
pub mod http;
pub mod jobs;
pub mod ops;
pub mod store;

pub use error::OpError;
pub use http::{router, AppState};
