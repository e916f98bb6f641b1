//! Persistence and HTTP API for profiles, story generation, shared reading
//! sessions, and engagement stats.
//!
//! Every request is scoped to one family account named by the
//! `x-account-id` header. Accounts share nothing.

pub mod config;
pub mod error;
pub mod http;
pub mod service;
pub mod store;

pub use config::ServiceConfig;
pub use error::{ServiceError, ServiceResult};
pub use http::{router, serve};
pub use service::Service;
