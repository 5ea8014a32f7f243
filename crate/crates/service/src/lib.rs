//! Runtime half of the biofloc pipeline: the TCP ingestion daemon, the
//! JSONL reading store, alert debouncing, and notification sinks.

pub mod config;
pub mod cooldown;
pub mod notify;
pub mod server;
pub mod store;
pub mod testing;

pub use config::ServiceConfig;
pub use notify::{dispatch, format_payload, DeliveryReport, Sink, SinkConfig};
pub use server::{Service, ServiceError, ServiceStats};
pub use store::{read_all, JsonlStore, ReadingRecord};
