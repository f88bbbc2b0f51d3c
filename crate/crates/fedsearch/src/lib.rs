//! Privacy-preserving federated search over encrypted crime-report stores.

pub mod bench;
pub mod codec;
pub mod config;
pub mod federator;
pub mod fixture;
pub mod node;
pub mod keystore;
pub mod protocol;
pub mod store;
