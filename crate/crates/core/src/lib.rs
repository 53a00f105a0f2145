//! Detection of synchronized coordinated activity in tweet corpora.
//!
//! The pipeline runs ingest → actions → window → network, then clusters the
//! multi-view network and ranks the accounts of its densest cluster.
//! Synchronization marks accounts as suspicious; it does not prove that they
//! are affiliated.

pub mod actions;
pub mod cluster;
pub mod gen;
pub mod ingest;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod window;

pub use actions::{ActionEvent, ActionType};
pub use cluster::{ClusterParams, Clustering};
pub use ingest::Tweet;
pub use network::{MultiViewNetwork, ViewGraph};
pub use window::{EdgeAccumulator, WindowConfig};
