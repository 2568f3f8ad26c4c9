//! Networked side of the ward stack.
//!
//! `neoward-core` holds the gateway state machine, wire protocol and sync
//! engine as plain synchronous code. This crate puts them on sockets:
//!
//! - [`api`]: bearer-authenticated HTTP API and the `/ws/stream` live feed
//! - [`devices`]: TCP listener for simulated wearables plus the ring drainer
//! - [`mockserver`]: HTTP front of the aggregation server
//! - [`httplink`]: sync client over HTTP
//! - [`netproxy`]: latency and loss injecting HTTP proxy
//! - [`risk`]: streaming model scores fed into the alert engine
//! - [`cli`]: the `neoward` command
//!
//! The `examples/` directory walks through each piece in process.

pub mod api;
pub mod cli;
pub mod devices;
pub mod httplink;
pub mod mockserver;
pub mod netproxy;
pub mod risk;

pub use api::{ApiState, SyncTarget};
pub use devices::{DeviceServer, Drainer};
pub use httplink::HttpLink;
