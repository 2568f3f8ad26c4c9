//! Core logic for the neonatal ward monitoring stack: device simulation,
//! wire protocol, gateway state, alerting, offline sync and monitor OCR.

pub mod alerts;
pub mod clock;
pub mod gateway;
pub mod keys;
pub mod ocr;
pub mod ring;
pub mod store;
pub mod sync;
pub mod token;
pub mod transport;
pub mod vitals;
pub mod vitalsim;

pub use vitals::{SampleFlags, VitalKind, VitalSample};
