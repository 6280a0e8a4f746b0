//! Bandwidth-adaptive sketch compression for federated learning, simulated.
//!
//! Clients track their own uplink bandwidth in a sliding awareness buffer,
//! predict the bandwidth available for the next upload, translate that into a
//! transmittable data volume, and compress their gradient into a count-sketch
//! whose row count is sized to fit the volume. The server aligns sketches of
//! unequal height, averages them row-wise by contributor count, and clients
//! recover a gradient estimate by a per-coordinate median over rows.
//!
//! The crate is organized as:
//!
//! - [`sketch`] — seeded hash family, elastic-row compression with
//!   coefficient-of-variation bucket merging, median decompression.
//! - [`bandwidth`] — traces, awareness buffers, predictors (last-value,
//!   windowed AR, small LSTM), capacity/volume/time arithmetic, MAE.
//! - [`mlkit`] — small differentiable classifiers, SGD, synthetic data.
//! - [`federation`] — client/server round logic, unequal-size aggregation,
//!   FedAvg and fixed-size-sketch baselines, non-IID partitioning.
//! - [`netsim`] — round-driven experiment orchestration and metrics.
//!
//! Everything is deterministic given the configured seeds.

pub mod bandwidth;
pub mod error;
pub mod federation;
pub mod mlkit;
pub mod netsim;
pub mod sketch;

pub use error::{Error, Result};
