//! Calibratable discrete-event simulator for a hospital ultrasound center.
//!
//! The center is modeled as a multi-class, multi-pool parallel-server queueing
//! network. Everything stochastic — arrivals, service durations, room
//! availability, technician breaks, patient walking times, and a two-level
//! routing policy — is learned from an event log and replayed by the engine.
//!
//! Pipeline stages, each usable on its own:
//!
//! * [`eventlog`] — canonical patient-record schema, CSV ingestion, two-source
//!   merging, and a synthetic ground-truth generator for closed-loop testing.
//! * [`classify`] — exam-item groups (Gaussian mixture), room types (Ward
//!   hierarchical clustering), and patient classes.
//! * [`calibrate`] — empirical estimators for arrival rates, room open
//!   patterns, service tables, and break/walk gaps, bundled into a
//!   [`calibrate::CalibratedModel`].
//! * [`forest`] — from-scratch random forest with probability output plus
//!   one-vs-rest AUC and permutation importance.
//! * [`routing`] — the learned two-level routing policy and the
//!   join-shortest-queue baseline.
//! * [`engine`] — the discrete-event core.
//! * [`metrics`] — queue-length curves, two-sample KS statistics, and the
//!   validation report.

pub mod calibrate;
pub mod classify;
pub mod engine;
pub mod eventlog;
pub mod forest;
pub mod metrics;
pub mod rng;
pub mod routing;
