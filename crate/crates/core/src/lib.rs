//! Core of the biofloc water-quality pipeline: domain types, the FLOC1
//! wire protocol, dataset handling, the from-scratch dissolved-oxygen
//! classifier, the advisory rule engine, and the device simulator.
//!
//! Everything here is pure computation — deterministic given a seed and
//! safe to share across threads. Network and persistence live in
//! `floc-service`; the `floc` binary wires both together.

pub mod datamodel;
pub mod dataset;
pub mod decision;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod simulator;

pub use datamodel::{Advisory, DoClass, ModelParams, NormStats, SensorFrame, Severity, WaterSample};
pub use dataset::LabeledDataset;
pub use nn::{Probabilities, TrainConfig, TrainReport};
