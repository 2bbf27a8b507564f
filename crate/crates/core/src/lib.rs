//! Allocation-only building blocks for model callers.
//!
//! Everything here is pure: records and signatures, the evaluation/training
//! and supervised/unsupervised partitions, seeded random streams, output
//! aggregation, member gating, matching and qualification, drift windows,
//! toy trainable models, the host-to-model transformation state machine and
//! the role table. IO, threads, clocks and networking live in the
//! `modelcaller` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod aggregate;
pub mod anytime;
pub mod category;
pub mod config;
pub mod drift;
pub mod error;
pub mod gate;
pub mod models;
pub mod quality;
pub mod rbac;
pub mod rng;
pub mod transform;
pub mod value;

pub use aggregate::{AggregationSpec, AggregationStrategy, Contribution, WeightSource};
pub use category::{categorize, Category, CategoryCounts, Origin, Split, Supervision};
pub use drift::DriftAlert;
pub use config::{AutoId, CallTarget, CallerConfig, ConfigPatch, Execution, MinEvalSamples, QualityThresholds};
pub use error::{Error, Result};
pub use gate::GateSpec;
pub use models::{ModelKind, ToyModel, TrainInit, TrainTrace};
pub use quality::{Matcher, MemberMetrics, Qualification};
pub use rbac::{Decision, Method, Role};
pub use rng::{RngStreams, SeededRng};
pub use transform::PlanState;
pub use value::{Params, Record, Signature, Value, ValueKind};
