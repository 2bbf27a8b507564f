//! Model callers: calling-side intermediaries that surrogate hosts, run
//! ensembles, cache call data for supervision, and move hosts onto learned
//! models.
//!
//! [`Hub`] owns every caller and shared callable. The HTTP gateway and the
//! `mc` command line are thin layers over it.

pub mod callable;
pub mod caller;
pub mod cli;
pub mod clock;
pub mod datastore;
pub mod demo;
pub mod ensemble;
pub mod error;
pub mod gateway;
pub mod library;
pub mod persist;
pub mod quality;
pub mod remote;
pub mod transformation;

pub use callable::{Callable, CallableKind, CallableSpec};
pub use caller::{CallOptions, CallPath, CallResult, CallerSpec, CallerView, Hub, MemberOutput, TargetKind};
pub use clock::Clock;
pub use datastore::{DatasetSelector, FeedbackAction, Sample};
pub use error::{McError, Result};
pub use library::Library;
pub use modelcaller_core as core;
