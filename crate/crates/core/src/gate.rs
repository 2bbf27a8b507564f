//! Member gating: choosing which registered members a call activates.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::aggregate::WeightSource;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateSpec {
    #[default]
    None,
    /// The `k` members with the highest historical accuracy.
    TopK {
        k: usize,
        #[serde(default)]
        by: WeightSource,
    },
    /// Only members whose qualification is `Qualified`.
    QualifiedOnly,
    /// `k` members drawn from the caller's gate stream.
    RandomK { k: usize },
    /// A registration with role "gate" maps inputs to a member subset.
    GateModel,
}

impl GateSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GateSpec::TopK { k: 0, .. } | GateSpec::RandomK { k: 0 } => {
                Err(Error::InvalidConfig("gate k must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// What the gate knows about one member.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GateCandidate {
    /// Accuracy from the source the gate ranks by.
    pub accuracy: Option<f64>,
    pub qualified: bool,
}

/// Indices of active members, ascending. `GateModel` must be resolved by
/// the runtime, which invokes the gate callable.
pub fn select(spec: &GateSpec, candidates: &[GateCandidate], rng: &mut SeededRng) -> Result<Vec<usize>> {
    let n = candidates.len();
    match spec {
        GateSpec::None => Ok((0..n).collect()),
        GateSpec::TopK { k, .. } => {
            let mut order: Vec<usize> = (0..n).collect();
            // Stable sort keeps registration order among equal accuracies.
            order.sort_by(|&a, &b| {
                let ka = candidates[a].accuracy.unwrap_or(f64::NEG_INFINITY);
                let kb = candidates[b].accuracy.unwrap_or(f64::NEG_INFINITY);
                kb.total_cmp(&ka)
            });
            order.truncate(*k);
            order.sort_unstable();
            Ok(order)
        }
        GateSpec::QualifiedOnly => Ok((0..n).filter(|&i| candidates[i].qualified).collect()),
        GateSpec::RandomK { k } => {
            let mut idx: Vec<usize> = (0..n).collect();
            let take = (*k).min(n);
            for i in 0..take {
                let j = i + rng.below((n - i) as u64) as usize;
                idx.swap(i, j);
            }
            idx.truncate(take);
            idx.sort_unstable();
            Ok(idx)
        }
        GateSpec::GateModel => Err(Error::Gating("gate model must be resolved by the runtime".into())),
    }
}
