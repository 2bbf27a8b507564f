//! Sliding-window accuracy check over supervised outcomes.

use alloc::string::String;
use serde::{Deserialize, Serialize};

/// Position and size of the evaluated window, as creation timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBounds {
    pub start: u64,
    pub end: u64,
    pub size: usize,
}

/// Raised when windowed supervised accuracy falls below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAlert {
    pub caller_id: String,
    pub window: WindowBounds,
    pub windowed_accuracy: f64,
    /// Accuracy over every supervised sample before the window, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_accuracy: Option<f64>,
    /// Name of the breached threshold and its value.
    pub threshold_breached: (String, f64),
    pub raised_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub windowed_accuracy: f64,
    pub baseline_accuracy: Option<f64>,
    /// Index of the first outcome inside the window.
    pub first: usize,
    pub size: usize,
    pub breached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftCheck {
    NotEnoughData { available: usize, required: usize },
    Evaluated(WindowStats),
}

/// Scores the most recent `window` outcomes (oldest first in `outcomes`)
/// against `threshold`; breached means strictly below it.
pub fn check_window(outcomes: &[bool], window: usize, threshold: f64) -> DriftCheck {
    if window == 0 || outcomes.len() < window {
        return DriftCheck::NotEnoughData { available: outcomes.len(), required: window.max(1) };
    }
    let first = outcomes.len() - window;
    let rate = |s: &[bool]| s.iter().filter(|&&ok| ok).count() as f64 / s.len() as f64;
    let windowed_accuracy = rate(&outcomes[first..]);
    let baseline_accuracy = (first > 0).then(|| rate(&outcomes[..first]));
    DriftCheck::Evaluated(WindowStats {
        windowed_accuracy,
        baseline_accuracy,
        first,
        size: window,
        breached: windowed_accuracy < threshold,
    })
}
