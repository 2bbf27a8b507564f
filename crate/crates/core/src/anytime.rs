//! Expected-quality estimate for partial aggregates and the monotone
//! emission rule of anytime calls.

/// Prior used when a source has neither gold nor silver accuracy.
pub const DEFAULT_PRIOR: f64 = 0.5;

/// What is known about one output source's quality.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceQuality {
    pub gold: Option<f64>,
    pub silver: Option<f64>,
    pub prior: Option<f64>,
}

impl SourceQuality {
    /// Gold accuracy, falling back to silver, then the prior, then 0.5.
    pub fn estimate(&self) -> f64 {
        self.gold.or(self.silver).or(self.prior).unwrap_or(DEFAULT_PRIOR)
    }
}

/// Upper estimate of an aggregate's quality: the best completed source.
pub fn expected_quality<'a>(completed: impl IntoIterator<Item = &'a SourceQuality>) -> Option<f64> {
    completed.into_iter().map(SourceQuality::estimate).reduce(f64::max)
}

/// Admits an emission only when its quality strictly exceeds the last one.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonotoneGate {
    last: Option<f64>,
}

impl MonotoneGate {
    pub fn admit(&mut self, quality: f64) -> bool {
        match self.last {
            Some(prev) if quality <= prev => false,
            _ => {
                self.last = Some(quality);
                true
            }
        }
    }

    pub fn last(&self) -> Option<f64> {
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_chain() {
        assert_eq!(SourceQuality { gold: Some(0.7), silver: Some(0.9), prior: None }.estimate(), 0.7);
        assert_eq!(SourceQuality { gold: None, silver: Some(0.9), prior: Some(0.1) }.estimate(), 0.9);
        assert_eq!(SourceQuality { prior: Some(0.3), ..Default::default() }.estimate(), 0.3);
        assert_eq!(SourceQuality::default().estimate(), DEFAULT_PRIOR);
    }

    #[test]
    fn gate_is_strict() {
        let mut g = MonotoneGate::default();
        assert!(g.admit(0.6));
        assert!(!g.admit(0.6));
        assert!(g.admit(0.9));
        assert!(!g.admit(0.5));
    }
}
