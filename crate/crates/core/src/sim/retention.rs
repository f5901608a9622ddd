//! Customer retention as a function of price positioning.
//!
//! Customers remember whether the station has been pricing above or below
//! the competitor lately. The model keeps an exponentially weighted average
//! of the hourly price gap and maps it through a logistic curve to a
//! repeat-visit probability: 50% at sustained parity, falling toward zero
//! as the station stays expensive, rising as it stays cheap.
//!
//! The signal feeds the pricing reward (a sustained markup erodes loyalty
//! even while hourly margin looks good). It deliberately does not feed back
//! into the arrival rate — short-run price response is already captured by
//! the demand curve's elasticity term, and routing it in twice would
//! double-count.

/// EWMA memory: 0.1/hour ≈ a ten-hour half-life of price memory.
const GAP_EWMA_ALPHA: f64 = 0.1;

/// Logistic steepness per dollar of sustained gap: +$0.25 sustained puts
/// repeat probability near 12%.
const LOGISTIC_SLOPE: f64 = 8.0;

/// Tracks the remembered price gap and converts it to a retention signal.
#[derive(Debug, Clone, Default)]
pub struct RetentionModel {
    ewma_gap_dollars: f64,
}

impl RetentionModel {
    pub fn new() -> Self {
        RetentionModel {
            ewma_gap_dollars: 0.0,
        }
    }

    /// Repeat-visit probability for a remembered gap, in (0, 1).
    pub fn repeat_probability(gap_dollars: f64) -> f64 {
        1.0 / (1.0 + (LOGISTIC_SLOPE * gap_dollars).exp())
    }

    /// Fold in this hour's posted-minus-competitor gap (dollars) and return
    /// the retention delta: repeat probability minus the 50% parity
    /// baseline, in [−0.5, 0.5].
    pub fn observe(&mut self, gap_dollars: f64) -> f64 {
        self.ewma_gap_dollars += GAP_EWMA_ALPHA * (gap_dollars - self.ewma_gap_dollars);
        Self::repeat_probability(self.ewma_gap_dollars) - 0.5
    }

    /// The remembered gap, dollars.
    pub fn remembered_gap(&self) -> f64 {
        self.ewma_gap_dollars
    }
}
