use super::{Alpha, Predictor, PredictorError, PredictorSpec};
use crate::codec::FrequencyVector;

/// Adaptive frequency model: predicts `n_s + alpha` where `n_s` counts past occurrences.
#[derive(Debug, Clone)]
pub struct AdaptiveOrder0 {
    alpha: Alpha,
    counts: [u32; 256],
}

impl AdaptiveOrder0 {
    pub fn new(alpha: Alpha) -> Self {
        Self {
            alpha,
            counts: [0; 256],
        }
    }

    pub fn counts(&self) -> &[u32; 256] {
        &self.counts
    }
}

impl Default for AdaptiveOrder0 {
    fn default() -> Self {
        Self::new(Alpha::ONE)
    }
}

impl Predictor for AdaptiveOrder0 {
    fn predict(&mut self, out: &mut FrequencyVector) -> Result<(), PredictorError> {
        let mut wide = [0u64; 256];
        for (w, &c) in wide.iter_mut().zip(&self.counts) {
            *w = self.alpha.smooth(c);
        }
        out.set_scaled(&wide);
        Ok(())
    }

    fn observe(&mut self, symbol: u8) -> Result<(), PredictorError> {
        let c = &mut self.counts[symbol as usize];
        *c = c.saturating_add(1);
        Ok(())
    }

    fn reset(&mut self) -> Result<(), PredictorError> {
        self.counts = [0; 256];
        Ok(())
    }

    fn spec(&self) -> PredictorSpec {
        PredictorSpec::AdaptiveOrder0 { alpha: self.alpha }
    }
}
