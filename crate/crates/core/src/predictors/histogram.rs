use super::{Predictor, PredictorError, PredictorSpec};
use crate::codec::{FrequencyVector, MAX_FREQ_TOTAL};

/// Fixed order-0 table fitted once on a training stream.
///
/// The value only exposes prediction; there is no way to refit it, so nothing seen
/// while coding the evaluation slice can leak into the model.
#[derive(Debug, Clone)]
pub struct StaticHistogram {
    counts: Box<[u32; 256]>,
}

impl StaticHistogram {
    /// Counts byte occurrences in `train`, halving them as needed to keep the total
    /// within the frequency-vector limit.
    pub fn fit(train: &[u8]) -> Result<Self, PredictorError> {
        if train.is_empty() {
            return Err(PredictorError::EmptyTraining);
        }
        let mut wide = [0u64; 256];
        for &b in train {
            wide[b as usize] += 1;
        }
        let mut total = train.len() as u64;
        let mut shift = 0;
        while total > MAX_FREQ_TOTAL {
            total >>= 1;
            shift += 1;
        }
        let mut counts = Box::new([0u32; 256]);
        for (c, &w) in counts.iter_mut().zip(&wide) {
            *c = (w >> shift) as u32;
        }
        Ok(Self { counts })
    }

    pub fn from_counts(counts: [u32; 256]) -> Result<Self, PredictorError> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return Err(PredictorError::EmptyTraining);
        }
        if total > MAX_FREQ_TOTAL {
            return Err(PredictorError::InvalidConfig(format!(
                "histogram total {total} exceeds 2^30"
            )));
        }
        Ok(Self {
            counts: Box::new(counts),
        })
    }

    pub fn counts(&self) -> &[u32; 256] {
        &self.counts
    }
}

impl Predictor for StaticHistogram {
    fn predict(&mut self, out: &mut FrequencyVector) -> Result<(), PredictorError> {
        out.counts_mut().copy_from_slice(&self.counts[..]);
        Ok(())
    }

    fn observe(&mut self, _symbol: u8) -> Result<(), PredictorError> {
        Ok(())
    }

    fn reset(&mut self) -> Result<(), PredictorError> {
        Ok(())
    }

    fn spec(&self) -> PredictorSpec {
        PredictorSpec::StaticHistogram {
            counts: self.counts.clone(),
        }
    }
}
