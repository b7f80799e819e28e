use super::CodecError;

/// Alphabet size: one symbol per byte value.
pub const ALPHABET: usize = 256;
/// Quantization denominator of every [`CumulativeTable`].
pub const TOTAL: u32 = 1 << 16;
/// Largest accepted sum of a [`FrequencyVector`].
pub const MAX_FREQ_TOTAL: u64 = 1 << 30;

/// Unnormalized next-symbol counts emitted by a predictor.
#[derive(Clone, PartialEq, Eq)]
pub struct FrequencyVector {
    counts: [u32; ALPHABET],
}

impl std::fmt::Debug for FrequencyVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrequencyVector")
            .field("total", &self.total())
            .finish_non_exhaustive()
    }
}

impl Default for FrequencyVector {
    fn default() -> Self {
        Self::uniform()
    }
}

impl FrequencyVector {
    pub fn uniform() -> Self {
        Self {
            counts: [1; ALPHABET],
        }
    }

    pub fn zeroed() -> Self {
        Self {
            counts: [0; ALPHABET],
        }
    }

    /// Checked constructor; fails when the total is outside `[1, 2^30]`.
    pub fn new(counts: [u32; ALPHABET]) -> Result<Self, CodecError> {
        let fv = Self { counts };
        fv.validate()?;
        Ok(fv)
    }

    pub fn counts(&self) -> &[u32; ALPHABET] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32; ALPHABET] {
        &mut self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let total = self.total();
        if total == 0 || total > MAX_FREQ_TOTAL {
            return Err(CodecError::InvalidFrequencies { total });
        }
        Ok(())
    }

    /// Model probability of `symbol`, i.e. `count / total`.
    pub fn probability(&self, symbol: u8) -> f64 {
        self.counts[symbol as usize] as f64 / self.total() as f64
    }

    /// Stores `wide`, shifting every count right by the smallest amount that brings
    /// the total under [`MAX_FREQ_TOTAL`].
    ///
    /// Counts that drop to zero are fine; [`quantize`] floors them back to one.
    pub fn set_scaled(&mut self, wide: &[u64; ALPHABET]) {
        let total: u64 = wide.iter().sum();
        let mut shift = 0;
        while (total >> shift) > MAX_FREQ_TOTAL {
            shift += 1;
        }
        let mut sum = 0u64;
        for (dst, &w) in self.counts.iter_mut().zip(wide) {
            *dst = (w >> shift) as u32;
            sum += *dst as u64;
        }
        debug_assert!(total == 0 || sum > 0);
    }
}

/// Cumulative boundaries `cum[0] = 0 .. cum[256] = TOTAL`; symbol `s` owns `[cum[s], cum[s+1])`.
#[derive(Clone, PartialEq, Eq)]
pub struct CumulativeTable {
    cum: [u32; ALPHABET + 1],
}

impl std::fmt::Debug for CumulativeTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.cum.iter()).finish()
    }
}

impl CumulativeTable {
    /// Builds a table from already quantized counts. Zero counts are accepted here,
    /// but such symbols cannot be encoded.
    pub fn from_quantized(q: &[u32; ALPHABET]) -> Result<Self, CodecError> {
        let sum: u64 = q.iter().map(|&c| c as u64).sum();
        if sum != TOTAL as u64 {
            return Err(CodecError::TableSum { sum });
        }
        let mut cum = [0u32; ALPHABET + 1];
        for (i, &c) in q.iter().enumerate() {
            cum[i + 1] = cum[i] + c;
        }
        Ok(Self { cum })
    }

    pub fn boundaries(&self) -> &[u32; ALPHABET + 1] {
        &self.cum
    }

    #[inline]
    pub fn start(&self, symbol: u8) -> u32 {
        self.cum[symbol as usize]
    }

    #[inline]
    pub fn width(&self, symbol: u8) -> u32 {
        self.cum[symbol as usize + 1] - self.cum[symbol as usize]
    }

    /// Probability the coder actually pays for `symbol`.
    pub fn probability(&self, symbol: u8) -> f64 {
        self.width(symbol) as f64 / TOTAL as f64
    }

    /// The symbol whose interval contains `point` (`point < TOTAL`).
    #[inline]
    pub fn find(&self, point: u32) -> u8 {
        debug_assert!(point < TOTAL);
        (self.cum.partition_point(|&c| c <= point) - 1) as u8
    }

    /// True when every symbol has a non-empty interval.
    pub fn is_fully_decodable(&self) -> bool {
        self.cum.windows(2).all(|w| w[1] > w[0])
    }
}

/// Maps counts onto `TOTAL` with every symbol receiving at least one unit.
///
/// 1. Each symbol gets `floor(count * TOTAL / total)`; the units left over go one each
///    to the symbols with the largest remainders (ties: lower index).
/// 2. Symbols still at zero are raised to one. The resulting deficit is taken back one
///    unit at a time from symbols above one, in descending order of quantized count
///    (ties: lower index), cycling through them again if a single pass is not enough.
pub fn quantize(fv: &FrequencyVector) -> CumulativeTable {
    let total = fv.total();
    debug_assert!(total > 0 && total <= MAX_FREQ_TOTAL);
    let mut q = [0u32; ALPHABET];
    let mut keys = [0u64; ALPHABET];
    let mut assigned = 0u32;
    for (i, &c) in fv.counts.iter().enumerate() {
        let scaled = c as u64 * TOTAL as u64;
        q[i] = (scaled / total) as u32;
        assigned += q[i];
        // remainder in the high bits, inverted index in the low byte
        keys[i] = ((scaled % total) << 8) | (255 - i) as u64;
    }
    let leftover = (TOTAL - assigned) as usize;
    if leftover > 0 {
        if leftover < ALPHABET {
            keys.select_nth_unstable_by(leftover - 1, |a, b| b.cmp(a));
        }
        for &k in &keys[..leftover] {
            q[255 - (k & 0xFF) as usize] += 1;
        }
    }

    let mut deficit = 0usize;
    for c in q.iter_mut() {
        if *c == 0 {
            *c = 1;
            deficit += 1;
        }
    }
    take_from_largest(&mut q, deficit);

    let mut cum = [0u32; ALPHABET + 1];
    for i in 0..ALPHABET {
        cum[i + 1] = cum[i] + q[i];
    }
    debug_assert_eq!(cum[ALPHABET], TOTAL);
    CumulativeTable { cum }
}

fn take_from_largest(q: &mut [u32; ALPHABET], mut deficit: usize) {
    let mut keys = [0u32; ALPHABET];
    while deficit > 0 {
        let mut n = 0;
        for (i, &c) in q.iter().enumerate() {
            if c > 1 {
                keys[n] = (c << 8) | (255 - i) as u32;
                n += 1;
            }
        }
        if deficit >= n {
            // Full passes touch every candidate, so order does not matter. Run as many
            // as possible at once, stopping early if some candidate would reach one.
            let headroom = q.iter().filter(|&&c| c > 1).map(|&c| c - 1).min().unwrap_or(0);
            let passes = headroom.min((deficit / n) as u32);
            for c in q.iter_mut().filter(|c| **c > 1) {
                *c -= passes;
            }
            deficit -= passes as usize * n;
            continue;
        }
        let cand = &mut keys[..n];
        cand.select_nth_unstable_by(deficit - 1, |a, b| b.cmp(a));
        for &k in &cand[..deficit] {
            q[255 - (k & 0xFF) as usize] -= 1;
        }
        deficit = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_counts_split_evenly() {
        let t = quantize(&FrequencyVector::uniform());
        for i in 0..=256 {
            assert_eq!(t.boundaries()[i], 256 * i as u32);
        }
    }

    #[test]
    fn one_hot_keeps_floor_everywhere() {
        let mut counts = [0u32; 256];
        counts[0] = 1;
        let t = quantize(&FrequencyVector::new(counts).unwrap());
        assert_eq!(t.width(0), TOTAL - 255);
        for s in 1..=255u8 {
            assert_eq!(t.width(s), 1);
        }
    }

    #[test]
    fn leftover_goes_to_largest_remainder_with_low_index_ties() {
        // three equal counts: TOTAL/3 = 21845 rem 1 each, one leftover unit.
        let mut counts = [0u32; 256];
        counts[10] = 1;
        counts[20] = 1;
        counts[30] = 1;
        let t = quantize(&FrequencyVector::new(counts).unwrap());
        // 253 floors taken from the three largest, round robin starting at index 10
        let w = [t.width(10), t.width(20), t.width(30)];
        assert_eq!(w.iter().sum::<u32>() + 253, TOTAL);
        assert!(w[0] >= w[1] && w[1] >= w[2]);
        assert!(w[0] - w[2] <= 1);
    }

    #[test]
    fn deficit_cycles_when_one_pass_is_not_enough() {
        // two symbols at 2 units each can only give one unit per pass
        let mut q = [1u32; 256];
        q[0] = 3;
        q[1] = 3;
        take_from_largest(&mut q, 3);
        assert_eq!((q[0], q[1]), (1, 2));
    }

    #[test]
    fn set_scaled_shifts_until_valid() {
        let mut wide = [0u64; 256];
        wide[0] = 1 << 40;
        wide[1] = 3;
        let mut fv = FrequencyVector::zeroed();
        fv.set_scaled(&wide);
        assert!(fv.validate().is_ok());
        assert!(fv.total() > MAX_FREQ_TOTAL / 2);
        assert_eq!(fv.counts()[1], 0);

        wide[0] = 5;
        fv.set_scaled(&wide);
        assert_eq!(&fv.counts()[..3], &[5, 3, 0]);
    }

    #[test]
    fn rejects_bad_totals() {
        assert!(FrequencyVector::new([0; 256]).is_err());
        let mut counts = [0u32; 256];
        counts[0] = (1 << 30) + 1;
        assert!(FrequencyVector::new(counts).is_err());
        counts[0] = 1 << 30;
        assert!(FrequencyVector::new(counts).is_ok());
    }

    #[test]
    fn from_quantized_requires_exact_total() {
        let mut q = [0u32; 256];
        q[7] = TOTAL;
        let t = CumulativeTable::from_quantized(&q).unwrap();
        assert!(!t.is_fully_decodable());
        assert_eq!(t.find(0), 7);
        assert_eq!(t.find(TOTAL - 1), 7);
        q[7] -= 1;
        assert!(CumulativeTable::from_quantized(&q).is_err());
    }
}
