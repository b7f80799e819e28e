//! An exact-rational arithmetic coder used as an oracle for the fixed-precision one.
//!
//! It narrows `[low, low + width)` with exact fractions and, at the end, emits the
//! shortest dyadic interval `[k / 2^n, (k + 1) / 2^n)` contained in the result.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;

use tscom_core::codec::{quantize, CumulativeTable, FrequencyVector, RangeDecoder, RangeEncoder, TOTAL};

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exclusive interval `[start, start + width)` of one symbol, as fractions of 1.
struct ExactInterval {
    start: BigRational,
    width: BigRational,
}

fn from_table(table: &CumulativeTable, symbol: u8) -> ExactInterval {
    ExactInterval {
        start: ratio(table.start(symbol) as u64, TOTAL as u64),
        width: ratio(table.width(symbol) as u64, TOTAL as u64),
    }
}

struct ExactCoder {
    low: BigRational,
    width: BigRational,
    nll: f64,
}

impl ExactCoder {
    fn new() -> Self {
        Self {
            low: BigRational::zero(),
            width: BigRational::one(),
            nll: 0.0,
        }
    }

    fn encode(&mut self, iv: &ExactInterval) {
        self.low = &self.low + &self.width * &iv.start;
        self.width = &self.width * &iv.width;
        self.nll -= iv.width.to_f64().unwrap().log2();
    }

    /// Bits of the shortest binary fraction whose dyadic interval fits inside.
    fn finish(&self) -> String {
        let high = &self.low + &self.width;
        let mut scale = BigInt::one();
        for n in 0.. {
            // smallest k with k / 2^n >= low
            let scaled = &self.low * BigRational::from_integer(scale.clone());
            let k = scaled.ceil().to_integer();
            let end = BigRational::new(&k + 1, scale.clone());
            if end <= high {
                if n == 0 {
                    return String::new();
                }
                let digits = k.to_str_radix(2);
                return format!("{}{digits}", "0".repeat(n - digits.len()));
            }
            scale *= 2;
        }
        unreachable!()
    }

    /// Summed per symbol, since the width itself underflows `f64` on long inputs.
    fn nll_bits(&self) -> f64 {
        self.nll
    }
}

/// The appendix's five-bucket distribution spread over all 256 byte values.
///
/// Bytes 0..=107 share 0.1, byte 108 has 0.15, bytes 109..=113 share 0.1, byte 114
/// has 0.45 and bytes 115..=255 share 0.2. Counts are exact on a total of 253,800.
fn walkthrough_counts() -> [u32; 256] {
    let mut c = [0u32; 256];
    c[..108].fill(235);
    c[108] = 38_070;
    c[109..114].fill(5_076);
    c[114] = 114_210;
    c[115..].fill(360);
    c
}

#[test]
fn walkthrough_counts_are_exact() {
    let c = walkthrough_counts();
    let total: u64 = c.iter().map(|&x| x as u64).sum();
    assert_eq!(total, 253_800);
    let mass = |r: std::ops::Range<usize>| ratio(c[r].iter().map(|&x| x as u64).sum(), total);
    assert_eq!(mass(0..108), ratio(1, 10));
    assert_eq!(mass(108..109), ratio(15, 100));
    assert_eq!(mass(109..114), ratio(1, 10));
    assert_eq!(mass(114..115), ratio(45, 100));
    assert_eq!(mass(115..256), ratio(2, 10));
}

#[test]
fn byte_114_encodes_to_one_zero_with_exact_intervals() {
    let mut coder = ExactCoder::new();
    coder.encode(&ExactInterval {
        start: ratio(35, 100),
        width: ratio(45, 100),
    });
    assert_eq!(coder.low, ratio(35, 100));
    assert_eq!(&coder.low + &coder.width, ratio(8, 10));
    assert_eq!(coder.finish(), "10");
}

#[test]
fn quantized_walkthrough_table_keeps_the_partition() {
    let table = quantize(&FrequencyVector::new(walkthrough_counts()).unwrap());
    let b = table.boundaries();
    let t = TOTAL as f64;
    for (idx, frac) in [(0, 0.0), (108, 0.1), (109, 0.25), (114, 0.35), (115, 0.8), (256, 1.0)] {
        let err = (b[idx] as f64 - frac * t).abs();
        assert!(err <= 255.0, "boundary {idx}: {} vs {}", b[idx], frac * t);
    }
    // the quantized interval still contains [0.5, 0.75), so the code is unchanged
    let mut coder = ExactCoder::new();
    coder.encode(&from_table(&table, 114));
    assert_eq!(coder.finish(), "10");
}

#[test]
fn byte_114_roundtrips_through_the_range_coder() {
    let table = quantize(&FrequencyVector::new(walkthrough_counts()).unwrap());
    let mut enc = RangeEncoder::new();
    enc.encode(&table, 114).unwrap();
    let out = enc.finish();
    let mut dec = RangeDecoder::new(&out.bytes);
    assert_eq!(dec.decode(&table), 114);

    let mut coder = ExactCoder::new();
    coder.encode(&from_table(&table, 114));
    let exact = coder.finish().len() as u64;
    assert!(out.bits as f64 >= coder.nll_bits());
    assert!(out.bits <= exact + 48, "{} vs {exact}", out.bits);
}

#[test]
fn two_uniform_symbols_cost_sixteen_bits_plus_flush() {
    let table = quantize(&FrequencyVector::uniform());
    let mut enc = RangeEncoder::new();
    let mut coder = ExactCoder::new();
    for s in [0x12, 0xEF] {
        enc.encode(&table, s).unwrap();
        coder.encode(&from_table(&table, s));
    }
    let out = enc.finish();
    assert!((16..=16 + 48).contains(&out.bits), "{}", out.bits);
    // dyadic intervals need no flush at all
    assert_eq!(coder.finish(), "0001001011101111");
}

fn arb_table() -> impl Strategy<Value = CumulativeTable> {
    prop::collection::vec(0u32..1000, 256).prop_filter_map("all-zero counts", |v| {
        let counts: [u32; 256] = v.try_into().unwrap();
        FrequencyVector::new(counts).ok().map(|fv| quantize(&fv))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The streaming coder pays within the termination budget of the exact coder.
    #[test]
    fn range_coder_tracks_exact_code_length(
        table in arb_table(),
        data in prop::collection::vec(any::<u8>(), 0..120),
    ) {
        let mut enc = RangeEncoder::new();
        let mut coder = ExactCoder::new();
        for &s in &data {
            enc.encode(&table, s).unwrap();
            coder.encode(&from_table(&table, s));
        }
        let out = enc.finish();
        let exact = coder.finish().len() as u64;
        let nll = coder.nll_bits();
        prop_assert!(exact as f64 >= nll - 1e-9);
        prop_assert!(exact as f64 <= nll + 2.0);
        prop_assert!(out.bits as f64 >= nll - 1e-6, "{} < {nll}", out.bits);
        prop_assert!(out.bits <= exact + 48);

        let mut dec = RangeDecoder::new(&out.bytes);
        for &s in &data {
            prop_assert_eq!(dec.decode(&table), s);
        }
    }
}
