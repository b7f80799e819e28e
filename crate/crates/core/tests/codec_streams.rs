use proptest::prelude::*;
use sha2::{Digest, Sha256};

use tscom_core::codec::{
    code_length_account, decode_stream, encode_stream, quantize, FrequencyVector, RangeDecoder,
    RangeEncoder, TERMINATION_BUDGET_BITS, TOTAL,
};
use tscom_core::container;
use tscom_core::predictors::{
    AdaptiveOrder0, Alpha, ContextModel, ContextModelConfig, Predictor, StaticHistogram, Uniform,
};

fn builtins(train: &[u8]) -> Vec<Box<dyn Predictor>> {
    let mut out: Vec<Box<dyn Predictor>> = vec![
        Box::new(Uniform),
        Box::new(AdaptiveOrder0::default()),
        Box::new(AdaptiveOrder0::new(Alpha::HALF)),
    ];
    for k in 0..=3 {
        out.push(Box::new(ContextModel::new(
            ContextModelConfig::new(k, Alpha::ONE).unwrap(),
        )));
    }
    if !train.is_empty() {
        out.push(Box::new(StaticHistogram::fit(train).unwrap()));
    }
    out
}

/// Fresh instance with the same configuration.
fn twin(p: &dyn Predictor) -> Box<dyn Predictor> {
    p.spec().build().unwrap()
}

fn skewed_bytes() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        prop::collection::vec(any::<u8>(), 0..2000),
        prop::collection::vec(prop::sample::select(vec![0u8, 1, 2, 200]), 0..4000),
        (any::<u8>(), 0usize..3000).prop_map(|(b, n)| vec![b; n]),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_builtin_roundtrips(data in skewed_bytes()) {
        for mut p in builtins(&data) {
            let enc = encode_stream(p.as_mut(), &data).unwrap();
            let mut q = twin(p.as_ref());
            let back = decode_stream(q.as_mut(), &enc.payload, data.len()).unwrap();
            prop_assert_eq!(&back, &data, "{:?}", p.spec());
        }
    }

    #[test]
    fn coding_gap_stays_in_budget(data in skewed_bytes()) {
        for mut p in builtins(&data) {
            let enc = encode_stream(p.as_mut(), &data).unwrap();
            let gap = enc.account.coding_gap_bits().unwrap();
            prop_assert!(gap >= -1e-6, "{gap}");
            prop_assert!(gap <= TERMINATION_BUDGET_BITS as f64, "{gap}");
            prop_assert_eq!(enc.payload.len() as u64, enc.account.emitted_bits.unwrap().div_ceil(8));
        }
    }

    /// Replay-only accounting agrees with the real encode.
    #[test]
    fn replay_matches_encode(data in skewed_bytes()) {
        let mut a = AdaptiveOrder0::default();
        let mut b = AdaptiveOrder0::default();
        let replay = code_length_account(&mut a, &data).unwrap();
        let enc = encode_stream(&mut b, &data).unwrap();
        prop_assert_eq!(replay.nll_quantized_bits, enc.account.nll_quantized_bits);
        prop_assert_eq!(replay.nll_model_bits, enc.account.nll_model_bits);
    }

    #[test]
    fn quantization_never_beats_the_model_on_the_coded_symbol(
        counts in prop::collection::vec(0u32..5000, 256),
        symbol in any::<u8>(),
    ) {
        let counts: [u32; 256] = counts.try_into().unwrap();
        prop_assume!(counts.iter().any(|&c| c > 0));
        let fv = FrequencyVector::new(counts).unwrap();
        let table = quantize(&fv);
        let p = fv.probability(symbol);
        let q = table.probability(symbol);
        if p > q {
            let excess = -q.log2() + p.log2();
            prop_assert!(excess > 0.0);
        }
        prop_assert_eq!(table.boundaries()[256], TOTAL);
    }

    /// Encoder and decoder registers move in lockstep.
    #[test]
    fn encoder_and_decoder_share_range_trajectory(data in skewed_bytes()) {
        let mut p = AdaptiveOrder0::default();
        let mut fv = FrequencyVector::zeroed();
        let mut enc = RangeEncoder::new();
        let mut tables = Vec::with_capacity(data.len());
        let mut ranges = Vec::with_capacity(data.len());
        for &s in &data {
            p.predict(&mut fv).unwrap();
            let t = quantize(&fv);
            enc.encode(&t, s).unwrap();
            ranges.push(enc.range());
            tables.push(t);
            p.observe(s).unwrap();
        }
        let out = enc.finish();
        let mut dec = RangeDecoder::new(&out.bytes);
        for ((t, &r), &s) in tables.iter().zip(&ranges).zip(&data) {
            prop_assert_eq!(dec.decode(t), s);
            prop_assert_eq!(dec.range(), r);
        }
    }

    /// Two instances fed the same trace emit the same frequency vectors.
    #[test]
    fn order0_and_context_k0_are_identical(data in prop::collection::vec(any::<u8>(), 0..3000)) {
        for alpha in [Alpha::ONE, Alpha::HALF, Alpha::new(3, 7).unwrap()] {
            let mut a = AdaptiveOrder0::new(alpha);
            let mut b = ContextModel::new(ContextModelConfig::new(0, alpha).unwrap());
            let mut fa = FrequencyVector::zeroed();
            let mut fb = FrequencyVector::zeroed();
            for &s in &data {
                a.predict(&mut fa).unwrap();
                b.predict(&mut fb).unwrap();
                prop_assert_eq!(&fa, &fb);
                a.observe(s).unwrap();
                b.observe(s).unwrap();
            }
        }
    }
}

fn trace_digest(p: &mut dyn Predictor, data: &[u8]) -> String {
    let mut h = Sha256::new();
    let mut fv = FrequencyVector::zeroed();
    for &s in data {
        p.predict(&mut fv).unwrap();
        for c in fv.counts() {
            h.update(c.to_le_bytes());
        }
        p.observe(s).unwrap();
    }
    hex::encode(h.finalize())
}

#[test]
fn trace_hashes_agree_across_instances_and_after_reset() {
    let data: Vec<u8> = (0..50_000u32).map(|i| ((i * 7919) >> 5) as u8 ^ (i % 13) as u8).collect();
    for mut p in builtins(&data[..1000]) {
        let first = trace_digest(p.as_mut(), &data);
        let mut q = twin(p.as_ref());
        assert_eq!(trace_digest(q.as_mut(), &data), first, "{:?}", p.spec());
        p.reset().unwrap();
        assert_eq!(trace_digest(p.as_mut(), &data), first, "{:?}", p.spec());
    }
}

#[test]
fn predict_does_not_mutate_state() {
    let data = b"abracadabra, abracadabra".repeat(50);
    for mut p in builtins(&data) {
        let mut a = FrequencyVector::zeroed();
        let mut b = FrequencyVector::zeroed();
        for &s in &data {
            p.predict(&mut a).unwrap();
            p.predict(&mut b).unwrap();
            assert_eq!(a, b);
            p.observe(s).unwrap();
        }
    }
}

#[test]
fn uniform_bpb_is_eight_plus_flush_share() {
    for len in [1usize, 2, 17, 1024, 100_000] {
        let data: Vec<u8> = (0..len).map(|i| (i * 131 % 256) as u8).collect();
        let enc = encode_stream(&mut Uniform, &data).unwrap();
        let bits = enc.account.emitted_bits.unwrap();
        assert_eq!(enc.account.nll_model_bits, 8.0 * len as f64);
        let cr = bits as f64 / (8.0 * len as f64);
        assert!(cr >= 1.0 && cr <= 1.0 + 48.0 / (8.0 * len as f64), "len {len}: {cr}");
    }
}

#[test]
fn empty_stream_is_pure_termination() {
    let enc = encode_stream(&mut AdaptiveOrder0::default(), &[]).unwrap();
    assert!(enc.account.emitted_bits.unwrap() <= 48);
    assert_eq!(decode_stream(&mut AdaptiveOrder0::default(), &enc.payload, 0).unwrap(), Vec::<u8>::new());
}

#[test]
fn one_hot_static_table_has_closed_form_cost() {
    let len = 10_000;
    let data = vec![0x33u8; len];
    let mut p = StaticHistogram::fit(&data).unwrap();
    let account = code_length_account(&mut p, &data).unwrap();
    let t = TOTAL as f64;
    let expected = len as f64 * (t / (t - 255.0)).log2();
    assert!((account.nll_quantized_bits - expected).abs() <= 1e-9 * expected);
    assert_eq!(account.nll_model_bits, 0.0);

    let (c, acc) = container::compress(&mut p, &data).unwrap();
    assert_eq!(container::decompress(&c.to_bytes()).unwrap(), data);
    let gap = acc.coding_gap_bits().unwrap();
    assert!((0.0..=48.0).contains(&gap));
}

#[test]
fn one_mib_of_random_bytes_roundtrips_under_order0() {
    use rand_core::{RngCore, SeedableRng};
    let mut rng = rand_xoshiro::Xoshiro256StarStar::seed_from_u64(99);
    let mut data = vec![0u8; 1 << 20];
    rng.fill_bytes(&mut data);
    let (c, acc) = container::compress(&mut AdaptiveOrder0::default(), &data).unwrap();
    assert_eq!(container::decompress(&c.to_bytes()).unwrap(), data);
    let gap = acc.coding_gap_bits().unwrap();
    assert!((0.0..=48.0).contains(&gap), "{gap}");
}

#[test]
fn segment_costs_add_up_within_one_session() {
    let a: Vec<u8> = (0..5000u32).map(|i| (i % 17) as u8).collect();
    let b: Vec<u8> = (0..7000u32).map(|i| (i % 5 * 40) as u8).collect();
    let whole: Vec<u8> = a.iter().chain(&b).copied().collect();
    let mut p = ContextModel::new(ContextModelConfig::new(1, Alpha::ONE).unwrap());
    let total = code_length_account(&mut p, &whole).unwrap();

    let mut p = ContextModel::new(ContextModelConfig::new(1, Alpha::ONE).unwrap());
    let first = code_length_account(&mut p, &a).unwrap();
    let second = code_length_account(&mut p, &b).unwrap();
    let sum = first.nll_quantized_bits + second.nll_quantized_bits;
    assert!((total.nll_quantized_bits - sum).abs() <= 1e-9 * sum);
}
