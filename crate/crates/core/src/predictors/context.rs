use serde::{Deserialize, Serialize};

use super::{Alpha, Predictor, PredictorError, PredictorSpec};
use crate::codec::FrequencyVector;

/// Highest supported context order.
pub const MAX_ORDER: u8 = 3;
/// Slots in the open-addressed table used for orders 2 and 3.
pub const CONTEXT_SLOTS: usize = 1 << 22;
/// Orders 2 and 3 stop admitting new contexts past this many (64 MiB of counts).
/// Contexts that never got a slot stay unseen and fall back to lower orders.
pub const MAX_CONTEXTS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextModelConfig {
    pub order: u8,
    pub alpha: Alpha,
}

impl ContextModelConfig {
    pub fn new(order: u8, alpha: Alpha) -> Result<Self, PredictorError> {
        if order > MAX_ORDER {
            return Err(PredictorError::InvalidConfig(format!(
                "context order {order} exceeds {MAX_ORDER}"
            )));
        }
        Alpha::new(alpha.num, alpha.den)?;
        Ok(Self { order, alpha })
    }
}

/// Context keys are exact (order tag + context bytes), so the hash only picks the
/// probe start and collisions never merge statistics.
struct ContextTable {
    keys: Vec<u64>,
    slots: Vec<u32>,
    counts: Vec<u32>,
    totals: Vec<u32>,
    shift: u32,
}

impl ContextTable {
    fn new() -> Self {
        Self {
            keys: vec![0; CONTEXT_SLOTS],
            slots: vec![0; CONTEXT_SLOTS],
            counts: Vec::new(),
            totals: Vec::new(),
            shift: 64 - CONTEXT_SLOTS.trailing_zeros(),
        }
    }

    fn key(order: u8, context: u32) -> u64 {
        (1 << 63) | ((order as u64) << 32) | context as u64
    }

    fn home(&self, key: u64) -> usize {
        (key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> self.shift) as usize
    }

    fn find(&self, key: u64) -> Option<usize> {
        let mask = CONTEXT_SLOTS - 1;
        let mut i = self.home(key);
        loop {
            match self.keys[i] {
                0 => return None,
                k if k == key => return Some(self.slots[i] as usize),
                _ => i = (i + 1) & mask,
            }
        }
    }

    fn find_or_insert(&mut self, key: u64) -> Option<usize> {
        let mask = CONTEXT_SLOTS - 1;
        let mut i = self.home(key);
        loop {
            match self.keys[i] {
                0 => {
                    let idx = self.totals.len();
                    if idx >= MAX_CONTEXTS {
                        return None;
                    }
                    self.keys[i] = key;
                    self.slots[i] = idx as u32;
                    self.totals.push(0);
                    self.counts.resize(self.counts.len() + 256, 0);
                    return Some(idx);
                }
                k if k == key => return Some(self.slots[i] as usize),
                _ => i = (i + 1) & mask,
            }
        }
    }

    fn clear(&mut self) {
        self.keys.fill(0);
        self.counts.clear();
        self.totals.clear();
    }
}

/// Order-k counting model over the previous k bytes.
///
/// Order 0 and 1 use dense tables; orders 2 and 3 share a hashed table. A context
/// that has never been followed by any symbol predicts `alpha` plus the prediction
/// of the next lower order. Before k bytes have been seen the missing history
/// reads as zero bytes.
pub struct ContextModel {
    cfg: ContextModelConfig,
    order0: [u32; 256],
    order1: Vec<u32>,
    totals1: Vec<u32>,
    hashed: Option<ContextTable>,
    history: u32,
}

impl std::fmt::Debug for ContextModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContextModel")
            .field("cfg", &self.cfg)
            .field("history", &self.history)
            .finish_non_exhaustive()
    }
}

impl ContextModel {
    pub fn new(cfg: ContextModelConfig) -> Self {
        let dense1 = cfg.order >= 1;
        Self {
            cfg,
            order0: [0; 256],
            order1: if dense1 { vec![0; 256 * 256] } else { Vec::new() },
            totals1: if dense1 { vec![0; 256] } else { Vec::new() },
            hashed: (cfg.order >= 2).then(ContextTable::new),
            history: 0,
        }
    }

    pub fn config(&self) -> ContextModelConfig {
        self.cfg
    }

    fn context(&self, order: u8) -> u32 {
        self.history & ((1u32 << (8 * order as u32)) - 1)
    }

    fn fill(&self, order: u8, wide: &mut [u64; 256]) {
        let alpha = self.cfg.alpha;
        let seen: Option<&[u32]> = match order {
            0 => Some(&self.order0),
            1 => {
                let ctx = self.context(1) as usize;
                (self.totals1[ctx] > 0).then(|| &self.order1[ctx * 256..(ctx + 1) * 256])
            }
            _ => {
                let table = self.hashed.as_ref().expect("hashed table for order >= 2");
                table
                    .find(ContextTable::key(order, self.context(order)))
                    .filter(|&idx| table.totals[idx] > 0)
                    .map(|idx| &table.counts[idx * 256..(idx + 1) * 256])
            }
        };
        match seen {
            Some(counts) => {
                for (w, &c) in wide.iter_mut().zip(counts) {
                    *w = alpha.smooth(c);
                }
            }
            None => {
                self.fill(order - 1, wide);
                for w in wide.iter_mut() {
                    *w += alpha.num as u64;
                }
            }
        }
    }
}

impl Predictor for ContextModel {
    fn predict(&mut self, out: &mut FrequencyVector) -> Result<(), PredictorError> {
        let mut wide = [0u64; 256];
        self.fill(self.cfg.order, &mut wide);
        out.set_scaled(&wide);
        Ok(())
    }

    fn observe(&mut self, symbol: u8) -> Result<(), PredictorError> {
        let s = symbol as usize;
        self.order0[s] = self.order0[s].saturating_add(1);
        if self.cfg.order >= 1 {
            let ctx = self.context(1) as usize;
            let c = &mut self.order1[ctx * 256 + s];
            *c = c.saturating_add(1);
            self.totals1[ctx] = self.totals1[ctx].saturating_add(1);
        }
        for order in 2..=self.cfg.order {
            let key = ContextTable::key(order, self.context(order));
            let table = self.hashed.as_mut().expect("hashed table for order >= 2");
            if let Some(idx) = table.find_or_insert(key) {
                let c = &mut table.counts[idx * 256 + s];
                *c = c.saturating_add(1);
                table.totals[idx] = table.totals[idx].saturating_add(1);
            }
        }
        self.history = ((self.history << 8) | symbol as u32) & 0x00FF_FFFF;
        Ok(())
    }

    fn reset(&mut self) -> Result<(), PredictorError> {
        self.order0 = [0; 256];
        self.order1.fill(0);
        self.totals1.fill(0);
        if let Some(t) = self.hashed.as_mut() {
            t.clear();
        }
        self.history = 0;
        Ok(())
    }

    fn spec(&self) -> PredictorSpec {
        PredictorSpec::ContextModel(self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn predict(p: &mut ContextModel) -> [u32; 256] {
        let mut fv = FrequencyVector::zeroed();
        p.predict(&mut fv).unwrap();
        *fv.counts()
    }

    #[test]
    fn rejects_order_above_three() {
        assert!(ContextModelConfig::new(4, Alpha::ONE).is_err());
    }

    #[test]
    fn order1_uses_previous_byte() {
        let mut p = ContextModel::new(ContextModelConfig::new(1, Alpha::ONE).unwrap());
        for &b in b"ababab" {
            p.observe(b).unwrap();
        }
        // last byte is 'b', which was always followed by 'a'
        let f = predict(&mut p);
        assert_eq!(f[b'a' as usize], 3);
        assert_eq!(f[b'b' as usize], 1);
    }

    #[test]
    fn unseen_context_blends_with_lower_order() {
        let mut p = ContextModel::new(ContextModelConfig::new(1, Alpha::ONE).unwrap());
        for &b in b"aab" {
            p.observe(b).unwrap();
        }
        // context 'b' never seen: alpha + order-0 prediction (counts a=2, b=1)
        let f = predict(&mut p);
        assert_eq!(f[b'a' as usize], 1 + 3);
        assert_eq!(f[b'b' as usize], 1 + 2);
        assert_eq!(f[0], 1 + 1);
    }

    #[test]
    fn hashed_orders_track_exact_contexts() {
        let mut p = ContextModel::new(ContextModelConfig::new(3, Alpha::ONE).unwrap());
        for &b in b"xyzQxyzQxyz" {
            p.observe(b).unwrap();
        }
        let f = predict(&mut p);
        assert_eq!(f[b'Q' as usize], 3);
        assert_eq!(f[b'x' as usize], 1);

        p.reset().unwrap();
        assert!(predict(&mut p).iter().all(|&c| c == 1 + 1 + 1 + 1));
    }

    #[test]
    fn order2_falls_back_through_every_level() {
        let mut p = ContextModel::new(ContextModelConfig::new(2, Alpha::ONE).unwrap());
        // fresh model: order 2 and 1 unseen, order 0 empty
        assert!(predict(&mut p).iter().all(|&c| c == 3));
        p.observe(5).unwrap();
        // context (0,5) unseen at order 2 and '5' unseen at order 1
        let f = predict(&mut p);
        assert_eq!(f[5], 2 + 2);
        assert_eq!(f[6], 1 + 2);
    }
}
