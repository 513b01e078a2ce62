//! Random fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotcast::phylog::{ChannelKind, ChannelMessage, Interval, SlotId, SlotRecord};
use slotcast::slottok::MAX_INTERVAL_VALUE;

fn interval(rng: &mut impl Rng, max: u16) -> (u32, u32) {
    let start = rng.random_range(0..max) as u32;
    let end = rng.random_range(start + 1..=max as u32);
    (start, end)
}

/// A well-formed record whose values all fit the token grammar.
pub fn random_record(rng: &mut impl Rng) -> SlotRecord {
    let slot_id = SlotId::new(rng.random_range(0..1024), rng.random_range(0..10)).unwrap();
    let n = rng.random_range(0..6);
    let messages = (0..n)
        .map(|_| {
            let kind = ChannelKind::ALL[rng.random_range(0..ChannelKind::ALL.len())];
            let rnti = rng.random_bool(0.8).then(|| rng.random::<u8>());
            if kind.is_pdcch() {
                return ChannelMessage::new(kind, rnti, None, None);
            }
            let freq = rng.random_bool(0.7).then(|| {
                let (s, e) = interval(rng, MAX_INTERVAL_VALUE);
                Interval::prb(s, e).unwrap()
            });
            let time = rng.random_bool(0.7).then(|| {
                let (s, e) = interval(rng, 14);
                Interval::symbols(s, e).unwrap()
            });
            ChannelMessage::new(kind, rnti, freq, time)
        })
        .collect();
    SlotRecord { slot_id, messages }
}

pub fn record_from_seed(seed: u64) -> SlotRecord {
    random_record(&mut ChaCha8Rng::seed_from_u64(seed))
}
