//! Deterministic gNB scheduler simulator.
//!
//! Produces multi-UE slot streams shaped like srsRAN physical-layer logs
//! without running a radio stack. Per slot:
//!
//! 1. Each UE receives one unit of downlink and/or uplink backlog with
//!    probability `dl_rate` / `ul_rate`, depending on its traffic direction.
//! 2. Up to `max_dl_per_slot` UEs with downlink backlog are served round-robin.
//!    Each gets `PDCCH DCI 1_0` plus a `PDSCH` on an equal share of the
//!    carrier (symbols `[1, 14)`), and owes HARQ feedback `harq_delay` slots
//!    later.
//! 3. Up to `max_ul_per_slot` UEs with uplink backlog get a `PDCCH DCI 0_0`
//!    grant; the matching `PUSCH` (equal carrier share, symbols `[0, 14)`)
//!    follows `ul_delay` slots later.
//! 4. Due `PUSCH`es are emitted, then due HARQ feedback as `PUCCH` on symbols
//!    `[0, 14)`. Feedback for a UE that transmits a `PUSCH` in the same slot
//!    rides on that `PUSCH` instead.
//! 5. A `PRACH` occasion is emitted every `prach_period_slots`, if set.
//!
//! Grants whose follow-up would fall past the end of the run are still
//! issued; the follow-up is simply not recorded.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phylog::{ChannelKind, ChannelMessage, Interval, SlotId, SlotRecord};
use crate::slottok::{self, MAX_INTERVAL_VALUE};

/// Shortest run that still holds one 10-slot input window plus its target.
pub const MIN_DURATION_SLOTS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Traffic {
    Downlink,
    Uplink,
    Bidirectional,
}

impl Traffic {
    fn has_dl(self) -> bool {
        matches!(self, Traffic::Downlink | Traffic::Bidirectional)
    }

    fn has_ul(self) -> bool {
        matches!(self, Traffic::Uplink | Traffic::Bidirectional)
    }
}

impl FromStr for Traffic {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "dl" | "downlink" => Ok(Traffic::Downlink),
            "ul" | "uplink" => Ok(Traffic::Uplink),
            "bi" | "bidirectional" => Ok(Traffic::Bidirectional),
            other => Err(ConfigError(format!("unknown traffic direction `{other}`"))),
        }
    }
}

impl fmt::Display for Traffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Traffic::Downlink => "dl",
            Traffic::Uplink => "ul",
            Traffic::Bidirectional => "bi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_ues: usize,
    /// One entry per UE.
    pub traffic: Vec<Traffic>,
    pub duration_slots: usize,
    pub seed: u64,
    /// Default 106 PRBs (20 MHz at 15 kHz subcarrier spacing).
    pub bandwidth_prbs: u16,
    pub prach_period_slots: Option<usize>,
    /// Slots from PDSCH to its HARQ feedback.
    pub harq_delay: usize,
    /// Slots from an uplink grant to its PUSCH.
    pub ul_delay: usize,
    pub dl_rate: f64,
    pub ul_rate: f64,
    pub max_dl_per_slot: usize,
    pub max_ul_per_slot: usize,
    pub start: SlotId,
}

impl ScenarioConfig {
    pub fn new(traffic: Vec<Traffic>, duration_slots: usize, seed: u64) -> Self {
        ScenarioConfig {
            n_ues: traffic.len(),
            traffic,
            duration_slots,
            seed,
            bandwidth_prbs: 106,
            prach_period_slots: None,
            harq_delay: 4,
            ul_delay: 4,
            dl_rate: 0.3,
            ul_rate: 0.45,
            max_dl_per_slot: 2,
            max_ul_per_slot: 2,
            start: SlotId::new(0, 0).unwrap(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError(m));
        if self.n_ues == 0 {
            return fail("n_ues must be at least 1".into());
        }
        if self.traffic.len() != self.n_ues {
            return fail(format!(
                "{} traffic entries for {} UEs",
                self.traffic.len(),
                self.n_ues
            ));
        }
        if self.n_ues > 255 {
            return fail("at most 255 UEs have distinct RNTI suffixes".into());
        }
        if self.duration_slots < MIN_DURATION_SLOTS {
            return fail(format!(
                "duration_slots = {} is below {MIN_DURATION_SLOTS}",
                self.duration_slots
            ));
        }
        if self.bandwidth_prbs == 0 || self.bandwidth_prbs > MAX_INTERVAL_VALUE {
            return fail(format!(
                "bandwidth_prbs = {} outside 1..={MAX_INTERVAL_VALUE}",
                self.bandwidth_prbs
            ));
        }
        if self.harq_delay == 0 || self.ul_delay == 0 {
            return fail("feedback delays must be at least one slot".into());
        }
        for (name, rate) in [("dl_rate", self.dl_rate), ("ul_rate", self.ul_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return fail(format!("{name} = {rate} is not a probability"));
            }
        }
        if self.max_dl_per_slot == 0 || self.max_ul_per_slot == 0 {
            return fail("per-slot allocation limits must be at least 1".into());
        }
        let widest = self.max_dl_per_slot.max(self.max_ul_per_slot);
        if widest > self.bandwidth_prbs as usize {
            return fail("more allocations per slot than PRBs".into());
        }
        if self.prach_period_slots == Some(0) {
            return fail("prach_period_slots must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UeState {
    pub rnti_suffix: u8,
    pub traffic: Traffic,
    pub pending_dl: u32,
    pub pending_ul: u32,
}

/// Future messages already committed by earlier grants.
#[derive(Default)]
struct Commitments {
    pusch: BTreeMap<usize, Vec<ChannelMessage>>,
    harq: BTreeMap<usize, Vec<u8>>,
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Vec<SlotRecord>, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ues: Vec<UeState> = cfg
        .traffic
        .iter()
        .enumerate()
        .map(|(i, &traffic)| UeState {
            rnti_suffix: (i + 1) as u8,
            traffic,
            pending_dl: 0,
            pending_ul: 0,
        })
        .collect();
    let mut rr_dl = 0usize;
    let mut rr_ul = 0usize;
    let mut due = Commitments::default();
    let mut out = Vec::with_capacity(cfg.duration_slots);
    let mut slot_id = cfg.start;

    for t in 0..cfg.duration_slots {
        for ue in &mut ues {
            // draw both so the stream position does not depend on traffic mix
            let dl = rng.random_bool(cfg.dl_rate);
            let ul = rng.random_bool(cfg.ul_rate);
            if dl && ue.traffic.has_dl() {
                ue.pending_dl += 1;
            }
            if ul && ue.traffic.has_ul() {
                ue.pending_ul += 1;
            }
        }

        let mut messages = Vec::new();

        let dl_served = pick_round_robin(&ues, &mut rr_dl, cfg.max_dl_per_slot, |u| u.pending_dl);
        for (share, &i) in dl_served.iter().enumerate() {
            let ue = &mut ues[i];
            ue.pending_dl -= 1;
            messages.push(ChannelMessage::pdcch(
                ChannelKind::PdcchDci10,
                ue.rnti_suffix,
            ));
            messages.push(ChannelMessage::new(
                ChannelKind::Pdsch,
                Some(ue.rnti_suffix),
                Some(prb_share(cfg.bandwidth_prbs, share, dl_served.len())),
                Some(Interval::symbols(1, 14).unwrap()),
            ));
            due.harq
                .entry(t + cfg.harq_delay)
                .or_default()
                .push(ue.rnti_suffix);
        }

        let ul_served = pick_round_robin(&ues, &mut rr_ul, cfg.max_ul_per_slot, |u| u.pending_ul);
        for (share, &i) in ul_served.iter().enumerate() {
            let ue = &mut ues[i];
            ue.pending_ul -= 1;
            messages.push(ChannelMessage::pdcch(
                ChannelKind::PdcchDci00,
                ue.rnti_suffix,
            ));
            due.pusch
                .entry(t + cfg.ul_delay)
                .or_default()
                .push(ChannelMessage::new(
                    ChannelKind::Pusch,
                    Some(ue.rnti_suffix),
                    Some(prb_share(cfg.bandwidth_prbs, share, ul_served.len())),
                    Some(Interval::symbols(0, 14).unwrap()),
                ));
        }

        let pusch = due.pusch.remove(&t).unwrap_or_default();
        let harq = due.harq.remove(&t).unwrap_or_default();
        let pucch: Vec<_> = harq
            .into_iter()
            .filter(|rnti| !pusch.iter().any(|p| p.rnti == Some(*rnti)))
            .map(|rnti| {
                ChannelMessage::new(
                    ChannelKind::Pucch,
                    Some(rnti),
                    None,
                    Some(Interval::symbols(0, 14).unwrap()),
                )
            })
            .collect();
        messages.extend(pusch);
        messages.extend(pucch);

        if cfg.prach_period_slots.is_some_and(|p| t % p == p - 1) {
            messages.push(ChannelMessage::new(
                ChannelKind::Prach,
                None,
                Some(Interval::prb(0, 12).unwrap()),
                Some(Interval::symbols(0, 14).unwrap()),
            ));
        }

        out.push(SlotRecord { slot_id, messages });
        slot_id = slot_id.next();
    }
    Ok(out)
}

/// Up to `limit` UEs with backlog, scanning from the round-robin pointer.
fn pick_round_robin(
    ues: &[UeState],
    pointer: &mut usize,
    limit: usize,
    backlog: impl Fn(&UeState) -> u32,
) -> Vec<usize> {
    let n = ues.len();
    let picked: Vec<usize> = (0..n)
        .map(|k| (*pointer + k) % n)
        .filter(|&i| backlog(&ues[i]) > 0)
        .take(limit)
        .collect();
    if let Some(&last) = picked.last() {
        *pointer = (last + 1) % n;
    }
    picked
}

/// The `index`-th of `parts` contiguous, non-overlapping carrier shares.
fn prb_share(bandwidth: u16, index: usize, parts: usize) -> Interval {
    let bw = bandwidth as usize;
    let start = bw * index / parts;
    let end = bw * (index + 1) / parts;
    Interval::prb(start as u32, end as u32).expect("share is non-empty and inside the carrier")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    /// Length of the tokenized stream.
    pub tokens: usize,
    pub channel_counts: BTreeMap<ChannelKind, usize>,
    /// Empirical P(c) over channel occurrences; empty when no channel occurs.
    pub channel_frequencies: BTreeMap<ChannelKind, f64>,
}

pub fn corpus_stats(records: &[SlotRecord]) -> CorpusStats {
    let tokens = records.iter().map(slottok::encoded_len).sum();
    let mut channel_counts = BTreeMap::new();
    for msg in records.iter().flat_map(|r| &r.messages) {
        *channel_counts.entry(msg.kind).or_insert(0) += 1;
    }
    let total: usize = channel_counts.values().sum();
    let channel_frequencies = channel_counts
        .iter()
        .map(|(k, c)| (*k, *c as f64 / total as f64))
        .collect();
    CorpusStats {
        tokens,
        channel_counts,
        channel_frequencies,
    }
}
