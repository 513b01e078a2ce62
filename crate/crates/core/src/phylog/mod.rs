//! Physical-layer log ingestion.
//!
//! Turns srsRAN-style `[PHY]` log records into [`SlotRecord`]s and groups them
//! into a stream that is contiguous in slot time.

pub mod corpus;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_line, parse_log, render_line};

/// Number of system frames before the SFN wraps to zero.
pub const SFN_CYCLE: u16 = 1024;
/// Slots per system frame at the numerology used here.
pub const SLOTS_PER_FRAME: u8 = 10;
/// Upper bound for a PRB index (largest NR carrier).
pub const MAX_PRB: u16 = 275;
/// Upper bound for an OFDM symbol index within a slot.
pub const MAX_SYMBOL: u16 = 14;

const SLOT_CYCLE: u32 = SFN_CYCLE as u32 * SLOTS_PER_FRAME as u32;

/// A slot position: system frame number plus slot-in-frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotId {
    sfn: u16,
    slot: u8,
}

impl SlotId {
    pub fn new(sfn: u16, slot: u8) -> Option<Self> {
        (sfn < SFN_CYCLE && slot < SLOTS_PER_FRAME).then_some(SlotId { sfn, slot })
    }

    pub fn sfn(self) -> u16 {
        self.sfn
    }

    pub fn slot(self) -> u8 {
        self.slot
    }

    /// Position within the 10240-slot SFN cycle.
    pub fn index(self) -> u32 {
        self.sfn as u32 * SLOTS_PER_FRAME as u32 + self.slot as u32
    }

    pub fn from_index(index: u32) -> Self {
        let index = index % SLOT_CYCLE;
        SlotId {
            sfn: (index / SLOTS_PER_FRAME as u32) as u16,
            slot: (index % SLOTS_PER_FRAME as u32) as u8,
        }
    }

    /// The following slot, wrapping 9 -> 0 within the frame and 1023 -> 0 for the SFN.
    pub fn next(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    /// Forward distance in slots from `self` to `later`, modulo the SFN cycle.
    pub fn steps_to(self, later: SlotId) -> u32 {
        (later.index() + SLOT_CYCLE - self.index()) % SLOT_CYCLE
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.sfn, self.slot)
    }
}

/// Channel kinds that have a vocabulary token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    PdcchDci00,
    PdcchDci10,
    PdcchPlain,
    Pdsch,
    Pusch,
    Pucch,
    Prach,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 7] = [
        ChannelKind::PdcchDci00,
        ChannelKind::PdcchDci10,
        ChannelKind::PdcchPlain,
        ChannelKind::Pdsch,
        ChannelKind::Pusch,
        ChannelKind::Pucch,
        ChannelKind::Prach,
    ];

    pub fn is_pdcch(self) -> bool {
        matches!(
            self,
            ChannelKind::PdcchDci00 | ChannelKind::PdcchDci10 | ChannelKind::PdcchPlain
        )
    }

    /// Name used in the canonical corpus format.
    pub fn corpus_name(self) -> &'static str {
        match self {
            ChannelKind::PdcchDci00 => "PDCCH_DCI_0_0",
            ChannelKind::PdcchDci10 => "PDCCH_DCI_1_0",
            ChannelKind::PdcchPlain => "PDCCH",
            ChannelKind::Pdsch => "PDSCH",
            ChannelKind::Pusch => "PUSCH",
            ChannelKind::Pucch => "PUCCH",
            ChannelKind::Prach => "PRACH",
        }
    }

    pub fn from_corpus_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.corpus_name() == name)
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.corpus_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    FrequencyPrb,
    TimeSymbol,
}

impl Axis {
    pub fn max_value(self) -> u16 {
        match self {
            Axis::FrequencyPrb => MAX_PRB,
            Axis::TimeSymbol => MAX_SYMBOL,
        }
    }
}

/// Half-open resource interval `[start, end)` on one grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    axis: Axis,
    start: u16,
    end: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {axis:?} interval [{start}, {end})")]
pub struct IntervalError {
    pub axis: Axis,
    pub start: u32,
    pub end: u32,
}

impl Interval {
    pub fn new(axis: Axis, start: u32, end: u32) -> Result<Self, IntervalError> {
        if start >= end || end > axis.max_value() as u32 {
            return Err(IntervalError { axis, start, end });
        }
        Ok(Interval {
            axis,
            start: start as u16,
            end: end as u16,
        })
    }

    pub fn prb(start: u32, end: u32) -> Result<Self, IntervalError> {
        Self::new(Axis::FrequencyPrb, start, end)
    }

    pub fn symbols(start: u32, end: u32) -> Result<Self, IntervalError> {
        Self::new(Axis::TimeSymbol, start, end)
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn start(&self) -> u16 {
        self.start
    }

    pub fn end(&self) -> u16 {
        self.end
    }

    pub fn width(&self) -> u16 {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One channel occurrence inside a slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelMessage {
    pub kind: ChannelKind,
    /// Low byte of the RNTI.
    pub rnti: Option<u8>,
    pub freq: Option<Interval>,
    pub time: Option<Interval>,
}

impl ChannelMessage {
    pub fn pdcch(kind: ChannelKind, rnti: u8) -> Self {
        debug_assert!(kind.is_pdcch());
        ChannelMessage {
            kind,
            rnti: Some(rnti),
            freq: None,
            time: None,
        }
    }

    pub fn new(
        kind: ChannelKind,
        rnti: Option<u8>,
        freq: Option<Interval>,
        time: Option<Interval>,
    ) -> Self {
        ChannelMessage {
            kind,
            rnti,
            freq,
            time,
        }
    }

    /// PDCCH carries only its DCI format and RNTI; intervals must sit on the
    /// matching axis.
    pub fn is_well_formed(&self) -> bool {
        if self.kind.is_pdcch() && (self.freq.is_some() || self.time.is_some()) {
            return false;
        }
        self.freq.is_none_or(|i| i.axis() == Axis::FrequencyPrb)
            && self.time.is_none_or(|i| i.axis() == Axis::TimeSymbol)
    }
}

/// All control messages observed in one slot, in their original order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot_id: SlotId,
    pub messages: Vec<ChannelMessage>,
}

impl SlotRecord {
    pub fn empty(slot_id: SlotId) -> Self {
        SlotRecord {
            slot_id,
            messages: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogErrorKind {
    MalformedLine,
    UnknownChannel,
    BadInterval,
    BadRnti,
    NonMonotonicSlot,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind:?}: {fragment}")]
pub struct LogError {
    pub line: usize,
    pub kind: LogErrorKind,
    pub fragment: String,
}

impl LogError {
    pub(crate) fn new(kind: LogErrorKind, fragment: impl Into<String>) -> Self {
        LogError {
            line: 1,
            kind,
            fragment: fragment.into(),
        }
    }

    pub(crate) fn at_line(mut self, line: usize) -> Self {
        self.line = line;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_id_bounds() {
        assert!(SlotId::new(1023, 9).is_some());
        assert!(SlotId::new(1024, 0).is_none());
        assert!(SlotId::new(0, 10).is_none());
    }

    #[test]
    fn slot_step_wraps_frame_and_sfn() {
        assert_eq!(
            SlotId::new(265, 9).unwrap().next(),
            SlotId::new(266, 0).unwrap()
        );
        assert_eq!(
            SlotId::new(1023, 9).unwrap().next(),
            SlotId::new(0, 0).unwrap()
        );
        let a = SlotId::new(1023, 8).unwrap();
        assert_eq!(a.steps_to(SlotId::new(0, 1).unwrap()), 3);
    }

    #[test]
    fn interval_rejects_empty_and_oversized() {
        assert!(Interval::prb(0, 96).is_ok());
        assert!(Interval::prb(5, 5).is_err());
        assert!(Interval::prb(0, 276).is_err());
        assert!(Interval::symbols(1, 14).is_ok());
        assert!(Interval::symbols(0, 15).is_err());
    }
}
