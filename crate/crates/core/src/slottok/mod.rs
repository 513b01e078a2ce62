//! The 32-token slot vocabulary and the mapping between [`SlotRecord`]s and
//! token sequences.
//!
//! A slot is written as its slot digit, a colon, the comma-separated channel
//! messages and a closing semicolon:
//!
//! ```text
//! 8 : PDCCH-DCI1_0 0 1 , PDSCH 0 1 [ 0 , 6 0 ] ( 1 , E ) ;
//! ```
//!
//! RNTIs are always two hex digits. Interval bounds use minimal-width
//! uppercase hex; frequency intervals sit in square brackets and time
//! intervals in parentheses. The SFN is not encoded.

mod decode;
pub mod files;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phylog::{ChannelKind, SlotRecord};
use crate::synchk::ViolationKind;

pub use decode::{decode_slot, decode_stream};

pub const VOCAB_SIZE: usize = 32;

/// One vocabulary entry, identified by its stable id in `0..32`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(u8);

const NAMES: [&str; VOCAB_SIZE] = [
    "EMPTY",
    "0",
    "1",
    "2",
    "3",
    "4",
    "5",
    "6",
    "7",
    "8",
    "9",
    "A",
    "B",
    "C",
    "D",
    "E",
    "F",
    ":",
    ";",
    ",",
    "/",
    "[",
    "]",
    "(",
    ")",
    "PDCCH",
    "PDSCH",
    "PRACH",
    "PUCCH",
    "PUSCH",
    "PDCCH-DCI0_0",
    "PDCCH-DCI1_0",
];

impl Token {
    pub const EMPTY: Token = Token(0);
    pub const COLON: Token = Token(17);
    pub const SEMICOLON: Token = Token(18);
    pub const COMMA: Token = Token(19);
    pub const SLASH: Token = Token(20);
    pub const LBRACKET: Token = Token(21);
    pub const RBRACKET: Token = Token(22);
    pub const LPAREN: Token = Token(23);
    pub const RPAREN: Token = Token(24);
    pub const PDCCH_PLAIN: Token = Token(25);
    pub const PDSCH: Token = Token(26);
    pub const PRACH: Token = Token(27);
    pub const PUCCH: Token = Token(28);
    pub const PUSCH: Token = Token(29);
    pub const PDCCH_DCI_0_0: Token = Token(30);
    pub const PDCCH_DCI_1_0: Token = Token(31);

    pub fn new(id: u8) -> Option<Token> {
        ((id as usize) < VOCAB_SIZE).then_some(Token(id))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = Token> {
        (0..VOCAB_SIZE as u8).map(Token)
    }

    /// Hex digit token; panics for `d > 15`.
    pub fn hex(d: u8) -> Token {
        assert!(d < 16, "hex digit out of range: {d}");
        Token(1 + d)
    }

    pub fn hex_value(self) -> Option<u8> {
        (1..=16).contains(&self.0).then(|| self.0 - 1)
    }

    pub fn is_hex(self) -> bool {
        self.hex_value().is_some()
    }

    pub fn channel(kind: ChannelKind) -> Token {
        match kind {
            ChannelKind::PdcchPlain => Token::PDCCH_PLAIN,
            ChannelKind::Pdsch => Token::PDSCH,
            ChannelKind::Prach => Token::PRACH,
            ChannelKind::Pucch => Token::PUCCH,
            ChannelKind::Pusch => Token::PUSCH,
            ChannelKind::PdcchDci00 => Token::PDCCH_DCI_0_0,
            ChannelKind::PdcchDci10 => Token::PDCCH_DCI_1_0,
        }
    }

    pub fn channel_kind(self) -> Option<ChannelKind> {
        Some(match self {
            Token::PDCCH_PLAIN => ChannelKind::PdcchPlain,
            Token::PDSCH => ChannelKind::Pdsch,
            Token::PRACH => ChannelKind::Prach,
            Token::PUCCH => ChannelKind::Pucch,
            Token::PUSCH => ChannelKind::Pusch,
            Token::PDCCH_DCI_0_0 => ChannelKind::PdcchDci00,
            Token::PDCCH_DCI_1_0 => ChannelKind::PdcchDci10,
            _ => return None,
        })
    }

    pub fn is_channel(self) -> bool {
        self.0 >= Token::PDCCH_PLAIN.0
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Token> {
        NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Token(i as u8))
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Token({})", self.name())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 64-bit FNV-1a over the ordered token names; embedded in checkpoints so a
/// model is never paired with a different vocabulary.
pub fn vocab_hash() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for name in NAMES {
        for b in name.bytes().chain(std::iter::once(0)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("{what} = {value} cannot be encoded with the slot vocabulary")]
    ValueOutOfRange { what: &'static str, value: u32 },
    #[error("syntax error at token {position}: {kind:?}")]
    Syntax {
        position: usize,
        kind: ViolationKind,
    },
    #[error("invalid value at token {position}: {detail}")]
    InvalidValue { position: usize, detail: String },
}

/// Largest interval bound that fits the two-digit number grammar.
pub const MAX_INTERVAL_VALUE: u16 = 0xFF;

fn push_hex(out: &mut Vec<Token>, value: u16) {
    if value >= 16 {
        push_hex(out, value / 16);
    }
    out.push(Token::hex((value % 16) as u8));
}

/// Number of tokens `push_hex` emits for `value`.
pub fn hex_len(value: u16) -> usize {
    if value < 16 {
        1
    } else {
        1 + hex_len(value / 16)
    }
}

/// Length of [`encode_slot`]'s output, computed without encoding.
pub fn encoded_len(rec: &SlotRecord) -> usize {
    if rec.messages.is_empty() {
        return 4;
    }
    let group = |iv: Option<crate::phylog::Interval>| {
        iv.map_or(0, |iv| 3 + hex_len(iv.start()) + hex_len(iv.end()))
    };
    let body: usize = rec
        .messages
        .iter()
        .map(|m| 1 + 2 * m.rnti.is_some() as usize + group(m.freq) + group(m.time))
        .sum();
    3 + body + rec.messages.len() - 1
}

pub fn encode_slot(rec: &SlotRecord) -> Result<Vec<Token>, TokenizeError> {
    let mut out = Vec::new();
    encode_slot_into(rec, &mut out)?;
    Ok(out)
}

fn encode_slot_into(rec: &SlotRecord, out: &mut Vec<Token>) -> Result<(), TokenizeError> {
    out.push(Token::hex(rec.slot_id.slot()));
    out.push(Token::COLON);
    if rec.messages.is_empty() {
        out.push(Token::EMPTY);
    }
    for (i, msg) in rec.messages.iter().enumerate() {
        if i > 0 {
            out.push(Token::COMMA);
        }
        out.push(Token::channel(msg.kind));
        if let Some(r) = msg.rnti {
            out.push(Token::hex(r >> 4));
            out.push(Token::hex(r & 0xF));
        }
        for (iv, open, close, what) in [
            (msg.freq, Token::LBRACKET, Token::RBRACKET, "prb"),
            (msg.time, Token::LPAREN, Token::RPAREN, "symbol"),
        ] {
            let Some(iv) = iv else { continue };
            for v in [iv.start(), iv.end()] {
                if v > MAX_INTERVAL_VALUE {
                    return Err(TokenizeError::ValueOutOfRange {
                        what,
                        value: v as u32,
                    });
                }
            }
            out.push(open);
            push_hex(out, iv.start());
            out.push(Token::COMMA);
            push_hex(out, iv.end());
            out.push(close);
        }
    }
    out.push(Token::SEMICOLON);
    Ok(())
}

/// Concatenated slot encodings; the semicolons already delimit slots.
pub fn encode_stream(records: &[SlotRecord]) -> Result<Vec<Token>, TokenizeError> {
    let mut out = Vec::new();
    for rec in records {
        encode_slot_into(rec, &mut out)?;
    }
    Ok(out)
}

/// Token offsets at which each slot starts, plus the total length at the end.
pub fn slot_offsets(tokens: &[Token]) -> Vec<usize> {
    let mut offsets = vec![0];
    offsets.extend(
        tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Token::SEMICOLON)
            .map(|(i, _)| i + 1),
    );
    if *offsets.last().unwrap() != tokens.len() {
        offsets.push(tokens.len());
    }
    offsets
}

pub fn render_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.name())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inverse of [`render_tokens`].
pub fn parse_tokens(text: &str) -> Option<Vec<Token>> {
    text.split_whitespace().map(Token::from_name).collect()
}
