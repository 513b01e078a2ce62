//! Canonical text corpus: one line per slot.
//!
//! ```text
//! # slotcast-corpus v1
//! # start=265.8
//! # seed=1
//! 8|PDCCH_DCI_1_0:01|PDSCH:01:prb=0,96:symb=1,14
//! 9
//! 0|PUCCH:01:symb=0,14
//! ```
//!
//! Lines starting with `#` are header comments. The first must be the format
//! tag; `# key=value` lines carry metadata, of which `start=<sfn>.<slot>` fixes
//! the id of the first slot (default `0.0`). Each data line is the slot digit
//! followed by one `|`-prefixed field per message in order:
//! `KIND[:RR][:prb=S,E][:symb=S,E]` where `KIND` is one of `PDCCH_DCI_0_0`,
//! `PDCCH_DCI_1_0`, `PDCCH`, `PDSCH`, `PUSCH`, `PUCCH`, `PRACH`; `RR` is the
//! RNTI low byte as two uppercase hex digits; interval bounds are decimal and
//! half-open. Slots are contiguous, so the slot digit must count up modulo 10.
//! Lines end with `\n`; there is no trailing whitespace.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{ChannelKind, ChannelMessage, Interval, SlotId, SlotRecord};

pub const FORMAT_TAG: &str = "# slotcast-corpus v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Format {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    /// Header metadata in file order, excluding `start`.
    pub meta: Vec<(String, String)>,
    pub records: Vec<SlotRecord>,
}

impl Corpus {
    pub fn new(records: Vec<SlotRecord>) -> Self {
        Corpus {
            meta: Vec::new(),
            records,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{FORMAT_TAG}")?;
        if let Some(first) = self.records.first() {
            writeln!(w, "# start={}", first.slot_id)?;
        }
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        for rec in &self.records {
            writeln!(w, "{}", render_record(rec))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("corpus text is ASCII")
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut meta = Vec::new();
        let mut start = SlotId::new(0, 0).unwrap();
        let mut records: Vec<SlotRecord> = Vec::new();
        let mut saw_tag = false;

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if !saw_tag {
                    if line != FORMAT_TAG {
                        return Err(format_err(line_no, format!("expected `{FORMAT_TAG}`")));
                    }
                    saw_tag = true;
                    continue;
                }
                if !records.is_empty() {
                    return Err(format_err(line_no, "header comment after data"));
                }
                if let Some((k, v)) = comment.trim().split_once('=') {
                    if k == "start" {
                        start = parse_slot_id(v).ok_or_else(|| format_err(line_no, "bad start"))?;
                    } else {
                        meta.push((k.to_owned(), v.to_owned()));
                    }
                }
                continue;
            }
            if !saw_tag {
                return Err(format_err(line_no, format!("expected `{FORMAT_TAG}`")));
            }
            let slot_id = match records.last() {
                Some(prev) => prev.slot_id.next(),
                None => start,
            };
            records.push(parse_record(&line, slot_id).map_err(|m| format_err(line_no, m))?);
        }
        Ok(Corpus { meta, records })
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        Self::read_from(text.as_bytes())
    }
}

fn parse_slot_id(s: &str) -> Option<SlotId> {
    let (sfn, slot) = s.split_once('.')?;
    SlotId::new(sfn.parse().ok()?, slot.parse().ok()?)
}

pub fn render_record(rec: &SlotRecord) -> String {
    let mut out = rec.slot_id.slot().to_string();
    for msg in &rec.messages {
        out.push('|');
        out.push_str(msg.kind.corpus_name());
        if let Some(r) = msg.rnti {
            out.push_str(&format!(":{r:02X}"));
        }
        if let Some(f) = msg.freq {
            out.push_str(&format!(":prb={},{}", f.start(), f.end()));
        }
        if let Some(t) = msg.time {
            out.push_str(&format!(":symb={},{}", t.start(), t.end()));
        }
    }
    out
}

fn parse_record(line: &str, slot_id: SlotId) -> Result<SlotRecord, String> {
    let mut fields = line.split('|');
    let digit = fields.next().unwrap_or_default();
    if digit != slot_id.slot().to_string() {
        return Err(format!(
            "slot digit `{digit}` breaks contiguity, expected {}",
            slot_id.slot()
        ));
    }
    let messages = fields.map(parse_message).collect::<Result<_, _>>()?;
    Ok(SlotRecord { slot_id, messages })
}

fn parse_message(field: &str) -> Result<ChannelMessage, String> {
    let mut parts = field.split(':');
    let name = parts.next().unwrap_or_default();
    let kind =
        ChannelKind::from_corpus_name(name).ok_or_else(|| format!("unknown channel `{name}`"))?;
    let mut msg = ChannelMessage::new(kind, None, None, None);
    for part in parts {
        if let Some(v) = part.strip_prefix("prb=") {
            msg.freq = Some(parse_interval(v, Interval::prb)?);
        } else if let Some(v) = part.strip_prefix("symb=") {
            msg.time = Some(parse_interval(v, Interval::symbols)?);
        } else if part.len() == 2 && msg.rnti.is_none() && msg.freq.is_none() {
            let r = u8::from_str_radix(part, 16).map_err(|_| format!("bad rnti `{part}`"))?;
            msg.rnti = Some(r);
        } else {
            return Err(format!("unexpected field `{part}` in `{field}`"));
        }
    }
    if !msg.is_well_formed() {
        return Err(format!("malformed message `{field}`"));
    }
    Ok(msg)
}

fn parse_interval(
    v: &str,
    make: fn(u32, u32) -> Result<Interval, super::IntervalError>,
) -> Result<Interval, String> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| format!("bad interval `{v}`"))?;
    let a = a.parse().map_err(|_| format!("bad interval `{v}`"))?;
    let b = b.parse().map_err(|_| format!("bad interval `{v}`"))?;
    make(a, b).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SlotRecord> {
        let s = |slot| SlotId::new(265, slot).unwrap();
        vec![
            SlotRecord {
                slot_id: s(8),
                messages: vec![
                    ChannelMessage::pdcch(ChannelKind::PdcchDci10, 0x01),
                    ChannelMessage::new(
                        ChannelKind::Pdsch,
                        Some(0x01),
                        Some(Interval::prb(0, 96).unwrap()),
                        Some(Interval::symbols(1, 14).unwrap()),
                    ),
                ],
            },
            SlotRecord::empty(s(9)),
            SlotRecord {
                slot_id: SlotId::new(266, 0).unwrap(),
                messages: vec![
                    ChannelMessage::new(
                        ChannelKind::Pucch,
                        Some(0xAB),
                        None,
                        Some(Interval::symbols(0, 14).unwrap()),
                    ),
                    ChannelMessage::new(ChannelKind::Prach, None, None, None),
                ],
            },
        ]
    }

    #[test]
    fn exact_text_layout() {
        let corpus = Corpus::new(sample()).with_meta("seed", 1);
        assert_eq!(
            corpus.to_text(),
            "# slotcast-corpus v1\n# start=265.8\n# seed=1\n\
             8|PDCCH_DCI_1_0:01|PDSCH:01:prb=0,96:symb=1,14\n\
             9\n\
             0|PUCCH:AB:symb=0,14|PRACH\n"
        );
    }

    #[test]
    fn reads_back_what_it_writes() {
        let corpus = Corpus::new(sample()).with_meta("seed", 1);
        let back = Corpus::from_text(&corpus.to_text()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.meta_value("seed"), Some("1"));
    }

    #[test]
    fn rejects_broken_contiguity() {
        let err = Corpus::from_text("# slotcast-corpus v1\n# start=0.0\n0\n2\n").unwrap_err();
        assert!(matches!(err, CorpusError::Format { line: 4, .. }));
    }

    #[test]
    fn rejects_missing_tag_and_bad_fields() {
        assert!(Corpus::from_text("0\n").is_err());
        assert!(Corpus::from_text("# slotcast-corpus v1\n0|PXSCH:01\n").is_err());
        assert!(Corpus::from_text("# slotcast-corpus v1\n0|PDSCH:01:prb=5,5\n").is_err());
        assert!(Corpus::from_text("# slotcast-corpus v1\n0|PDCCH_DCI_1_0:01:prb=0,5\n").is_err());
    }
}
