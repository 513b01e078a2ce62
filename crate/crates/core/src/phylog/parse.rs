use std::io::BufRead;
use std::sync::LazyLock;

use regex::Regex;

use super::{
    Axis, ChannelKind, ChannelMessage, Interval, LogError, LogErrorKind, SlotId, SlotRecord,
};

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\S+)\s+\[PHY\]\s+\[(\d+)\.(\d+)\]\s*(.*)$").unwrap());
static CLAUSE_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)([A-Za-z][A-Za-z0-9_]*):(?:\s|$)").unwrap());
static KEY_VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\w+)=(\[[^\]\)]*[\]\)]|\S+)").unwrap());

/// Separator inserted between clauses when continuation lines are joined.
const CLAUSE_JOIN: &str = " / ";

/// Parses one `[PHY]` record (header plus its clauses, already joined).
pub fn parse_line(line: &str) -> Result<(SlotId, Vec<ChannelMessage>), LogError> {
    let caps = HEADER
        .captures(line)
        .ok_or_else(|| LogError::new(LogErrorKind::MalformedLine, line.trim()))?;
    let sfn: u16 = caps[2]
        .parse()
        .map_err(|_| LogError::new(LogErrorKind::MalformedLine, &caps[2]))?;
    let slot: u8 = caps[3]
        .parse()
        .map_err(|_| LogError::new(LogErrorKind::MalformedLine, &caps[3]))?;
    let slot_id = SlotId::new(sfn, slot)
        .ok_or_else(|| LogError::new(LogErrorKind::MalformedLine, format!("[{sfn}.{slot}]")))?;

    let mut messages = Vec::new();
    for piece in caps[4].split('/') {
        parse_clauses(piece, &mut messages)?;
    }
    Ok((slot_id, messages))
}

fn parse_clauses(text: &str, out: &mut Vec<ChannelMessage>) -> Result<(), LogError> {
    let starts: Vec<_> = CLAUSE_START.captures_iter(text).collect();
    let leading_end = starts
        .first()
        .map(|c| c.get(0).unwrap().start())
        .unwrap_or(text.len());
    let leading = text[..leading_end].trim();
    if !leading.is_empty() {
        return Err(LogError::new(LogErrorKind::MalformedLine, leading));
    }
    for (i, caps) in starts.iter().enumerate() {
        let body_start = caps.get(0).unwrap().end();
        let body_end = starts
            .get(i + 1)
            .map(|c| c.get(0).unwrap().start())
            .unwrap_or(text.len());
        out.push(parse_clause(&caps[1], &text[body_start..body_end])?);
    }
    Ok(())
}

fn parse_clause(name: &str, body: &str) -> Result<ChannelMessage, LogError> {
    let mut format = None;
    let mut rnti = None;
    let mut freq = None;
    let mut time = None;
    for kv in KEY_VALUE.captures_iter(body) {
        let value = kv.get(2).unwrap().as_str();
        match &kv[1] {
            "format" => format = Some(value.to_owned()),
            "rnti" => rnti = Some(parse_rnti(value)?),
            "prb" => freq = Some(parse_interval(Axis::FrequencyPrb, value)?),
            "symb" => time = Some(parse_interval(Axis::TimeSymbol, value)?),
            _ => {}
        }
    }
    let kind = match name {
        "PDCCH" => match format.as_deref() {
            Some("0_0") => ChannelKind::PdcchDci00,
            Some("1_0") => ChannelKind::PdcchDci10,
            _ => ChannelKind::PdcchPlain,
        },
        "PDSCH" => ChannelKind::Pdsch,
        "PUSCH" => ChannelKind::Pusch,
        "PUCCH" => ChannelKind::Pucch,
        "PRACH" => ChannelKind::Prach,
        other => {
            return Err(LogError::new(
                LogErrorKind::UnknownChannel,
                format!("{other}:"),
            ))
        }
    };
    if kind.is_pdcch() {
        // the tokenized PDCCH carries only the DCI format and RNTI
        freq = None;
        time = None;
    }
    Ok(ChannelMessage::new(kind, rnti, freq, time))
}

fn parse_rnti(value: &str) -> Result<u8, LogError> {
    let digits = value
        .strip_prefix("0x")
        .or_else(|| value.strip_prefix("0X"))
        .unwrap_or(value);
    match u16::from_str_radix(digits, 16) {
        Ok(rnti) if !digits.is_empty() => Ok((rnti & 0xFF) as u8),
        _ => Err(LogError::new(
            LogErrorKind::BadRnti,
            format!("rnti={value}"),
        )),
    }
}

fn parse_interval(axis: Axis, value: &str) -> Result<Interval, LogError> {
    let bad = || LogError::new(LogErrorKind::BadInterval, value);
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(')').or_else(|| v.strip_suffix(']')))
        .ok_or_else(bad)?;
    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
    let start: u32 = a.trim().parse().map_err(|_| bad())?;
    let end: u32 = b.trim().parse().map_err(|_| bad())?;
    Interval::new(axis, start, end).map_err(|_| bad())
}

/// Parses a log stream into a slot-contiguous list of records.
///
/// A line carrying a `[PHY] [sfn.slot]` header opens a record; any other
/// non-blank line continues the most recent record. Records for the same slot
/// are merged and missing slots are filled with empty records.
pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<SlotRecord>, LogError> {
    let mut records: Vec<SlotRecord> = Vec::new();
    let mut pending: Option<(usize, String)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| {
            LogError::new(LogErrorKind::MalformedLine, e.to_string()).at_line(line_no)
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if HEADER.is_match(&line) {
            if let Some((start, text)) = pending.take() {
                push_record(&mut records, start, &text)?;
            }
            pending = Some((line_no, line));
        } else {
            match pending.as_mut() {
                Some((_, text)) => {
                    text.push_str(CLAUSE_JOIN);
                    text.push_str(line.trim());
                }
                None => {
                    return Err(
                        LogError::new(LogErrorKind::MalformedLine, line.trim()).at_line(line_no)
                    )
                }
            }
        }
    }
    if let Some((start, text)) = pending {
        push_record(&mut records, start, &text)?;
    }
    Ok(records)
}

fn push_record(records: &mut Vec<SlotRecord>, line_no: usize, text: &str) -> Result<(), LogError> {
    let (slot_id, messages) = parse_line(text).map_err(|e| e.at_line(line_no))?;
    let Some(last) = records.last_mut() else {
        records.push(SlotRecord { slot_id, messages });
        return Ok(());
    };
    if last.slot_id == slot_id {
        last.messages.extend(messages);
        return Ok(());
    }
    // a backward jump shows up as a forward distance of more than half the SFN cycle,
    // which distinguishes it from the 1023 -> 0 wraparound
    let steps = last.slot_id.steps_to(slot_id);
    if slot_id.index() < last.slot_id.index() && steps > super::SLOT_CYCLE / 2 {
        return Err(LogError::new(
            LogErrorKind::NonMonotonicSlot,
            format!("[{slot_id}] after [{}]", last.slot_id),
        )
        .at_line(line_no));
    }
    let mut cursor = last.slot_id.next();
    while cursor != slot_id {
        records.push(SlotRecord::empty(cursor));
        cursor = cursor.next();
    }
    records.push(SlotRecord { slot_id, messages });
    Ok(())
}

/// Renders a record as a single canonical `[PHY]` log line that [`parse_line`] reads back.
pub fn render_line(record: &SlotRecord) -> String {
    let mut line = format!("1970-01-01T00:00:00.000000 [PHY] [{}]", record.slot_id);
    for (i, msg) in record.messages.iter().enumerate() {
        line.push_str(if i == 0 { " " } else { CLAUSE_JOIN });
        let name = match msg.kind {
            ChannelKind::PdcchDci00 | ChannelKind::PdcchDci10 | ChannelKind::PdcchPlain => "PDCCH",
            ChannelKind::Pdsch => "PDSCH",
            ChannelKind::Pusch => "PUSCH",
            ChannelKind::Pucch => "PUCCH",
            ChannelKind::Prach => "PRACH",
        };
        line.push_str(name);
        line.push(':');
        match msg.kind {
            ChannelKind::PdcchDci00 => line.push_str(" format=0_0"),
            ChannelKind::PdcchDci10 => line.push_str(" format=1_0"),
            _ => {}
        }
        if let Some(rnti) = msg.rnti {
            line.push_str(&format!(" rnti=0x{rnti:04x}"));
        }
        if let Some(f) = msg.freq {
            line.push_str(&format!(" prb=[{}, {})", f.start(), f.end()));
        }
        if let Some(t) = msg.time {
            line.push_str(&format!(" symb=[{}, {})", t.start(), t.end()));
        }
    }
    line
}
